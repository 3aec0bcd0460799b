import csv
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

import polar_reach
from builders import write_frozen_model
from polar_reach.cli import main
from polar_reach.interval import Interval
from polar_reach.ode_flowpipe import PolynomialODE
from polar_reach.output import emit_flowpipes, octagon_bounds, parse_projections
from polar_reach.polynomial import SparsePolynomial
from polar_reach.verifier import NNCSModel, ReachConfig, run_reachability, simulate

DATA = Path(polar_reach.__file__).parent / "data"


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def decay_result():
    ode = PolynomialODE([SparsePolynomial.variable(1, 0, -1.0)])
    model = NNCSModel(ode, None, 0.5, (Interval(0.9, 1.1),))
    return run_reachability(model, 3, ReachConfig(flowsteps=4))


@pytest.fixture(scope="module")
def frozen_plane_result():
    ode = PolynomialODE([SparsePolynomial.zero(2)] * 2)
    model = NNCSModel(ode, None, 0.1, (Interval(0, 1), Interval(-1, 2)), ("a", "b"))
    return run_reachability(model, 2, ReachConfig(flowsteps=3))


class TestOctagon:
    def test_bounds_of_a_box(self, frozen_plane_result):
        _, fp = frozen_plane_result.flowpipes[0]
        o = octagon_bounds(fp, 0, 1)
        got = [o[k] for k in ("x_lo", "x_hi", "y_lo", "y_hi", "sum_lo", "sum_hi", "diff_lo", "diff_hi")]
        assert got == pytest.approx([0, 1, -1, 2, -1, 3, -2, 2], abs=1e-14)

    def test_time_axis_is_absolute(self, decay_result):
        for step, fp in decay_result.flowpipes:
            o = octagon_bounds(fp, "t", 0)
            assert o["x_lo"] == pytest.approx(fp.t_offset, abs=1e-12)
            assert o["x_hi"] == pytest.approx(fp.t_offset + fp.delta, abs=1e-12)

    def test_decay_lower_bounds_decrease(self, decay_result):
        rows = [octagon_bounds(fp, "t", 0) for _, fp in decay_result.flowpipes]
        lows = [o["y_lo"] for o in rows]
        highs = [o["y_hi"] for o in rows]
        assert all(b < a for a, b in zip(lows, lows[1:]))
        assert all(b < a for a, b in zip(highs, highs[1:]))

    def test_octagon_contains_simulation(self, decay_result):
        tr = simulate(decay_result.model, [1.1], 3)
        for _, fp in decay_result.flowpipes:
            o = octagon_bounds(fp, "t", 0)
            t0, t1 = fp.t_offset, fp.t_offset + fp.delta
            keep = (tr.times >= t0) & (tr.times <= t1)
            t, x = tr.times[keep], tr.states[keep, 0]
            assert np.all(x >= o["y_lo"]) and np.all(x <= o["y_hi"])
            assert np.all(t + x <= o["sum_hi"] + 1e-12) and np.all(t - x >= o["diff_lo"] - 1e-12)


class TestEmit:
    def test_row_count(self, frozen_plane_result, tmp_path):
        proj = parse_projections(frozen_plane_result, ["a,b", "t,a", "b,t"])
        path = emit_flowpipes(frozen_plane_result, tmp_path / "f.csv", "csv", proj)
        K, N = frozen_plane_result.steps, frozen_plane_result.config.flowsteps
        assert len(read_rows(path)) == K * N * 3

    def test_frozen_rows_identical(self, frozen_plane_result, tmp_path):
        rows = read_rows(emit_flowpipes(frozen_plane_result, tmp_path / "f.csv"))
        boxes = {tuple(r[k] for k in ("x_lo", "x_hi", "y_lo", "y_hi")) for r in rows}
        assert len(boxes) == 1

    @pytest.mark.parametrize("fmt", ["csv", "json", "svg"])
    def test_deterministic(self, decay_result, tmp_path, fmt):
        a = emit_flowpipes(decay_result, tmp_path / "a", fmt).read_bytes()
        b = emit_flowpipes(decay_result, tmp_path / "b", fmt).read_bytes()
        assert a == b and len(a) > 0

    def test_json_structure(self, decay_result, tmp_path):
        data = json.loads(emit_flowpipes(decay_result, tmp_path, "json").read_text())
        assert len(data["flowpipes"]) == 12
        assert len(data["steps"]) == 3
        assert data["final_range"] == [[decay_result.final_range[0].lo, decay_result.final_range[0].hi]]

    def test_bad_arguments(self, decay_result, tmp_path):
        with pytest.raises(ValueError):
            emit_flowpipes(decay_result, tmp_path, "png")
        with pytest.raises(ValueError, match="unknown projection axis"):
            parse_projections(decay_result, ["x,q"])


class TestCLI:
    @pytest.mark.parametrize(
        "target,kind,code",
        [((-1.0, 2.0), "reach", 0), ((5.0, 6.0), "reach", 1), ((0.5, 2.0), "reach", 2),
         ((5.0, 6.0), "avoid", 0), ((-1.0, 2.0), "avoid", 1), ((0.5, 2.0), "avoid", 2)],
    )
    def test_exit_codes(self, tmp_path, target, kind, code, capsys):
        path = write_frozen_model(tmp_path, target, kind)
        assert main(["verify", str(path), "--steps", "2", "--flowsteps", "2", "--out", str(tmp_path / "o"), "--quiet"]) == code
        assert "verdict:" in capsys.readouterr().out

    def test_missing_network(self, tmp_path, capsys):
        text = (DATA / "linear_feedback.model").read_text().replace("linear_feedback.nn", "nowhere.nn")
        path = tmp_path / "m.model"
        path.write_text(text)
        assert main(["verify", str(path), "--out", str(tmp_path / "o")]) == 3
        assert str(tmp_path / "nowhere.nn") in capsys.readouterr().err

    def test_missing_model(self, tmp_path, capsys):
        assert main(["verify", str(tmp_path / "none.model")]) == 3
        assert "none.model" in capsys.readouterr().err

    def test_bad_steps(self, tmp_path):
        path = write_frozen_model(tmp_path, (0, 1))
        assert main(["verify", str(path), "--steps", "0", "--out", str(tmp_path / "o")]) == 3

    def test_linear_feedback_end_to_end(self, tmp_path, capsys):
        for name in ("linear_feedback.model", "linear_feedback.nn"):
            shutil.copy(DATA / name, tmp_path / name)
        out = tmp_path / "out"
        argv = ["verify", str(tmp_path / "linear_feedback.model"), "--steps", "10", "--symbolic",
                "--remainder", "rigorous", "--simulate", "20", "--seed", "4", "--out", str(out),
                "--format", "csv", "--format", "json", "--format", "svg"]
        assert main(argv) == 0
        printed = capsys.readouterr().out
        assert "verdict: proved" in printed
        assert "containment: 0 violations over 20 trajectories" in printed
        assert (out / "containment.txt").read_text().startswith("trajectories: 20\nviolations: 0\n")
        assert len(list((out / "trajectories").glob("*.csv"))) == 20
        for fmt in ("csv", "json", "svg"):
            assert (out / f"flowpipes.{fmt}").stat().st_size > 0
        assert len(read_rows(out / "flowpipes.csv")) == 10 * 10
