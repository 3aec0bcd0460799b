from pathlib import Path

import pytest

import polar_reach
from polar_reach.interval import Interval
from polar_reach.modelfile import ModelFileError, format_model, parse_expression, parse_model, parse_model_text
from polar_reach.polynomial import SparsePolynomial

DATA = Path(polar_reach.__file__).parent / "data"


def attitude_rhs(w1, w2, w3, p1, p2, p3, u0, u1, u2):
    """Rigid-body attitude dynamics typed in directly as Python arithmetic."""
    s = p1**2 + p2**2 + p3**2
    return [
        0.25 * (u0 + w2 * w3),
        0.5 * (u1 - 3 * w1 * w3),
        u2 + 2 * w1 * w2,
        0.5 * (w2 * (s - p3) + w3 * (s + p2) + w1 * (s + 1)),
        0.5 * (w1 * (s + p3) + w3 * (s - p1) + w2 * (s + 1)),
        0.5 * (w1 * (s - p2) + w2 * (s + p1) + w3 * (s + 1)),
    ]


def one_state(dyn, extra=""):
    return f"states: x1\ndynamics:\n  x1' = {dyn}\ncontrol_step: 0.1\ninit:\n  x1 in [0, 1]\n{extra}"


class TestBundled:
    def test_attitude_shape(self):
        m = parse_model(DATA / "attitude.model").model
        assert m.state_names == ("w1", "w2", "w3", "p1", "p2", "p3")
        assert m.control_names == ("u0", "u1", "u2")
        assert m.delta_c == 0.1
        assert m.net.input_dim == 6 and m.net.output_dim == 3

    def test_attitude_initial_box(self):
        m = parse_model(DATA / "attitude.model").model
        lows = [-0.45, -0.55, 0.65, -0.75, 0.85, -0.65]
        assert [b.lo for b in m.X0] == lows
        assert [b.hi for b in m.X0] == pytest.approx([x + 0.01 for x in lows], abs=1e-15)

    def test_attitude_rhs_matches_direct_evaluation(self, rng):
        m = parse_model(DATA / "attitude.model").model
        for pt in rng.uniform(-2, 2, (200, 9)):
            got = [p.evaluate(pt) for p in m.ode.rhs]
            assert got == pytest.approx(attitude_rhs(*pt), rel=1e-13, abs=1e-13)

    def test_linear_feedback(self):
        spec = parse_model(DATA / "linear_feedback.model")
        assert spec.model.ode.rhs[0] == SparsePolynomial.variable(2, 1)
        assert spec.target.kind == "reachability"
        assert spec.target.box == (Interval(0.3, 0.4),)


class TestExpressions:
    def test_constant_rhs(self):
        m = parse_model_text(one_state("3"), load_network=False).model
        assert m.ode.rhs[0] == SparsePolynomial.constant(1, 3.0)

    def test_precedence_and_powers(self):
        p = parse_expression("-x^2 + 2*x*y - (x - y)^3 / 4", ["x", "y"])
        for x, y in [(0.5, -1.0), (2.0, 3.0), (-1.5, 0.25)]:
            assert p.evaluate([x, y]) == pytest.approx(-(x**2) + 2 * x * y - (x - y) ** 3 / 4, rel=1e-14)

    def test_unary_minus_binds_looser_than_power(self):
        assert parse_expression("-x^2", ["x"]).evaluate([3.0]) == -9.0

    def test_literals(self):
        assert parse_expression("1.5e-1 + .5", []).constant_term() == pytest.approx(0.65)

    def test_sin_is_non_polynomial(self):
        with pytest.raises(ModelFileError, match="non-polynomial"):
            parse_model_text(one_state("sin(x1)"), load_network=False)

    def test_division_by_variable_is_non_polynomial(self):
        with pytest.raises(ModelFileError, match="non-polynomial"):
            parse_expression("1 / x", ["x"])
        assert parse_expression("x / 4", ["x"]).evaluate([2.0]) == 0.5

    def test_fractional_exponent_rejected(self):
        with pytest.raises(ModelFileError, match="non-polynomial"):
            parse_expression("x^0.5", ["x"])


class TestErrors:
    def test_syntax_error_location(self):
        with pytest.raises(ModelFileError) as err:
            parse_model_text(one_state("x1 + * 2"), load_network=False)
        assert err.value.line == 3
        assert err.value.column is not None and err.value.column > 0
        assert ":3:" in str(err.value)

    def test_unknown_identifier(self):
        with pytest.raises(ModelFileError, match="unknown identifier 'y'") as err:
            parse_model_text(one_state("y"), load_network=False)
        assert err.value.line == 3

    def test_missing_dynamics(self):
        text = "states: a, b\ndynamics:\n  a' = b\ncontrol_step: 1\ninit:\n  a in [0,1]\n  b in [0,1]\n"
        with pytest.raises(ModelFileError, match="dimension mismatch"):
            parse_model_text(text, load_network=False)

    def test_init_must_cover_every_state(self):
        text = "states: a, b\ndynamics:\n  a' = b\n  b' = a\ncontrol_step: 1\ninit:\n  a in [0,1]\n"
        with pytest.raises(ModelFileError, match="init section lacks b"):
            parse_model_text(text, load_network=False)

    def test_bad_control_step(self):
        with pytest.raises(ModelFileError, match="positive"):
            parse_model_text(one_state("1").replace("0.1", "-1"), load_network=False)

    def test_unknown_property(self):
        extra = "target:\n  x1 in [0, 1]\nproperty: maybe\n"
        with pytest.raises(ModelFileError, match="reach"):
            parse_model_text(one_state("1", extra), load_network=False)

    def test_avoid_maps_to_safety(self):
        extra = "target:\n  x1 in [2, 3]\nproperty: avoid\n"
        spec = parse_model_text(one_state("1", extra), load_network=False)
        assert spec.target.kind == "safety"

    def test_controls_need_network(self):
        text = "states: x\ncontrols: u\ndynamics:\n  x' = u\ncontrol_step: 0.1\ninit:\n  x in [0, 1]\n"
        with pytest.raises(ModelFileError, match="network"):
            parse_model_text(text)

    def test_missing_network_file(self, tmp_path):
        path = tmp_path / "m.model"
        path.write_text((DATA / "linear_feedback.model").read_text().replace("linear_feedback.nn", "absent.nn"))
        with pytest.raises(FileNotFoundError, match="absent.nn"):
            parse_model(path)


class TestRoundTrip:
    @pytest.mark.parametrize("name", ["attitude.model", "linear_feedback.model"])
    def test_bundled(self, name):
        spec = parse_model(DATA / name)
        text = format_model(spec)
        again = parse_model_text(text, base_dir=DATA)
        assert format_model(again) == text
        assert again.model.X0 == spec.model.X0
        assert again.target == spec.target
        for a, b in zip(again.model.ode.rhs, spec.model.ode.rhs):
            assert a == b

    def test_awkward_coefficients(self, rng):
        coeffs = [float(c) for c in rng.normal(size=6) * 10.0 ** rng.integers(-12, 12, 6)]
        expr = " + ".join(f"({c!r})*x1^{i}" for i, c in enumerate(coeffs))
        spec = parse_model_text(one_state(expr), load_network=False)
        assert spec.model.ode.rhs[0] == SparsePolynomial.univariate(coeffs)
        again = parse_model_text(format_model(spec), load_network=False)
        assert again.model.ode.rhs[0] == spec.model.ode.rhs[0]
