"""Flowpipe export: CSV rows of boxes plus octagon bounds, a JSON dump, SVG plots."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .interval import Interval
from .taylor_model import TaylorModel, TMVector, tm_add, tm_range
from .verifier import ReachResult, Trajectory

__all__ = ["octagon_bounds", "emit_flowpipes", "default_projections", "FORMATS"]

FORMATS = ("csv", "json", "svg")
TIME_AXIS = "t"


def _axis_tm(tm: TMVector, axis: int | str) -> TaylorModel:
    if axis == TIME_AXIS:
        dom = tm.domain
        return TaylorModel.variable(dom.time_var, dom, tm.order)
    return tm[axis]


def _time_offset(fp, axis) -> float:
    return fp.t_offset if axis == TIME_AXIS else 0.0


def octagon_bounds(fp, i: int | str, j: int | str) -> dict[str, float]:
    """Upper bounds of ``x_i, -x_i, x_j, -x_j, x_i + x_j, -(x_i + x_j), x_i - x_j, x_j - x_i``.

    Either axis may be ``"t"`` (absolute time over the flowpipe).
    """
    a, b = _axis_tm(fp.tm, i), _axis_tm(fp.tm, j)
    oa, ob = _time_offset(fp, i), _time_offset(fp, j)
    ra, rb = tm_range(a) + oa, tm_range(b) + ob
    s = tm_range(tm_add(a, b)) + (oa + ob)
    d = tm_range(tm_add(a, b.scale(-1.0))) + (oa - ob)
    return {
        "x_hi": ra.hi, "x_lo": ra.lo, "y_hi": rb.hi, "y_lo": rb.lo,
        "sum_hi": s.hi, "sum_lo": s.lo, "diff_hi": d.hi, "diff_lo": d.lo,
    }


def default_projections(result: ReachResult) -> list[tuple[int | str, int | str]]:
    n = result.model.num_states
    if n == 1:
        return [(TIME_AXIS, 0)]
    return [(i, i + 1) for i in range(0, n - 1, 2)] if n > 2 else [(0, 1)]


def _axis_name(result: ReachResult, axis) -> str:
    return TIME_AXIS if axis == TIME_AXIS else result.model.state_names[axis]


def _parse_axis(result: ReachResult, name: str):
    if name == TIME_AXIS:
        return TIME_AXIS
    names = result.model.state_names
    if name in names:
        return names.index(name)
    raise ValueError(f"unknown projection axis {name!r}; expected one of {', '.join(names)} or t")


def parse_projections(result: ReachResult, specs: Sequence[str] | None) -> list[tuple]:
    if not specs:
        return default_projections(result)
    out = []
    for spec in specs:
        parts = spec.split(",")
        if len(parts) != 2:
            raise ValueError(f"projection must be 'a,b', got {spec!r}")
        out.append((_parse_axis(result, parts[0].strip()), _parse_axis(result, parts[1].strip())))
    return out


_CSV_FIELDS = [
    "control_step", "flowpipe", "t_start", "t_end", "x", "y",
    "x_lo", "x_hi", "y_lo", "y_hi", "sum_lo", "sum_hi", "diff_lo", "diff_hi",
]


def _csv_text(result: ReachResult, projections) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_CSV_FIELDS)
    for step, fp in result.flowpipes:
        for i, j in projections:
            o = octagon_bounds(fp, i, j)
            w.writerow(
                [step, fp.step_index, repr(fp.t_offset), repr(fp.t_offset + fp.delta),
                 _axis_name(result, i), _axis_name(result, j)]
                + [repr(o[k]) for k in _CSV_FIELDS[6:]]
            )
    return buf.getvalue()


def _iv(x: Interval) -> list[float]:
    return [x.lo, x.hi]


def result_to_dict(result: ReachResult) -> dict:
    m, cfg = result.model, result.config
    return {
        "model": {
            "states": list(m.state_names),
            "controls": list(m.control_names),
            "control_step": m.delta_c,
            "init": [_iv(b) for b in m.X0],
            "network": m.network_path,
        },
        "config": {
            "steps": result.steps, "order": cfg.order, "bernstein_order": cfg.bernstein_order,
            "samples": cfg.samples, "flowsteps": cfg.flowsteps, "symbolic": cfg.symbolic,
            "remainder": cfg.remainder_mode,
        },
        "verdict": result.verdict.value if result.verdict is not None else None,
        "final_range": [_iv(x) for x in result.final_range],
        "steps": [
            {
                "index": i,
                "range": [_iv(x) for x in result.step_ranges[i]],
                "end_range": [_iv(x) for x in result.step_end_ranges[i]],
                "remainder_widths": result.stats["remainder_widths"][i],
                "control_remainder_widths": (
                    result.stats["control_remainder_widths"][i] if result.stats["control_remainder_widths"] else []
                ),
            }
            for i in range(result.steps)
        ],
        "flowpipes": [
            {
                "control_step": step,
                "index": fp.step_index,
                "t_start": fp.t_offset,
                "t_end": fp.t_offset + fp.delta,
                "box": [_iv(x) for x in fp.box()],
                "remainder": [_iv(x) for x in fp.tm.remainders],
            }
            for step, fp in result.flowpipes
        ],
        "matmuls": result.stats.get("matmuls", 0),
    }


def _svg_text(result: ReachResult, projections, trajectories: Sequence[Trajectory] | None) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Polygon

    fig, axes = plt.subplots(1, len(projections), figsize=(5 * len(projections), 4.5), squeeze=False)
    for ax, (i, j) in zip(axes[0], projections):
        for _, fp in result.flowpipes:
            poly = _octagon_polygon(octagon_bounds(fp, i, j))
            if len(poly) >= 3:
                ax.add_patch(Polygon(poly, closed=True, facecolor="#3a9e5a", edgecolor="#1f5c33", alpha=0.5, lw=0.4))
        for tr in trajectories or ():
            xs = tr.times if i == TIME_AXIS else tr.states[:, i]
            ys = tr.times if j == TIME_AXIS else tr.states[:, j]
            ax.plot(xs, ys, color="#c0392b", lw=0.6)
        ax.autoscale_view()
        ax.set_xlabel(_axis_name(result, i))
        ax.set_ylabel(_axis_name(result, j))
    fig.tight_layout()
    buf = io.StringIO()
    matplotlib.rcParams["svg.hashsalt"] = "polar-reach"
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def _octagon_polygon(o: dict[str, float]) -> list[tuple[float, float]]:
    """Vertices of {x, y : box, x+y, x-y bounds} by clipping the box with four half-planes."""
    pts = [(o["x_lo"], o["y_lo"]), (o["x_hi"], o["y_lo"]), (o["x_hi"], o["y_hi"]), (o["x_lo"], o["y_hi"])]
    planes = [
        (1.0, 1.0, o["sum_hi"]), (-1.0, -1.0, -o["sum_lo"]),
        (1.0, -1.0, o["diff_hi"]), (-1.0, 1.0, -o["diff_lo"]),
    ]
    for a, b, c in planes:
        out = []
        for k in range(len(pts)):
            p, q = pts[k], pts[(k + 1) % len(pts)]
            fp, fq = a * p[0] + b * p[1] - c, a * q[0] + b * q[1] - c
            if fp <= 0:
                out.append(p)
            if fp * fq < 0:
                s = fp / (fp - fq)
                out.append((p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])))
        pts = out
        if not pts:
            break
    return pts


def emit_flowpipes(
    result: ReachResult,
    path: str | Path,
    format: str = "csv",
    projections: Sequence[tuple] | None = None,
    trajectories: Sequence[Trajectory] | None = None,
) -> Path:
    """Write flowpipes to ``path`` (a file, or a directory receiving ``flowpipes.<format>``)."""
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {', '.join(FORMATS)}")
    path = Path(path)
    if path.is_dir() or not path.suffix:
        path.mkdir(parents=True, exist_ok=True)
        path = path / f"flowpipes.{format}"
    projections = list(projections) if projections else default_projections(result)
    if format == "csv":
        text = _csv_text(result, projections)
    elif format == "json":
        text = json.dumps(result_to_dict(result), indent=1, sort_keys=True) + "\n"
    else:
        text = _svg_text(result, projections, trajectories)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_trajectories(trajectories: Sequence[Trajectory], directory: str | Path, names: Sequence[str]) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, tr in enumerate(trajectories):
        p = directory / f"trajectory_{k:03d}.csv"
        data = np.column_stack([tr.times, tr.states])
        header = ",".join(["t", *names])
        np.savetxt(p, data, delimiter=",", header=header, comments="", fmt="%.17g")
        paths.append(p)
    return paths
