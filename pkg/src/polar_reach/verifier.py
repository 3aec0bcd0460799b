"""Closed-loop reachability: alternate controller abstraction and flowpipe construction.

Also holds the concrete side used to test it: an RK4 simulator of the
sampled-data loop and a point-wise containment check of simulated states
against the flowpipes.
"""

from __future__ import annotations

import enum
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .interval import UNIT_ROUNDOFF, Interval, add_up
from .neural_network import NeuralNetwork, nn_forward
from .nn_abstraction import nn_output_tm, nn_output_tm_symbolic
from .ode_flowpipe import ContractionFailure, Flowpipe, PolynomialODE, integrate_control_step
from .polynomial import Domain, abs_mag_sum
from .taylor_model import TMVector

__all__ = [
    "NNCSModel",
    "ReachConfig",
    "ReachResult",
    "TargetSpec",
    "Verdict",
    "Trajectory",
    "Violation",
    "run_reachability",
    "check_property",
    "simulate",
    "simulate_many",
    "containment_check",
    "sample_initial_states",
]


class Verdict(str, enum.Enum):
    PROVED = "proved"
    DISPROVED = "disproved"
    UNKNOWN = "unknown"

    @property
    def exit_code(self) -> int:
        return {"proved": 0, "disproved": 1, "unknown": 2}[self.value]


@dataclass(frozen=True)
class NNCSModel:
    """Plant ``x' = f(x, u)`` with ``u = net(x)`` recomputed every ``delta_c`` seconds."""

    ode: PolynomialODE
    net: NeuralNetwork | None
    delta_c: float
    X0: tuple[Interval, ...]
    state_names: tuple[str, ...] = ()
    control_names: tuple[str, ...] = ()
    network_path: str | None = None

    def __post_init__(self) -> None:
        X0 = tuple(self.X0.boxes if isinstance(self.X0, Domain) else self.X0)
        object.__setattr__(self, "X0", X0)
        n, m = self.ode.num_states, self.ode.num_controls
        if not self.state_names:
            object.__setattr__(self, "state_names", tuple(f"x{i}" for i in range(n)))
        if not self.control_names:
            object.__setattr__(self, "control_names", tuple(f"u{i}" for i in range(m)))
        object.__setattr__(self, "state_names", tuple(self.state_names))
        object.__setattr__(self, "control_names", tuple(self.control_names))
        if len(X0) != n or len(self.state_names) != n:
            raise ValueError(f"initial box has {len(X0)} entries, model has {n} states")
        if len(self.control_names) != m:
            raise ValueError("control names do not match the ODE's control count")
        if not (self.delta_c > 0 and math.isfinite(self.delta_c)):
            raise ValueError("control step must be positive")
        if m and self.net is None:
            raise ValueError("model has control inputs but no network")
        if self.net is not None:
            if self.net.input_dim != n:
                raise ValueError(f"network takes {self.net.input_dim} inputs, model has {n} states")
            if self.net.output_dim != m:
                raise ValueError(f"network has {self.net.output_dim} outputs, model has {m} controls")

    @property
    def num_states(self) -> int:
        return self.ode.num_states

    @property
    def num_controls(self) -> int:
        return self.ode.num_controls

    def normalization(self) -> tuple[np.ndarray, np.ndarray]:
        """Center and half-width with ``X0 subset center + halfwidth * [-1, 1]``."""
        c = np.array([0.5 * b.lo + 0.5 * b.hi for b in self.X0])
        h = np.array([max(add_up(b.hi, -ci), add_up(ci, -b.lo)) for b, ci in zip(self.X0, c)])
        return c, h

    def controller(self, x: np.ndarray) -> np.ndarray:
        if self.net is None:
            return np.zeros(np.shape(x)[:-1] + (0,))
        return nn_forward(self.net, x)


@dataclass(frozen=True)
class ReachConfig:
    order: int = 4
    bernstein_order: int = 2
    samples: int = 100
    flowsteps: int = 10
    symbolic: bool = False
    remainder_mode: str = "sampled"
    nn_order: int | None = None

    def __post_init__(self) -> None:
        if min(self.order, self.bernstein_order, self.samples, self.flowsteps) < 1:
            raise ValueError("orders, sample count and flowsteps must be at least 1")
        if self.remainder_mode not in ("sampled", "rigorous"):
            raise ValueError(f"unknown remainder mode {self.remainder_mode!r}")


@dataclass(frozen=True)
class TargetSpec:
    """``kind`` is ``safety`` (box is unsafe) or ``reachability`` (box is the target)."""

    box: tuple[Interval, ...]
    kind: str = "reachability"
    check_at: str | None = None

    def __post_init__(self) -> None:
        box = tuple(self.box.boxes if isinstance(self.box, Domain) else self.box)
        object.__setattr__(self, "box", box)
        if self.kind not in ("safety", "reachability"):
            raise ValueError(f"unknown property kind {self.kind!r}")
        if self.check_at is None:
            object.__setattr__(self, "check_at", "all-steps" if self.kind == "safety" else "final-step")
        if self.check_at not in ("final-step", "all-steps"):
            raise ValueError(f"unknown check point {self.check_at!r}")


@dataclass
class ReachResult:
    model: NNCSModel
    config: ReachConfig
    steps: int
    flowpipes: list[tuple[int, Flowpipe]]
    step_ranges: list[list[Interval]]
    step_end_ranges: list[list[Interval]]
    final_tm: TMVector
    control_tms: list[TMVector]
    center: np.ndarray
    halfwidth: np.ndarray
    verdict: Verdict | None = None
    stats: dict = field(default_factory=dict)

    @property
    def final_range(self) -> list[Interval]:
        return self.step_end_ranges[-1]

    def flowpipe_boxes(self) -> list[list[Interval]]:
        return [fp.box() for _, fp in self.flowpipes]


def _box_subset(a: Sequence[Interval], b: Sequence[Interval]) -> bool:
    return all(x.lo >= y.lo and x.hi <= y.hi for x, y in zip(a, b))


def _box_disjoint(a: Sequence[Interval], b: Sequence[Interval]) -> bool:
    return any(x.hi < y.lo or y.hi < x.lo for x, y in zip(a, b))


def _hull(boxes: Sequence[Sequence[Interval]]) -> list[Interval]:
    return [Interval(min(b[i].lo for b in boxes), max(b[i].hi for b in boxes)) for i in range(len(boxes[0]))]


def run_reachability(
    model: NNCSModel,
    K: int,
    cfg: ReachConfig | None = None,
    target: TargetSpec | None = None,
    progress: Callable[[int, list[Interval]], None] | None = None,
) -> ReachResult:
    """Flowpipes over ``[0, K * delta_c]`` starting from the initial box."""
    cfg = cfg or ReachConfig()
    if K < 1:
        raise ValueError("need at least one control step")
    t0 = time.perf_counter()
    c, h = model.normalization()
    X = TMVector.identity(c, h, cfg.order)
    nn_order = cfg.nn_order or cfg.order
    propagate = nn_output_tm_symbolic if cfg.symbolic else nn_output_tm
    counter: Counter = Counter()
    pipes: list[tuple[int, Flowpipe]] = []
    step_ranges, end_ranges, controls, rem_widths, ctrl_widths = [], [], [], [], []
    N = cfg.flowsteps
    for i in range(K):
        U = None
        if model.net is not None:
            U = propagate(
                model.net, X, k_B=cfg.bernstein_order, m=cfg.samples, mode=cfg.remainder_mode,
                order=nn_order, counter=counter,
            )
            if nn_order != cfg.order:
                U = TMVector(tuple(type(u)(u.poly, u.rem, u.domain, cfg.order).truncate() for u in U))
            controls.append(U)
            ctrl_widths.append([r.width for r in U.remainders])
        try:
            fps, X = integrate_control_step(
                model.ode, X, U, model.delta_c, N, cfg.order, step_offset=i * N, t_start=i * model.delta_c
            )
        except ContractionFailure as exc:
            exc.control_step = i
            exc.args = (str(ContractionFailure(exc.component, exc.width, exc.step, i)),)
            raise
        pipes.extend((i, fp) for fp in fps)
        step_ranges.append(_hull([fp.box() for fp in fps]))
        end_ranges.append(X.ranges())
        rem_widths.append([r.width for r in X.remainders])
        if progress is not None:
            progress(i, end_ranges[-1])
    result = ReachResult(
        model=model,
        config=cfg,
        steps=K,
        flowpipes=pipes,
        step_ranges=step_ranges,
        step_end_ranges=end_ranges,
        final_tm=X,
        control_tms=controls,
        center=c,
        halfwidth=h,
        stats={
            "remainder_widths": rem_widths,
            "control_remainder_widths": ctrl_widths,
            "matmuls": counter["matmul"],
            "wall_time": time.perf_counter() - t0,
        },
    )
    if target is not None:
        result.verdict = check_property(result, target)
    return result


def check_property(result: ReachResult, spec: TargetSpec) -> Verdict:
    """Three-valued verdict from interval boxes of the flowpipes."""
    n = result.model.num_states
    if len(spec.box) != n:
        raise ValueError(f"target box has {len(spec.box)} entries, model has {n} states")
    box = spec.box
    if spec.check_at == "final-step":
        final = result.final_range
        if spec.kind == "reachability":
            if _box_subset(final, box):
                return Verdict.PROVED
            return Verdict.DISPROVED if _box_disjoint(final, box) else Verdict.UNKNOWN
        if _box_disjoint(final, box):
            return Verdict.PROVED
        return Verdict.DISPROVED if _box_subset(final, box) else Verdict.UNKNOWN
    pipes = result.flowpipe_boxes()
    if spec.kind == "safety":
        if all(_box_disjoint(b, box) for b in pipes):
            return Verdict.PROVED
        return Verdict.DISPROVED if any(_box_subset(b, box) for b in pipes) else Verdict.UNKNOWN
    # reachability at any time: every state is inside at some control-step end
    if any(_box_subset(r, box) for r in result.step_end_ranges):
        return Verdict.PROVED
    return Verdict.DISPROVED if all(_box_disjoint(b, box) for b in pipes) else Verdict.UNKNOWN


# ---------------------------------------------------------------------------
# concrete semantics


@dataclass(frozen=True)
class Trajectory:
    """``states[j]`` is the state at ``times[j]``; ``controls[i]`` is held on step ``i``."""

    x0: np.ndarray
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray


@dataclass(frozen=True)
class Violation:
    time: float
    component: int
    value: float
    enclosure: Interval
    trajectory: int = 0


def _substeps(delta_c: float, fine_dt: float) -> int:
    n = round(delta_c / fine_dt)
    if n < 1 or abs(n * fine_dt - delta_c) > 1e-9 * delta_c:
        raise ValueError(f"fine_dt={fine_dt} does not divide the control step {delta_c}")
    return n


def simulate_many(model: NNCSModel, x0s: np.ndarray, K: int, fine_dt: float = 1e-3) -> list[Trajectory]:
    """RK4 runs of the sampled-data loop, vectorized over initial states."""
    x = np.array(np.atleast_2d(x0s), dtype=float)
    B, n = x.shape
    if n != model.num_states:
        raise ValueError(f"initial states have {n} entries, model has {model.num_states} states")
    sub = _substeps(model.delta_c, fine_dt)
    h = model.delta_c / sub
    times = np.array([i * model.delta_c + j * h for i in range(K) for j in range(sub)] + [K * model.delta_c])
    states = np.empty((B, K * sub + 1, n))
    ctrls = np.empty((B, K, model.num_controls))
    ode = model.ode

    def rhs(y: np.ndarray, u: np.ndarray) -> np.ndarray:
        return ode.evaluate_many(np.concatenate([y, u], axis=1))

    states[:, 0] = x
    for i in range(K):
        u = model.controller(x).reshape(B, model.num_controls)
        ctrls[:, i] = u
        for j in range(sub):
            k1 = rhs(x, u)
            k2 = rhs(x + 0.5 * h * k1, u)
            k3 = rhs(x + 0.5 * h * k2, u)
            k4 = rhs(x + h * k3, u)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise FloatingPointError(f"simulation diverged at t={times[i * sub + j + 1]}")
            states[:, i * sub + j + 1] = x
    return [Trajectory(np.array(x0s, float).reshape(B, n)[b], times, states[b], ctrls[b]) for b in range(B)]


def simulate(model: NNCSModel, x0: Sequence[float], K: int, fine_dt: float = 1e-3) -> Trajectory:
    return simulate_many(model, np.asarray(x0, float)[None, :], K, fine_dt)[0]


def sample_initial_states(model: NNCSModel, count: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo = np.array([b.lo for b in model.X0])
    hi = np.array([b.hi for b in model.X0])
    return lo + (hi - lo) * rng.random((count, lo.size))


def containment_check(
    result: ReachResult, trajectory: Trajectory | Sequence[Trajectory], tol: float = 1e-9
) -> list[Violation]:
    """Samples of the trajectory outside the flowpipe evaluated at the trajectory's own parameter.

    ``tol`` absorbs the simulator's integration error, not the enclosure's.
    """
    trajs = [trajectory] if isinstance(trajectory, Trajectory) else list(trajectory)
    pipes = [fp for _, fp in result.flowpipes]
    if not trajs or not pipes:
        return []
    horizon = result.steps * result.model.delta_c
    delta = pipes[0].delta
    scale = np.where(result.halfwidth > 0, result.halfwidth, 1.0)
    T, Z, S, owner = [], [], [], []
    for ti, tr in enumerate(trajs):
        if tr.times.min() < 0 or tr.times.max() > horizon * (1 + 1e-12):
            raise ValueError("trajectory times outside the analysed horizon")
        z = np.clip((tr.x0 - result.center) / scale, -1.0, 1.0)
        T.append(tr.times)
        Z.append(np.repeat(z[None, :], tr.times.size, axis=0))
        S.append(tr.states)
        owner.append(np.full(tr.times.size, ti))
    times, zs, states, owner = map(np.concatenate, (T, Z, S, owner))
    idx = np.minimum((times / delta).astype(int), len(pipes) - 1)
    out: list[Violation] = []
    for g in np.unique(idx):
        sel = np.flatnonzero(idx == g)
        fp = pipes[g]
        tl = np.clip(times[sel] - fp.t_offset, 0.0, fp.delta)
        pts = np.column_stack([zs[sel], tl])
        for c, comp in enumerate(fp.tm):
            vals = comp.poly.evaluate_many(pts)
            slack = tol + (comp.poly.degree() + 2) * UNIT_ROUNDOFF * abs_mag_sum(comp.poly, comp.domain)
            x = states[sel, c]
            bad = (x < vals + comp.rem.lo - slack) | (x > vals + comp.rem.hi + slack)
            for j in np.flatnonzero(bad):
                enc = Interval(float(vals[j] + comp.rem.lo), float(vals[j] + comp.rem.hi))
                out.append(Violation(float(times[sel[j]]), c, float(x[j]), enc, int(owner[sel[j]])))
    out.sort(key=lambda v: (v.trajectory, v.time, v.component))
    return out
