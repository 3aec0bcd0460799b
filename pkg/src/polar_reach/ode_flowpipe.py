"""Validated integration of polynomial ODEs by Taylor-model Picard iteration.

One flowpipe step over ``t in [0, delta]`` builds the order-k expansion of the
solution by iterating the Picard operator on polynomials, then searches for a
remainder ``R`` with ``Picard(Phi + R) subset Phi + R``, which certifies that
``Phi + R`` encloses every solution started in the local initial set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .interval import Interval
from .polynomial import MonomialBasis, SparsePolynomial
from .taylor_model import TaylorModel, TMVector, tm_add, tm_mul, tm_range

__all__ = [
    "PolynomialODE",
    "Flowpipe",
    "ContractionFailure",
    "picard_apply",
    "solution_expansion",
    "remainder_certify",
    "integrate_control_step",
]

MAX_INFLATIONS = 30
REFINEMENTS = 2


class ContractionFailure(RuntimeError):
    """No remainder passed the contraction check; try a smaller step."""

    def __init__(self, component: int, width: float, step: int | None = None, control_step: int | None = None):
        self.component = component
        self.width = width
        self.step = step
        self.control_step = control_step
        where = []
        if control_step is not None:
            where.append(f"control step {control_step}")
        if step is not None:
            where.append(f"flowpipe {step}")
        loc = f" at {', '.join(where)}" if where else ""
        super().__init__(
            f"remainder certification failed for component {component}{loc} "
            f"(last remainder width {width:.3g}); reduce the step size"
        )


@dataclass(frozen=True)
class PolynomialODE:
    """``x' = rhs(x, u)``, ``u' = 0``.

    ``rhs`` has one polynomial per state, each over the states followed by the
    ``num_controls`` control inputs.
    """

    rhs: tuple[SparsePolynomial, ...]
    num_controls: int = 0
    _monomials: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        rhs = tuple(self.rhs)
        object.__setattr__(self, "rhs", rhs)
        if not rhs:
            raise ValueError("ODE needs at least one state")
        if self.num_controls < 0:
            raise ValueError("negative control count")
        nv = len(rhs) + self.num_controls
        for i, p in enumerate(rhs):
            if p.num_vars != nv:
                raise ValueError(f"right-hand side {i} has {p.num_vars} variables, expected {nv}")
        mons = set()
        for p in rhs:
            for e in p.exponents:
                e = [int(x) for x in e]
                # every product chain prefix is needed when building monomials incrementally
                while any(e):
                    mons.add(tuple(e))
                    e[max(j for j, ej in enumerate(e) if ej)] -= 1
                mons.add(tuple(e))
        object.__setattr__(self, "_monomials", tuple(sorted(mons, key=lambda e: (sum(e), e))))

    @property
    def num_states(self) -> int:
        return len(self.rhs)

    @property
    def dimension(self) -> int:
        return self.num_states + self.num_controls

    def __call__(self, x: np.ndarray, u: np.ndarray | None = None) -> np.ndarray:
        xu = np.concatenate([np.asarray(x, float), np.asarray(u if u is not None else [], float)])
        return np.array([p.evaluate(xu) for p in self.rhs])

    def evaluate_many(self, xu: np.ndarray) -> np.ndarray:
        """Rows of ``xu`` are (state, control) points; returns the state derivatives."""
        return np.stack([p.evaluate_many(xu) for p in self.rhs], axis=-1)


@dataclass(frozen=True)
class Flowpipe:
    """State enclosure over one integration substep: ``tm`` lives on (z, t), t in [0, delta]."""

    tm: TMVector
    step_index: int
    t_offset: float
    delta: float

    def box(self) -> list[Interval]:
        return self.tm.ranges()

    def at(self, z: Sequence[float], t_local: float) -> list[Interval]:
        """Point-wise enclosure of the state at parameter ``z`` and local time ``t_local``."""
        return self.tm.evaluate(list(z) + [t_local])


def _check_dims(f: PolynomialODE, v: TMVector, what: str) -> None:
    if len(v) != f.dimension:
        raise ValueError(f"{what} has {len(v)} components, ODE has dimension {f.dimension}")


def _rhs_tm(f: PolynomialODE, g: TMVector, k: int) -> list[TaylorModel]:
    """``f(g)`` in TM arithmetic, sharing monomial products across components."""
    dom = g.domain
    one = TaylorModel.constant(1.0, dom, k)
    memo: dict[tuple[int, ...], TaylorModel] = {}
    for e in f._monomials:
        if not any(e):
            memo[e] = one
            continue
        i = max(j for j, ej in enumerate(e) if ej)
        parent = e[:i] + (e[i] - 1,) + e[i + 1 :]
        memo[e] = g[i] if not any(parent) else tm_mul(memo[parent], g[i], k)
    out = []
    for p in f.rhs:
        acc = TaylorModel.constant(0.0, dom, k)
        for e, c in p.terms().items():
            acc = tm_add(acc, memo[e].scale(c))
        out.append(acc)
    return out


def _rhs_poly(f: PolynomialODE, g: Sequence[SparsePolynomial], k: int, time_var: int) -> list[SparsePolynomial]:
    nv = g[0].num_vars
    basis = MonomialBasis.get(nv, k, time_var)

    def mul(a: SparsePolynomial, b: SparsePolynomial) -> SparsePolynomial:
        res = basis.mul(a, b)
        return res[0] if res is not None else (a * b).truncate(k, time_var)[0]

    memo: dict[tuple[int, ...], SparsePolynomial] = {}
    for e in f._monomials:
        if not any(e):
            memo[e] = SparsePolynomial.constant(nv, 1.0)
            continue
        i = max(j for j, ej in enumerate(e) if ej)
        parent = e[:i] + (e[i] - 1,) + e[i + 1 :]
        memo[e] = g[i] if not any(parent) else mul(memo[parent], g[i])
    out = []
    for p in f.rhs:
        acc = SparsePolynomial.zero(nv)
        for e, c in p.terms().items():
            acc = acc + memo[e].scale(c)
        out.append(acc)
    return out


def picard_apply(f: PolynomialODE, g: TMVector, x0: TMVector, k: int) -> TMVector:
    """``x0 + integral_0^t f(g(., s)) ds`` in order-k TM arithmetic.

    ``g`` lives on (z, t); ``x0`` on z only.  Control components are static,
    so their image is ``x0`` itself.
    """
    _check_dims(f, g, "Picard argument")
    _check_dims(f, x0, "initial set")
    if g.domain.time_var is None:
        raise ValueError("Picard argument must carry a time variable")
    dom = g.domain
    x0t = x0.with_time(dom.boxes[dom.time_var].hi)
    if x0t.domain != dom:
        raise ValueError("initial set and Picard argument live on different domains")
    derivs = _rhs_tm(f, g, k)
    comps = []
    for i in range(f.dimension):
        base = TaylorModel(x0t[i].poly, x0t[i].rem, dom, k)
        if i < f.num_states:
            comps.append(tm_add(base, derivs[i].integrate_time().truncate(k)))
        else:
            comps.append(base)
    return TMVector(tuple(comps))


def solution_expansion(f: PolynomialODE, X_local: TMVector, k: int, delta: float) -> TMVector:
    """Order-k polynomial expansion of the flow from ``X_local`` (remainders zero).

    ``k + 1`` polynomial Picard iterations starting from the constant-in-time
    initial polynomial; each iteration fixes at least one more time order.
    """
    _check_dims(f, X_local, "initial set")
    if X_local.domain.time_var is not None:
        raise ValueError("local initial set must not carry a time variable")
    dom = X_local.domain.with_time(delta)
    tv = dom.time_var
    x0 = [p.extend(dom.num_vars) for p in X_local.polys]
    x0 = [p.truncate(k, tv)[0] for p in x0]
    g = list(x0)
    n = f.num_states
    for _ in range(k + 1):
        d = _rhs_poly(f, g, k, tv)
        g = [x0[i] + d[i].integrate(tv).truncate(k, tv)[0] for i in range(n)] + x0[n:]
    return TMVector(tuple(TaylorModel(p, Interval(0.0, 0.0), dom, k) for p in g))


def _defects(f: PolynomialODE, Phi: TMVector, R: Sequence[Interval], X_local: TMVector, k: int) -> tuple[list[Interval], TMVector]:
    img = picard_apply(f, Phi.with_remainders(R), X_local, k)
    out = []
    for a, b in zip(img, Phi):
        diff = tm_add(a, TaylorModel(b.poly, Interval(0.0, 0.0), b.domain, b.order).scale(-1.0))
        out.append(tm_range(diff))
    return out, img


def remainder_certify(
    f: PolynomialODE,
    Phi: TMVector,
    X_local: TMVector,
    delta: float,
    k: int,
    max_inflations: int = MAX_INFLATIONS,
    refinements: int = REFINEMENTS,
) -> list[Interval]:
    """Remainder vector ``R`` with ``Picard(Phi + R)`` inside ``Phi + R``.

    The first guess is twice the defect of one Picard application on ``Phi``;
    every component that fails the inclusion is widened to twice the larger of
    its current and its image magnitude.  After success, ``R`` is replaced by
    the image remainder ``refinements`` times, which keeps the enclosure valid
    because the true flow is a fixed point of the Picard operator.
    """
    dom = Phi.domain
    if dom.time_var is None or dom.boxes[dom.time_var].hi != delta:
        raise ValueError("expansion must live on the time interval [0, delta]")
    zero = [Interval(0.0, 0.0)] * len(Phi)
    d0, _ = _defects(f, Phi, zero, X_local, k)
    R = [Interval.symmetric(2.0 * d.mag()) for d in d0]
    for _ in range(max_inflations + 1):
        d, _ = _defects(f, Phi, R, X_local, k)
        bad = [i for i, (di, ri) in enumerate(zip(d, R)) if not di <= ri]
        if not bad:
            break
        for i in bad:
            w = 2.0 * max(R[i].mag(), d[i].mag())
            if not np.isfinite(w):
                raise ContractionFailure(i, w)
            R[i] = Interval.symmetric(w)
    else:
        i = bad[0]
        raise ContractionFailure(i, R[i].width)
    for _ in range(refinements):
        R = d
        d, _ = _defects(f, Phi, R, X_local, k)
        if any(not di <= ri for di, ri in zip(d, R)):
            # R still encloses the flow (image of a certified set) but refining further would not be
            break
    return list(R)


def integrate_control_step(
    f: PolynomialODE,
    X_i: TMVector,
    U_i: TMVector | None,
    delta_c: float,
    N: int,
    k: int,
    step_offset: int = 0,
    t_start: float = 0.0,
) -> tuple[list[Flowpipe], TMVector]:
    """N flowpipes covering ``[0, delta_c]`` with the controls held constant.

    Returns the state flowpipes and the state TM at ``t = delta_c``.
    """
    if N < 1:
        raise ValueError("need at least one flowpipe per control step")
    if not delta_c > 0:
        raise ValueError("control step must be positive")
    if len(X_i) != f.num_states:
        raise ValueError(f"state TM has {len(X_i)} components, ODE has {f.num_states} states")
    state = X_i if not f.num_controls else X_i.concat(U_i)
    if f.num_controls and (U_i is None or len(U_i) != f.num_controls):
        raise ValueError("control TM does not match the ODE's control count")
    delta = delta_c / N
    n = f.num_states
    pipes = []
    for s in range(N):
        Phi = solution_expansion(f, state, k, delta)
        try:
            R = remainder_certify(f, Phi, state, delta, k)
        except ContractionFailure as exc:
            exc.step = step_offset + s
            exc.args = (str(ContractionFailure(exc.component, exc.width, exc.step, exc.control_step)),)
            raise
        fp = Phi.with_remainders(R)
        pipes.append(Flowpipe(fp.select(range(n)), step_offset + s, t_start + s * delta, delta))
        state = fp.eval_time(delta)
    return pipes, state.select(range(n))
