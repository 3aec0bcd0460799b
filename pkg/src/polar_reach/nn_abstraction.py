"""Taylor-model overapproximation of a network's input-output map.

Each neuron's activation is replaced by a univariate Bernstein interpolant on
the neuron's input range plus a sampled (or Lipschitz-certified) error
interval, and the layers are pushed through Taylor model arithmetic.  The
symbolic variant keeps remainders under the layers' linear parts as matrix
products instead of intervalizing them layer by layer.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from .interval import UNIT_ROUNDOFF, Interval, imatvec
from .neural_network import Activation, NeuralNetwork, activation_eval, activation_lipschitz
from .polynomial import Domain, SparsePolynomial, poly_bound
from .taylor_model import TaylorModel, TMVector, tm_add, tm_compose_univariate, tm_linear_map, tm_range

__all__ = [
    "BernsteinApprox",
    "SAMPLED",
    "RIGOROUS",
    "bernstein_interpolate",
    "bernstein_remainder",
    "bernstein_approx",
    "nn_output_tm",
    "nn_output_tm_symbolic",
]

SAMPLED = "sampled"
RIGOROUS = "rigorous"
_U = UNIT_ROUNDOFF


@dataclass(frozen=True)
class BernsteinApprox:
    """``sigma(y) in poly(y) + rem`` for ``y`` in ``input_range``.

    ``shifted`` is the same polynomial written in ``y - center``; it is the
    form used for evaluation and composition because it stays well
    conditioned when the range sits far from zero.
    """

    poly: SparsePolynomial
    rem: Interval
    input_range: Interval
    shifted: SparsePolynomial
    center: float


@lru_cache(maxsize=32)
def _bernstein_matrix(k: int) -> np.ndarray:
    """Maps node values f_0..f_k to monomial coefficients in ``s`` of
    sum_j f_j C(k,j) (1/2 + s)^j (1/2 - s)^(k-j)."""
    M = np.zeros((k + 1, k + 1))
    for j in range(k + 1):
        up = _binomial_row(j, 0.5, 1.0)
        down = _binomial_row(k - j, 0.5, -1.0)
        M[:, j] = math.comb(k, j) * np.convolve(up, down)
    return M


def _binomial_row(n: int, a: float, b: float) -> np.ndarray:
    """Coefficients of ``(a + b*s)^n``."""
    return np.array([math.comb(n, i) * a ** (n - i) * b**i for i in range(n + 1)])


def _bernstein_shifted(sigma: Activation, Y: Interval, k: int) -> tuple[np.ndarray, float]:
    """Coefficients (lowest degree first) of the interpolant in ``v = y - center``."""
    a, b = Y.lo, Y.hi
    center = 0.5 * a + 0.5 * b
    w = b - a
    nodes = a + w * np.arange(k + 1) / k
    f = np.asarray(activation_eval(sigma, nodes), dtype=float)
    return (_bernstein_matrix(k) @ f) / w ** np.arange(k + 1), center


def _to_sparse(coeffs: np.ndarray) -> SparsePolynomial:
    return SparsePolynomial.univariate(np.asarray(coeffs, dtype=float))


def _shift(coeffs: np.ndarray, offset: float) -> np.ndarray:
    """Coefficients of ``q(x) = p(x + offset)`` (Taylor shift)."""
    c = np.array(coeffs, dtype=float)
    n = c.size
    for i in range(n - 1):
        for j in range(n - 2, i - 1, -1):
            c[j] += offset * c[j + 1]
    return c


def bernstein_interpolate(sigma: Activation, Y: Interval, k: int) -> SparsePolynomial:
    """Order-k Bernstein interpolant of ``sigma`` on ``Y``, in monomial form in ``y``."""
    if k < 1:
        raise ValueError("Bernstein order must be at least 1")
    sigma = Activation(sigma)
    if Y.is_point():
        return SparsePolynomial.constant(1, float(activation_eval(sigma, Y.lo)))
    c, center = _bernstein_shifted(sigma, Y, k)
    return _to_sparse(_shift(c, -center))


def _eval_pad(coeffs: np.ndarray, V: Interval, sig_mag: float) -> float:
    vm = V.mag()
    horner = sum(abs(ci) * vm**d for d, ci in enumerate(coeffs))
    return (2 * len(coeffs) + 6) * _U * (horner + sig_mag) + 1e-300


def bernstein_remainder(
    sigma: Activation,
    p: SparsePolynomial,
    Y: Interval,
    m: int,
    mode: str = SAMPLED,
    center: float = 0.0,
) -> Interval:
    """Symmetric error interval ``[-eps, eps]`` for ``p`` approximating ``sigma`` on ``Y``.

    ``p`` is a polynomial in ``y - center``.  Sampled mode is the midpoint
    sampling estimate with slack ``width/m``; rigorous mode replaces the slack
    with ``L * width / (2m)``, ``L`` a Lipschitz bound of ``sigma - p`` on ``Y``.
    """
    if m < 1:
        raise ValueError("need at least one sample")
    if mode not in (SAMPLED, RIGOROUS):
        raise ValueError(f"unknown remainder mode {mode!r}")
    sigma = Activation(sigma)
    coeffs = p.univariate_coeffs() if not p.is_zero() else np.zeros(1)
    w = Y.hi - Y.lo
    V = Y - center
    sig_mag = max(abs(float(activation_eval(sigma, Y.lo))), abs(float(activation_eval(sigma, Y.hi))), 1.0)
    pad = _eval_pad(coeffs, V, sig_mag)
    if w == 0.0:
        err = abs(float(np.polyval(coeffs[::-1], Y.lo - center)) - float(activation_eval(sigma, Y.lo)))
        return Interval.symmetric(err + pad)
    samples = Y.lo + w * (np.arange(1, m + 1) - 0.5) / m
    err = float(np.max(np.abs(np.polyval(coeffs[::-1], samples - center) - activation_eval(sigma, samples))))
    if mode == SAMPLED:
        slack = w / m
    else:
        dp = p.derivative_1d() if not p.is_zero() else SparsePolynomial.zero(1)
        lip_p = poly_bound(dp, Domain((V,))).mag()
        lip = activation_lipschitz(sigma, Y) + lip_p
        slack = lip * w / (2 * m)
    eps = (err + slack + pad) * (1 + 4 * _U)
    return Interval.symmetric(eps)


def bernstein_approx(
    sigma: Activation, Y: Interval, k: int, m: int, mode: str = SAMPLED
) -> BernsteinApprox:
    sigma = Activation(sigma)
    if k < 1:
        raise ValueError("Bernstein order must be at least 1")
    if Y.is_point():
        val = float(activation_eval(sigma, Y.lo))
        const = SparsePolynomial.constant(1, val)
        rem = Interval.symmetric(4 * _U * abs(val))
        return BernsteinApprox(const, rem, Y, const, Y.lo)
    c, center = _bernstein_shifted(sigma, Y, k)
    shifted = _to_sparse(c)
    rem = bernstein_remainder(sigma, shifted, Y, m, mode, center=center)
    return BernsteinApprox(_to_sparse(_shift(c, -center)), rem, Y, shifted, center)


def _order_for(k_B: int | Mapping, sigma: Activation) -> int:
    if isinstance(k_B, Mapping):
        return int(k_B.get(sigma, k_B.get(sigma.value, 2)))
    return int(k_B)


def _with_order(v: TMVector, order: int | None) -> TMVector:
    if order is None or order == v.order:
        return v
    return TMVector(tuple(TaylorModel(c.poly, c.rem, c.domain, order).truncate(order) for c in v))


def _check_input(net: NeuralNetwork, v: TMVector) -> None:
    if len(v) != net.input_dim:
        raise ValueError(f"network expects {net.input_dim} inputs, got a TM vector of length {len(v)}")


def nn_output_tm(
    net: NeuralNetwork,
    input: TMVector,
    k_B: int | Mapping = 2,
    m: int = 100,
    mode: str = SAMPLED,
    order: int | None = None,
    counter: Counter | None = None,
) -> TMVector:
    """Layer-by-layer TM propagation with interval remainders."""
    _check_input(net, input)
    cur = _with_order(input, order)
    for W, b, sigma in zip(net.weights, net.biases, net.activations):
        pre = tm_linear_map(W, cur, b)
        if counter is not None:
            counter["matmul"] += 1
        k = _order_for(k_B, sigma)
        out = []
        for t in pre:
            ba = bernstein_approx(sigma, tm_range(t), k, m, mode)
            out.append(tm_compose_univariate(ba.shifted, ba.rem, t.add_constant(-ba.center)))
        cur = TMVector(tuple(out))
    return cur


def _iv_add_arrays(alo, ahi, blo, bhi):
    return np.nextafter(alo + blo, -np.inf), np.nextafter(ahi + bhi, np.inf)


def nn_output_tm_symbolic(
    net: NeuralNetwork,
    input: TMVector,
    k_B: int | Mapping = 2,
    m: int = 100,
    mode: str = SAMPLED,
    order: int | None = None,
    counter: Counter | None = None,
) -> TMVector:
    """TM propagation keeping remainders symbolic under the linear layer parts.

    Layer ``i`` is written ``q_i(y) = Q_i y + q_i^R(y)`` with ``Q_i`` the
    linear coefficients of ``p_sigma(W_i y + B_i)``.  The output remainder is
    ``(Q_i...Q_1) I + J_i + Q_i J_{i-1} + ... + (Q_i...Q_2) J_1``, each product
    evaluated once as a point matrix times an interval vector.
    """
    _check_input(net, input)
    cur = _with_order(input, order)
    dom, k_tm = cur.domain, cur.order
    in_lo = np.array([r.lo for r in cur.remainders])
    in_hi = np.array([r.hi for r in cur.remainders])
    Qs: list[np.ndarray] = []
    Js: list[tuple[np.ndarray, np.ndarray]] = []

    def bump(n: int = 1) -> None:
        if counter is not None:
            counter["matmul"] += n

    for W, b, sigma in zip(net.weights, net.biases, net.activations):
        wy = tm_linear_map(W, cur)
        bump()
        k = _order_for(k_B, sigma)
        Q = np.empty_like(W)
        phi, direct = [], []
        for j, t in enumerate(wy):
            ba = bernstein_approx(sigma, tm_range(t.add_constant(float(b[j]))), k, m, mode)
            base = ba.shifted.univariate_coeffs() if not ba.shifted.is_zero() else np.zeros(1)
            rho = _shift(base, float(b[j]) - ba.center)
            slope = float(rho[1]) if rho.size > 1 else 0.0
            Q[j] = slope * W[j]
            if rho.size > 1:
                rho[1] = 0.0
            phi.append(tm_compose_univariate(_to_sparse(rho), ba.rem, t))
            # the one-step enclosure with the linear term left inside the product
            direct.append(tm_compose_univariate(ba.shifted, ba.rem, t.add_constant(float(b[j]) - ba.center)))
        prev_polys = TMVector(tuple(TaylorModel(c.poly, Interval(0.0, 0.0), dom, k_tm) for c in cur))
        lin = tm_linear_map(Q, prev_polys)
        bump()
        new_polys, J_lo, J_hi = [], [], []
        for lj, fj in zip(lin, phi):
            s = tm_add(TaylorModel(lj.poly, lj.rem, dom, k_tm), TaylorModel(fj.poly, Interval(0.0, 0.0), dom, k_tm))
            new_polys.append(s.poly)
            J = s.rem + fj.rem
            J_lo.append(J.lo)
            J_hi.append(J.hi)
        J_i = (np.array(J_lo), np.array(J_hi))

        Qs = [Q @ Qj for Qj in Qs]
        bump(len(Qs))
        Qs.append(Q)
        acc_lo, acc_hi = J_i
        for j in range(1, len(Qs)):
            lo, hi = imatvec(Qs[j], *Js[j - 1])
            bump()
            acc_lo, acc_hi = _iv_add_arrays(acc_lo, acc_hi, lo, hi)
        Js.append(J_i)
        lo, hi = imatvec(Qs[0], in_lo, in_hi)
        bump()
        r_lo, r_hi = _iv_add_arrays(lo, hi, acc_lo, acc_hi)
        # Splitting off the linear term can lose to subdistributivity on a
        # single layer; where the direct enclosure is narrower, restart that
        # row of the chain from it.
        for j, d in enumerate(direct):
            if d.rem.width < r_hi[j] - r_lo[j]:
                for Qk in Qs:
                    Qk[j] = 0.0
                J_i[0][j], J_i[1][j] = d.rem.lo, d.rem.hi
                r_lo[j], r_hi[j] = d.rem.lo, d.rem.hi
                new_polys[j] = d.poly
        cur = TMVector(
            tuple(
                TaylorModel(p, Interval(float(l), float(h)), dom, k_tm)
                for p, l, h in zip(new_polys, r_lo, r_hi)
            )
        )
    return cur
