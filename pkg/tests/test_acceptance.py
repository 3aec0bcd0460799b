"""End-to-end acceptance checks, one per criterion.

Run under pytest (each criterion prints a PASS/FAIL line) or directly with
``python3 tests/test_acceptance.py`` for the summary alone.
"""

import math
import sys
import tempfile
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import polar_reach  # noqa: E402
from builders import random_input_tm, random_network, write_frozen_model  # noqa: E402
from oracles import rational_tm_product  # noqa: E402
from polar_reach.cli import main as cli_main  # noqa: E402
from polar_reach.interval import Interval, imatvec  # noqa: E402
from polar_reach.modelfile import parse_model  # noqa: E402
from polar_reach.neural_network import Activation, NeuralNetwork, activation_eval  # noqa: E402
from polar_reach.nn_abstraction import RIGOROUS, SAMPLED, bernstein_approx, nn_output_tm, nn_output_tm_symbolic  # noqa: E402
from polar_reach.ode_flowpipe import PolynomialODE, integrate_control_step  # noqa: E402
from polar_reach.polynomial import Domain, SparsePolynomial  # noqa: E402
from polar_reach.taylor_model import TaylorModel, TMVector, tm_add, tm_mul  # noqa: E402
from polar_reach.verifier import (  # noqa: E402
    ReachConfig,
    containment_check,
    run_reachability,
    sample_initial_states,
    simulate_many,
)

DATA = Path(polar_reach.__file__).parent / "data"
SEED = 20221017
UNIT = Domain.unit(1)


def univariate_tm(coeffs, rem, order=4):
    return TaylorModel(SparsePolynomial.univariate(coeffs), Interval(*rem), UNIT, order)


def criterion_1():
    f = univariate_tm([1, 0, -0.5], (-0.1, 0.1))
    g = univariate_tm([0, 1, 0, 0, 0.1], (-0.2, 0.2))
    s = tm_add(f, g)
    poly_ok = s.poly == SparsePolynomial.univariate([1, 1, -0.5, 0, 0.1])
    rem_ok = s.rem.lo <= -0.3 and s.rem.hi >= 0.3 and s.rem.lo >= -0.3 - 1e-10 and s.rem.hi <= 0.3 + 1e-10
    return poly_ok and rem_ok, f"sum = {s.poly.format(['x'])} + {s.rem}"


def criterion_2():
    rng = np.random.default_rng(SEED)
    poly_mismatch = rem_miss = 0
    for _ in range(100):
        k = int(rng.integers(1, 5))
        # dyadic coefficients keep every float product exact, so the
        # polynomial parts can be compared for equality against rationals
        a = rng.integers(-64, 65, int(rng.integers(1, k + 2))) / 16
        b = rng.integers(-64, 65, int(rng.integers(1, k + 2))) / 16
        ra, rb = rng.integers(0, 33, 2) / 256
        f = univariate_tm(list(a), (-ra, ra), k)
        g = univariate_tm(list(b), (-rb, rb), k)
        p = tm_mul(f, g, k)
        low, rem = rational_tm_product(f.poly, f.rem, g.poly, g.rem, k, UNIT.boxes)
        poly_mismatch += not low.equals(p.poly)
        rem_miss += not rem.inside(p.rem)
    return poly_mismatch == 0 and rem_miss == 0, (
        f"100 pairs: {poly_mismatch} polynomial mismatches, {rem_miss} remainders not containing the oracle"
    )


def criterion_3():
    decay = PolynomialODE([SparsePolynomial.variable(1, 0, -1.0)])
    X = TMVector.identity(np.array([1.0]), np.array([0.1]), 4)
    pipes, final = integrate_control_step(decay, X, None, 1.0, 50, 4)
    rng = np.random.default_rng(SEED)
    z = rng.uniform(-1, 1, 1000)
    t = rng.uniform(0, 1, 1000)
    misses = 0
    for zi, ti in zip(z, t):
        idx = min(int(ti / 0.02), 49)
        fp = pipes[idx]
        local = ti - fp.t_offset
        exact = (1.0 + 0.1 * zi) * math.exp(-ti)
        enc = fp.tm[0].evaluate([zi, local])
        misses += not (enc.lo <= exact <= enc.hi)
    r = final[0].range()
    exact_range = Interval(0.9 * math.exp(-1), 1.1 * math.exp(-1))
    contains = r.lo <= exact_range.lo and exact_range.hi <= r.hi
    ratio = r.width / (0.2 * math.exp(-1))
    ok = misses == 0 and contains and ratio <= 1.05
    return ok, f"{misses}/1000 samples outside; final width / exact width = {ratio:.8f}"


def criterion_4():
    rng = np.random.default_rng(SEED)
    rigorous_violations = sampled_violations = cases = 0
    worst_sampled = 0.0
    for sigma in (Activation.RELU, Activation.SIGMOID, Activation.TANH):
        for _ in range(200):
            lo = float(rng.uniform(-8, 8))
            Y = Interval(lo, lo + float(rng.uniform(1e-3, 8)))
            ys = np.linspace(Y.lo, Y.hi, 10_000)
            fy = activation_eval(sigma, ys)
            for k in (1, 2, 3, 4):
                cases += 1
                rig = bernstein_approx(sigma, Y, k, 100, RIGOROUS)
                err = float(np.max(np.abs(rig.poly.evaluate_many(ys[:, None]) - fy)))
                rigorous_violations += err > rig.rem.hi
                smp = bernstein_approx(sigma, Y, k, 100, SAMPLED)
                err = float(np.max(np.abs(smp.poly.evaluate_many(ys[:, None]) - fy)))
                if err > smp.rem.hi:
                    sampled_violations += 1
                    worst_sampled = max(worst_sampled, err - smp.rem.hi)
    rate = sampled_violations / cases
    sampled_note = "within" if rate < 0.01 and worst_sampled < 1e-3 else "OUTSIDE"
    return rigorous_violations == 0, (
        f"{cases} cases: rigorous violations {rigorous_violations}; sampled violations "
        f"{sampled_violations} ({100 * rate:.2f}%, worst excess {worst_sampled:.2e}, {sampled_note} the report band)"
    )


def criterion_5():
    cfg = ReachConfig(remainder_mode="rigorous", symbolic=True)
    parts = []
    total = 0
    for name, K in (("linear_feedback.model", 10), ("attitude.model", 5)):
        model = parse_model(DATA / name).model
        res = run_reachability(model, K, cfg)
        trajs = simulate_many(model, sample_initial_states(model, 100, seed=SEED), K)
        v = containment_check(res, trajs)
        total += len(v)
        parts.append(f"{name.split('.')[0]} K={K}: {len(v)} violations / 100 trajectories")
    return total == 0, "; ".join(parts)


def random_network_case(rng):
    layers = int(rng.integers(2, 5))
    n_in = int(rng.integers(2, 4))
    sizes = [n_in] + [int(rng.integers(10, 65)) for _ in range(layers - 1)] + [int(rng.integers(1, 4))]
    acts = [list(Activation)[int(i)] for i in rng.integers(0, 4, layers)]
    return random_network(rng, sizes, acts), random_input_tm(rng, n_in)


def rotation_fixture():
    c = s = math.sqrt(0.5)
    R = np.array([[c, -s], [s, c]])
    net = NeuralNetwork([R] * 10, [np.zeros(2)] * 10, [Activation.IDENTITY] * 10)
    v = TMVector.identity(np.zeros(2), np.full(2, 1e-3), 2)
    return net, v.with_remainders([Interval(-1, 1), Interval(-0.5, 0.5)])


def criterion_6():
    rng = np.random.default_rng(SEED)
    bad, worst, comps, not_nested = 0, -math.inf, 0, 0
    for _ in range(50):
        net, v = random_network_case(rng)
        plain = nn_output_tm(net, v)
        sym = nn_output_tm_symbolic(net, v)
        for a, b in zip(plain, sym):
            comps += 1
            # the two paths build slightly different polynomial parts, so
            # remainders are compared by size; nesting is reported alongside
            excess = b.rem.width - a.rem.width
            worst = max(worst, excess)
            bad += excess > 1e-12
            not_nested += b.rem.lo < a.rem.lo - 1e-12 or b.rem.hi > a.rem.hi + 1e-12
    net, v = rotation_fixture()
    plain = nn_output_tm(net, v, m=10_000)
    sym = nn_output_tm_symbolic(net, v, m=10_000)
    ratio = min(a.rem.width / b.rem.width for a, b in zip(plain, sym))
    ok = bad == 0 and ratio >= 1.5
    return ok, (
        f"50 nets / {comps} components: {bad} symbolic wider than plain (max width difference {worst:.2e}, "
        f"{not_nested} not nested inside plain); "
        f"rotation plain/symbolic width ratio {ratio:.3f}"
    )


def matmul_counts(M):
    net = NeuralNetwork([np.eye(2)] * (M + 1), [np.zeros(2)] * (M + 1), [Activation.TANH] * (M + 1))
    v = TMVector.identity(np.zeros(2), np.full(2, 0.1), 2)
    c1, c2 = Counter(), Counter()
    nn_output_tm(net, v, counter=c1)
    nn_output_tm_symbolic(net, v, counter=c2)
    return c1["matmul"], c2["matmul"]


def criterion_7():
    Ms = np.array([2, 4, 8, 16])
    plain, sym = map(np.array, zip(*(matmul_counts(int(M)) for M in Ms)))
    # doubling M from 8 to 16 should roughly double (linear) or quadruple (quadratic) the count
    r_plain = plain[3] / plain[2]
    r_sym = sym[3] / sym[2]
    ok_ratio = abs(r_plain / 2 - 1) <= 0.2 and abs(r_sym / 4 - 1) <= 0.2
    # exact polynomial fits: plain is affine in M, symbolic needs the M^2 term
    lin_res = np.ptp(plain - np.polyval(np.polyfit(Ms, plain, 1), Ms))
    quad = np.polyfit(Ms, sym, 2)
    quad_res = np.ptp(sym - np.polyval(quad, Ms))
    sym_lin_res = np.ptp(sym - np.polyval(np.polyfit(Ms, sym, 1), Ms))
    ok_fit = lin_res < 1e-9 and quad_res < 1e-9 and quad[0] > 0.5 and sym_lin_res > 1.0
    return ok_ratio and ok_fit, (
        f"plain {plain.tolist()} (x{r_plain:.3f} per doubling), symbolic {sym.tolist()} (x{r_sym:.3f}); "
        f"symbolic fit {quad[0]:.3f} M^2 + {quad[1]:.3f} M + {quad[2]:.3f}"
    )


def criterion_8():
    codes = {}
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        for label, target in (("contained", (-1.0, 2.0)), ("disjoint", (5.0, 6.0)), ("straddling", (0.5, 2.0))):
            path = write_frozen_model(d, target)
            codes[label] = cli_main(["verify", str(path), "--steps", "2", "--flowsteps", "2", "--quiet",
                                     "--out", str(d / label)])
    ok = [codes["contained"], codes["disjoint"], codes["straddling"]] == [0, 1, 2]
    return ok, "exit codes " + ", ".join(f"{k} {v}" for k, v in codes.items())


CRITERIA = {
    1: (criterion_1, "TM addition example"),
    2: (criterion_2, "TM product vs rational oracle"),
    3: (criterion_3, "validated integration accuracy"),
    4: (criterion_4, "Bernstein remainder soundness"),
    5: (criterion_5, "end-to-end containment"),
    6: (criterion_6, "symbolic remainder no wider than plain"),
    7: (criterion_7, "matrix-multiply growth"),
    8: (criterion_8, "verdict exit codes"),
}


def run_criterion(n):
    fn, title = CRITERIA[n]
    start = time.perf_counter()
    ok, detail = fn()
    line = f"criterion {n} {'PASS' if ok else 'FAIL'} [{title}] {detail} ({time.perf_counter() - start:.1f} s)"
    return ok, line


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    ok, line = run_criterion(n)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [run_criterion(n) for n in sorted(CRITERIA)]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
