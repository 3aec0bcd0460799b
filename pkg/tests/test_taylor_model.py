import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import small_network, small_network_input
from oracles import RatPoly, rational_tm_product
from polar_reach.interval import Interval, iv_add, iv_subset
from polar_reach.neural_network import nn_forward
from polar_reach.polynomial import Domain, SparsePolynomial
from polar_reach.taylor_model import (
    TaylorModel,
    TMVector,
    tm_add,
    tm_compose_univariate,
    tm_eval_time,
    tm_linear_map,
    tm_mul,
    tm_range,
)

X = Domain.unit(1)


def tm(coeffs, rem, order=4, domain=X):
    return TaylorModel(SparsePolynomial.univariate(coeffs), Interval(*rem), domain, order)


F = tm([1, 0, -0.5], (-0.1, 0.1))
G = tm([0, 1, 0, 0, 0.1], (-0.2, 0.2))


class TestAdd:
    def test_sum_example(self):
        s = tm_add(F, G)
        assert s.poly == SparsePolynomial.univariate([1, 1, -0.5, 0, 0.1])
        assert s.rem.lo <= -0.3 and s.rem.hi >= 0.3
        assert s.rem.lo >= -0.3 - 1e-10 and s.rem.hi <= 0.3 + 1e-10

    def test_zero_identity(self):
        z = tm([0], (0, 0))
        s = tm_add(F, z)
        assert s.poly == F.poly and s.rem == F.rem

    def test_cancellation(self):
        s = tm_add(F, TaylorModel(-F.poly, Interval(0, 0), X, 4))
        assert s.poly.is_zero()
        assert iv_subset(F.rem, s.rem) and s.rem.width < F.rem.width + 1e-14

    def test_mismatch(self):
        with pytest.raises(ValueError):
            tm_add(F, tm([1], (0, 0), order=3))
        with pytest.raises(ValueError):
            tm_add(F, tm([1], (0, 0), domain=Domain((Interval(0, 1),))))


class TestMul:
    def test_product_example(self):
        p = tm_mul(F, G, 4)
        assert p.poly == SparsePolynomial.univariate([0, 1, 0, -0.5, 0.1])
        low, rem = rational_tm_product(F.poly, F.rem, G.poly, G.rem, 4, X.boxes)
        assert low.equals(p.poly)
        assert rem.inside(p.rem)
        assert float(rem.lo) == pytest.approx(-0.38) and float(rem.hi) == pytest.approx(0.33)
        assert p.rem.width < rem.hi - rem.lo + 1e-12

    def test_by_one_and_zero(self):
        one = tm([1], (0, 0))
        assert tm_mul(F, one).poly == F.poly
        z = tm_mul(F, tm([0], (0, 0)))
        assert z.poly.is_zero() and 0.0 in z.rem

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.integers(-32, 32), min_size=1, max_size=5),
        st.lists(st.integers(-32, 32), min_size=1, max_size=5),
        st.integers(0, 16),
        st.integers(0, 16),
        st.integers(1, 4),
    )
    def test_matches_rational_oracle(self, a, b, ra, rb, k):
        f = tm([c / 8 for c in a], (-ra / 64, ra / 64), order=k)
        g = tm([c / 8 for c in b], (-rb / 64, rb / 64), order=k)
        p = tm_mul(f, g, k)
        low, rem = rational_tm_product(f.poly, f.rem, g.poly, g.rem, k, X.boxes)
        assert low.equals(p.poly)
        assert rem.inside(p.rem)

    def test_pointwise_soundness(self, rng):
        dom = Domain((Interval(-0.5, 1.0), Interval(-1.0, 0.25)))
        for _ in range(20):
            fa = SparsePolynomial.from_terms(2, {(i, j): float(rng.normal()) for i in range(3) for j in range(3 - i)})
            fb = SparsePolynomial.from_terms(2, {(i, j): float(rng.normal()) for i in range(3) for j in range(3 - i)})
            ea, eb = rng.normal(0, 0.1, 2)
            fa_true = lambda z: fa.evaluate(z) + ea * math.sin(z[0] + z[1])
            fb_true = lambda z: fb.evaluate(z) + eb * math.cos(z[0])
            a = TaylorModel(fa, Interval.symmetric(ea), dom, 3)
            b = TaylorModel(fb, Interval.symmetric(eb), dom, 3)
            s, p = tm_add(a, b), tm_mul(a, b)
            for _ in range(50):
                z = [float(rng.uniform(bx.lo, bx.hi)) for bx in dom.boxes]
                assert fa_true(z) + fb_true(z) in s.evaluate(z).inflate(1e-12)
                assert fa_true(z) * fb_true(z) in p.evaluate(z).inflate(1e-12)


class TestRange:
    def test_examples(self):
        assert tm_range(tm([0, 1], (-0.1, 0.1))) == Interval(-1.1, 1.1)
        assert tm_range(tm([2.5], (-1, 0.5))) == Interval(1.5, 3.0)
        assert tm_range(tm([0, 0, 1], (0, 0))) == Interval(0, 1)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-2, 2), min_size=1, max_size=5), st.lists(st.floats(-2, 2), min_size=1, max_size=5))
    def test_sum_range_does_not_widen(self, a, b):
        f, g = tm(a, (-0.1, 0.1)), tm(b, (0, 0.2))
        lhs = tm_range(tm_add(f, g))
        rhs = iv_add(tm_range(f), tm_range(g)).inflate(1e-12)
        assert iv_subset(lhs, rhs)


class TestCompose:
    def test_identity(self):
        t = tm([0.2, 1, 0.3], (-0.05, 0.05), order=3)
        r = tm_compose_univariate(SparsePolynomial.univariate([0, 1]), Interval(0, 0), t)
        assert r.poly == t.poly
        assert iv_subset(t.rem, r.rem) and r.rem.width <= t.rem.width + 1e-14

    def test_constant(self):
        t = tm([0.2, 1], (-0.05, 0.05))
        r = tm_compose_univariate(SparsePolynomial.univariate([0.7]), Interval(-0.01, 0.01), t)
        assert r.poly == SparsePolynomial.univariate([0.7]) and r.rem == Interval(-0.01, 0.01)

    def test_square_of_perturbed_identity(self):
        t = tm([0, 1], (-0.1, 0.1), order=2)
        r = tm_compose_univariate(SparsePolynomial.univariate([0, 0, 1]), Interval(0, 0), t)
        assert r.poly == SparsePolynomial.univariate([0, 0, 1])
        assert iv_subset(Interval(-0.21, 0.21), r.rem)
        assert r.rem.width < 0.42 + 1e-12


class TestLinearMap:
    def test_identity_and_zero(self):
        v = small_network_input()
        same = tm_linear_map(np.eye(2), v, np.zeros(2))
        assert same.polys == v.polys and same.remainders == v.remainders
        const = tm_linear_map(np.zeros((3, 2)), v, [1.0, -2.0, 0.5])
        assert [p.constant_term() for p in const.polys] == [1.0, -2.0, 0.5]
        assert all(len(p) <= 1 for p in const.polys)
        assert all(r.mag() < 1e-12 for r in const.remainders)

    def test_output_preactivation_of_small_network(self, rng):
        from polar_reach.nn_abstraction import nn_output_tm

        net = small_network()
        hidden = nn_output_tm(
            type(net)(net.weights[:2], net.biases[:2], net.activations[:2]), small_network_input(), k_B=2
        )
        out = tm_linear_map([[2.0, 1.0]], hidden)[0]
        expect = tm_add(hidden[0].scale(2.0), hidden[1])
        assert np.allclose(out.poly.coeffs, expect.poly.coeffs) and np.array_equal(out.poly.keys, expect.poly.keys)
        assert out.rem.width == pytest.approx(expect.rem.width, rel=1e-9)
        z = rng.uniform(-1, 1, (200, 2))
        for zi in z:
            x = [small_network_input()[0].poly.evaluate(zi), small_network_input()[1].poly.evaluate(zi)]
            h = nn_forward(net, x)
            pre = 2.0 * _hidden(net, x)[0] + _hidden(net, x)[1]
            assert pre in out.evaluate(zi)
            assert 0.0 < h[0] < 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            tm_linear_map(np.eye(3), small_network_input())


def _hidden(net, x):
    y = np.asarray(x, dtype=float)
    for W, b, a in zip(net.weights[:2], net.biases[:2], net.activations[:2]):
        y = a(W @ y + b)
    return y


class TestEvalTime:
    def test_examples(self):
        dom = Domain.unit(1).with_time(0.1)
        z = SparsePolynomial.variable(2, 0)
        t = SparsePolynomial.variable(2, 1)
        a = TaylorModel(z + t * z, Interval(-0.01, 0.01), dom, 3)
        r = tm_eval_time(a, 0.0)
        assert r.poly == SparsePolynomial.variable(1, 0) and r.rem == a.rem
        b = TaylorModel(z + t, Interval(-0.01, 0.01), dom, 3)
        r = tm_eval_time(b, 0.1)
        assert r.poly == SparsePolynomial.univariate([0.1, 1])
        assert iv_subset(b.rem, r.rem) and r.rem.width < b.rem.width + 1e-15

    def test_out_of_range(self):
        dom = Domain.unit(1).with_time(0.1)
        a = TaylorModel(SparsePolynomial.variable(2, 1), Interval(0, 0), dom, 2)
        with pytest.raises(ValueError):
            tm_eval_time(a, 0.2)
        with pytest.raises(ValueError):
            tm_eval_time(TaylorModel(SparsePolynomial.variable(1, 0), Interval(0, 0), X, 2), 0.0)

    def test_decay_flowpipe_end_matches_closed_form(self):
        from polar_reach.ode_flowpipe import PolynomialODE, integrate_control_step

        ode = PolynomialODE([SparsePolynomial.variable(1, 0, -1.0)], num_controls=0)
        dom = Domain((Interval(0.9, 1.1),))
        X0 = TMVector((TaylorModel(SparsePolynomial.variable(1, 0), Interval(0, 0), dom, 4),))
        U = TMVector(())
        pipes, end = integrate_control_step(ode, X0, U, 0.02, 1, 4)
        fp = pipes[0].tm[0]
        end_tm = tm_eval_time(fp, 0.02)
        for x0 in np.linspace(0.9, 1.1, 21):
            assert x0 * math.exp(-0.02) in end_tm.evaluate([x0])
            assert x0 * math.exp(-0.02) in end[0].evaluate([x0])


def test_rational_product_of_example_is_formula_not_printed_polynomial():
    prod = RatPoly.of(F.poly) * RatPoly.of(G.poly)
    low, high = prod.truncate(4)
    assert set(low.terms) == {(1,), (3,), (4,)}
    assert low.terms[(3,)] == Fraction(-0.5)
    assert set(high.terms) == {(6,)}
