import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amli.errors import DegenerateIntervalError, DegreeError
from amli.polyapprox import (
    MonomialPoly,
    SpectralInterval,
    alternates,
    best_approx_sequence,
    best_error,
    best_q,
    best_q_closed_eval,
    best_q_eval,
    best_Q_on_reference,
    best_Q_quotient_eval,
    cheb_accel_q,
    cheb_T,
    coefficient_document,
    cycle_polynomial,
    damping_bound,
    equioscillation_points,
    error_via_corollary,
    positivity_holds,
    product_identity_eval,
    reference_to_interval,
    residual_R,
    smoother_interval,
    spectral_params,
    xq_range,
)

from remez_oracle import remez_reciprocal

intervals = st.builds(
    lambda lo, k: (lo, lo * k),
    st.floats(0.05, 20.0),
    st.floats(1.2, 500.0),
)


class TestSpectralParams:
    def test_unit_to_four(self):
        I = spectral_params(1, 4)
        assert I.kappa == 4
        assert I.sigma == pytest.approx(1 / 3, rel=1e-15)
        assert I.a == pytest.approx(5 / 3, rel=1e-15)
        assert I.delta == pytest.approx(1 / 3, rel=1e-15)
        assert I.eta == pytest.approx(-1 / 3, rel=1e-15)
        assert I.chi == pytest.approx(4 / 9, rel=1e-15)

    @pytest.mark.parametrize("lo, hi", [(1, 1), (2, 1), (0, 1), (-1, 3)])
    def test_degenerate_rejected(self, lo, hi):
        with pytest.raises(DegenerateIntervalError):
            spectral_params(lo, hi)

    def test_delta_scale_invariant(self):
        assert spectral_params(0.25, 1).delta == pytest.approx(1 / 3, rel=1e-15)

    @given(intervals)
    def test_invariants(self, iv):
        I = spectral_params(*iv)
        assert I.a > 1
        assert 0 <= I.delta < 1
        assert I.delta == pytest.approx(I.a - math.sqrt(I.a ** 2 - 1), rel=1e-8, abs=1e-12)
        assert I.a == pytest.approx(-(I.eta + 1 / I.eta) / 2, rel=1e-12)
        assert I.a2m1 == pytest.approx(I.a ** 2 - 1, rel=1e-8)
        assert I.to_reference(I.lambda_min) == pytest.approx(-1, abs=1e-12)
        assert I.to_reference(I.lambda_max) == pytest.approx(1, abs=1e-12)
        assert I.from_reference(0.3) == pytest.approx((0.3 + I.a) / (2 * I.sigma))


class TestChebyshev:
    def test_small_cases(self):
        assert cheb_T(0, 0.37) == 1
        assert cheb_T(2, 0.5) == pytest.approx(-0.5, abs=1e-15)

    def test_T3_at_a(self):
        # 1/2 (1/27 + 27) = 365/27, computed in exact arithmetic
        expected = float(Fraction(1, 2) * (Fraction(1, 27) + 27))
        assert expected == pytest.approx(365 / 27)
        assert cheb_T(3, 5 / 3) == pytest.approx(expected, rel=1e-14)

    @given(st.integers(0, 30), st.floats(-1, 1))
    def test_cosine_form(self, k, t):
        assert cheb_T(k, t) == pytest.approx(math.cos(k * math.acos(t)), abs=1e-11)

    @given(st.integers(0, 25), st.floats(1.0, 4.0))
    def test_outside_interval_closed_form(self, k, t):
        r = t + math.sqrt(t * t - 1)
        assert cheb_T(k, t) == pytest.approx(0.5 * (r ** k + r ** -k), rel=1e-11)

    @pytest.mark.parametrize("a", [5 / 3, 3.0, 11 / 9])
    def test_T_at_plus_minus_a(self, a):
        eta = -(a - math.sqrt(a * a - 1))
        for k in range(21):
            ref = 0.5 * (eta ** k + eta ** -k)
            assert cheb_T(k, a) == pytest.approx((-1) ** k * ref, rel=1e-12)
            assert cheb_T(k, -a) == pytest.approx(ref, rel=1e-12)

    def test_vectorized(self):
        t = np.linspace(-1, 1, 7)
        np.testing.assert_allclose(cheb_T(4, t), np.cos(4 * np.arccos(t)), atol=1e-14)


class TestReferencePolynomials:
    def test_examples(self):
        np.testing.assert_allclose(best_Q_on_reference(0, 5 / 3).coeffs, [15 / 16], rtol=1e-15)
        np.testing.assert_allclose(best_Q_on_reference(1, 5 / 3).coeffs, [3 / 4, -9 / 16], rtol=1e-15)
        np.testing.assert_allclose(best_Q_on_reference(2, 5 / 3).coeffs, [9 / 16, -1 / 2, 3 / 8], rtol=1e-14)

    @pytest.mark.parametrize("a", [1.0, 0.5, -2.0])
    def test_bad_shift(self, a):
        with pytest.raises(DegenerateIntervalError):
            best_Q_on_reference(2, a)

    @pytest.mark.parametrize("a", [5 / 3, 3.0, 11 / 9])
    def test_recurrence_identity(self, a):
        eta = -(a - math.sqrt(a * a - 1))
        t = np.random.default_rng(0).uniform(-1, 1, 1000)
        for m in range(11):
            Q0, Q1, Q2 = (best_Q_on_reference(m + j, a)(t) for j in range(3))
            np.testing.assert_allclose(Q2 / eta - 2 * t * Q1 + eta * Q0, -2.0, atol=1e-10)

    @pytest.mark.parametrize("a", [5 / 3, 3.0])
    def test_quotient_form(self, a):
        t = np.linspace(-1, 1, 301)
        for m in range(13):
            np.testing.assert_allclose(best_Q_quotient_eval(m, a, t), best_Q_on_reference(m, a)(t),
                                       rtol=1e-10, atol=1e-12)


class TestBestQ:
    I = SpectralInterval(1, 4)

    def test_degree0(self):
        np.testing.assert_allclose(best_q(0, self.I).coeffs, [5 / 8], rtol=1e-15)

    def test_degree1(self):
        np.testing.assert_allclose(best_q(1, self.I).coeffs, [9 / 8, -1 / 4], rtol=1e-15)

    def test_degree1_error_on_grid(self):
        q = best_q(1, self.I)
        x = np.linspace(1, 4, 300001)
        e = 1 / x - q(x)
        assert np.abs(e).max() == pytest.approx(1 / 8, rel=1e-12)
        pts = equioscillation_points(q, self.I)
        np.testing.assert_allclose([p for p, _ in pts], [1, 2, 4], atol=1e-6)
        assert alternates(pts)

    def test_matches_change_of_variables(self):
        for m in range(9):
            Q = best_Q_on_reference(m, self.I.a)
            np.testing.assert_allclose(best_q(m, self.I).coeffs, reference_to_interval(Q, self.I).coeffs,
                                       rtol=1e-10, atol=1e-12)

    def test_sequence_invariants(self):
        seq = best_approx_sequence(self.I, 6)
        assert seq.polys[0].degree == 0 and seq.polys[1].degree == 1
        x = np.linspace(1, 4, 50)
        chi, d2 = self.I.chi, self.I.delta ** 2
        for k in range(1, 6):
            s_next = seq.polys[k + 1](x) - seq.polys[k](x)
            s_k = seq.polys[k](x) - seq.polys[k - 1](x)
            np.testing.assert_allclose(s_next, chi * (1 - x * seq.polys[k](x)) + d2 * s_k, atol=1e-13)

    def test_degree_cap(self):
        with pytest.raises(DegreeError):
            best_q(17, self.I)
        assert best_q(18, self.I, degree_cap=20).degree == 18

    def test_closed_eval_examples(self):
        assert best_q_closed_eval(1, self.I, 2.0) == pytest.approx(5 / 8, rel=1e-14)
        for x in (1.0, 2.5, 4.0):
            assert best_q_closed_eval(0, self.I, x) == pytest.approx(5 / 8, rel=1e-14)

    @settings(max_examples=60)
    @given(intervals, st.integers(0, 12), st.floats(0, 1))
    def test_cross_path(self, iv, m, u):
        I = SpectralInterval(*iv)
        x = I.lambda_min + u * (I.lambda_max - I.lambda_min)
        tol = 1e-10 / I.lambda_min
        assert abs(best_q_eval(m, I, x) - best_q_closed_eval(m, I, x)) <= tol
        if I.kappa < 30:
            assert abs(best_q(m, I)(x) - best_q_closed_eval(m, I, x)) <= tol

    @pytest.mark.parametrize("lo, hi", [(1, 4), (0.3, 2.0), (2, 9)])
    def test_dual_representation(self, lo, hi):
        I = SpectralInterval(lo, hi)
        x = np.linspace(lo, hi, 401)
        t = I.to_reference(x)
        for m in range(13):
            rec = best_q(m, I)(x)
            closed = best_q_closed_eval(m, I, x)
            quotient = 2 * I.sigma * best_Q_quotient_eval(m, I.a, t)
            # monomial Horner loses a few digits at high degree
            np.testing.assert_allclose(rec, closed, rtol=1e-8)
            np.testing.assert_allclose(quotient, closed, rtol=1e-10)
            via_ref = reference_to_interval(best_Q_on_reference(m, I.a), I).coeffs
            scale = np.abs(via_ref).max()
            np.testing.assert_allclose(best_q(m, I).coeffs, via_ref, rtol=0, atol=1e-10 * scale)
            np.testing.assert_allclose(best_q_eval(m, I, x), closed, rtol=1e-10)

    @pytest.mark.parametrize("lo, hi", [(1, 4), (0.5, 8.0)])
    def test_product_identity(self, lo, hi):
        I = SpectralInterval(lo, hi)
        x = np.linspace(lo, hi, 257)
        for m in range(13):
            np.testing.assert_allclose(x * best_q_eval(m, I, x), product_identity_eval(m, I, x), atol=1e-11)

    @pytest.mark.parametrize("m", range(13))
    def test_equioscillation(self, m):
        pts = equioscillation_points(lambda x: best_q_eval(m, self.I, x), self.I,
                                     level=best_error(m, self.I))
        assert len(pts) == m + 2
        assert alternates(pts)

    def test_remez_agreement(self):
        rng = np.random.default_rng(42)
        for _ in range(3):
            lo = rng.uniform(0.5, 2.0)
            hi = lo * rng.uniform(2.0, 10.0)
            I = SpectralInterval(lo, hi)
            for m in range(9):
                coef, level, _ = remez_reciprocal(lo, hi, m)
                np.testing.assert_allclose(coef, best_q(m, I).coeffs, rtol=1e-8, atol=1e-8)
                assert level == pytest.approx(best_error(m, I), rel=1e-10)


class TestResidual:
    def test_at_one(self):
        a = 5 / 3
        eta = -1 / 3
        for m in (1, 4, 9):
            assert residual_R(m, a, 1.0) == pytest.approx(1 / eta - 2 + eta, rel=1e-13)

    def test_example(self):
        assert residual_R(1, 5 / 3, 0.0) == pytest.approx(8 / 3, rel=1e-14)
        assert 8 / 3 <= 2 * (0 + 5 / 3)

    def test_requires_m1(self):
        with pytest.raises(DegreeError):
            residual_R(0, 2.0, 0.0)

    @pytest.mark.parametrize("a", [5 / 3, 3.0, 1.05])
    def test_linear_bounds(self, a):
        t = np.linspace(-1, 1, 20001)
        for m in range(1, 13):
            R = residual_R(m, a, t)
            assert np.all(R <= 2 * (t + a) + 1e-12)
            assert np.all(R >= -2 * (t + a) - 1e-12)


class TestErrors:
    I = SpectralInterval(1, 4)

    def test_values(self):
        assert best_error(1, self.I) == pytest.approx(1 / 8, rel=1e-15)
        assert best_error(0, self.I) == pytest.approx(3 / 8, rel=1e-15)
        assert abs(1 / 1 - 5 / 8) == 3 / 8

    def test_geometric(self):
        for m in range(1, 30):
            assert best_error(m, self.I) == pytest.approx(self.I.delta * best_error(m - 1, self.I), rel=1e-13)

    def test_formula_literal(self):
        I = SpectralInterval(0.7, 13.0)
        for m in range(10):
            literal = 2 * I.sigma * I.delta ** m / (I.a ** 2 - 1)
            assert best_error(m, I) == pytest.approx(literal, rel=1e-12)

    def test_no_underflow(self):
        I = SpectralInterval(1, 1.5)
        e = best_error(2000, I)
        assert e == 0.0 or e > 0
        assert math.isfinite(math.log(best_error(200, I)))

    def test_closed_form_examples(self):
        assert error_via_corollary(1, self.I) == pytest.approx(1 / 8, rel=1e-15)
        assert error_via_corollary(3, self.I) == pytest.approx(1 / 72, rel=1e-14)
        assert best_error(3, self.I) == pytest.approx(1 / 72, rel=1e-14)

    def test_closed_form_identity_random(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            lo = 10 ** rng.uniform(-2, 2)
            I = SpectralInterval(lo, lo * 10 ** rng.uniform(0.2, 4))
            m = int(rng.integers(1, 21))
            assert error_via_corollary(m, I) == pytest.approx(best_error(m, I), rel=1e-14)


class TestChebyshevAcceleration:
    def test_coefficients(self):
        np.testing.assert_array_equal(cheb_accel_q(1, 2).coeffs, [3, -2])
        np.testing.assert_array_equal(cheb_accel_q(1, 1).coeffs, [2, -1])

    def test_collapsed_interval(self):
        q = cheb_accel_q(1, 1)
        assert 1.0 * q(1.0) == 1.0

    def test_xq_endpoints(self):
        q = cheb_accel_q(1, 2)
        assert 0.5 * q(0.5) == pytest.approx(1)
        assert 0.75 * q(0.75) == pytest.approx(9 / 8)

    @given(st.floats(0.1, 10), st.floats(1.0, 50))
    def test_p_nonpositive(self, rho0, ratio):
        rho1 = rho0 * ratio
        q = cheb_accel_q(rho0, rho1)
        x = np.linspace(1 / rho1, 1 / rho0, 101)
        assert np.all(1 - x * q(x) <= 1e-12)

    @pytest.mark.parametrize("r0, r1", [(0, 1), (-1, 2), (2, 1)])
    def test_rejects(self, r0, r1):
        with pytest.raises(DegenerateIntervalError):
            cheb_accel_q(r0, r1)


class TestXqRange:
    def test_chebyshev_example(self):
        lo, hi = xq_range(cheb_accel_q(1, 2), 0.5, 1.0)
        assert lo == pytest.approx(1, abs=1e-12)
        assert hi == pytest.approx(9 / 8, abs=1e-12)

    def test_constant(self):
        assert xq_range(MonomialPoly([2.0]), 0.5, 3.0) == pytest.approx((1.0, 6.0))

    def test_degenerate_interval(self):
        assert xq_range(MonomialPoly([3.0, -1.0]), 1.0, 1.0) == (2.0, 2.0)

    def test_best_approx_ratio_bound(self):
        I = SpectralInterval(1, 4)
        for m in range(1, 9):
            r0, r1 = xq_range(best_q(m, I), 1, 4)
            d = I.delta ** m
            assert r1 / r0 <= (2 + d * 3) / (2 - d * 3) + 1e-12
        assert (2 + 3 / 9) / (2 - 3 / 9) == pytest.approx(7 / 5)

    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=6), st.floats(0.1, 2), st.floats(0.01, 3))
    def test_against_grid(self, coeffs, lo, width):
        q = MonomialPoly(coeffs)
        hi = lo + width
        r0, r1 = xq_range(q, lo, hi)
        x = np.linspace(lo, hi, 20001)
        v = x * q(x)
        assert r0 <= v.min() + 1e-9 and r1 >= v.max() - 1e-9
        assert r0 >= v.min() - 1e-6 * (1 + abs(v.min())) and r1 <= v.max() + 1e-6 * (1 + abs(v.max()))


class TestSmootherBounds:
    def test_reference_values(self):
        assert damping_bound(2, 4) == pytest.approx(1 / 6, rel=1e-15)
        assert damping_bound(3, 8) == pytest.approx(0.381276, abs=5e-6)
        assert all(positivity_holds(m, 4) for m in range(1, 40))
        assert not positivity_holds(1, 8)
        assert all(positivity_holds(m, 8) for m in range(2, 40))

    @pytest.mark.parametrize("mu", [1.0, 0.5])
    def test_mu_must_exceed_one(self, mu):
        with pytest.raises(ValueError):
            damping_bound(2, mu)

    @pytest.mark.parametrize("m, mu", [(1, 4), (2, 4), (3, 4), (2, 8), (3, 8), (4, 16), (8, 30)])
    def test_positivity_grid(self, m, mu):
        assert positivity_holds(m, mu)
        lam = 7.0
        I = smoother_interval(lam, mu)
        x = np.linspace(lam * 1e-6, lam, 200001)
        assert best_q_eval(m, I, x).min() > 0
        assert (x * best_q_eval(m, I, x)).min() > 0

    @pytest.mark.parametrize("m, mu", [(1, 4), (2, 4), (3, 8), (5, 20)])
    def test_damping_diagonal_oracle(self, m, mu):
        lam = 3.0
        I = smoother_interval(lam, mu)
        eigs = np.concatenate([np.random.default_rng(m).uniform(lam / mu, lam, 500), [lam / mu, lam]])
        A = np.diag(eigs)
        q = best_q(m, I)
        E = np.eye(len(eigs)) - sum(c * np.linalg.matrix_power(A, j) for j, c in enumerate(q.coeffs)) @ A
        assert np.abs(np.diag(E)).max() <= damping_bound(m, mu) * (1 + 1e-12)


class TestCyclePolynomial:
    def test_identity(self):
        assert cycle_polynomial("identity", 1, 0.5, 2.0).tolist() == [1.0]
        with pytest.raises(DegreeError):
            cycle_polynomial("identity", 2, 0.5, 2.0)

    def test_exact(self):
        assert cycle_polynomial("exact", 2, 0.5, 2.0) is None

    def test_chebyshev(self):
        assert cycle_polynomial("chebyshev", 2, 1, 2).tolist() == [3.0, -2.0]
        with pytest.raises(DegreeError):
            cycle_polynomial("chebyshev", 3, 1, 2)

    def test_bestapprox(self):
        q = cycle_polynomial("bestapprox", 3, 0.25, 1.0)
        np.testing.assert_allclose(q.coeffs, best_q(2, SpectralInterval(1, 4)).coeffs)

    def test_bestapprox_single_point(self):
        q = cycle_polynomial("bestapprox", 2, 1.0, 1.0)
        assert len(q) == 2 and q(1.0) == 1.0

    def test_unknown(self):
        with pytest.raises(ValueError):
            cycle_polynomial("spline", 1, 1, 2)


def test_coefficient_document():
    doc = coefficient_document(1, SpectralInterval(1, 4))
    assert doc == {"lambda_min": 1.0, "lambda_max": 4.0, "degree": 1, "coeffs": [1.125, -0.25], "error": 0.125}


def test_monomial_poly_horner():
    q = MonomialPoly([1.0, -2.0, 0.5, 3.0])
    x = np.linspace(-2, 2, 11)
    np.testing.assert_allclose(q(x), 1 - 2 * x + 0.5 * x ** 2 + 3 * x ** 3, rtol=1e-15, atol=1e-15)
    assert q.degree == 3
    with pytest.raises(ValueError):
        MonomialPoly([])
