import json
import math

import numpy as np
import pytest
import scipy.linalg

from amli.analysis import (
    STATED_CHEBYSHEV_AT_3,
    bestapprox_threshold,
    chebyshev_threshold,
    degree_table,
    level_step,
    measure_condition,
    measure_level_theta,
    measure_theta,
    multilevel_bound,
    ratio_bound,
    required_degree,
    spectrum_bounds,
    stationary_pair,
    threshold_table,
    two_level_inverse,
    verify_identities,
    xq_bounds,
)
from amli.errors import (
    DegenerateIntervalError,
    IndefiniteError,
    InfeasibleTargetError,
    NegativePolynomialError,
)
from amli.hierarchy import CycleSpec, build_hierarchy, gen_poisson
from amli.polyapprox import MonomialPoly
from amli.precond import AmliPreconditioner
from amli.sparse import CsrMatrix, dense_operator


class TestLevelStep:
    def test_exact_coarse(self):
        assert level_step(0.5, 2.0, (0.3, 0.9), None) == (0.5, 2.0)

    def test_identity(self):
        # x on [1, 2]
        assert level_step(1.0, 1.0, (0.5, 1.0), MonomialPoly([1.0])) == pytest.approx((0.5, 1.0))

    def test_chebyshev_hand_computed(self):
        # x q(x) = 1.5 x - 0.5 x^2 on [1, 2]: min 1 at both ends, max 9/8 at 3/2
        r0, r1 = xq_bounds(MonomialPoly([1.5, -0.5]), (0.5, 1.0))
        assert r0 == pytest.approx(1.0, abs=1e-12) and r1 == pytest.approx(1.125, rel=1e-12)
        assert level_step(1.0, 2.0, (0.5, 1.0), MonomialPoly([1.5, -0.5])) == pytest.approx((8 / 9, 2.0))

    def test_negative_polynomial(self):
        with pytest.raises(NegativePolynomialError):
            xq_bounds(MonomialPoly([1.0, -1.0]), (0.5, 1.0))

    def test_bad_inputs(self):
        with pytest.raises(DegenerateIntervalError):
            xq_bounds(MonomialPoly([1.0]), (1.0, 0.5))
        with pytest.raises(ValueError):
            level_step(0.0, 1.0, (1, 1), None)
        with pytest.raises(ValueError):
            xq_bounds(None, (math.nan, 1.0))


class TestMultilevelBound:
    def test_exact_two_level_constants(self):
        rep = multilevel_bound([(1, 1)] * 3, CycleSpec((1, 1, 1), "exact"))
        assert rep.final_kappa_bound == 1.0 and rep.uniform

    def test_exact_family_keeps_theta_ratio(self):
        rep = multilevel_bound([(0.5, 1.0)] * 4, CycleSpec((1,) * 4, "exact"))
        assert rep.final_kappa_bound == pytest.approx(2.0)
        assert rep.uniform

    def test_identity_grows(self):
        bounds = [multilevel_bound([(0.5, 1.0)] * L, [1] * L, "identity").final_kappa_bound for L in (1, 2, 3, 4)]
        assert all(b > a for a, b in zip(bounds, bounds[1:]))
        assert not multilevel_bound([(0.5, 1.0)] * 4, [1] * 4, "identity").uniform

    @pytest.mark.parametrize("tau", [1.2, 2.0, 3.0])
    def test_chebyshev_stationary_closed_form(self, tau):
        rep = multilevel_bound([(1.0, tau)] * 30, CycleSpec.w_cycle(30, "chebyshev"))
        s = math.sqrt(tau)
        assert rep.stationary_bound == pytest.approx(s / (2 - s), rel=1e-10)
        assert rep.uniform
        assert rep.rho1[-2] / rep.rho0[-2] == pytest.approx(s / (2 - s), rel=1e-3)

    @pytest.mark.parametrize("kbar", [2.0, 3.0, 4.0])
    def test_bestapprox_threshold_is_sufficient(self, kbar):
        tau = bestapprox_threshold(kbar)
        st = stationary_pair(1.0, tau, "bestapprox", 2)
        assert st is not None and st[1] / st[0] <= kbar * (1 + 1e-9)

    def test_chebyshev_threshold_is_sharp(self):
        kbar = 3.0
        st = stationary_pair(1.0, chebyshev_threshold(kbar), "chebyshev", 2)
        assert st[1] / st[0] == pytest.approx(kbar, rel=1e-9)

    def test_diverges_beyond_range(self):
        assert stationary_pair(1.0, 5.0, "chebyshev", 2) is None
        assert not multilevel_bound([(1.0, 5.0)] * 3, CycleSpec.w_cycle(3, "chebyshev")).uniform

    def test_report_serializable(self):
        rep = multilevel_bound([(0.6, 1.0)] * 3, CycleSpec.w_cycle(3))
        d = json.loads(json.dumps(rep.to_dict()))
        assert d["nus"] == [2, 2, 1] and len(d["rho0"]) == 4
        assert len(rep.rows()) == 4 and rep.rows()[0][3] == 1.0

    def test_input_checks(self):
        with pytest.raises(ValueError):
            multilevel_bound([(1, 1)], CycleSpec.w_cycle(2))
        with pytest.raises(ValueError):
            multilevel_bound([(2, 1)], [1], "identity")
        with pytest.raises(ValueError):
            multilevel_bound([], [], "identity")


class TestThresholds:
    def test_values_at_three(self):
        assert chebyshev_threshold(3) == pytest.approx(9 / 4)
        assert bestapprox_threshold(3) == pytest.approx(math.sqrt(3))

    def test_table_flags_quoted_value(self):
        rows = threshold_table([2, 3])
        assert rows[1]["discrepancy"] and rows[1]["stated_chebyshev"] == STATED_CHEBYSHEV_AT_3
        assert not rows[0]["discrepancy"]

    def test_no_bestapprox_ratio_for_large_kbar(self):
        assert bestapprox_threshold(9.0) < 0
        assert threshold_table([9.0])[0]["bestapprox"] is None

    def test_thresholds_at_one(self):
        assert chebyshev_threshold(1) == pytest.approx(1.0)
        assert bestapprox_threshold(1) == pytest.approx(1.0)


class TestDegree:
    def test_ratio_bound_example(self):
        assert ratio_bound(4, 2) == pytest.approx(7 / 5)

    def test_ratio_bound_decreasing(self):
        vals = [ratio_bound(10, m) for m in range(3, 12)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert ratio_bound(10, 1) == ratio_bound(10, 2) == math.inf
        assert ratio_bound(10, 0) == math.inf

    def test_known_case(self):
        assert required_degree(1, math.sqrt(3), 3) == 1

    @pytest.mark.parametrize("t1", [1.2, 2.0, 4.0])
    @pytest.mark.parametrize("kbar", [5.0, 10.0, 40.0])
    def test_brute_force(self, t1, kbar):
        kl = kbar / t1
        m = next(m for m in range(200) if ratio_bound(kbar, m) <= kl * (1 + 1e-12))
        assert required_degree(1.0, t1, kbar) == m

    @pytest.mark.parametrize("kbar", [1.5, 3.0, 10.0, 100.0, 1000.0])
    def test_unit_thetas_closed_form(self, kbar):
        # theta = (1, 1): the target reduces to delta_bar^m <= 2 / (kbar + 1)
        d = (math.sqrt(kbar) - 1) / (math.sqrt(kbar) + 1)
        m = max(1, math.ceil(math.log(2 / (kbar + 1)) / math.log(d) - 1e-12))
        assert required_degree(1.0, 1.0, kbar) == m

    def test_degree_profile_in_kbar(self):
        # falls while kbar leaves theta1/theta0, then grows like sqrt(kbar) log(kbar)
        near = [required_degree(1.0, 2.0, k) for k in (2.05, 2.2, 2.5)]
        far = [required_degree(1.0, 2.0, k) for k in (10, 100, 1000)]
        assert near == sorted(near, reverse=True) and near[0] > near[-1]
        assert far == sorted(far) and far[-1] > far[0]

    def test_infeasible(self):
        with pytest.raises(InfeasibleTargetError):
            required_degree(1.0, 3.0, 3.0)
        rows = degree_table(1.0, 3.0, [2.0, 9.0])
        assert rows[0]["degree"] is None and rows[1]["degree"] is not None


class TestMeasurement:
    def test_theta_of_scaled_operator(self):
        A = np.diag([1.0, 2.0, 7.0])
        assert measure_theta(A, lambda x: np.linalg.solve(A, x)) == pytest.approx((1.0, 1.0))
        assert measure_theta(A, lambda x: np.linalg.solve(2 * A, x)) == pytest.approx((2.0, 2.0))

    def test_condition_dense_and_lanczos(self):
        A = CsrMatrix.from_dense(np.diag(np.arange(1.0, 51)))
        assert measure_condition(lambda r: r, A) == pytest.approx(50.0)
        assert measure_condition(lambda r: r, A, dense_max=0, iters=60) == pytest.approx(50.0, rel=1e-6)

    def test_indefinite(self):
        with pytest.raises(IndefiniteError):
            spectrum_bounds(lambda r: -r, np.eye(4))
        with pytest.raises(IndefiniteError):
            spectrum_bounds(lambda r: r, np.diag([1.0, -1.0, 2.0]))

    @pytest.mark.parametrize("smoother", ["sgs", "jacobi"])
    def test_level_theta_generalized_eigen(self, smoother):
        H = build_hierarchy(gen_poisson(2, 2, 3), CycleSpec.v_cycle(1), smoother=smoother, omega=0.7)
        lev = H.level(1)
        C = np.linalg.inv(dense_operator(two_level_inverse(lev), lev.n))
        ev = scipy.linalg.eigh(0.5 * (C + C.T), lev.hb_matrix().toarray(), eigvals_only=True)
        t0, t1 = measure_level_theta(lev)
        assert t0 == pytest.approx(ev[0], rel=1e-8) and t1 == pytest.approx(ev[-1], rel=1e-8)
        assert t0 <= 1.0 + 1e-12 <= t1 + 2e-12


class TestBoundSoundness:
    @pytest.mark.parametrize("family", ["bestapprox", "chebyshev"])
    @pytest.mark.parametrize("dim, n0, L", [(2, 2, 2), (2, 2, 3), (1, 3, 3)])
    def test_measured_below_bound(self, family, dim, n0, L):
        H = build_hierarchy(gen_poisson(dim, L + 1, n0), CycleSpec.w_cycle(L, family),
                            smoother="jacobi" if dim == 1 else "sgs", omega=0.7, dense_max=1000)
        rep = multilevel_bound(H.thetas, H.cycle)
        kappa = measure_condition(AmliPreconditioner(H), H.A, dense_max=1000)
        assert kappa <= rep.final_kappa_bound * (1 + 1e-8)


class TestIdentities:
    @pytest.mark.parametrize("n", [1, 2, 7, 30, 40])
    @pytest.mark.parametrize("nu", [1, 2, 3])
    def test_pass(self, n, nu):
        rep = verify_identities(n=n, nu=nu)
        assert rep.passed, rep.deviations

    def test_perturbed_horner_fails(self):
        rep = verify_identities(n=30, nu=3, perturb=1e-3)
        assert not rep.passed
        assert "b_inverse" in rep.failures and "error_propagation" in rep.failures
        assert "mbar_forms" not in rep.failures

    def test_report_dict(self):
        d = verify_identities(n=10, seed=3).to_dict()
        assert d["passed"] and d["seed"] == 3 and set(d["deviations"]) == set(d["tolerances"])

    def test_nu_check(self):
        with pytest.raises(ValueError):
            verify_identities(nu=0)
