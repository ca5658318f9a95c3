"""Condition-number analysis: the level recursion for (rho0, rho1), the final
bound and its uniformity, degree calculators, and desk-scale measurement of
theta, rho and kappa.
"""
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .errors import (
    DegenerateIntervalError,
    IndefiniteError,
    InfeasibleTargetError,
    NegativePolynomialError,
)
from .polyapprox import MonomialPoly, cycle_polynomial, xq_range
from .sparse import CsrMatrix, as_csr, dense_operator, extreme_eigs

POSITIVITY_SAMPLES = 10_000
DENSE_MAX = 200

# Value sometimes quoted for the Chebyshev threshold at kappa_bar = 3; the
# threshold formula gives 9/4 there. threshold_table reports both.
STATED_CHEBYSHEV_AT_3 = 5.0 / 4.0


# --- the level recursion ----------------------------------------------------------

def _check_positive(**kw):
    for name, v in kw.items():
        if not v > 0 or not math.isfinite(v):
            raise ValueError(f"{name} must be positive and finite, got {v}")


def xq_bounds(q: Optional[MonomialPoly], rho_prev, samples=POSITIVITY_SAMPLES):
    """(r0, r1) of x q(x) on [1/rho1, 1/rho0] after checking q >= 0 there.

    q = None stands for an exact coarse solve, i.e. x q(x) = 1.
    """
    rho0, rho1 = map(float, rho_prev)
    _check_positive(rho0=rho0, rho1=rho1)
    if rho1 < rho0 * (1 - 1e-14):
        raise DegenerateIntervalError(f"rho0 = {rho0} exceeds rho1 = {rho1}")
    if q is None:
        return 1.0, 1.0
    lo, hi = 1.0 / rho1, 1.0 / rho0
    xs = np.linspace(lo, hi, samples)
    vals = q(xs)
    scale = max(1.0, float(np.abs(vals).max()))
    if vals.min() < -1e-13 * scale:
        i = int(np.argmin(vals))
        raise NegativePolynomialError(f"q({xs[i]:.6g}) = {vals[i]:.3e} < 0 on [{lo:.6g}, {hi:.6g}]")
    r0, r1 = xq_range(q, lo, hi)
    if not r0 > 0:
        raise NegativePolynomialError(f"min of x q(x) on [{lo:.6g}, {hi:.6g}] is {r0:.3e}")
    return r0, r1


def level_step(theta0, theta1, rho_prev, q):
    """(rho0^{(k)}, rho1^{(k)}) from the two-level constants and the previous pair."""
    _check_positive(theta0=theta0, theta1=theta1)
    r0, r1 = xq_bounds(q, rho_prev)
    return theta0 / max(1.0, r1), theta1 / min(1.0, r0)


@dataclass
class BoundReport:
    theta0: List[float]
    theta1: List[float]
    rho0: List[float]          # k = 0..l
    rho1: List[float]
    r0: List[float]            # r^{(k-1)} for k = 1..l
    r1: List[float]
    final_kappa_bound: float
    worst_case_bound: float    # worst theta and widest rho over all levels
    stationary_rho: Optional[Tuple[float, float]]
    stationary_bound: float
    uniform: bool
    family: str = ""
    nus: List[int] = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["stationary_rho"] = list(self.stationary_rho) if self.stationary_rho else None
        return d

    def rows(self):
        """Per-level table: k, theta0, theta1, rho0, rho1, r0, r1."""
        out = [(0, "", "", self.rho0[0], self.rho1[0], "", "")]
        for k in range(1, len(self.rho0)):
            out.append((k, self.theta0[k - 1], self.theta1[k - 1], self.rho0[k], self.rho1[k],
                        self.r0[k - 1], self.r1[k - 1]))
        return out


def _nu_representative(nus):
    inner = nus[:-1] if len(nus) > 1 else nus
    return max(inner)


def stationary_pair(theta0, theta1, family, nu, maxit=5000, rtol=1e-14):
    """Fixed point of the recursion with level-independent constants, or None if it diverges."""
    rho = (1.0, 1.0)
    for _ in range(maxit):
        try:
            q = cycle_polynomial(family, nu, *rho)
            new = level_step(theta0, theta1, rho, q)
        except (NegativePolynomialError, DegenerateIntervalError, ValueError):
            return None
        if new[1] / new[0] > 1e12:
            return None
        if abs(new[0] - rho[0]) <= rtol * new[0] and abs(new[1] - rho[1]) <= rtol * new[1]:
            return new
        rho = new
    return None


def multilevel_bound(thetas: Sequence, cycle, family=None) -> BoundReport:
    """Run the recursion from (1, 1) over the levels and assess uniformity.

    ``cycle`` is a CycleSpec or a sequence of nu_k (then ``family`` is required).
    """
    nus = list(getattr(cycle, "nus", cycle))
    family = family or getattr(cycle, "family")
    thetas = [tuple(map(float, t)) for t in thetas]
    if len(thetas) != len(nus):
        raise ValueError(f"{len(thetas)} theta pairs for {len(nus)} levels")
    if not nus:
        raise ValueError("at least one level is required")
    rho = [(1.0, 1.0)]
    rs, qs = [], []
    for (t0, t1), nu in zip(thetas, nus):
        if t0 > t1:
            raise ValueError(f"theta0 = {t0} exceeds theta1 = {t1}")
        q = cycle_polynomial(family, nu, *rho[-1])
        r = xq_bounds(q, rho[-1])
        rs.append(r)
        qs.append(q)
        rho.append((t0 / max(1.0, r[1]), t1 / min(1.0, r[0])))
    final = rho[-1][1] / rho[-1][0]

    th0 = min(t[0] for t in thetas)
    th1 = max(t[1] for t in thetas)
    wide = (min(p[0] for p in rho[:-1]), max(p[1] for p in rho[:-1]))
    try:
        rr = [xq_bounds(q, wide) for q in qs]
        r0w, r1w = min(r[0] for r in rr), max(r[1] for r in rr)
        worst = th1 / th0 * max(1.0, r1w) / min(1.0, r0w)
    except NegativePolynomialError:
        worst = math.inf

    st = stationary_pair(th0, th1, family, _nu_representative(nus))
    if st is None:
        uniform, st_bound = False, math.inf
    else:
        q = cycle_polynomial(family, _nu_representative(nus), *st)
        r0, r1 = xq_bounds(q, st)
        st_bound = st[1] / st[0]
        uniform = th1 / th0 * max(1.0, r1) / min(1.0, r0) <= st_bound * (1 + 1e-12)
    return BoundReport(
        theta0=[t[0] for t in thetas], theta1=[t[1] for t in thetas],
        rho0=[p[0] for p in rho], rho1=[p[1] for p in rho],
        r0=[r[0] for r in rs], r1=[r[1] for r in rs],
        final_kappa_bound=final, worst_case_bound=worst,
        stationary_rho=st, stationary_bound=st_bound, uniform=bool(uniform),
        family=family, nus=nus,
    )


# --- thresholds and degree calculators --------------------------------------------

def chebyshev_threshold(kappa_bar):
    """Largest theta1/theta0 keeping kappa_bar uniform with the degree-2 Chebyshev p."""
    k = float(kappa_bar)
    return 4 * k * k / (1 + k) ** 2


def bestapprox_threshold(kappa_bar):
    """Same for the best linear approximation; nonpositive means no ratio works."""
    k = float(kappa_bar)
    s = math.sqrt(k)
    return k * (1 + 2 * s - k) / (3 - 2 * s + k)


def threshold_table(kappas):
    rows = []
    for k in kappas:
        cheb, best = chebyshev_threshold(k), bestapprox_threshold(k)
        rows.append({
            "kappa_bar": float(k),
            "chebyshev": cheb,
            "bestapprox": best if best > 0 else None,
            "stated_chebyshev": STATED_CHEBYSHEV_AT_3 if k == 3 else None,
            "discrepancy": bool(k == 3 and abs(cheb - STATED_CHEBYSHEV_AT_3) > 1e-12),
        })
    return rows


def _delta(kappa):
    s = math.sqrt(kappa)
    return (s - 1) / (s + 1)


def ratio_bound(kappa, m):
    """Upper bound on max(x q_m)/min(x q_m) for the best approximation on an interval of condition kappa."""
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    e = _delta(kappa) ** m * (kappa - 1)
    if e >= 2:
        return math.inf
    return (2 + e) / (2 - e)


def required_degree(theta0, theta1, kappa_bar):
    """Smallest m whose ratio bound stays below kappa_bar * theta0 / theta1."""
    _check_positive(theta0=theta0, theta1=theta1)
    kl = kappa_bar * theta0 / theta1
    if not kl > 1:
        raise InfeasibleTargetError(f"kappa_bar * theta0 / theta1 = {kl:.6g} must exceed 1")
    db = _delta(kappa_bar)
    arg = 2 * (kl - 1) / ((kappa_bar - 1) * (kl + 1))
    m = 0 if arg >= 1 else max(0, math.ceil(math.log(arg) / math.log(db) - 1e-9))
    if ratio_bound(kappa_bar, m) > kl * (1 + 1e-12):
        m += 1
    return m


def degree_table(theta0, theta1, kappas):
    rows = []
    for k in kappas:
        try:
            m = required_degree(theta0, theta1, k)
            rows.append({"kappa_bar": float(k), "degree": m, "ratio_bound": ratio_bound(k, m)})
        except InfeasibleTargetError:
            rows.append({"kappa_bar": float(k), "degree": None, "ratio_bound": None})
    return rows


# --- measurement ---------------------------------------------------------------------

def _dense(A):
    if isinstance(A, np.ndarray):
        return A
    return as_csr(A).to_dense()


def _matvec(A):
    if isinstance(A, np.ndarray):
        return lambda x: A @ x
    return as_csr(A).matvec


def spectrum_bounds(B_inv, A, iters=60, dense_max=DENSE_MAX, seed=0):
    """Extreme eigenvalues of B^{-1} A for SPD A and B.

    Dense below ``dense_max`` (Cholesky of the assembled B^{-1}); otherwise
    Lanczos on B^{-1} A, which is self-adjoint in the A inner product.
    """
    n = A.shape[0]
    if n == 0:
        return 1.0, 1.0
    if n <= dense_max:
        Bi = dense_operator(B_inv, n)
        Bi = 0.5 * (Bi + Bi.T)
        try:
            L = scipy.linalg.cholesky(Bi, lower=True)
        except np.linalg.LinAlgError as exc:
            raise IndefiniteError("preconditioner is not positive definite") from exc
        ev = scipy.linalg.eigvalsh(L.T @ _dense(A) @ L)
        if ev[0] <= 0:
            raise IndefiniteError("matrix is not positive definite")
        return float(ev[0]), float(ev[-1])
    Am = _matvec(A)
    eb = extreme_eigs(lambda v: B_inv(Am(v)), n, iters, inner=Am, seed=seed)
    if eb.low <= 0:
        raise IndefiniteError("preconditioned operator has a nonpositive Ritz value")
    return eb.low, eb.high


def measure_condition(B_inv, A, iters=60, dense_max=DENSE_MAX, seed=0):
    lo, hi = spectrum_bounds(B_inv, A, iters, dense_max, seed)
    return hi / lo


def measure_theta(A, C_inv, iters=60, dense_max=DENSE_MAX, seed=0):
    """Extremes (theta0, theta1) of v^T C v / v^T A v, given the action of C^{-1}."""
    lo, hi = spectrum_bounds(C_inv, A, iters, dense_max, seed)
    return 1.0 / hi, 1.0 / lo


def two_level_inverse(level):
    """C^{(k)}^{-1} in the hierarchical basis: the level step with an exact coarse solve."""
    from .precond import f_smoothing_apply

    lu = spla.splu(level.A22.to_scipy().tocsc())
    return lambda x: f_smoothing_apply(level, x, lu.solve)


def measure_level_theta(level, iters=60, dense_max=DENSE_MAX, seed=0):
    """Two-level constants of one hierarchy level (against Atilde)."""
    At = CsrMatrix.from_scipy(level.hb_matrix())
    return measure_theta(At, two_level_inverse(level), iters, dense_max, seed)


# --- identity battery -----------------------------------------------------------------

@dataclass
class IdentityReport:
    n: int
    seed: int
    nu: int
    deviations: dict
    tolerances: dict

    @property
    def failures(self):
        return [k for k, v in self.deviations.items() if not v <= self.tolerances[k]]

    @property
    def passed(self):
        return not self.failures

    def to_dict(self):
        return {"n": self.n, "seed": self.seed, "nu": self.nu, "passed": self.passed,
                "deviations": dict(self.deviations), "tolerances": dict(self.tolerances)}


IDENTITY_TOLERANCES = {
    "mbar_forms": 1e-11,
    "mbar_apply": 1e-11,
    "b_inverse": 1e-11,
    "b_symmetric": 1e-11,
    "poly_commutation": 1e-10,
    "error_propagation": 1e-10,
}


def _rel(X, Y):
    if X.size == 0:
        return 0.0
    return float(np.abs(X - Y).max() / max(1.0, np.abs(Y).max()))


def random_spd(n, rng, lo=1.0, hi=10.0):
    if n == 0:
        return np.zeros((0, 0))
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * rng.uniform(lo, hi, n)) @ Q.T


def _matpoly(coeffs, X):
    out = np.zeros_like(X)
    for c in coeffs[::-1]:
        out = out @ X + c * np.eye(len(X))
    return out


def verify_identities(n=30, seed=42, nu=3, perturb=0.0) -> IdentityReport:
    """Dense checks of the two-level formulas on a random SPD instance.

    A random SPD (n x n), P random (n x n//2), M the lower triangle of A
    (so M + M^T - A = diag(A) is SPD), B_H random SPD and q random of degree
    nu - 1 (q = 1 for nu = 1). ``perturb`` is added to the leading Horner
    coefficient in the applied preconditioner only, as a negative control.
    """
    from .precond import MatrixSmoother, TwoLevelConfig, symmetrized_smoother_apply, two_level_apply

    if nu < 1:
        raise ValueError("nu must be >= 1")
    rng = np.random.default_rng(seed)
    nc = n // 2
    A = random_spd(n, rng)
    P = rng.standard_normal((n, nc)) / math.sqrt(max(n, 1))
    M = np.tril(A)
    BH = random_spd(nc, rng)
    coeffs = np.array([1.0]) if nu == 1 else rng.uniform(-1, 1, nu)
    applied = coeffs.copy()
    applied[-1] += perturb

    I = np.eye(n)
    Minv = np.linalg.inv(M) if n else np.zeros((0, 0))
    sm = MatrixSmoother(M)
    dev = {}

    Mbar = M @ np.linalg.solve(M + M.T - A, M.T) if n else np.zeros((0, 0))
    Mbar_inv = Minv + Minv.T - Minv.T @ A @ Minv
    dev["mbar_forms"] = _rel(np.linalg.inv(Mbar) if n else Mbar, Mbar_inv)
    dev["mbar_apply"] = _rel(dense_operator(lambda x: symmetrized_smoother_apply(sm, A, x), n), Mbar_inv)

    BH_inv = np.linalg.inv(BH) if nc else np.zeros((0, 0))
    AH = P.T @ A @ P
    cfg = TwoLevelConfig(A, sm, P, coarse="amli", BH_inv=lambda r: BH_inv @ r, q=MonomialPoly(applied))
    Binv = dense_operator(lambda x: two_level_apply(cfg, x), n)
    Bt_inv = _matpoly(coeffs, BH_inv @ AH) @ BH_inv
    formula = Mbar_inv + (I - Minv.T @ A) @ P @ Bt_inv @ P.T @ (I - A @ Minv)
    dev["b_inverse"] = _rel(Binv, formula)
    dev["b_symmetric"] = _rel(Binv, Binv.T)

    X = P @ BH_inv @ P.T @ A
    lhs = P @ _matpoly(coeffs, BH_inv @ AH) @ BH_inv @ P.T @ A
    dev["poly_commutation"] = _rel(lhs, _matpoly(coeffs, X) @ X)

    EH = I - X
    p_tilde = I - _matpoly(coeffs, I - EH) @ (I - EH)
    dev["error_propagation"] = _rel(I - Binv @ A, (I - Minv.T @ A) @ p_tilde @ (I - Minv @ A))
    return IdentityReport(n, seed, nu, dev, dict(IDENTITY_TOLERANCES))
