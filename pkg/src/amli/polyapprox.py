"""Acceleration polynomials for AMLI.

Best uniform polynomial approximation to 1/x on [lambda_min, lambda_max]
(three-term recurrence, closed forms, error formulas), Chebyshev polynomials,
the degree-one shifted Chebyshev stabilizer, range bounds for x*q(x), and the
smoother positivity / damping estimates.

Polynomials are stored with monomial coefficients (``coeffs[j]`` multiplies
``x**j``) because the AMLI cycle consumes them through Horner's rule.
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import minimize_scalar

from .errors import DegenerateIntervalError, DegreeError

# Monomial coefficients of 1/x approximants lose accuracy quickly with degree.
MAX_DEGREE = 16

FAMILIES = ("bestapprox", "chebyshev", "exact", "identity")


@dataclass(frozen=True)
class SpectralInterval:
    """Eigenvalue interval [lambda_min, lambda_max] and its derived parameters."""

    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        lo, hi = float(self.lambda_min), float(self.lambda_max)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise DegenerateIntervalError(f"non-finite endpoints [{lo}, {hi}]")
        if lo <= 0.0:
            raise DegenerateIntervalError(f"lambda_min = {lo} must be positive")
        if lo >= hi:
            raise DegenerateIntervalError(f"degenerate interval [{lo}, {hi}]: need lambda_min < lambda_max")
        object.__setattr__(self, "lambda_min", lo)
        object.__setattr__(self, "lambda_max", hi)

    @property
    def kappa(self):
        return self.lambda_max / self.lambda_min

    @property
    def sigma(self):
        return 1.0 / (self.lambda_max - self.lambda_min)

    @property
    def a(self):
        return (self.lambda_max + self.lambda_min) / (self.lambda_max - self.lambda_min)

    @property
    def a2m1(self):
        """a**2 - 1, computed without cancellation."""
        return 4.0 * self.lambda_max * self.lambda_min / (self.lambda_max - self.lambda_min) ** 2

    @property
    def delta(self):
        # (s1 - s0) / (s1 + s0), with s1 - s0 rewritten to avoid cancellation
        s0, s1 = math.sqrt(self.lambda_min), math.sqrt(self.lambda_max)
        return (self.lambda_max - self.lambda_min) / (s1 + s0) ** 2

    @property
    def eta(self):
        return -self.delta

    @property
    def chi(self):
        return 4.0 / (math.sqrt(self.lambda_max) + math.sqrt(self.lambda_min)) ** 2

    def to_reference(self, x):
        """t = 2 sigma x - a; sends lambda_min to -1 and lambda_max to +1."""
        return 2.0 * self.sigma * np.asarray(x, dtype=float) - self.a

    def from_reference(self, t):
        return (np.asarray(t, dtype=float) + self.a) / (2.0 * self.sigma)


def spectral_params(lambda_min, lambda_max):
    return SpectralInterval(lambda_min, lambda_max)


@dataclass(frozen=True, eq=False)
class MonomialPoly:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        if c.size == 0:
            raise ValueError("a polynomial needs at least one coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        y = np.full(x.shape, self.coeffs[-1])
        for c in self.coeffs[-2::-1]:
            y = y * x + c
        return y if y.ndim else float(y)

    def __len__(self):
        return len(self.coeffs)

    def __eq__(self, other):
        return isinstance(other, MonomialPoly) and np.array_equal(self.coeffs, other.coeffs)

    def __repr__(self):
        return f"MonomialPoly({self.coeffs.tolist()})"

    def times_x(self):
        return MonomialPoly(np.concatenate(([0.0], self.coeffs)))

    def derivative(self):
        if self.degree == 0:
            return MonomialPoly([0.0])
        return MonomialPoly(npoly.polyder(self.coeffs))

    def padded(self, length):
        """Same polynomial with trailing zero coefficients up to ``length`` terms."""
        if length < len(self.coeffs):
            raise ValueError("cannot pad to fewer coefficients")
        return MonomialPoly(np.concatenate((self.coeffs, np.zeros(length - len(self.coeffs)))))

    def tolist(self):
        return [float(c) for c in self.coeffs]


# --- Chebyshev polynomials ----------------------------------------------

def cheb_T(k, t):
    """T_k(t) by T_{j+1} = 2 t T_j - T_{j-1}; valid for any real t."""
    if k < 0:
        raise ValueError("degree must be nonnegative")
    t = np.asarray(t, dtype=float)
    prev, cur = np.ones_like(t), t.copy()
    if k == 0:
        out = prev
    else:
        for _ in range(k - 1):
            prev, cur = cur, 2.0 * t * cur - prev
        out = cur
    return out if out.ndim else float(out)


def _cheb_all(m, t):
    """[T_0(t), ..., T_m(t)] stacked along axis 0."""
    t = np.asarray(t, dtype=float)
    out = np.empty((m + 1,) + t.shape)
    out[0] = 1.0
    if m >= 1:
        out[1] = t
    for j in range(1, m):
        out[j + 1] = 2.0 * t * out[j] - out[j - 1]
    return out


# --- best approximation on [-1, 1] --------------------------------------

def _check_a(a):
    a = float(a)
    if not a > 1.0:
        raise DegenerateIntervalError(f"shift a = {a} must exceed 1")
    return a


def _eta_of_a(a):
    return -1.0 / (a + math.sqrt((a - 1.0) * (a + 1.0)))


def best_Q_on_reference(m, a):
    """Best approximation Q_m to 1/(t + a) on [-1, 1], coefficients in t.

    Built from Q_0, Q_1 and  eta^{-1} Q_{k+2} - 2 t Q_{k+1} + eta Q_k = -2.
    """
    a = _check_a(a)
    if m < 0:
        raise DegreeError("degree must be nonnegative")
    a2m1 = (a - 1.0) * (a + 1.0)
    eta = _eta_of_a(a)
    Q_prev = np.array([a / a2m1])
    if m == 0:
        return MonomialPoly(Q_prev)
    Q = np.array([1.0 / math.sqrt(a2m1), -1.0 / a2m1])
    for _ in range(m - 1):
        nxt = 2.0 * npoly.polymulx(Q)
        nxt[: len(Q_prev)] -= eta * Q_prev
        nxt[0] -= 2.0
        Q_prev, Q = Q, eta * nxt
    return MonomialPoly(Q)


def reference_to_interval(Q, interval):
    """q(x) = 2 sigma Q(2 sigma x - a) as monomial coefficients in x."""
    s2 = 2.0 * interval.sigma
    inner = np.array([-interval.a, s2])
    out = np.zeros(1)
    for c in Q.coeffs[::-1]:
        out = npoly.polyadd(npoly.polymul(out, inner), [c])
    full = np.zeros(len(Q.coeffs))
    full[: len(out)] = out[: len(Q.coeffs)]
    return MonomialPoly(s2 * full)


# --- best approximation on [lambda_min, lambda_max] ---------------------

@dataclass(frozen=True)
class BestApproxSequence:
    interval: SpectralInterval
    polys: List[MonomialPoly] = field(repr=False)
    max_degree: int


def best_approx_sequence(interval, max_degree, degree_cap=MAX_DEGREE):
    """q_0, ..., q_{max_degree} by the defect-correction recurrence.

    q_{k+1} = q_k + s_{k+1},
    s_{k+1} = 4 mu0 mu1 / (sqrt(mu0) + sqrt(mu1))^2 * (1 - x q_k) + delta^2 s_k.
    """
    if max_degree < 0:
        raise DegreeError("degree must be nonnegative")
    if degree_cap is not None and max_degree > degree_cap:
        raise DegreeError(f"degree {max_degree} exceeds the cap {degree_cap}; pass a larger degree_cap to override")
    mu0, mu1 = 1.0 / interval.lambda_max, 1.0 / interval.lambda_min
    r0, r1 = math.sqrt(mu0), math.sqrt(mu1)
    polys = [MonomialPoly([0.5 * (mu0 + mu1)])]
    if max_degree >= 1:
        polys.append(MonomialPoly([0.5 * (r0 + r1) ** 2, -mu0 * mu1]))
    gain = 4.0 * mu0 * mu1 / (r0 + r1) ** 2
    d2 = interval.delta ** 2
    for k in range(1, max_degree):
        qk, qkm1 = polys[k].coeffs, polys[k - 1].coeffs
        defect = -npoly.polymulx(qk)
        defect[0] += 1.0
        prev_step = qk.copy()
        prev_step[: len(qkm1)] -= qkm1
        s = gain * defect
        s[: len(prev_step)] += d2 * prev_step
        nxt = s
        nxt[: len(qk)] += qk
        polys.append(MonomialPoly(nxt))
    return BestApproxSequence(interval, polys, max_degree)


def best_q(m, interval, degree_cap=MAX_DEGREE):
    """Best uniform approximation of degree m to 1/x on the interval."""
    return best_approx_sequence(interval, m, degree_cap).polys[m]


def best_q_eval(m, interval, x):
    """Evaluate q_m(x) by running the defect-correction recurrence on values.

    Stable for any degree (errors are damped like delta^k); the monomial
    coefficients of ``best_q`` lose accuracy by cancellation beyond m ~ 8.
    """
    if m < 0:
        raise DegreeError("degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    mu0, mu1 = 1.0 / interval.lambda_max, 1.0 / interval.lambda_min
    r0, r1 = math.sqrt(mu0), math.sqrt(mu1)
    q_prev = np.full(x.shape, 0.5 * (mu0 + mu1))
    if m == 0:
        return q_prev if q_prev.ndim else float(q_prev)
    q = 0.5 * (r0 + r1) ** 2 - mu0 * mu1 * x
    gain = 4.0 * mu0 * mu1 / (r0 + r1) ** 2
    d2 = interval.delta ** 2
    s = q - q_prev
    for _ in range(1, m):
        s = gain * (1.0 - x * q) + d2 * s
        q = q + s
    return q if np.ndim(q) else float(q)


def best_q_closed_eval(m, interval, x):
    """Evaluate q_m(x) from the Chebyshev-sum closed form.

    Independent of the recurrence; used to cross-check ``best_q``.
    """
    if m < 0:
        raise DegreeError("degree must be nonnegative")
    t = interval.to_reference(x)
    eta = interval.eta
    g = eta - 1.0 / eta
    T = _cheb_all(m, t)
    powers = eta ** np.arange(m)
    S = np.tensordot(powers, T[:m], axes=1) if m else np.zeros_like(t)
    Q = -2.0 / g + 4.0 / g * S - 4.0 * eta ** (m - 1) / g ** 2 * T[m]
    out = 2.0 * interval.sigma * Q
    return out if np.ndim(out) else float(out)


def _R(m, a, t):
    eta = _eta_of_a(a)
    T = _cheb_all(m + 1, t)
    Tm1 = T[m - 1] if m >= 1 else T[1]
    return T[m + 1] / eta - 2.0 * T[m] + eta * Tm1


def residual_R(m, a, t):
    """R_{m+1}(t) = eta^{-1} T_{m+1}(t) - 2 T_m(t) + eta T_{m-1}(t)."""
    if m < 1:
        raise DegreeError("residual_R needs m >= 1")
    a = _check_a(a)
    out = _R(m, a, t)
    return out if np.ndim(out) else float(out)


def best_Q_quotient_eval(m, a, t):
    """Q_m(t) = (1 - 2 eta^m R_{m+1}(t) / (eta - 1/eta)^2) / (t + a)."""
    a = _check_a(a)
    t = np.asarray(t, dtype=float)
    eta = _eta_of_a(a)
    out = (1.0 - 2.0 * eta ** m / (eta - 1.0 / eta) ** 2 * _R(m, a, t)) / (t + a)
    return out if out.ndim else float(out)


def product_identity_eval(m, interval, x):
    """Right-hand side of x q_m(x) = 1 - 2 eta^m R_{m+1}(t) / (eta - 1/eta)^2."""
    eta = interval.eta
    t = interval.to_reference(x)
    out = 1.0 - 2.0 * eta ** m / (eta - 1.0 / eta) ** 2 * _R(m, interval.a, t)
    return out if np.ndim(out) else float(out)


def best_error(m, interval):
    """Uniform error 2 sigma delta^m / (a^2 - 1) of the degree-m best approximation."""
    if m < 0:
        raise DegreeError("degree must be nonnegative")
    base = (interval.lambda_max - interval.lambda_min) / (2.0 * interval.lambda_max * interval.lambda_min)
    delta = interval.delta
    if m and m * math.log(delta) < -700.0:
        return math.exp(m * math.log(delta) + math.log(base))
    return base * delta ** m


def log_best_error(m, interval):
    base = (interval.lambda_max - interval.lambda_min) / (2.0 * interval.lambda_max * interval.lambda_min)
    return math.log(base) + m * math.log(interval.delta)


def error_via_corollary(m, interval):
    """2 delta^{m-1} E_0^2 with E_0 the constant-approximation error on the square-root interval."""
    if m < 1:
        raise DegreeError("error_via_corollary needs m >= 1")
    s0, s1 = math.sqrt(interval.lambda_min), math.sqrt(interval.lambda_max)
    e0 = 0.5 * (interval.lambda_max - interval.lambda_min) / (s0 * s1 * (s0 + s1))
    return 2.0 * interval.delta ** (m - 1) * e0 * e0


def equioscillation_points(q, interval, npts=100_001, rtol=1e-9, level=None):
    """Points where 1/x - q(x) reaches its extreme magnitude.

    Local extrema of the error are located on a uniform grid, refined by a
    bounded scalar search, and kept when |error| >= (1 - rtol) * level, where
    ``level`` defaults to the observed maximum. Returns (x, error) pairs in
    increasing x.
    """
    xs = np.linspace(interval.lambda_min, interval.lambda_max, npts)
    e = 1.0 / xs - q(xs)
    cand = [(xs[0], e[0]), (xs[-1], e[-1])]
    de = np.diff(e)
    turns = np.flatnonzero(de[:-1] * de[1:] < 0) + 1
    for i in turns:
        s = 1.0 if e[i] > 0 else -1.0
        res = minimize_scalar(lambda x: -s * (1.0 / x - q(x)), bounds=(xs[i - 1], xs[i + 1]),
                              method="bounded", options={"xatol": 1e-14 * interval.lambda_max})
        x = float(res.x)
        cand.append((x, 1.0 / x - q(x)))
    cand.sort()
    ref = level if level is not None else max(abs(v) for _, v in cand)
    return [(x, v) for x, v in cand if abs(v) >= (1.0 - rtol) * ref]


def alternates(points):
    """True when consecutive error values change sign."""
    return all(points[i][1] * points[i + 1][1] < 0 for i in range(len(points) - 1))


# --- stabilization polynomials -------------------------------------------

def cheb_accel_q(rho0, rho1):
    """q(x) = rho0 + rho1 - rho0 rho1 x from the degree-two shifted Chebyshev p.

    p(x) = rho0 rho1 (1/rho0 - x)(1/rho1 - x) = 1 - x q(x) is <= 0 on [1/rho1, 1/rho0].
    """
    rho0, rho1 = float(rho0), float(rho1)
    if not (rho0 > 0 and rho1 > 0):
        raise DegenerateIntervalError("rho bounds must be positive")
    if rho0 > rho1:
        raise DegenerateIntervalError(f"rho0 = {rho0} exceeds rho1 = {rho1}")
    return MonomialPoly([rho0 + rho1, -rho0 * rho1])


def _bisect(f, lo, hi, flo, tol):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def xq_range(q, lo, hi):
    """(min, max) of x q(x) on [lo, hi].

    Candidates are the endpoints and the roots of d/dx[x q(x)] inside the
    interval, bracketed on a grid of 64 points per derivative degree and
    refined by bisection.
    """
    lo, hi = float(lo), float(hi)
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    p = q.times_x()
    cands = [lo, hi]
    dp = p.derivative()
    if dp.degree >= 1 and hi > lo:
        grid = np.linspace(lo, hi, 64 * dp.degree + 1)
        vals = dp(grid)
        tol = 1e-13 * max(1.0, abs(hi))
        for i in range(len(grid) - 1):
            if vals[i] == 0.0:
                cands.append(grid[i])
            elif vals[i] * vals[i + 1] < 0:
                cands.append(_bisect(dp, grid[i], grid[i + 1], vals[i], tol))
    v = p(np.array(cands))
    return float(v.min()), float(v.max())


def _mu_rate(mu):
    mu = float(mu)
    if not mu > 1.0:
        raise ValueError(f"mu = {mu} must exceed 1")
    s = math.sqrt(mu)
    return mu, (s - 1.0) / (s + 1.0)


def positivity_holds(m, mu):
    """Sufficient condition for q_m on [lam/mu, lam] to be positive on (0, lam]."""
    if m < 1:
        raise DegreeError("m must be >= 1")
    mu, d = _mu_rate(mu)
    return bool(d ** m < 2.0 / (mu - 1.0))


def damping_bound(m, mu):
    """Bound on |1 - q_m(lambda) lambda| for lambda in [lam/mu, lam]."""
    if m < 1:
        raise DegreeError("m must be >= 1")
    mu, d = _mu_rate(mu)
    return 0.5 * (mu - 1.0) * d ** m


def smoother_interval(lam_bar, mu):
    """Interval [lam_bar/mu, lam_bar] on which the polynomial smoother is built."""
    mu, _ = _mu_rate(mu)
    return SpectralInterval(lam_bar / mu, lam_bar)


def cycle_polynomial(family, nu, rho0, rho1) -> Optional[MonomialPoly]:
    """Coefficients of q^{(k)} (exactly ``nu`` of them) for one AMLI level.

    The interval for x is [1/rho1, 1/rho0], the spectrum bound of
    B^{-1}A on the coarser level. ``exact`` returns None (direct coarse solve).
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown polynomial family {family!r}")
    if nu < 1:
        raise DegreeError("nu must be >= 1")
    if family == "exact":
        return None
    if family == "identity":
        if nu != 1:
            raise DegreeError("the identity family uses nu = 1")
        return MonomialPoly([1.0])
    if family == "chebyshev":
        if nu == 1:
            return MonomialPoly([1.0])
        if nu == 2:
            return cheb_accel_q(rho0, rho1)
        raise DegreeError("the chebyshev family provides nu <= 2")
    # bestapprox
    if rho1 <= rho0 * (1.0 + 1e-14):
        # single-point interval {1/rho}: the constant rho is exact there
        return MonomialPoly([rho0]).padded(nu)
    return best_q(nu - 1, SpectralInterval(1.0 / rho1, 1.0 / rho0))


def coefficient_document(m, interval, q=None):
    """JSON-ready coefficient export for one degree."""
    q = best_q(m, interval) if q is None else q
    return {
        "lambda_min": interval.lambda_min,
        "lambda_max": interval.lambda_max,
        "degree": int(m),
        "coeffs": q.tolist(),
        "error": best_error(m, interval),
    }
