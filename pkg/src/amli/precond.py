"""Preconditioner applications and the PCG driver.

- ``two_level_apply``: pre-smooth, coarse correction, post-smooth.
- ``amli_apply``: the linear AMLI recursion with per-level visit counters.
- ``f_smoothing_apply``: one hierarchical-basis level with smoothing on the
  fine block only.
- ``pcg_solve``: preconditioned conjugate gradients with a Lanczos
  condition-number estimate.
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, HierarchyError, IndefiniteError
from .hierarchy import galerkin_coarse
from .sparse import as_csr, coarse_factor, horner_matrix_apply


# --- smoothers given as matrices -------------------------------------------

class MatrixSmoother:
    """Smoother from an explicit (dense) matrix M, for desk-scale checks."""

    def __init__(self, M):
        self.M = np.atleast_2d(np.asarray(M, dtype=float))
        self.n = self.M.shape[0]
        self._lu = scipy.linalg.lu_factor(self.M) if self.n else None

    def solve(self, b):
        if self._lu is None:
            return np.zeros(0)
        return scipy.linalg.lu_solve(self._lu, b)

    def solve_transpose(self, b):
        if self._lu is None:
            return np.zeros(0)
        return scipy.linalg.lu_solve(self._lu, b, trans=1)


def _matvec(A):
    if callable(A) and not hasattr(A, "shape"):
        return A
    if isinstance(A, np.ndarray):
        return lambda x: A @ x
    return as_csr(A).matvec


def symmetrized_smoother_apply(M, A, x):
    """Mbar^{-1} x = (M^{-1} + M^{-T} - M^{-T} A M^{-1}) x with one residual in between."""
    x = np.asarray(x, dtype=float)
    if x.shape != (M.n,):
        raise DimensionMismatchError(f"vector of length {x.shape} for smoother of size {M.n}")
    Ax = _matvec(A)
    y = M.solve(x)
    return y + M.solve_transpose(x - Ax(y))


def amli_coarse_stabilize(BH_inv: Callable, AH: Callable, q, r):
    """B_{H,nu}^{-1} r = B_H^{-1} q(A_H B_H^{-1}) r."""
    AH = _matvec(AH)
    return BH_inv(horner_matrix_apply(q, AH, BH_inv, r))


@dataclass
class TwoLevelConfig:
    """Generic two-level method on A with transfer P and smoother M.

    ``coarse`` picks the coarse operator: ``exact`` solves with A_H = P^T A P,
    ``initial`` applies ``BH_inv``, ``amli`` uses the polynomial-stabilized
    B_{H,nu} built from ``BH_inv`` and ``q``.
    """

    A: object
    M: object
    P: object
    coarse: str = "exact"
    BH_inv: Optional[Callable] = None
    q: object = None
    AH: object = field(init=False, default=None)

    def __post_init__(self):
        if self.coarse not in ("exact", "initial", "amli"):
            raise ValueError(f"unknown coarse selector {self.coarse!r}")
        dense = isinstance(self.A, np.ndarray)
        if dense:
            P = np.asarray(self.P, dtype=float)
            self.P = P
            self.AH = P.T @ self.A @ P
            self._Pt = lambda x: P.T @ x
            self._P = lambda x: P @ x
        else:
            self.A = as_csr(self.A)
            self.P = as_csr(self.P)
            self.AH = galerkin_coarse(self.A, self.P)
            Pt = self.P.T
            self._Pt = Pt.matvec
            self._P = self.P.matvec
        if self.coarse == "exact":
            f = coarse_factor(self.AH)
            self._coarse = f.solve
        elif self.BH_inv is None:
            raise ValueError(f"coarse={self.coarse!r} needs BH_inv")
        elif self.coarse == "initial":
            self._coarse = self.BH_inv
        else:
            if self.q is None:
                raise ValueError("coarse='amli' needs q")
            AH = _matvec(self.AH)
            self._coarse = lambda r: amli_coarse_stabilize(self.BH_inv, AH, self.q, r)

    def coarse_apply(self, r):
        return self._coarse(r)


def two_level_apply(cfg: TwoLevelConfig, x):
    x = np.asarray(x, dtype=float)
    A = _matvec(cfg.A)
    y = cfg.M.solve(x)
    z = y + cfg._P(cfg.coarse_apply(cfg._Pt(x - A(y))))
    return z + cfg.M.solve_transpose(x - A(z))


# --- one hierarchical-basis level --------------------------------------------

def f_smoothing_apply(level, x, Z_inv: Callable, variant="multiplicative"):
    """Apply Btilde^{-1} of one level in the hierarchical basis.

    ``multiplicative``: C11^{-1} on the fine block plus the coarse correction
    [-C11^{-1} A12; I] Z^{-1} [-A21 C11^{-1}, I], i.e. the inverse of L D U.
    ``symmetrized``: the two-level scheme with smoother M^{-1} = diag(C11^{-1}, 0)
    and P = [0; I], whose first term is 2 C11^{-1} - C11^{-1} A11 C11^{-1}.
    The two agree when C11 = A11.
    """
    x = np.asarray(x, dtype=float)
    nf = level.nf
    if x.shape != (level.n,):
        raise DimensionMismatchError(f"vector of length {x.shape} for level of size {level.n}")
    C = level.C11
    x1, x2 = x[:nf], x[nf:]
    if variant == "multiplicative":
        u1 = C.solve(x1)
        y2 = Z_inv(x2 - level.A21.matvec(u1))
        y1 = u1 - C.solve(level.A12.matvec(y2))
        return np.concatenate([y1, y2])
    if variant == "symmetrized":
        y1 = C.solve(x1)
        z2 = Z_inv(x2 - level.A21.matvec(y1))
        z1 = y1
        r1 = x1 - level.A11.matvec(z1) - level.A12.matvec(z2)
        return np.concatenate([z1 + C.solve_transpose(r1), z2])
    raise ValueError(f"unknown variant {variant!r}")


# --- linear AMLI ----------------------------------------------------------------

@dataclass
class CycleStats:
    """Visit counts per level (index k) collected during amli_apply."""

    visits: List[int]
    coarse_solves: int = 0


def amli_apply(H, d, top=None, stats: Optional[CycleStats] = None):
    """v = B^{(top)}^{-1} d for the hierarchy H (top defaults to the finest level).

    Iterative form with visit counters sigma_k. On a revisit of level k the
    Horner step is d^{(k-1)} = A^{(k-1)} v^{(k-1)} + a_{nu_k - sigma_k} w^{(k-1)},
    where w^{(k-1)} is the coarse residual stored at the first visit.
    Levels whose q is None solve their coarse system directly.
    """
    L = H.depth if top is None else int(top)
    d = np.asarray(d, dtype=float)
    if L == 0:
        if stats is not None:
            stats.coarse_solves += 1
        return H.coarse.solve(d)
    if not 1 <= L <= H.depth:
        raise HierarchyError(f"top level {L} outside 0..{H.depth}")
    if d.shape != (H.matrix(L).n,):
        raise DimensionMismatchError(f"vector of length {d.shape} for level {L} of size {H.matrix(L).n}")

    sigma = [0] * (L + 1)
    dv = [None] * (L + 1)
    v = [None] * (L + 1)
    w = [None] * (L + 1)
    dv[L] = d
    k = L
    forward = True
    while True:
        if forward:
            lev = H.levels[k - 1]
            sigma[k] += 1
            if stats is not None:
                stats.visits[k] += 1
            if sigma[k] == 1:
                dt = lev.to_hb(dv[k])
                v[k] = np.empty(lev.n)
                v1 = lev.C11.solve(dt[: lev.nf])
                v[k][: lev.nf] = v1
                w[k - 1] = dt[lev.nf:] - lev.A21.matvec(v1)
                if lev.q is None:
                    v[k - 1] = lev.coarse_solve(w[k - 1])
                    if stats is not None:
                        stats.coarse_solves += 1
                    k -= 1
                    forward = False
                    continue
                dv[k - 1] = lev.q.coeffs[lev.nu - 1] * w[k - 1]
            else:
                dv[k - 1] = H.matrix(k - 1).matvec(v[k - 1]) + lev.q.coeffs[lev.nu - sigma[k]] * w[k - 1]
            k -= 1
            if k > 0:
                continue
            v[0] = H.coarse.solve(dv[0])
            if stats is not None:
                stats.visits[0] += 1
                stats.coarse_solves += 1
            forward = False
        else:
            k += 1
            lev = H.levels[k - 1]
            v[k][lev.nf:] = v[k - 1]
            if lev.q is not None and sigma[k] < lev.nu:
                forward = True
                continue
            v[k][: lev.nf] -= lev.C11.solve(lev.A12.matvec(v[k][lev.nf:]))
            v[k] = lev.from_hb(v[k])
            sigma[k] = 0
            if k == L:
                return v[L]


class AmliPreconditioner:
    """Callable wrapper: ``P(r)`` returns B^{-1} r."""

    def __init__(self, H, top=None):
        self.H = H
        self.top = H.depth if top is None else top
        self.n = H.matrix(self.top).n

    def __call__(self, r):
        return amli_apply(self.H, r, top=self.top)

    def cycle_stats(self):
        """Visit counts for one application (on a zero vector)."""
        st = CycleStats([0] * (self.top + 1))
        amli_apply(self.H, np.zeros(self.n), top=self.top, stats=st)
        return st


# --- PCG ----------------------------------------------------------------------

@dataclass
class SolveReport:
    iterations: int
    residual_history: List[float]
    kappa_estimate: float
    converged: bool
    kappa_history: List[float] = field(default_factory=list)
    x: Optional[np.ndarray] = field(default=None, repr=False)

    def rows(self):
        kh = self.kappa_history or [self.kappa_estimate] * len(self.residual_history)
        return [(i, r, k) for i, (r, k) in enumerate(zip(self.residual_history, kh))]

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "kappa_estimate": self.kappa_estimate,
            "residual_history": list(self.residual_history),
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["iteration", "residual", "kappa_est"])
        for i, r, k in self.rows():
            wr.writerow([i, repr(float(r)), repr(float(k))])
        return buf.getvalue()


def lanczos_kappa(alphas, betas):
    """Condition estimate from the CG coefficients via the Lanczos tridiagonal."""
    m = len(alphas)
    if m == 0:
        return 1.0
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas[:m], dtype=float)
    diag = 1.0 / a
    diag[1:] += b[: m - 1] / a[: m - 1]
    off = np.sqrt(b[: m - 1]) / a[: m - 1]
    ev = scipy.linalg.eigvalsh_tridiagonal(diag, off) if m > 1 else diag
    lo, hi = ev.min(), ev.max()
    if lo <= 0:
        return math.inf
    return float(hi / lo)


def pcg_solve(A, b, precond: Optional[Callable] = None, tol=1e-8, maxit=500, x0=None,
              callback: Optional[Callable] = None) -> SolveReport:
    """Preconditioned CG; stops when sqrt(r^T B^{-1} r) <= tol * its initial value.

    ``callback(i, x)`` is invoked after every iteration.
    """
    Am = _matvec(A)
    b = np.asarray(b, dtype=float)
    M = precond if precond is not None else (lambda r: r.copy())
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - Am(x) if x0 is not None else b.copy()
    z = M(r)
    rz = float(r @ z)
    if rz < 0:
        raise IndefiniteError("preconditioner is indefinite: r^T B^{-1} r < 0")
    res0 = math.sqrt(rz)
    history = [res0]
    kappas = [1.0]
    if res0 == 0.0 or tol >= 1.0:
        return SolveReport(0, history, 1.0, True, kappas, x)
    p = z.copy()
    alphas, betas = [], []
    converged = False
    it = 0
    for it in range(1, maxit + 1):
        Ap = Am(p)
        pAp = float(p @ Ap)
        if not pAp > 0:
            raise IndefiniteError(f"p^T A p = {pAp:.3e} <= 0 at iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = M(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise IndefiniteError(f"preconditioner is indefinite at iteration {it}")
        beta = rz_new / rz
        alphas.append(alpha)
        betas.append(beta)
        res = math.sqrt(rz_new)
        history.append(res)
        kappas.append(lanczos_kappa(alphas, betas))
        if callback is not None:
            callback(it, x)
        if res <= tol * res0:
            converged = True
            break
        p = z + beta * p
        rz = rz_new
    return SolveReport(it, history, kappas[-1], converged, kappas, x)
