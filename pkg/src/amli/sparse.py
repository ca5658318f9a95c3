"""Sparse and dense linear-algebra kernels.

CSR storage with compiled mat-vec and triangular sweeps, the dense direct
solver used on the coarsest level, matrix-polynomial application by
Horner's rule and Lanczos extreme-eigenvalue estimation.
"""
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

from . import _backend
from .errors import (
    CholeskyBreakdownError,
    DimensionMismatchError,
    NotSymmetricError,
    ZeroDiagonalError,
)

SYMMETRY_RTOL = 1e-12


class CsrMatrix:
    """Compressed-sparse-row matrix with sorted, duplicate-free rows.

    Instances are treated as immutable once built; kernels only read them.
    """

    __slots__ = ("shape", "row_ptr", "col_idx", "values", "_diag", "__weakref__")

    def __init__(self, row_ptr, col_idx, values, shape):
        self.row_ptr = np.ascontiguousarray(row_ptr, dtype=np.int32)
        self.col_idx = np.ascontiguousarray(col_idx, dtype=np.int32)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        self._diag = None
        if len(self.row_ptr) != self.shape[0] + 1:
            raise DimensionMismatchError("row_ptr length must be rows + 1")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")

    # --- construction -------------------------------------------------
    @classmethod
    def from_scipy(cls, A):
        A = sp.csr_matrix(A, dtype=np.float64)
        A.sum_duplicates()
        A.sort_indices()
        return cls(A.indptr, A.indices, A.data, A.shape)

    @classmethod
    def from_dense(cls, D, drop_zeros=True):
        D = np.asarray(D, dtype=np.float64)
        A = sp.csr_matrix(D)
        if drop_zeros:
            A.eliminate_zeros()
        return cls.from_scipy(A)

    @classmethod
    def from_coo(cls, rows, cols, vals, shape, symmetric=False):
        """Assemble from triplets; duplicates are summed, rows sorted."""
        A = cls.from_scipy(sp.coo_matrix((vals, (rows, cols)), shape=shape))
        if symmetric:
            check_symmetric(A)
        return A

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n + 1), np.arange(n), np.ones(n), (n, n))

    def to_scipy(self):
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=self.shape)

    def to_dense(self):
        return self.to_scipy().toarray()

    # --- properties ---------------------------------------------------
    @property
    def n(self):
        return self.shape[0]

    @property
    def nnz(self):
        return len(self.values)

    @property
    def T(self):
        return CsrMatrix.from_scipy(self.to_scipy().T)

    def diagonal(self):
        if self._diag is None:
            self._diag = np.ascontiguousarray(self.to_scipy().diagonal())
        return self._diag

    # --- kernels ------------------------------------------------------
    def matvec(self, x, out=None):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.shape[1],):
            raise DimensionMismatchError(f"matrix {self.shape} applied to vector of length {x.shape}")
        if out is None:
            out = np.empty(self.shape[0])
        _backend.kernels.csr_matvec(self.row_ptr, self.col_idx, self.values, x, out)
        return out

    def __matmul__(self, x):
        return self.matvec(x)

    def lower_solve(self, b):
        """Solve (D + L) x = b, i.e. one forward Gauss-Seidel sweep from zero."""
        return self._tri_solve(b, _backend.kernels.lower_solve)

    def upper_solve(self, b):
        """Solve (D + U) x = b."""
        return self._tri_solve(b, _backend.kernels.upper_solve)

    def _tri_solve(self, b, kernel):
        b = np.ascontiguousarray(b, dtype=np.float64)
        if b.shape != (self.n,):
            raise DimensionMismatchError(f"rhs of length {b.shape} for n={self.n}")
        d = self.diagonal()
        zero = np.flatnonzero(d == 0.0)
        if len(zero):
            raise ZeroDiagonalError(int(zero[0]))
        x = np.empty(self.n)
        kernel(self.row_ptr, self.col_idx, self.values, d, b, x)
        return x

    def __repr__(self):
        return f"CsrMatrix(shape={self.shape}, nnz={self.nnz})"


def as_csr(A):
    if isinstance(A, CsrMatrix):
        return A
    if sp.issparse(A):
        return CsrMatrix.from_scipy(A)
    return CsrMatrix.from_dense(A)


def check_symmetric(A, rtol=SYMMETRY_RTOL):
    """Raise NotSymmetricError unless max|A - A^T| <= rtol * max|A|."""
    S = A.to_scipy() if isinstance(A, CsrMatrix) else sp.csr_matrix(A)
    if S.shape[0] != S.shape[1]:
        raise NotSymmetricError(f"matrix of shape {S.shape} is not square")
    scale = abs(S).max() if S.nnz else 0.0
    diff = S - S.T
    dev = abs(diff).max() if diff.nnz else 0.0
    if dev > rtol * scale:
        raise NotSymmetricError(f"max|A - A^T| = {dev:.3e} exceeds {rtol:g} * max|A| = {rtol * scale:.3e}")
    return A


def spmv(A, v):
    return as_csr(A).matvec(v)


def inf_norm(A):
    """Maximum absolute row sum, an upper bound on the spectral radius."""
    A = as_csr(A)
    if A.nnz == 0:
        return 0.0
    rows = np.repeat(np.arange(A.n), np.diff(A.row_ptr))
    sums = np.bincount(rows, weights=np.abs(A.values), minlength=A.n)
    return float(sums.max())


# --- matrix market -----------------------------------------------------

def read_matrix_market(path, symmetric=True):
    M = scipy.io.mmread(path)
    A = CsrMatrix.from_scipy(sp.csr_matrix(M))
    if symmetric:
        check_symmetric(A)
    return A


def write_matrix_market(path, A, symmetric=True):
    scipy.io.mmwrite(path, as_csr(A).to_scipy(), symmetry="symmetric" if symmetric else "general")


def read_vector(path):
    """Single-column Matrix Market array or newline-separated decimals."""
    with open(path) as fh:
        head = fh.readline()
    if head.startswith("%%MatrixMarket"):
        return np.asarray(scipy.io.mmread(path), dtype=float).ravel()
    return np.loadtxt(path, dtype=float, ndmin=1)


# --- coarsest-level direct solver ---------------------------------------

class DenseFactor:
    """Cholesky factor of a small SPD matrix."""

    def __init__(self, chol):
        self.chol = chol
        self.n = chol.shape[0]

    def solve(self, d):
        d = np.asarray(d, dtype=np.float64)
        if d.shape != (self.n,):
            raise DimensionMismatchError(f"rhs of length {d.shape} for n={self.n}")
        if self.n == 0:
            return d.copy()
        return scipy.linalg.cho_solve((self.chol, True), d)


def coarse_factor(A0):
    A = A0.to_dense() if isinstance(A0, CsrMatrix) else np.asarray(sp.csr_matrix(A0).toarray() if sp.issparse(A0) else A0, dtype=float)
    if A.size == 0:
        return DenseFactor(np.zeros((0, 0)))
    c, info = scipy.linalg.lapack.dpotrf(A, lower=1, clean=1)
    if info > 0:
        raise CholeskyBreakdownError(info - 1)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return DenseFactor(c)


def coarse_solve(factor, d):
    return factor.solve(d)


# --- polynomials of operators -------------------------------------------

def horner_matrix_apply(coeffs, applyA, applyBinv, w):
    """Return q(A B^{-1}) w for q(x) = sum_j coeffs[j] x^j.

    u_0 = a_{nu-1} w,  u_{j+1} = A (B^{-1} u_j) + a_{nu-2-j} w.
    """
    c = np.asarray(getattr(coeffs, "coeffs", coeffs), dtype=float)
    if c.size == 0:
        raise ValueError("empty coefficient list")
    w = np.asarray(w, dtype=float)
    u = c[-1] * w
    for a in c[-2::-1]:
        y = applyA(applyBinv(u))
        if y.shape != w.shape:
            raise DimensionMismatchError("operator output does not match vector length")
        u = y + a * w
    return u


# --- Lanczos ------------------------------------------------------------

class EigenBounds(NamedTuple):
    low: float
    high: float
    steps: int
    breakdown: bool


def extreme_eigs(apply: Callable, n: int, iters: int, inner: Optional[Callable] = None,
                 seed: int = 0, v0=None) -> EigenBounds:
    """Lanczos estimates of the extreme eigenvalues of a self-adjoint operator.

    ``inner`` applies the Gram operator G of the inner product <u, v> = u^T G v
    in which ``apply`` is self-adjoint (identity when omitted); e.g. B^{-1}A is
    self-adjoint for G = A. Full reorthogonalization is used. On breakdown the
    Ritz values computed so far are returned with ``breakdown=True``.
    """
    G = inner if inner is not None else (lambda x: x)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) if v0 is None else np.array(v0, dtype=float)
    iters = max(1, min(int(iters), n))
    V, GV = [], []
    alphas, betas = [], []
    gv = G(v)
    nrm = np.sqrt(v @ gv)
    v, gv = v / nrm, gv / nrm
    breakdown = False
    for j in range(iters):
        V.append(v)
        GV.append(gv)
        w = apply(v)
        alpha = float(w @ gv)
        alphas.append(alpha)
        # full reorthogonalization, two passes
        for _ in range(2):
            for vi, gvi in zip(V, GV):
                w = w - (w @ gvi) * vi
        if j == iters - 1:
            break
        gw = G(w)
        beta = np.sqrt(max(float(w @ gw), 0.0))
        scale = max(abs(alpha), max(betas, default=0.0), 1e-300)
        if beta <= 1e-12 * scale:
            breakdown = True
            break
        betas.append(beta)
        v, gv = w / beta, gw / beta
    k = len(alphas)
    if k == 1:
        ev = np.array(alphas)
    else:
        ev = scipy.linalg.eigvalsh_tridiagonal(np.array(alphas), np.array(betas[: k - 1]))
    return EigenBounds(float(ev.min()), float(ev.max()), k, breakdown)


def dense_operator(apply: Callable, n: int, m: Optional[int] = None):
    """Assemble the n-by-m matrix of a linear operator column by column."""
    m = n if m is None else m
    out = np.empty((n, m))
    e = np.zeros(m)
    for j in range(m):
        e[j] = 1.0
        out[:, j] = apply(e)
        e[j] = 0.0
    return out
