"""Multilevel structure: model problems, fine/coarse splitting, hierarchical
basis blocks, Galerkin coarse matrices and the smoothers C11.

Ordering convention: inside a level, vectors in the hierarchical basis are
stored fine-first (``v[:nf]``) and coarse-last (``v[nf:]``).
"""
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import HierarchyError, ZeroDiagonalError
from .polyapprox import FAMILIES, MonomialPoly, cycle_polynomial
from .sparse import CsrMatrix, DenseFactor, as_csr, check_symmetric, coarse_factor

MAX_DOFS = 4_000_000
SMOOTHERS = ("sgs", "gs", "jacobi", "exact")
RHO_MODES = ("theory", "measure", "given")


# --- model problems -----------------------------------------------------

def grid_sizes(levels, n0):
    """Points per side on each grid, coarsest first: n_k = 2 n_{k-1} + 1."""
    if levels < 1:
        raise HierarchyError("levels must be >= 1")
    if n0 < 1:
        raise HierarchyError("n0 must be >= 1")
    sizes = [int(n0)]
    for _ in range(levels - 1):
        sizes.append(2 * sizes[-1] + 1)
    return sizes


def laplacian(dim, n):
    """3-point (1D) or 5-point (2D) Dirichlet Laplacian on n (or n x n) interior points."""
    T = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n), format="csr")
    if dim == 1:
        return CsrMatrix.from_scipy(T)
    if dim == 2:
        I = sp.identity(n, format="csr")
        return CsrMatrix.from_scipy(sp.kron(I, T) + sp.kron(T, I))
    raise HierarchyError(f"dim must be 1 or 2, got {dim}")


@dataclass
class PoissonProblem:
    """Nested uniform grids; ``sizes`` runs coarsest to finest."""

    dim: int
    sizes: List[int]
    A: CsrMatrix

    @property
    def nlevels(self):
        """Number of two-level splittings (grids minus one)."""
        return len(self.sizes) - 1

    def splittings(self):
        """(perm, nf, W) from the finest level down to level 1."""
        for n in reversed(self.sizes[1:]):
            perm, nf = partition_fc(n, self.dim)
            yield perm, nf, interpolation(n, self.dim)


def gen_poisson(dim, levels, n0, max_dofs=MAX_DOFS):
    """Model Poisson problem on ``levels`` nested grids with n0 points per side on the coarsest.

    >>> gen_poisson(1, 1, 3).A.to_dense().tolist()
    [[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]]
    """
    if dim not in (1, 2):
        raise HierarchyError(f"dim must be 1 or 2, got {dim}")
    if levels > 40:
        raise HierarchyError("too many levels")
    sizes = grid_sizes(levels, n0)
    if sizes[-1] ** dim > max_dofs:
        raise HierarchyError(f"finest grid has {sizes[-1] ** dim} unknowns, above the limit {max_dofs}")
    return PoissonProblem(dim, sizes, laplacian(dim, sizes[-1]))


@dataclass
class MatrixProblem:
    """User matrix with user-supplied coarse index sets, finest level first.

    ``coarse_sets[i]`` indexes the DOFs of the i-th matrix from the top; the
    optional ``weights[i]`` is the (nf x nc) interpolation block W. Without it
    W = 0 and the HB transform reduces to the plain fine/coarse permutation.
    """

    A: CsrMatrix
    coarse_sets: List[np.ndarray]
    weights: Optional[List] = None

    @property
    def nlevels(self):
        return len(self.coarse_sets)

    def splittings(self):
        n = self.A.n
        for i, cset in enumerate(self.coarse_sets):
            cset = np.asarray(cset, dtype=np.int64)
            if len(cset) == 0 or len(cset) >= n or len(np.unique(cset)) != len(cset):
                raise HierarchyError(f"coarse set {i} must be a proper nonempty subset of 0..{n - 1}")
            if cset.min() < 0 or cset.max() >= n:
                raise HierarchyError(f"coarse set {i} has indices outside 0..{n - 1}")
            mask = np.ones(n, dtype=bool)
            mask[cset] = False
            fine = np.flatnonzero(mask)
            perm = np.concatenate([fine, cset])
            nf = len(fine)
            if self.weights is not None and self.weights[i] is not None:
                W = as_csr(self.weights[i])
                if W.shape != (nf, len(cset)):
                    raise HierarchyError(f"weights {i} must have shape {(nf, len(cset))}")
            else:
                W = CsrMatrix.from_scipy(sp.csr_matrix((nf, len(cset))))
            yield perm, nf, W
            n = len(cset)


# --- splitting and transfer ---------------------------------------------

def _coarse_mask(n, dim):
    if n < 3 or n % 2 == 0:
        raise HierarchyError(f"grid with {n} points per side has no nested coarse grid")
    odd = (np.arange(n) % 2) == 1
    if dim == 1:
        return odd
    return np.logical_and.outer(odd, odd).ravel()


def partition_fc(n, dim=1):
    """Permutation with fine-only points first and coarse points last.

    Coarse points are every second grid point (0-based odd index, odd-odd
    in 2D), so the coarse grid has (n - 1) / 2 points per side. Returns
    (perm, nf) where ``perm[i]`` is the original index of new position i.
    """
    mask = _coarse_mask(n, dim)
    fine = np.flatnonzero(~mask)
    coarse = np.flatnonzero(mask)
    return np.concatenate([fine, coarse]), len(fine)


def interpolation(n, dim=1):
    """Block W (fine x coarse) of linear / bilinear interpolation.

    Neighbours on the Dirichlet boundary carry value zero and are dropped.
    """
    nc1 = (n - 1) // 2
    _coarse_mask(n, dim)
    rows, cols, vals = [], [], []
    if dim == 1:
        for r, i in enumerate(range(0, n, 2)):
            for j in (i - 1, i + 1):
                if 0 <= j < n:
                    rows.append(r)
                    cols.append(j // 2)
                    vals.append(0.5)
        nf = (n + 1) // 2
        return CsrMatrix.from_coo(rows, cols, vals, (nf, nc1))
    r = 0
    for i in range(n):
        for j in range(n):
            if i % 2 == 1 and j % 2 == 1:
                continue
            di = (0,) if i % 2 else (-1, 1)
            dj = (0,) if j % 2 else (-1, 1)
            w = 1.0 / (len(di) * len(dj))
            for a in di:
                for b in dj:
                    ii, jj = i + a, j + b
                    if 0 <= ii < n and 0 <= jj < n:
                        rows.append(r)
                        cols.append((ii // 2) * nc1 + jj // 2)
                        vals.append(w)
            r += 1
    return CsrMatrix.from_coo(rows, cols, vals, (n * n - nc1 * nc1, nc1 * nc1))


def galerkin_coarse(A, P):
    """P^T A P in CSR, symmetrized against rounding in the triple product."""
    A = as_csr(A).to_scipy()
    P = as_csr(P).to_scipy()
    G = (P.T @ (A @ P)).tocsr()
    return CsrMatrix.from_scipy(0.5 * (G + G.T))


class HBBlocks(NamedTuple):
    A11: CsrMatrix
    A12: CsrMatrix
    A21: CsrMatrix
    A22: CsrMatrix


def permute(A, perm):
    S = as_csr(A).to_scipy()
    return S[perm][:, perm].tocsr()


def hb_transform(A, perm, nf, W):
    """Blocks of Atilde = J^T (Pi A Pi^T) J with J = [[I, W], [0, I]].

    Returns (J, blocks); J is expressed in the permuted (fine-first) ordering.
    """
    Ah = permute(A, perm)
    n = Ah.shape[0]
    W = as_csr(W).to_scipy()
    if W.shape != (nf, n - nf):
        raise HierarchyError(f"W has shape {W.shape}, expected {(nf, n - nf)}")
    A11 = Ah[:nf, :nf]
    A12t = (A11 @ W + Ah[:nf, nf:]).tocsr()
    P = sp.vstack([W, sp.identity(n - nf)]).tocsr()
    A22t = galerkin_coarse(Ah, P)
    J = sp.bmat([[sp.identity(nf), W], [None, sp.identity(n - nf)]]).tocsr()
    blocks = HBBlocks(CsrMatrix.from_scipy(A11), CsrMatrix.from_scipy(A12t),
                      CsrMatrix.from_scipy(A12t.T), A22t)
    return CsrMatrix.from_scipy(J), blocks


# --- smoothers ------------------------------------------------------------

class Smoother:
    """Approximation C to a block A11 with C^{-1} and C^{-T} actions."""

    symmetric = True

    def __init__(self, A, kind):
        self.A = A
        self.kind = kind
        self.n = A.n

    def solve(self, b):
        raise NotImplementedError

    def solve_transpose(self, b):
        return self.solve(b)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n})"


class JacobiSmoother(Smoother):
    def __init__(self, A, omega=1.0):
        super().__init__(A, "jacobi")
        d = A.diagonal()
        zero = np.flatnonzero(d == 0.0)
        if len(zero):
            raise ZeroDiagonalError(int(zero[0]))
        self.omega = omega
        self._scale = omega / d

    def solve(self, b):
        return self._scale * b


class GaussSeidelSmoother(Smoother):
    """Forward sweep, C = D + L; not symmetric."""

    symmetric = False

    def __init__(self, A):
        super().__init__(A, "gs")
        if np.any(A.diagonal() == 0.0):
            raise ZeroDiagonalError(int(np.flatnonzero(A.diagonal() == 0.0)[0]))

    def solve(self, b):
        return self.A.lower_solve(b)

    def solve_transpose(self, b):
        return self.A.upper_solve(b)


class SymmetricGaussSeidelSmoother(Smoother):
    """C = (D + L) D^{-1} (D + U)."""

    def __init__(self, A):
        super().__init__(A, "sgs")
        self._d = A.diagonal()
        if np.any(self._d == 0.0):
            raise ZeroDiagonalError(int(np.flatnonzero(self._d == 0.0)[0]))

    def solve(self, b):
        return self.A.upper_solve(self._d * self.A.lower_solve(b))


class ExactSmoother(Smoother):
    """Direct sparse factorization of the block itself."""

    def __init__(self, A):
        super().__init__(A, "exact")
        self._lu = spla.splu(A.to_scipy().tocsc()) if A.n else None

    def solve(self, b):
        if self._lu is None:
            return np.zeros(0)
        return self._lu.solve(np.asarray(b, dtype=float))


def build_smoother(A11, kind="sgs", omega=1.0):
    A11 = as_csr(A11)
    if kind == "sgs":
        return SymmetricGaussSeidelSmoother(A11)
    if kind == "gs":
        return GaussSeidelSmoother(A11)
    if kind == "jacobi":
        return JacobiSmoother(A11, omega)
    if kind == "exact":
        return ExactSmoother(A11)
    raise ValueError(f"unknown smoother kind {kind!r}; expected one of {SMOOTHERS}")


# --- levels ---------------------------------------------------------------

@dataclass
class CycleSpec:
    nus: tuple
    family: str = "bestapprox"

    def __post_init__(self):
        self.nus = tuple(int(v) for v in self.nus)
        if self.family not in FAMILIES:
            raise ValueError(f"unknown polynomial family {self.family!r}")
        if any(v < 1 for v in self.nus):
            raise HierarchyError("every nu_k must be >= 1")
        if self.family == "identity" and any(v != 1 for v in self.nus):
            raise HierarchyError("the identity family requires nu_k = 1 on every level")
        if self.family == "chebyshev" and any(v > 2 for v in self.nus):
            raise HierarchyError("the chebyshev family supports nu_k <= 2")
        if self.family == "exact":
            self.nus = tuple(1 for _ in self.nus)

    @classmethod
    def v_cycle(cls, levels, family="identity"):
        return cls((1,) * levels, family)

    @classmethod
    def w_cycle(cls, levels, family="bestapprox"):
        """nu_k = 2 below the top, nu_l = 1."""
        return cls((2,) * (levels - 1) + (1,), family)

    def __len__(self):
        return len(self.nus)


@dataclass(eq=False)
class Level:
    """Level k of the hierarchy (k >= 1); ``A22`` is the next level's matrix."""

    k: int
    A: CsrMatrix
    perm: np.ndarray
    nf: int
    W: CsrMatrix
    J: CsrMatrix
    A11: CsrMatrix
    A12: CsrMatrix
    A21: CsrMatrix
    A22: CsrMatrix
    C11: Smoother
    nu: int = 1
    q: Optional[MonomialPoly] = None
    coarse_lu: object = None
    WT: CsrMatrix = field(init=False, repr=False)

    def __post_init__(self):
        self.WT = self.W.T

    @property
    def n(self):
        return self.A.n

    @property
    def nc(self):
        return self.A.n - self.nf

    def to_hb(self, d):
        """J^T Pi d: nodal vector to the hierarchical basis (fine-first)."""
        x = np.asarray(d, dtype=float)[self.perm]
        if self.W.nnz:
            x[self.nf:] += self.WT.matvec(x[: self.nf])
        return x

    def from_hb(self, v):
        """Pi^T J v: hierarchical-basis vector back to nodal ordering."""
        x = np.array(v, dtype=float)
        if self.W.nnz:
            x[: self.nf] += self.W.matvec(x[self.nf:])
        out = np.empty_like(x)
        out[self.perm] = x
        return out

    def coarse_solve(self, w):
        return self.coarse_lu.solve(np.asarray(w, dtype=float))

    def hb_matrix(self):
        """Atilde assembled as a scipy matrix (tests and diagnostics)."""
        return sp.bmat([[self.A11.to_scipy(), self.A12.to_scipy()],
                        [self.A21.to_scipy(), self.A22.to_scipy()]]).tocsr()


@dataclass(eq=False)
class Hierarchy:
    levels: List[Level]
    A0: CsrMatrix
    coarse: DenseFactor
    cycle: CycleSpec
    rho: List = field(default_factory=list)
    thetas: Optional[List] = None
    rho_mode: str = "given"

    @property
    def depth(self):
        return len(self.levels)

    def level(self, k) -> Level:
        if not 1 <= k <= self.depth:
            raise HierarchyError(f"level {k} outside 1..{self.depth}")
        return self.levels[k - 1]

    def matrix(self, k):
        return self.A0 if k == 0 else self.level(k).A

    @property
    def A(self):
        return self.matrix(self.depth)

    def sizes(self):
        return [self.A0.n] + [lev.n for lev in self.levels]


def build_levels(A, splittings, smoother="sgs", omega=1.0):
    """Structural part of the setup: top-down HB splitting and smoothers."""
    A = as_csr(A)
    check_symmetric(A)
    built = []
    cur = A
    for perm, nf, W in splittings:
        if len(perm) != cur.n:
            raise HierarchyError(f"splitting for a level of size {len(perm)} applied to a matrix of size {cur.n}")
        J, b = hb_transform(cur, perm, nf, W)
        built.append(dict(A=cur, perm=np.asarray(perm), nf=nf, W=as_csr(W), J=J, A11=b.A11, A12=b.A12,
                          A21=b.A21, A22=b.A22, C11=build_smoother(b.A11, smoother, omega)))
        cur = b.A22
    if not built:
        raise HierarchyError("at least one two-level splitting is required")
    built.reverse()
    levels = [Level(k=i + 1, **d) for i, d in enumerate(built)]
    return levels, cur


def _rho_pairs(rho, depth):
    """Normalize user rho input: one pair for all levels or one per level 0..depth-1."""
    arr = np.asarray(rho, dtype=float)
    if arr.shape == (2,):
        return [tuple(arr)] * depth
    if arr.shape == (depth, 2):
        return [tuple(r) for r in arr]
    raise HierarchyError(f"rho must be a pair or {depth} pairs")


def build_hierarchy(problem, cycle: CycleSpec, smoother="sgs", rho_mode="theory", rho=None,
                    thetas: Optional[Sequence] = None, omega=1.0, max_coarse=64,
                    lanczos_iters=60, dense_max=200, seed=0) -> Hierarchy:
    """Assemble every level and the polynomial coefficients q^{(k)}.

    rho_mode selects where the bounds rho^{(k-1)} defining the interval
    [1/rho1, 1/rho0] of q^{(k)} come from:

    - ``given``: the caller's ``rho`` (one pair, or one per level k-1),
    - ``theory``: the level recursion seeded with (1, 1) at the coarsest level,
      using ``thetas`` when supplied and measured two-level constants otherwise,
    - ``measure``: Lanczos estimates of the spectrum of B^{(k-1)}^{-1} A^{(k-1)},
      built bottom-up.
    """
    from . import analysis, precond

    if rho_mode not in RHO_MODES:
        raise ValueError(f"unknown rho_mode {rho_mode!r}; expected one of {RHO_MODES}")
    levels, A0 = build_levels(problem.A, problem.splittings(), smoother, omega)
    depth = len(levels)
    if len(cycle) != depth:
        raise HierarchyError(f"cycle has {len(cycle)} entries for {depth} levels")
    if A0.n > max_coarse:
        raise HierarchyError(f"coarsest matrix has {A0.n} unknowns, above max_coarse={max_coarse}")
    H = Hierarchy(levels, A0, coarse_factor(A0), cycle, rho_mode=rho_mode)
    for lev, nu in zip(levels, cycle.nus):
        lev.nu = nu
        if cycle.family == "exact":
            lev.coarse_lu = spla.splu(lev.A22.to_scipy().tocsc())

    if thetas is not None:
        thetas = [tuple(float(v) for v in t) for t in thetas]
        if len(thetas) != depth:
            raise HierarchyError(f"{len(thetas)} theta pairs given for {depth} levels")

    if rho_mode == "given":
        if rho is None:
            raise HierarchyError("rho_mode 'given' needs rho")
        H.rho = _rho_pairs(rho, depth)
        for lev in levels:
            lev.q = cycle_polynomial(cycle.family, lev.nu, *H.rho[lev.k - 1])
        H.thetas = thetas
        return H

    H.rho = [(1.0, 1.0)]
    measured = []
    for lev in levels:
        k = lev.k
        if rho_mode == "measure" and k > 1:
            lo, hi = analysis.spectrum_bounds(lambda v, t=k - 1: precond.amli_apply(H, v, top=t),
                                              H.matrix(k - 1), iters=lanczos_iters,
                                              dense_max=dense_max, seed=seed)
            H.rho.append((1.0 / hi, 1.0 / lo))
        lev.q = cycle_polynomial(cycle.family, lev.nu, *H.rho[k - 1])
        if rho_mode == "theory":
            th = thetas[k - 1] if thetas is not None else analysis.measure_level_theta(
                lev, iters=lanczos_iters, dense_max=dense_max, seed=seed)
            measured.append(th)
            H.rho.append(analysis.level_step(th[0], th[1], H.rho[k - 1], lev.q))
    H.thetas = measured if rho_mode == "theory" else thetas
    return H
