"""NumPy/SciPy implementations of the CSR kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``AMLI_PURE_PYTHON=1`` is set. Signatures match the compiled module.
"""
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import spsolve_triangular


def _row_ids(indptr):
    return np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))


def csr_matvec(indptr, indices, data, x, y):
    n = len(indptr) - 1
    y[:] = np.bincount(_row_ids(indptr), weights=data * x[indices], minlength=n)


def csr_matvec_add(indptr, indices, data, x, alpha, y):
    n = len(indptr) - 1
    y += alpha * np.bincount(_row_ids(indptr), weights=data * x[indices], minlength=n)


def _triangle(indptr, indices, data, lower):
    n = len(indptr) - 1
    rows = _row_ids(indptr)
    keep = indices <= rows if lower else indices >= rows
    return csr_matrix((data[keep], (rows[keep], indices[keep])), shape=(n, n))


def lower_solve(indptr, indices, data, diag, b, x):
    x[:] = spsolve_triangular(_triangle(indptr, indices, data, True), b, lower=True)


def upper_solve(indptr, indices, data, diag, b, x):
    x[:] = spsolve_triangular(_triangle(indptr, indices, data, False), b, lower=False)
