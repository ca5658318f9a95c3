# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CSR kernels: sparse mat-vec and triangular (Gauss-Seidel) sweeps.

All index arrays are int32, all value arrays float64 and C-contiguous.
"""


def csr_matvec(const int[::1] indptr, const int[::1] indices,
               const double[::1] data, const double[::1] x, double[::1] y):
    cdef Py_ssize_t i, jj, n = indptr.shape[0] - 1
    cdef double s
    with nogil:
        for i in range(n):
            s = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                s = s + data[jj] * x[indices[jj]]
            y[i] = s


def csr_matvec_add(const int[::1] indptr, const int[::1] indices,
                   const double[::1] data, const double[::1] x,
                   double alpha, double[::1] y):
    """y += alpha * A x"""
    cdef Py_ssize_t i, jj, n = indptr.shape[0] - 1
    cdef double s
    with nogil:
        for i in range(n):
            s = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                s = s + data[jj] * x[indices[jj]]
            y[i] = y[i] + alpha * s


def lower_solve(const int[::1] indptr, const int[::1] indices,
                const double[::1] data, const double[::1] diag,
                const double[::1] b, double[::1] x):
    """Forward sweep: solve (D + L) x = b."""
    cdef Py_ssize_t i, jj, j, n = indptr.shape[0] - 1
    cdef double s
    with nogil:
        for i in range(n):
            s = b[i]
            for jj in range(indptr[i], indptr[i + 1]):
                j = indices[jj]
                if j < i:
                    s = s - data[jj] * x[j]
            x[i] = s / diag[i]


def upper_solve(const int[::1] indptr, const int[::1] indices,
                const double[::1] data, const double[::1] diag,
                const double[::1] b, double[::1] x):
    """Backward sweep: solve (D + U) x = b."""
    cdef Py_ssize_t i, jj, j, n = indptr.shape[0] - 1
    cdef double s
    with nogil:
        for i in range(n - 1, -1, -1):
            s = b[i]
            for jj in range(indptr[i], indptr[i + 1]):
                j = indices[jj]
                if j > i:
                    s = s - data[jj] * x[j]
            x[i] = s / diag[i]
