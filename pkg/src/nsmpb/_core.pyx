# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: atom sums, Boltzmann terms, ILU(0) and triangular solves.

Every function here has a pure-Python twin in ``_fallback`` with the same
signature; ``backend`` picks one at import.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, expm1, fmin

cnp.import_array()

# below this value of |r - r_j| / lambda the gradient factor uses its series
DEF SERIES_X = 1e-2


cdef inline double _grad_hat_factor(double x) nogil:
    # (1 + x) e^{-x} - 1, cancellation free
    cdef double x2
    if x < SERIES_X:
        x2 = x * x
        return x2 * (-0.5 + x * (1.0 / 3.0 + x * (-0.125 + x * (1.0 / 30.0
               + x * (-1.0 / 144.0 + x * (1.0 / 840.0 - x / 5760.0))))))
    return (1.0 + x) * exp(-x) - 1.0


def sum_inverse(const double[:, ::1] points, const double[:, ::1] centers,
                const double[::1] charges,
                double delta):
    """sum_j z_j / |r - r_j|; returns (values, bad_point, bad_atom)."""
    cdef Py_ssize_t m = points.shape[0], n = centers.shape[0], i, j
    cdef double dx, dy, dz, d, acc
    out = np.empty(m)
    cdef double[::1] o = out
    for i in range(m):
        acc = 0.0
        for j in range(n):
            dx = points[i, 0] - centers[j, 0]
            dy = points[i, 1] - centers[j, 1]
            dz = points[i, 2] - centers[j, 2]
            d = sqrt(dx * dx + dy * dy + dz * dz)
            if d < delta:
                return out, i, j
            acc += charges[j] / d
        o[i] = acc
    return out, -1, -1


def grad_sum_inverse(const double[:, ::1] points, const double[:, ::1] centers,
                const double[::1] charges,
                     double delta):
    """-sum_j z_j (r - r_j) / |r - r_j|^3."""
    cdef Py_ssize_t m = points.shape[0], n = centers.shape[0], i, j
    cdef double dx, dy, dz, d, f, gx, gy, gz
    out = np.empty((m, 3))
    cdef double[:, ::1] o = out
    for i in range(m):
        gx = 0.0
        gy = 0.0
        gz = 0.0
        for j in range(n):
            dx = points[i, 0] - centers[j, 0]
            dy = points[i, 1] - centers[j, 1]
            dz = points[i, 2] - centers[j, 2]
            d = sqrt(dx * dx + dy * dy + dz * dz)
            if d < delta:
                return out, i, j
            f = -charges[j] / (d * d * d)
            gx += f * dx
            gy += f * dy
            gz += f * dz
        o[i, 0] = gx
        o[i, 1] = gy
        o[i, 2] = gz
    return out, -1, -1


def sum_screened(const double[:, ::1] points, const double[:, ::1] centers,
                const double[::1] charges,
                 double lam):
    """sum_j z_j (1 - exp(-d_j/lam)) / d_j, with limit z_j / lam at d_j = 0."""
    cdef Py_ssize_t m = points.shape[0], n = centers.shape[0], i, j
    cdef double dx, dy, dz, d, x, acc
    out = np.empty(m)
    cdef double[::1] o = out
    for i in range(m):
        acc = 0.0
        for j in range(n):
            dx = points[i, 0] - centers[j, 0]
            dy = points[i, 1] - centers[j, 1]
            dz = points[i, 2] - centers[j, 2]
            d = sqrt(dx * dx + dy * dy + dz * dz)
            if d == 0.0:
                acc += charges[j] / lam
            else:
                x = d / lam
                acc += charges[j] * (-expm1(-x)) / d
        o[i] = acc
    return out


def grad_sum_screened(const double[:, ::1] points, const double[:, ::1] centers,
                const double[::1] charges,
                      double lam):
    """sum_j z_j ((1 + x) e^{-x} - 1) (r - r_j) / d_j^3 with x = d_j / lam."""
    cdef Py_ssize_t m = points.shape[0], n = centers.shape[0], i, j
    cdef double dx, dy, dz, d, x, f, gx, gy, gz
    out = np.empty((m, 3))
    cdef double[:, ::1] o = out
    for i in range(m):
        gx = 0.0
        gy = 0.0
        gz = 0.0
        for j in range(n):
            dx = points[i, 0] - centers[j, 0]
            dy = points[i, 1] - centers[j, 1]
            dz = points[i, 2] - centers[j, 2]
            d = sqrt(dx * dx + dy * dy + dz * dz)
            if d == 0.0:
                continue
            x = d / lam
            f = charges[j] * _grad_hat_factor(x) / (d * d * d)
            gx += f * dx
            gy += f * dy
            gz += f * dz
        o[i, 0] = gx
        o[i, 1] = gy
        o[i, 2] = gz
    return out


def boltzmann_terms(const double[::1] exponent_base, const double[::1] charges,
                    const double[::1] bulk,
                    double size_factor, double tau):
    """A1, A2, A3 at each point for exponents -Z_i * base, capped above at tau."""
    cdef Py_ssize_t m = exponent_base.shape[0], ns = charges.shape[0], i, k
    cdef double s, e, t, a2, a3
    A1 = np.empty(m)
    A2 = np.empty(m)
    A3 = np.empty(m)
    cdef double[::1] o1 = A1, o2 = A2, o3 = A3
    for i in range(m):
        t = 0.0
        a2 = 0.0
        a3 = 0.0
        for k in range(ns):
            s = -charges[k] * exponent_base[i]
            e = bulk[k] * exp(fmin(s, tau))
            t += e
            a2 += charges[k] * e
            a3 += charges[k] * charges[k] * e
        o1[i] = 1.0 + size_factor * t
        o2[i] = a2
        o3[i] = a3
    return A1, A2, A3


def boltzmann_terms_pointlike(const double[::1] exponent_base, const double[::1] charges,
                              const double[::1] bulk, double tau):
    """A2, A3 of the point-ion model (no size factor, A1 = 1)."""
    cdef Py_ssize_t m = exponent_base.shape[0], ns = charges.shape[0], i, k
    cdef double s, e, a2, a3
    A2 = np.empty(m)
    A3 = np.empty(m)
    cdef double[::1] o2 = A2, o3 = A3
    for i in range(m):
        a2 = 0.0
        a3 = 0.0
        for k in range(ns):
            s = -charges[k] * exponent_base[i]
            e = bulk[k] * exp(fmin(s, tau))
            a2 += charges[k] * e
            a3 += charges[k] * charges[k] * e
        o2[i] = a2
        o3[i] = a3
    return A2, A3


def ilu0_inplace(const int[::1] indptr, const int[::1] indices, double[::1] data,
                 const int[::1] diag):
    """ILU(0) on CSR arrays with sorted column indices, overwriting ``data``.

    Returns -1 on success or the row index of a zero pivot.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1, i, kk, jj, k, p
    cdef double piv, lik
    cdef int[::1] iw = np.full(n, -1, dtype=np.intc)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            iw[indices[p]] = <int>p
        for kk in range(indptr[i], diag[i]):
            k = indices[kk]
            piv = data[diag[k]]
            lik = data[kk] / piv
            data[kk] = lik
            for jj in range(diag[k] + 1, indptr[k + 1]):
                p = iw[indices[jj]]
                if p >= 0:
                    data[p] -= lik * data[jj]
        for p in range(indptr[i], indptr[i + 1]):
            iw[indices[p]] = -1
        if data[diag[i]] == 0.0:
            return i
    return -1


def lu_solve(const int[::1] indptr, const int[::1] indices, const double[::1] data,
             const int[::1] diag, const double[::1] b):
    """Solve (L U) x = b with unit-lower L and upper U stored together."""
    cdef Py_ssize_t n = indptr.shape[0] - 1, i, p
    cdef double acc
    x = np.array(b, dtype=float, copy=True)
    cdef double[::1] xv = x
    for i in range(n):
        acc = xv[i]
        for p in range(indptr[i], diag[i]):
            acc -= data[p] * xv[indices[p]]
        xv[i] = acc
    for i in range(n - 1, -1, -1):
        acc = xv[i]
        for p in range(diag[i] + 1, indptr[i + 1]):
            acc -= data[p] * xv[indices[p]]
        xv[i] = acc / data[diag[i]]
    return x
