"""Pure-Python/NumPy versions of the kernels in ``_core``.

Same signatures and return conventions; used when the extension is not
built or when ``NSMPB_BACKEND=python``.
"""
import numpy as np

SERIES_X = 1e-2
_GRAD_SERIES = (-0.5, 1.0 / 3.0, -0.125, 1.0 / 30.0, -1.0 / 144.0, 1.0 / 840.0, -1.0 / 5760.0)


def _offsets(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    return diff, np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _first_close(d, delta):
    hits = np.argwhere(d < delta)
    if len(hits):
        return int(hits[0, 0]), int(hits[0, 1])
    return -1, -1


def sum_inverse(points, centers, charges, delta):
    _, d = _offsets(points, centers)
    i, j = _first_close(d, delta)
    if i >= 0:
        return np.empty(len(points)), i, j
    return (charges[None, :] / d).sum(axis=1), -1, -1


def grad_sum_inverse(points, centers, charges, delta):
    diff, d = _offsets(points, centers)
    i, j = _first_close(d, delta)
    if i >= 0:
        return np.empty((len(points), 3)), i, j
    f = -charges[None, :] / d**3
    return np.einsum("ij,ijk->ik", f, diff), -1, -1


def sum_screened(points, centers, charges, lam):
    _, d = _offsets(points, centers)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = -np.expm1(-d / lam) / d
    terms[d == 0.0] = 1.0 / lam
    return (charges[None, :] * terms).sum(axis=1)


def _grad_hat_factor(x):
    out = (1.0 + x) * np.exp(-x) - 1.0
    small = x < SERIES_X
    xs = x[small]
    poly = np.zeros_like(xs)
    for c in reversed(_GRAD_SERIES):
        poly = poly * xs + c
    out[small] = xs * xs * poly
    return out


def grad_sum_screened(points, centers, charges, lam):
    diff, d = _offsets(points, centers)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = charges[None, :] * _grad_hat_factor(d / lam) / d**3
    f[d == 0.0] = 0.0
    return np.einsum("ij,ijk->ik", f, diff)


def boltzmann_terms(exponent_base, charges, bulk, size_factor, tau):
    s = -np.outer(exponent_base, charges)
    e = bulk[None, :] * np.exp(np.minimum(s, tau))
    t = np.zeros(len(exponent_base))
    a2 = np.zeros(len(exponent_base))
    a3 = np.zeros(len(exponent_base))
    # accumulate species in order, like the compiled loop
    for k in range(len(charges)):
        t += e[:, k]
        a2 += charges[k] * e[:, k]
        a3 += charges[k] * charges[k] * e[:, k]
    return 1.0 + size_factor * t, a2, a3


def boltzmann_terms_pointlike(exponent_base, charges, bulk, tau):
    s = -np.outer(exponent_base, charges)
    e = bulk[None, :] * np.exp(np.minimum(s, tau))
    a2 = np.zeros(len(exponent_base))
    a3 = np.zeros(len(exponent_base))
    for k in range(len(charges)):
        a2 += charges[k] * e[:, k]
        a3 += charges[k] * charges[k] * e[:, k]
    return a2, a3


def ilu0_inplace(indptr, indices, data, diag):
    out = data
    indptr, indices, diag = indptr.tolist(), indices.tolist(), diag.tolist()
    data = out.tolist()
    n = len(indptr) - 1
    iw = [-1] * n
    status = -1
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        for p in range(lo, hi):
            iw[indices[p]] = p
        for kk in range(lo, diag[i]):
            k = indices[kk]
            lik = data[kk] / data[diag[k]]
            data[kk] = lik
            for jj in range(diag[k] + 1, indptr[k + 1]):
                p = iw[indices[jj]]
                if p >= 0:
                    data[p] -= lik * data[jj]
        for p in range(lo, hi):
            iw[indices[p]] = -1
        if data[diag[i]] == 0.0:
            status = i
            break
    out[:] = data
    return status


def lu_solve(indptr, indices, data, diag, b):
    n = len(indptr) - 1
    x = np.array(b, dtype=float, copy=True)
    for i in range(n):
        lo, d = indptr[i], diag[i]
        if d > lo:
            x[i] -= data[lo:d] @ x[indices[lo:d]]
    for i in range(n - 1, -1, -1):
        d, hi = diag[i], indptr[i + 1]
        if hi > d + 1:
            x[i] -= data[d + 1:hi] @ x[indices[d + 1:hi]]
        x[i] /= data[d]
    return x
