"""ILU(0) preconditioning and restarted GMRES.

Matrices are ``scipy.sparse.csr_matrix`` with sorted column indices. The
factorization and the triangular solves run in the compiled backend.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .backend import impl


class ZeroPivotError(ArithmeticError):
    """ILU(0) met a zero pivot (or a structurally missing diagonal)."""

    def __init__(self, row: int, structural: bool = False):
        what = "structurally zero diagonal" if structural else "zero pivot"
        super().__init__(f"ILU(0) {what} in row {row}")
        self.row = row
        self.structural = structural


class LinearSolveError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def _diag_positions(A: sp.csr_matrix) -> np.ndarray:
    n = A.shape[0]
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    on_diag = A.indices == rows
    pos = np.full(n, -1, dtype=np.intc)
    pos[rows[on_diag]] = np.flatnonzero(on_diag)
    return pos


@dataclass
class IluFactors:
    """Unit lower L and upper U stored together on the pattern of A."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    diag: np.ndarray
    shift: float = 0.0

    @property
    def shape(self):
        n = len(self.indptr) - 1
        return n, n

    def solve(self, b) -> np.ndarray:
        return impl.lu_solve(self.indptr, self.indices, self.data, self.diag,
                             np.ascontiguousarray(b, dtype=float))

    def factors(self):
        """Dense-free (L, U) as sparse matrices, mainly for tests."""
        M = sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)
        L = sp.tril(M, k=-1, format="csr") + sp.identity(self.shape[0], format="csr")
        U = sp.triu(M, format="csr")
        return L, U


def ilu0(A, shift: float = 0.0) -> IluFactors:
    """Incomplete LU with zero fill. ``shift`` is added to the diagonal first."""
    A = as_csr(A)
    n, m = A.shape
    if n != m:
        raise ValueError("ILU(0) needs a square matrix")
    diag = _diag_positions(A)
    missing = np.flatnonzero(diag < 0)
    if len(missing):
        raise ZeroPivotError(int(missing[0]), structural=True)
    indptr = A.indptr.astype(np.intc)
    indices = A.indices.astype(np.intc)
    data = A.data.astype(float).copy()
    if shift:
        data[diag] += shift
    status = impl.ilu0_inplace(indptr, indices, data, diag)
    if status >= 0:
        raise ZeroPivotError(int(status))
    return IluFactors(indptr, indices, data, diag, shift)


def ilu0_with_retry(A) -> IluFactors:
    """ILU(0); on a numerical zero pivot, retry once with shift 1e-12 * max|diag|."""
    try:
        return ilu0(A)
    except ZeroPivotError as err:
        if err.structural:
            raise
        A = as_csr(A)
        shift = 1e-12 * float(np.abs(A.diagonal()).max())
        return ilu0(A, shift=shift)


@dataclass
class KrylovReport:
    iterations: int
    residual: float
    converged: bool
    breakdown: bool = False
    tolerance: float = 0.0
    history: list = field(default_factory=list, repr=False)
    precond_shift: float = 0.0


def gmres(
    A,
    b,
    precond: Optional[Callable] = None,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-8,
    restart: int = 100,
    max_iter: int = 1000,
    x0=None,
):
    """Right-preconditioned restarted GMRES.

    Stops when the true residual satisfies
    ``||b - A x|| <= max(rel_tol * ||b||, abs_tol)``. ``precond(v)`` applies
    the inverse of the preconditioner (``IluFactors.solve`` for ILU(0)).
    Returns ``(x, KrylovReport)``; failure to converge is reported, not raised.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    if A.shape != (n, n):
        raise ValueError(f"shape mismatch: A is {A.shape}, b has {n} entries")
    M = precond if precond is not None else (lambda v: v)
    bnorm = float(np.linalg.norm(b))
    tol = max(rel_tol * bnorm, abs_tol)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    beta = float(np.linalg.norm(r))
    history = [beta]
    if beta <= tol:
        return x, KrylovReport(0, beta, True, False, tol, history)

    m = max(1, min(restart, n))
    total = 0
    breakdown = False
    while True:
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        happy = False
        for j in range(m):
            w = A @ M(V[j])
            # classical Gram-Schmidt with one reorthogonalization pass
            h = V[: j + 1] @ w
            w -= h @ V[: j + 1]
            h2 = V[: j + 1] @ w
            w -= h2 @ V[: j + 1]
            h += h2
            hn = float(np.linalg.norm(w))
            H[: j + 1, j] = h
            H[j + 1, j] = hn
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            rho = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if rho == 0 else (H[j, j] / rho, H[j + 1, j] / rho)
            H[j, j] = rho
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            k = j + 1
            total += 1
            history.append(abs(g[j + 1]))
            if hn <= 1e-14 * max(abs(rho), 1.0):
                happy = True
            if abs(g[j + 1]) <= tol or happy or total >= max_iter:
                break
            V[j + 1] = w / hn
        Hk = H[:k, :k]
        if np.any(np.diag(Hk) == 0):
            y = np.linalg.lstsq(Hk, g[:k], rcond=None)[0]
        else:
            y = _back_substitute(Hk, g[:k])
        x += M(y @ V[:k])
        r = b - A @ x
        beta = float(np.linalg.norm(r))
        if beta <= tol:
            return x, KrylovReport(total, beta, True, False, tol, history)
        if happy:
            breakdown = True
        if breakdown or total >= max_iter:
            return x, KrylovReport(total, beta, False, breakdown, tol, history)


def _back_substitute(R, g):
    y = np.zeros(len(g))
    for i in range(len(g) - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i]
    return y


def solve(A, b, rel_tol=1e-8, abs_tol=1e-8, restart=100, max_iter=1000, x0=None,
          raise_on_failure=True):
    """ILU(0)-preconditioned GMRES with the shift retry; raises on failure by default."""
    A = as_csr(A)
    factors = ilu0_with_retry(A)
    x, report = gmres(A, b, factors.solve, rel_tol, abs_tol, restart, max_iter, x0)
    report.precond_shift = factors.shift
    if raise_on_failure and not report.converged:
        raise LinearSolveError(
            f"GMRES did not converge: residual {report.residual:.3e} > {report.tolerance:.3e}"
            f" after {report.iterations} iterations", report)
    return x, report
