"""Dense direct and restarted-GMRES solvers with recomputed residuals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import FactorizationError

__all__ = ["SolveReport", "direct_solve", "gmres_solve"]


@dataclass
class SolveReport:
    """Outcome of a linear solve.

    ``residual`` is ||A x - b|| / ||b|| recomputed from the returned solution,
    never the solver's internal estimate.  ``residual_history`` holds the
    internal GMRES estimates, one per inner iteration (empty for direct).
    """

    solution: np.ndarray
    iterations: int
    residual: float
    method: str
    converged: bool = True
    residual_history: tuple = ()


def direct_solve(matrix: np.ndarray, rhs: np.ndarray) -> SolveReport:
    """LU solve with partial pivoting."""
    A = np.asarray(matrix)
    b = np.asarray(rhs)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    try:
        lu, piv = scipy.linalg.lu_factor(A)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FactorizationError(str(exc)) from exc
    if not np.all(np.isfinite(lu)):
        raise FactorizationError("factorization produced non-finite entries")
    if np.any(np.abs(np.diagonal(lu)) == 0.0):
        raise FactorizationError("matrix is singular to working precision")
    x = scipy.linalg.lu_solve((lu, piv), b)
    res = float(np.linalg.norm(A @ x - b) / np.linalg.norm(b)) if np.linalg.norm(b) else 0.0
    return SolveReport(solution=x, iterations=0, residual=res, method="direct")


def gmres_solve(apply: Callable[[np.ndarray], np.ndarray] | np.ndarray,
                rhs: np.ndarray, tol: float = 1e-6, restart: int = 50,
                max_iter: int = 500) -> SolveReport:
    """Restarted GMRES on a dense matrix or an operator callback.

    Arnoldi with modified Gram-Schmidt and Givens rotations; the residual
    estimate is monotone non-increasing within each restart cycle.
    Non-convergence within ``max_iter`` total inner iterations returns a
    report with ``converged=False`` instead of raising.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(apply, np.ndarray):
        mat = apply
        apply = lambda v: mat @ v
    else:
        mat = None
    b = np.asarray(rhs, dtype=complex)
    n = b.size
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return SolveReport(solution=np.zeros(n, dtype=complex), iterations=0,
                           residual=0.0, method="gmres")
    x = np.zeros(n, dtype=complex)
    total_iters = 0
    history = []
    converged = False
    while total_iters < max_iter and not converged:
        r = b - apply(x)
        beta = np.linalg.norm(r)
        if beta / bnorm <= tol:
            converged = True
            break
        m = min(restart, max_iter - total_iters)
        V = np.zeros((n, m + 1), dtype=complex)
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m, dtype=complex)
        sn = np.zeros(m, dtype=complex)
        gvec = np.zeros(m + 1, dtype=complex)
        gvec[0] = beta
        V[:, 0] = r / beta
        k_done = 0
        for kk in range(m):
            wvec = apply(V[:, kk])
            for i in range(kk + 1):
                H[i, kk] = np.vdot(V[:, i], wvec)
                wvec = wvec - H[i, kk] * V[:, i]
            H[kk + 1, kk] = np.linalg.norm(wvec)
            if H[kk + 1, kk] > 0:
                V[:, kk + 1] = wvec / H[kk + 1, kk]
            # apply the accumulated rotations, then a new one to annihilate
            # the subdiagonal entry
            for i in range(kk):
                t = cs[i] * H[i, kk] + sn[i] * H[i + 1, kk]
                H[i + 1, kk] = -np.conj(sn[i]) * H[i, kk] + np.conj(cs[i]) * H[i + 1, kk]
                H[i, kk] = t
            denom = np.sqrt(abs(H[kk, kk]) ** 2 + abs(H[kk + 1, kk]) ** 2)
            if denom == 0.0:
                cs[kk], sn[kk] = 1.0, 0.0
            else:
                cs[kk] = np.conj(H[kk, kk]) / denom
                sn[kk] = np.conj(H[kk + 1, kk]) / denom
            H[kk, kk] = cs[kk] * H[kk, kk] + sn[kk] * H[kk + 1, kk]
            H[kk + 1, kk] = 0.0
            gvec[kk + 1] = -np.conj(sn[kk]) * gvec[kk]
            gvec[kk] = cs[kk] * gvec[kk]
            total_iters += 1
            k_done = kk + 1
            est = abs(gvec[kk + 1]) / bnorm
            history.append(est)
            if est <= tol:
                converged = True
                break
            if H[kk + 1, kk] == 0.0 and np.linalg.norm(V[:, kk + 1]) == 0.0:
                break  # lucky breakdown; the LS solve below is exact
        if k_done > 0:
            yk = scipy.linalg.solve_triangular(H[:k_done, :k_done], gvec[:k_done])
            x = x + V[:, :k_done] @ yk
    rfinal = b - apply(x)
    res = float(np.linalg.norm(rfinal) / bnorm)
    converged = converged or res <= tol
    return SolveReport(solution=x, iterations=total_iters, residual=res,
                       method="gmres", converged=converged,
                       residual_history=tuple(history))
