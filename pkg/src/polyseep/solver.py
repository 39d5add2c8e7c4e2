"""Sparse SPD solves: Jacobi-preconditioned conjugate gradients plus a
dense Cholesky reference used by the test suite as an oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from .errors import NonSPDDetectedError, NotConvergedError

DEFAULT_TOL = 1e-12


@dataclass
class CGResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual: float


def solve_spd(
    a: sp.spmatrix,
    b: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
    raise_on_fail: bool = False,
) -> CGResult:
    """Conjugate gradients with Jacobi preconditioning.

    Stops when ||A x - b|| <= tol * ||b||.  Non-convergence returns the best
    iterate with converged=False (or raises when raise_on_fail is set);
    a non-positive curvature direction raises NonSPDDetected.
    """
    a = a.tocsr()
    b = np.asarray(b, dtype=float)
    n = len(b)
    if max_iter is None:
        max_iter = max(1000, 20 * n)
    d = a.diagonal()
    if np.any(d <= 0.0):
        raise NonSPDDetectedError("non-positive diagonal entry")
    inv_d = 1.0 / d

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CGResult(x=np.zeros(n), converged=True, iterations=0, residual=0.0)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    r = b - a @ x
    best_x, best_res = x.copy(), float(np.linalg.norm(r))
    if best_res <= tol * bnorm:
        return CGResult(x=x, converged=True, iterations=0, residual=best_res / bnorm)
    z = inv_d * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        ap = a @ p
        pap = float(p @ ap)
        if pap <= 0.0:
            raise NonSPDDetectedError(f"curvature p.A.p = {pap} at iteration {it}")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        res = float(np.linalg.norm(r))
        if res < best_res:
            best_res, best_x = res, x.copy()
        if res <= tol * bnorm:
            return CGResult(x=x, converged=True, iterations=it, residual=res / bnorm)
        z = inv_d * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if raise_on_fail:
        raise NotConvergedError(
            f"CG stalled at relative residual {best_res / bnorm:.3e} after {max_iter} iterations"
        )
    return CGResult(x=best_x, converged=False, iterations=max_iter, residual=best_res / bnorm)


def solve_dense(a, b: np.ndarray) -> np.ndarray:
    """Dense Cholesky solve; test oracle for systems up to a few thousand DOFs."""
    ad = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)
    if ad.shape[0] > 2000:
        raise ValueError("dense oracle limited to n <= 2000")
    try:
        c = cho_factor(ad, lower=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - scipy raises its own
        raise NonSPDDetectedError(str(exc)) from exc
    return cho_solve(c, np.asarray(b, dtype=float))
