"""Preconditioned conjugate gradients for matrix-free SPD operators."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConvergenceError

__all__ = ["pcg"]


def pcg(apply_op: Callable[[np.ndarray], np.ndarray],
        b: np.ndarray,
        precond_diag: np.ndarray | None = None,
        tol: float = 1e-10,
        max_iter: int = 10000,
        project: Callable[[np.ndarray], np.ndarray] | None = None) -> tuple[np.ndarray, int]:
    """Solve apply_op(x) = b; returns (x, iterations).

    `precond_diag` is the diagonal of a Jacobi-style preconditioner; `project`
    optionally re-projects iterates onto a constraint subspace (used for the
    singular-consistent periodic cell systems).  Convergence is relative to
    ||b||; a zero right-hand side returns zero immediately.
    """
    b = np.asarray(b, dtype=float)
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return np.zeros_like(b), 0
    x = np.zeros_like(b)
    r = b.copy()
    if project is not None:
        r = project(r)
    inv_diag = None if precond_diag is None else 1.0 / precond_diag
    z = r if inv_diag is None else inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, max_iter + 1):
        Ap = apply_op(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise ConvergenceError(
                f"operator lost positive definiteness at iteration {k} (pAp = {pAp:.3e})")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if project is not None:
            r = project(r)
        res = np.linalg.norm(r)
        if res <= tol * norm_b:
            if project is not None:
                x = project(x)
            return x, k
        z = r if inv_diag is None else inv_diag * r
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    raise ConvergenceError(
        f"conjugate gradients stalled after {max_iter} iterations "
        f"(relative residual {res / norm_b:.3e})")
