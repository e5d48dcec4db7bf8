"""Matrix-free least squares via CGLS (conjugate gradients on the normal equations)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

MatVec = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LstsqResult:
    x: np.ndarray
    iterations: int
    residual: float  # ||A x - b||
    normal_residual: float  # ||A^T (A x - b)||
    converged: bool


def cgls(matvec: MatVec, b: np.ndarray, x0: np.ndarray | None = None, *,
         rmatvec: MatVec | None = None, tol: float = 1e-10, atol: float = 1e-10,
         max_iter: int = 1000) -> LstsqResult:
    """Minimise ||A x - b|| starting from x0.

    Iterates stay in x0 + range(A^T), so from x0 = 0 the limit is the
    minimum-norm least-squares solution; from any other x0 it is that solution
    plus the null-space component of x0.

    Stopping follows LSQR: either ``||r|| <= tol * ||b||`` (consistent system)
    or ``||A^T r|| <= atol * ||A|| * ||r||`` (r numerically orthogonal to the
    range), with ``||A||`` estimated from the iterates. The second test uses
    its own tolerance because the early estimate of ``||A||`` is crude.
    """
    rmatvec = matvec if rmatvec is None else rmatvec
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros(b.size) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - matvec(x) if x.any() else b.copy()
    s = rmatvec(r)
    bnorm = np.linalg.norm(b)
    gamma = s @ s
    p = s.copy()
    anorm = 0.0
    it = 0

    def done(r, gamma):
        rn = np.linalg.norm(r)
        return rn <= tol * bnorm or np.sqrt(gamma) <= atol * anorm * rn or gamma == 0.0

    converged = done(r, gamma)
    while not converged and it < max_iter:
        q = matvec(p)
        qq = q @ q
        if qq == 0.0:
            break
        anorm = max(anorm, np.sqrt(qq) / np.linalg.norm(p))
        alpha = gamma / qq
        x += alpha * p
        r -= alpha * q
        s = rmatvec(r)
        gamma_new = s @ s
        it += 1
        converged = done(r, gamma_new)
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    # recompute from scratch; the recursive residual drifts
    r = b - matvec(x)
    s = rmatvec(r)
    return LstsqResult(x, it, float(np.linalg.norm(r)), float(np.linalg.norm(s)), bool(converged))
