"""Sparse bordered linear systems, determinant signs and Newton iteration."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError


def lu_factor(A) -> spla.SuperLU:
    try:
        return spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise ConvergenceError(f"linear solve failed: {exc}") from exc


def _perm_parity(perm: np.ndarray) -> int:
    perm = np.asarray(perm)
    seen = np.zeros(perm.size, dtype=bool)
    parity = 1
    for i in range(perm.size):
        if not seen[i]:
            j = i
            clen = 0
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                clen += 1
            if clen % 2 == 0:
                parity = -parity
    return parity


def det_sign_log(lu: spla.SuperLU):
    """(sign, log|det|) of the factored matrix; sign 0 for exact singularity."""
    du = lu.U.diagonal()
    if np.any(du == 0.0):
        return 0, -np.inf
    sign = int(np.prod(np.sign(du)))
    sign *= _perm_parity(lu.perm_r) * _perm_parity(lu.perm_c)
    return sign, float(np.sum(np.log(np.abs(du))))


def bordered_matrix(J, border: np.ndarray):
    """Square matrix [[J], [border^T]] for a (rows, rows+1) sparse J."""
    return sp.vstack([sp.csr_matrix(J), sp.csr_matrix(border.reshape(1, -1))], format="csc")


def nullspace_tangent(J, seed: np.ndarray) -> np.ndarray:
    """Unit null vector of J oriented along ``seed``.

    Solves [[J], [seed^T]] t = e_last; the bordered system is regular as
    long as the seed has a component along the (one-dimensional) null space.
    """
    B = bordered_matrix(J, seed)
    rhs = np.zeros(B.shape[0])
    rhs[-1] = 1.0
    t = lu_factor(B).solve(rhs)
    nrm = np.linalg.norm(t)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ConvergenceError("null-space tangent computation failed (singular bordering)")
    return t / nrm


def newton_square(residual_fn, jacobian_fn, u0: np.ndarray, tol: float = 1.0e-10,
                  max_iter: int = 20, context: str = "Newton"):
    """Plain Newton on a square sparse system; returns (u, iterations).

    Convergence is declared on the max-norm of the residual.  Raises
    :class:`ConvergenceError` when the iteration stalls or exhausts
    ``max_iter``.
    """
    u = np.asarray(u0, dtype=float).copy()
    res = residual_fn(u)
    best = np.inf
    for it in range(max_iter + 1):
        nrm = np.abs(res).max()
        if nrm < tol:
            return u, it
        if not np.isfinite(nrm) or nrm > 1e6 * max(best, 1.0):
            raise ConvergenceError(f"{context} diverged (residual {nrm:.3e})")
        best = min(best, nrm)
        if it == max_iter:
            break
        J = jacobian_fn(u)
        du = lu_factor(J).solve(-res)
        u = u + du
        res = residual_fn(u)
    raise ConvergenceError(
        f"{context} did not reach tolerance {tol:.1e} in {max_iter} iterations "
        f"(residual {np.abs(res).max():.3e})"
    )
