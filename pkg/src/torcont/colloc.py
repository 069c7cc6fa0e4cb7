"""Piecewise-polynomial collocation of one trajectory segment.

A segment lives on normalized time tau in [0, 1]; its physical duration T
and offset T0 are separate unknowns so they can carry Jacobian entries in
the torus problem.  Each of ``ntst`` uniform subintervals holds a polynomial
of degree ``m`` through m+1 uniformly spaced base points (endpoints
included); the ODE is enforced at the m Gauss-Legendre nodes of every
subinterval and continuity is imposed as explicit equations between the
duplicated endpoint unknowns, which keeps the Jacobian block structure
uniform across segments.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import InputError
from .odesys import (
    VectorField,
    jac_params_batch,
    jac_state_batch,
    jac_time_batch,
    rhs_batch,
)

_MAX_DEGREE = 7


def _bary_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.ones_like(nodes)
    for j in range(nodes.size):
        for k in range(nodes.size):
            if k != j:
                w[j] /= nodes[j] - nodes[k]
    return w


def _lagrange_matrices(nodes: np.ndarray, x: np.ndarray):
    """Values W[i, j] = L_j(x_i) and derivatives D[i, j] = L'_j(x_i).

    Barycentric form; x_i must not coincide with a node for D (Gauss nodes
    never hit the uniform base points for degree <= 7).
    """
    w = _bary_weights(nodes)
    W = np.empty((x.size, nodes.size))
    D = np.empty((x.size, nodes.size))
    for i, xi in enumerate(x):
        d = xi - nodes
        t = w / d
        S = t.sum()
        Sp = -(w / d**2).sum()
        L = t / S
        W[i] = L
        D[i] = L * (-1.0 / d - Sp / S)
    return W, D


def _lagrange_values(nodes: np.ndarray, bw: np.ndarray, xi: float) -> np.ndarray:
    d = xi - nodes
    hit = np.nonzero(d == 0.0)[0]
    out = np.zeros(nodes.size)
    if hit.size:
        out[hit[0]] = 1.0
        return out
    t = bw / d
    return t / t.sum()


@dataclass(frozen=True)
class SegmentMesh:
    """Normalized-time mesh shared by every segment of a problem.

    ``basepoints`` lists the ntst*(degree+1) base-point times (interior
    subinterval endpoints duplicated); ``collnodes`` the ntst*degree
    Gauss-Legendre collocation times.  ``W`` and ``D`` are the per-
    subinterval Lagrange value and derivative matrices in local
    coordinates, identical for all subintervals of the uniform mesh.
    """

    ntst: int
    degree: int
    subinterval_bounds: np.ndarray
    basepoints: np.ndarray
    collnodes: np.ndarray
    local_nodes: np.ndarray  # m+1 uniform base nodes on [0, 1]
    gauss_nodes: np.ndarray  # m Gauss nodes on [0, 1]
    W: np.ndarray  # (m, m+1) values of base polynomials at gauss nodes
    D: np.ndarray  # (m, m+1) local derivatives at gauss nodes
    bary: np.ndarray  # barycentric weights of the local base nodes

    @property
    def n_base(self) -> int:
        return self.ntst * (self.degree + 1)

    @property
    def n_coll(self) -> int:
        return self.ntst * self.degree

    @property
    def h(self) -> float:
        return 1.0 / self.ntst


def build_mesh(ntst: int, degree: int = 4) -> SegmentMesh:
    """Uniform mesh with Gauss-Legendre collocation nodes of given degree."""
    if ntst < 1:
        raise InputError(f"ntst must be >= 1, got {ntst}")
    if not 1 <= degree <= _MAX_DEGREE:
        raise InputError(f"degree must be in [1, {_MAX_DEGREE}], got {degree}")
    bounds = np.linspace(0.0, 1.0, ntst + 1)
    local = np.linspace(0.0, 1.0, degree + 1)
    g, _ = np.polynomial.legendre.leggauss(degree)
    gauss = 0.5 * (g + 1.0)
    W, D = _lagrange_matrices(local, gauss)
    h = 1.0 / ntst
    basepoints = (bounds[:-1, None] + h * local[None, :]).ravel()
    collnodes = (bounds[:-1, None] + h * gauss[None, :]).ravel()
    return SegmentMesh(
        ntst=ntst,
        degree=degree,
        subinterval_bounds=bounds,
        basepoints=basepoints,
        collnodes=collnodes,
        local_nodes=local,
        gauss_nodes=gauss,
        W=W,
        D=D,
        bary=_bary_weights(local),
    )


@dataclass(frozen=True)
class Trajectory:
    """States at the base points of one segment plus its time scaling."""

    mesh: SegmentMesh
    x_bp: np.ndarray  # (ntst*(degree+1), n)
    duration: float
    t_offset: float = 0.0

    @property
    def dim_state(self) -> int:
        return self.x_bp.shape[1]

    def with_states(self, x_bp: np.ndarray) -> "Trajectory":
        return replace(self, x_bp=x_bp)


def n_residual_rows(mesh: SegmentMesh, n: int) -> int:
    return mesh.n_coll * n + (mesh.ntst - 1) * n


def _coll_states(traj: Trajectory):
    """States and their tau-derivatives at all collocation nodes.

    Returns (Xc, dXc) of shape (ntst*m, n): Lagrange values and global
    normalized-time derivatives of the interpolant.
    """
    mesh = traj.mesh
    m1 = mesh.degree + 1
    Xb = traj.x_bp.reshape(mesh.ntst, m1, -1)
    Xc = np.einsum("cj,kjn->kcn", mesh.W, Xb)
    dXc = np.einsum("cj,kjn->kcn", mesh.D / mesh.h, Xb)
    n = traj.x_bp.shape[1]
    return Xc.reshape(-1, n), dXc.reshape(-1, n)


def segment_residual(vf: VectorField, traj: Trajectory, p) -> np.ndarray:
    """Collocation residuals followed by interior continuity residuals.

    At collocation time tau the residual is x'(tau) - T f(T0 + T tau, x(tau), p)
    in normalized time; continuity rows equate the duplicated base points of
    adjacent subintervals.
    """
    mesh = traj.mesh
    n = traj.x_bp.shape[1]
    if n != vf.dim_state:
        raise InputError(f"trajectory carries {n}-dim states, field expects {vf.dim_state}")
    p = np.asarray(p, dtype=float)
    Xc, dXc = _coll_states(traj)
    tc = traj.t_offset + traj.duration * mesh.collnodes
    fc = rhs_batch(vf, tc, Xc.T, p).T
    res_coll = (dXc - traj.duration * fc).ravel()
    m1 = mesh.degree + 1
    Xb = traj.x_bp.reshape(mesh.ntst, m1, n)
    res_cont = (Xb[:-1, -1, :] - Xb[1:, 0, :]).ravel()
    return np.concatenate([res_coll, res_cont])


@dataclass
class SegmentJacobian:
    """Blocks of d(segment_residual) w.r.t. (x_bp, duration, t_offset, p)."""

    J_x: sp.csr_matrix  # (rows, ntst*(m+1)*n)
    J_T: np.ndarray  # (rows,)
    J_T0: np.ndarray  # (rows,)
    J_p: np.ndarray  # (rows, q)


def segment_jacobian(vf: VectorField, traj: Trajectory, p) -> SegmentJacobian:
    mesh = traj.mesh
    n = traj.x_bp.shape[1]
    q = vf.dim_params
    p = np.asarray(p, dtype=float)
    m, m1 = mesh.degree, mesh.degree + 1
    ntst = mesh.ntst
    T = traj.duration

    Xc, _ = _coll_states(traj)
    tc = traj.t_offset + T * mesh.collnodes
    fc = rhs_batch(vf, tc, Xc.T, p)  # (n, k)
    A = jac_state_batch(vf, tc, Xc.T, p)  # (n, n, k)
    fp = jac_params_batch(vf, tc, Xc.T, p)  # (n, q, k)
    ft = jac_time_batch(vf, tc, Xc.T, p)  # (n, k)

    # collocation block per subinterval: D/h (x) I_n - T * W (x) f_y
    Ak = A.transpose(2, 0, 1).reshape(ntst, m, n, n)
    blocks = np.zeros((ntst, m, n, m1, n))
    eye = np.eye(n)
    blocks += (mesh.D / mesh.h)[None, :, None, :, None] * eye[None, None, :, None, :]
    blocks -= T * mesh.W[None, :, None, :, None] * Ak[:, :, :, None, :]
    data = blocks.reshape(ntst, m * n, m1 * n)

    rows_coll = ntst * m * n
    rows_cont = (ntst - 1) * n
    rows = rows_coll + rows_cont

    # COO assembly: per-subinterval dense blocks, then +/-1 continuity pairs
    bi = np.arange(ntst)
    r0 = (bi * m * n)[:, None, None]
    c0 = (bi * m1 * n)[:, None, None]
    rr = r0 + np.arange(m * n)[None, :, None]
    cc = c0 + np.arange(m1 * n)[None, None, :]
    row_idx = np.broadcast_to(rr, data.shape).ravel()
    col_idx = np.broadcast_to(cc, data.shape).ravel()
    vals = data.ravel()

    k = np.arange(ntst - 1)
    cont_rows = rows_coll + (k[:, None] * n + np.arange(n)[None, :]).ravel()
    last_cols = ((k + 1) * m1 * n - n)[:, None] + np.arange(n)[None, :]
    first_cols = ((k + 1) * m1 * n)[:, None] + np.arange(n)[None, :]
    row_idx = np.concatenate([row_idx, cont_rows, cont_rows])
    col_idx = np.concatenate([col_idx, last_cols.ravel(), first_cols.ravel()])
    vals = np.concatenate([vals, np.ones(rows_cont), -np.ones(rows_cont)])

    J_x = sp.coo_matrix((vals, (row_idx, col_idx)), shape=(rows, ntst * m1 * n)).tocsr()

    J_T = np.zeros(rows)
    J_T0 = np.zeros(rows)
    J_p = np.zeros((rows, q))
    # d/dT = -f - T tau f_t ; d/dT0 = -T f_t ; d/dp = -T f_p
    J_T[:rows_coll] = (-fc.T - (T * mesh.collnodes)[:, None] * ft.T).ravel()
    J_T0[:rows_coll] = (-T * ft.T).ravel()
    J_p[:rows_coll] = (-T * fp.transpose(2, 0, 1)).reshape(rows_coll, q)
    return SegmentJacobian(J_x=J_x, J_T=J_T, J_T0=J_T0, J_p=J_p)


def interpolate(traj: Trajectory, t):
    """Lagrange interpolation of the segment at physical time(s) ``t``.

    Evaluates on the containing subinterval's base points; base-point times
    reproduce the stored values exactly.
    """
    mesh = traj.mesh
    scalar = np.isscalar(t) or np.asarray(t).ndim == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if traj.duration > 0:
        tau = (ts - traj.t_offset) / traj.duration
    else:
        if np.any(np.abs(ts - traj.t_offset) > 1e-12):
            raise InputError("interpolation time outside the segment domain")
        tau = np.zeros_like(ts)
    if np.any(tau < -1e-12) or np.any(tau > 1.0 + 1e-12):
        raise InputError("interpolation time outside the segment domain")
    tau = np.clip(tau, 0.0, 1.0)
    m1 = mesh.degree + 1
    n = traj.x_bp.shape[1]
    out = np.empty((ts.size, n))
    Xb = traj.x_bp.reshape(mesh.ntst, m1, n)
    ks = np.minimum((tau * mesh.ntst).astype(int), mesh.ntst - 1)
    for i, (ti, k) in enumerate(zip(tau, ks)):
        loc = ti * mesh.ntst - k
        L = _lagrange_values(mesh.local_nodes, mesh.bary, loc)
        out[i] = L @ Xb[k]
    return out[0] if scalar else out


def sample_onto_basepoints(mesh: SegmentMesh, t_grid, values, duration, t_offset=0.0):
    """Cubic-spline resample of (t_grid, values) onto the mesh base points.

    Used when a torus segment is seeded from forward-simulation samples.
    """
    from scipy.interpolate import CubicSpline

    t_grid = np.asarray(t_grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if t_grid.ndim != 1 or values.shape[0] != t_grid.size:
        raise InputError("samples must be given as (t_grid, values) with matching lengths")
    spline = CubicSpline(t_grid, values, axis=0)
    tb = t_offset + duration * mesh.basepoints
    lo, hi = t_grid.min(), t_grid.max()
    span = max(hi - lo, 1.0)
    if tb.min() < lo - 1e-9 * span or tb.max() > hi + 1e-9 * span:
        raise InputError("sample grid does not cover the segment time span")
    return spline(np.clip(tb, lo, hi))
