"""The torus boundary-value problem: 2N+1 coupled collocation segments.

A two-dimensional invariant torus is discretized as one trajectory segment
per angle ``phi_j = 2(j-1)pi/(2N+1)``, all sharing one time mesh and one
(T0, T).  The segments are tied together by the discrete all-to-all
boundary condition (Fourier transform + coefficient rotation), two scalar
frequency couplings, and Poincare phase conditions anchored at a frozen
reference section that moves with the continuation.

Residual ordering (normative, matching the Jacobian row layout):

  (a) per segment j = 1..2N+1: collocation rows, then continuity rows
  (b) all-to-all coupling, n*(2N+1) rows
  (c) T0 - 0
  (d) T - 2*pi/om2
  (e) varrho - om1/om2
  (f) < v*_phi(0,0), v(0,0) - v*(0,0) >
  (g) autonomous only:     < v*_t(0,0), v(0,0) - v*(0,0) >
  (h) non-autonomous only: Omega_2 - om2   (declared forcing parameter)

Full Jacobian columns: [all x_bp segment-major, T0, T, p_1..p_q, om1, om2,
varrho].  The zero problem with no released parameters therefore has three
fewer unknowns than equations (dimension deficit -3); releasing four
parameters yields a one-dimensional solution manifold.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import colloc, contin
from .errors import ConfigError, InputError
from .fourier import (
    CouplingMatrices,
    coupling_residual,
    dft_matrix,
    rotation_matrix,
    rotation_matrix_deriv,
    trig_interpolate,
)
from .ivp import IvpOptions, integrate, transition_matrix
from .odesys import (
    VectorField,
    eval_rhs,
    jac_params_batch,
    jac_state_batch,
    jac_time_batch,
    rhs_batch,
)

#: extended parameter names every torus problem exposes beyond the system's
EXTRA_PARAMS = ("om1", "om2", "varrho")


@dataclass(frozen=True)
class ReferenceSection:
    """Frozen data of the moving Poincare sections.

    ``v00`` is v*(0,0) (first segment's initial point of the previous
    accepted solution), ``vphi`` its phi-derivative obtained from the
    phase-derivative weights across segments, ``vt`` the flow direction
    f(0, v*(0,0), p*) for autonomous systems (None otherwise).
    """

    v00: np.ndarray
    vphi: np.ndarray
    vt: Optional[np.ndarray]


@dataclass(frozen=True)
class TorusSolution:
    """All unknowns of the discretized torus plus the frozen reference."""

    mesh: colloc.SegmentMesh
    coupling: CouplingMatrices
    x_seg: np.ndarray  # (2N+1, n_base, n)
    T0: float
    T: float
    p: np.ndarray
    om1: float
    om2: float
    varrho: float
    reference: Optional[ReferenceSection]

    @property
    def n_seg(self) -> int:
        return self.x_seg.shape[0]

    @property
    def dim_state(self) -> int:
        return self.x_seg.shape[2]

    @property
    def N(self) -> int:
        return self.coupling.N

    @property
    def segments(self):
        return [
            colloc.Trajectory(mesh=self.mesh, x_bp=self.x_seg[j], duration=self.T,
                              t_offset=self.T0)
            for j in range(self.n_seg)
        ]


def reference_from_solution(vf: VectorField, sol: TorusSolution) -> ReferenceSection:
    """Freeze the Poincare-section data from a solution's own states."""
    v00 = sol.x_seg[0, 0].copy()
    vphi = sol.coupling.phase_weights @ sol.x_seg[:, 0, :]
    vt = eval_rhs(vf, sol.T0, v00, sol.p) if vf.autonomous else None
    return ReferenceSection(v00=v00, vphi=vphi, vt=vt)


def update_reference(vf: VectorField, sol: TorusSolution) -> TorusSolution:
    """Re-anchor the moving sections at the solution itself (idempotent)."""
    return replace(sol, reference=reference_from_solution(vf, sol))


def _layout(sol: TorusSolution, vf: VectorField):
    n_seg, nbp, n = sol.x_seg.shape
    X_seg = nbp * n
    X = n_seg * X_seg
    q = vf.dim_params
    rows_seg = sol.mesh.n_coll * n + (sol.mesh.ntst - 1) * n
    rows = n_seg * rows_seg + n_seg * n + 4 + 1
    cols = X + 2 + q + 3
    return X_seg, X, q, rows_seg, rows, cols


def param_column(vf: VectorField, X: int, name: str) -> int:
    """Column of a released parameter in the full Jacobian."""
    q = vf.dim_params
    if name in vf.param_names:
        return X + 2 + vf.param_names.index(name)
    if name in EXTRA_PARAMS:
        return X + 2 + q + EXTRA_PARAMS.index(name)
    raise ConfigError(
        f"unknown parameter {name!r}; known: {', '.join(vf.param_names + EXTRA_PARAMS)}"
    )


def dimension_deficit(vf: VectorField, sol: TorusSolution) -> int:
    """Unknowns minus equations of the zero problem with nothing released."""
    _, X, _, _, rows, _ = _layout(sol, vf)
    return (X + 2) - rows


def torus_residual(vf: VectorField, sol: TorusSolution) -> np.ndarray:
    """Residual blocks (a)-(h) in the normative order."""
    if sol.reference is None:
        raise InputError("torus solution carries no reference section")
    mesh = sol.mesh
    n_seg, nbp, n = sol.x_seg.shape
    if n != vf.dim_state:
        raise InputError(f"solution carries {n}-dim states, field expects {vf.dim_state}")
    if not vf.autonomous and vf.forcing_param is None:
        raise ConfigError("non-autonomous field must declare its forcing-frequency parameter")
    ntst, m = mesh.ntst, mesh.degree
    m1 = m + 1

    # (a) batched collocation + continuity over all segments
    Xb = sol.x_seg.reshape(n_seg, ntst, m1, n)
    Xc = np.einsum("cj,skjn->skcn", mesh.W, Xb)
    dXc = np.einsum("cj,skjn->skcn", mesh.D / mesh.h, Xb)
    tc = sol.T0 + sol.T * mesh.collnodes  # (ntst*m,)
    k = n_seg * ntst * m
    Yc = Xc.reshape(n_seg, ntst * m, n).reshape(k, n).T  # (n, k)
    ts = np.tile(tc, n_seg)
    fc = rhs_batch(vf, ts, Yc, sol.p).T.reshape(n_seg, ntst * m, n)
    res_coll = dXc.reshape(n_seg, ntst * m, n) - sol.T * fc
    res_cont = Xb[:, :-1, -1, :] - Xb[:, 1:, 0, :]
    res_a = np.concatenate(
        [res_coll.reshape(n_seg, -1), res_cont.reshape(n_seg, -1)], axis=1
    ).ravel()

    # (b) all-to-all coupling
    R = rotation_matrix(sol.N, sol.varrho)
    v0 = sol.x_seg[:, 0, :].ravel()
    vT = sol.x_seg[:, -1, :].ravel()
    res_b = coupling_residual(v0, vT, R, sol.coupling.F, n)

    # (c)-(h) scalars
    ref = sol.reference
    dv = sol.x_seg[0, 0] - ref.v00
    scalars = [sol.T0, sol.T - 2.0 * np.pi / sol.om2, sol.varrho - sol.om1 / sol.om2,
               ref.vphi @ dv]
    if vf.autonomous:
        scalars.append(ref.vt @ dv)
    else:
        scalars.append(sol.p[vf.param_index(vf.forcing_param)] - sol.om2)
    return np.concatenate([res_a, res_b, np.asarray(scalars)])


def torus_jacobian(vf: VectorField, sol: TorusSolution) -> sp.csr_matrix:
    """Sparse Jacobian of :func:`torus_residual` w.r.t. the full column set."""
    mesh = sol.mesh
    n_seg, nbp, n = sol.x_seg.shape
    ntst, m = mesh.ntst, mesh.degree
    m1 = m + 1
    q = vf.dim_params
    X_seg, X, _, rows_seg, rows, cols = _layout(sol, vf)
    col_T0, col_T = X, X + 1
    col_om1, col_om2, col_rho = X + 2 + q, X + 2 + q + 1, X + 2 + q + 2

    Xb = sol.x_seg.reshape(n_seg, ntst, m1, n)
    Xc = np.einsum("cj,skjn->skcn", mesh.W, Xb)
    tc = sol.T0 + sol.T * mesh.collnodes
    k = n_seg * ntst * m
    Yc = Xc.reshape(k, n).T
    ts = np.tile(tc, n_seg)
    fc = rhs_batch(vf, ts, Yc, sol.p)  # (n, k)
    A = jac_state_batch(vf, ts, Yc, sol.p)  # (n, n, k)
    fp = jac_params_batch(vf, ts, Yc, sol.p)  # (n, q, k)
    ft = jac_time_batch(vf, ts, Yc, sol.p)  # (n, k)

    rows_idx = []
    cols_idx = []
    vals = []

    # (a) collocation blocks: D/h (x) I_n - T * W (x) f_y, per subinterval
    Ak = A.transpose(2, 0, 1).reshape(n_seg, ntst, m, n, n)
    blocks = np.zeros((n_seg, ntst, m, n, m1, n))
    eye = np.eye(n)
    blocks += (mesh.D / mesh.h)[None, None, :, None, :, None] * eye[None, None, None, :, None, :]
    blocks -= sol.T * mesh.W[None, None, :, None, :, None] * Ak[:, :, :, :, None, :]
    # row r = seg*rows_seg + sub*m*n + (node, comp); col = seg*X_seg + sub*m1*n + (base, comp)
    seg_i = np.arange(n_seg)[:, None, None, None]
    sub_i = np.arange(ntst)[None, :, None, None]
    r_local = (sub_i * m * n + np.arange(m * n)[None, None, :, None])
    c_local = (sub_i * m1 * n + np.arange(m1 * n)[None, None, None, :])
    rr = (seg_i * rows_seg + r_local)
    cc = (seg_i * X_seg + c_local)
    shape4 = (n_seg, ntst, m * n, m1 * n)
    rows_idx.append(np.broadcast_to(rr, shape4).ravel())
    cols_idx.append(np.broadcast_to(cc, shape4).ravel())
    vals.append(blocks.reshape(shape4).ravel())

    # (a) derivative w.r.t. T, T0 and p on the collocation rows
    coll_rows_local = (np.arange(ntst * m * n)).reshape(ntst * m, n)
    coll_rows = (np.arange(n_seg)[:, None, None] * rows_seg + coll_rows_local[None]).ravel()
    dT = (-fc.T - (sol.T * np.tile(mesh.collnodes, n_seg))[:, None] * ft.T).ravel()
    dT0 = (-sol.T * ft.T).ravel()
    rows_idx += [coll_rows, coll_rows]
    cols_idx += [np.full(coll_rows.size, col_T), np.full(coll_rows.size, col_T0)]
    vals += [dT, dT0]
    if q:
        dp = (-sol.T * fp.transpose(2, 0, 1)).reshape(-1, q)  # (k*n? ...) rows x q
        for ip in range(q):
            rows_idx.append(coll_rows)
            cols_idx.append(np.full(coll_rows.size, X + 2 + ip))
            vals.append(dp[:, ip])

    # (a) continuity rows: +1 on last base point of sub k, -1 on first of k+1
    if ntst > 1:
        sub_k = np.arange(ntst - 1)
        r_cont = (np.arange(n_seg)[:, None, None] * rows_seg + ntst * m * n
                  + (sub_k[None, :, None] * n + np.arange(n)[None, None, :]))
        c_last = (np.arange(n_seg)[:, None, None] * X_seg
                  + ((sub_k + 1) * m1 * n - n)[None, :, None] + np.arange(n)[None, None, :])
        c_first = (np.arange(n_seg)[:, None, None] * X_seg
                   + ((sub_k + 1) * m1 * n)[None, :, None] + np.arange(n)[None, None, :])
        cnt = r_cont.size
        rows_idx += [r_cont.ravel(), r_cont.ravel()]
        cols_idx += [c_last.ravel(), c_first.ravel()]
        vals += [np.ones(cnt), -np.ones(cnt)]

    # (b) coupling rows: (F (x) I_n) on vT columns, -(R F (x) I_n) on v0 columns
    off_b = n_seg * rows_seg
    R = rotation_matrix(sol.N, sol.varrho)
    RF = R @ sol.coupling.F
    F = sol.coupling.F
    bi = np.arange(n_seg)
    r_b = off_b + (bi[:, None, None] * n + np.arange(n)[None, None, :])  # (i, j, d)
    r_b = np.broadcast_to(r_b, (n_seg, n_seg, n))
    c_vT = (bi[None, :, None] * X_seg + (nbp - 1) * n + np.arange(n)[None, None, :])
    c_vT = np.broadcast_to(c_vT, (n_seg, n_seg, n))
    c_v0 = (bi[None, :, None] * X_seg + np.arange(n)[None, None, :])
    c_v0 = np.broadcast_to(c_v0, (n_seg, n_seg, n))
    dataF = np.broadcast_to(F[:, :, None], (n_seg, n_seg, n))
    dataRF = np.broadcast_to(-RF[:, :, None], (n_seg, n_seg, n))
    rows_idx += [r_b.ravel(), r_b.ravel()]
    cols_idx += [c_vT.ravel(), c_v0.ravel()]
    vals += [dataF.ravel(), dataRF.ravel()]
    # coupling dependence on varrho through R
    dR = rotation_matrix_deriv(sol.N, sol.varrho)
    V0 = sol.x_seg[:, 0, :]
    dcoup = -(dR @ F) @ V0  # (n_seg, n)
    rb_flat = off_b + np.arange(n_seg * n)
    rows_idx.append(rb_flat)
    cols_idx.append(np.full(n_seg * n, col_rho))
    vals.append(dcoup.ravel())

    # (c)-(h) scalar rows
    off_c = off_b + n_seg * n
    ref = sol.reference
    sr, sc, sv = [], [], []
    sr.append(off_c)
    sc.append(col_T0)
    sv.append(1.0)
    sr += [off_c + 1, off_c + 1]
    sc += [col_T, col_om2]
    sv += [1.0, 2.0 * np.pi / sol.om2**2]
    sr += [off_c + 2, off_c + 2, off_c + 2]
    sc += [col_rho, col_om1, col_om2]
    sv += [1.0, -1.0 / sol.om2, sol.om1 / sol.om2**2]
    for d in range(n):
        sr.append(off_c + 3)
        sc.append(d)  # segment 1, first base point
        sv.append(ref.vphi[d])
    if vf.autonomous:
        for d in range(n):
            sr.append(off_c + 4)
            sc.append(d)
            sv.append(ref.vt[d])
    else:
        iom = vf.param_index(vf.forcing_param)
        sr += [off_c + 4, off_c + 4]
        sc += [X + 2 + iom, col_om2]
        sv += [1.0, -1.0]
    rows_idx.append(np.asarray(sr))
    cols_idx.append(np.asarray(sc))
    vals.append(np.asarray(sv, dtype=float))

    J = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows_idx), np.concatenate(cols_idx))),
        shape=(rows, cols),
    )
    return J.tocsr()


# -- initial solutions --------------------------------------------------------


def init_from_samples(
    vf: VectorField,
    t_grid,
    samples,
    params: dict,
    mesh: Optional[colloc.SegmentMesh] = None,
) -> TorusSolution:
    """Torus guess from forward-simulation samples of every segment.

    ``samples`` has shape (2N+1, len(t_grid), n): one state history per
    segment over a common time grid covering one return period
    [0, 2*pi/om2].  ``params`` maps every system parameter name plus
    om1/om2/varrho to its value; negative om1 and varrho are preserved
    (opposite rotation direction).  The reference section is frozen from
    the samples themselves.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3:
        raise InputError("samples must have shape (segments, times, states)")
    n_seg = samples.shape[0]
    if n_seg < 3 or n_seg % 2 == 0:
        raise InputError(f"segment count must be odd and >= 3 (2N+1), got {n_seg}")
    if samples.shape[2] != vf.dim_state:
        raise InputError(
            f"samples carry {samples.shape[2]}-dim states, field expects {vf.dim_state}"
        )
    missing = [k for k in list(vf.param_names) + list(EXTRA_PARAMS) if k not in params]
    if missing:
        raise InputError(f"params missing entries for: {', '.join(missing)}")
    om1, om2, varrho = (float(params[k]) for k in EXTRA_PARAMS)
    if om2 <= 0:
        raise InputError("om2 must be positive (it sets the return period T = 2*pi/om2)")
    p = np.array([float(params[name]) for name in vf.param_names])
    mesh = mesh or colloc.build_mesh(20, 4)
    T = 2.0 * np.pi / om2
    x_seg = np.stack(
        [colloc.sample_onto_basepoints(mesh, t_grid, samples[j], T) for j in range(n_seg)]
    )
    N = (n_seg - 1) // 2
    sol = TorusSolution(
        mesh=mesh,
        coupling=dft_matrix(N),
        x_seg=x_seg,
        T0=0.0,
        T=T,
        p=p,
        om1=om1,
        om2=om2,
        varrho=varrho,
        reference=None,
    )
    return update_reference(vf, sol)


def default_tr_eps(po) -> float:
    """Default perturbation size: 0.1 x RMS amplitude of the orbit."""
    x = po.traj.x_bp
    dev = x - x.mean(axis=0)
    return 0.1 * float(np.sqrt((dev**2).sum(axis=1).mean()))


def rotate_eigvec(v: np.ndarray) -> np.ndarray:
    """Rescale a complex eigenvector so <Re v, Im v> = 0.

    The eigenvector keeps its span under multiplication by e^{i theta};
    the orthogonalizing angle solves tan(2 theta) = 2<vR,vI> / (<vI,vI> -
    <vR,vR>) via the two-argument arctangent.
    """
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    vR, vI = v.real, v.imag
    theta = 0.5 * np.arctan2(2.0 * (vR @ vI), (vI @ vI) - (vR @ vR))
    v = v * np.exp(1j * theta)
    return v


def init_from_TR(
    vf: VectorField,
    po,
    floq,
    N: int,
    eps: Optional[float] = None,
    mesh: Optional[colloc.SegmentMesh] = None,
) -> TorusSolution:
    """Torus guess from a Neimark-Sacker (TR) periodic orbit.

    Builds the complex Floquet function u(t) = e^{-i alpha (t-t0)/T}
    M(t, t0) v on the base-point times, turns it into the perturbation
    surface uhat(theta1, t) = cos(theta1) Re u - sin(theta1) Im u, and
    seeds segment j with x_p(t) + eps * uhat(phi_j + om1 (t - t0), t),
    where om1 = alpha/T, om2 = 2*pi/T and varrho = alpha/(2*pi).
    """
    if floq.tr_eigvec is None or floq.tr_angle is None:
        raise InputError("Floquet data carries no TR pair (complex multiplier + eigenvector)")
    if N < 1:
        raise InputError("need at least one Fourier mode")
    mesh = mesh or po.traj.mesh
    T = po.period
    t0 = po.traj.t_offset
    alpha = abs(float(floq.tr_angle))
    v = rotate_eigvec(floq.tr_eigvec)
    if eps is None:
        eps = default_tr_eps(po)

    # M(t, t0) at the unique base-point times; the orbit states come from the
    # converged collocation representation, so eps = 0 reproduces it exactly
    tb = t0 + T * mesh.basepoints
    uniq, inverse = np.unique(tb, return_inverse=True)
    trans = transition_matrix(vf, t0, T, po.traj, po.p, sample_times=uniq)
    pos = np.searchsorted(trans.times, uniq)
    Phi = trans.Phi[pos][inverse]  # (nbp, n, n)
    if mesh is po.traj.mesh:
        xp = po.traj.x_bp.copy()
    else:
        xp = colloc.interpolate(po.traj, tb)

    tb_rel = T * mesh.basepoints
    u_t = np.exp(-1j * alpha * tb_rel / T)[:, None] * (Phi @ v)
    om1 = alpha / T
    om2 = 2.0 * np.pi / T
    varrho = alpha / (2.0 * np.pi)

    coupling = dft_matrix(N)
    n_seg = coupling.n_seg
    theta1 = coupling.angles[:, None] + om1 * tb_rel[None, :]  # (n_seg, nbp)
    uhat = (np.cos(theta1)[:, :, None] * u_t.real[None, :, :]
            - np.sin(theta1)[:, :, None] * u_t.imag[None, :, :])
    x_seg = xp[None, :, :] + eps * uhat

    sol = TorusSolution(
        mesh=mesh,
        coupling=coupling,
        x_seg=x_seg,
        T0=0.0,
        T=T,
        p=np.asarray(po.p, dtype=float).copy(),
        om1=om1,
        om2=om2,
        varrho=varrho,
        reference=None,
    )
    return update_reference(vf, sol)


def tr_perturbation_direction(sol: TorusSolution) -> np.ndarray:
    """Amplitude direction of a TR-initialized torus (states part only).

    The segment mean over the uniform angle grid recovers the underlying
    periodic orbit exactly (the perturbation is a pure first harmonic), so
    the deviation from the mean is the d/d(eps) direction used to seed the
    first continuation tangent.
    """
    mean = sol.x_seg.mean(axis=0, keepdims=True)
    return (sol.x_seg - mean).ravel()


# -- evaluation, export, validation -------------------------------------------


def eval_circle(sol: TorusSolution, t: float) -> np.ndarray:
    """States of all segments at physical time t, shape (2N+1, n)."""
    return np.stack([colloc.interpolate(seg, t) for seg in sol.segments])


def eval_torus(sol: TorusSolution, theta1, theta2: float) -> np.ndarray:
    """Torus function u(theta1, theta2) via the characteristic transform.

    Evaluates v(theta1 - varrho*theta2, theta2/om2): trigonometric
    interpolation across segments in phi, Lagrange interpolation in t.
    """
    t = sol.T0 + float(theta2) / sol.om2
    circle = eval_circle(sol, t)
    phi = np.asarray(theta1, dtype=float) - sol.varrho * float(theta2)
    return trig_interpolate(sol.coupling, circle, phi)


@dataclass
class TorusGrid:
    theta1: np.ndarray  # (2N+1,)
    theta2: np.ndarray  # (theta2_count,)
    values: np.ndarray  # (2N+1, theta2_count, n)


def export_torus_mesh(sol: TorusSolution, theta2_count: int) -> TorusGrid:
    """Surface grid u(theta1, theta2) on the segment angles x [0, 2*pi]."""
    if theta2_count < 2:
        raise InputError("theta2_count must be at least 2")
    theta1 = sol.coupling.angles.copy()
    theta2 = np.linspace(0.0, 2.0 * np.pi, theta2_count)
    values = np.empty((sol.n_seg, theta2_count, sol.dim_state))
    for i, th2 in enumerate(theta2):
        values[:, i, :] = eval_torus(sol, theta1, th2)
    return TorusGrid(theta1=theta1, theta2=theta2, values=values)


def invariance_deviation(
    vf: VectorField,
    sol: TorusSolution,
    n_returns: int = 20,
    opts: Optional[IvpOptions] = None,
) -> np.ndarray:
    """Forward-simulation test of torus invariance.

    Integrates from v(phi_1, 0) over ``n_returns`` return periods; after k
    returns the trajectory should sit on the initial circle at angle
    phi_1 + 2*pi*k*varrho.  Returns the Euclidean deviations per return,
    measured against the trigonometric interpolant of the initial circle.
    """
    opts = opts or IvpOptions(rel_tol=1.0e-10, abs_tol=1.0e-12)
    y0 = sol.x_seg[0, 0]
    times = sol.T0 + sol.T * np.arange(n_returns + 1)
    res = integrate(vf, times, y0, sol.p, opts)
    circle0 = sol.x_seg[:, 0, :]
    devs = np.empty(n_returns)
    phi1 = sol.coupling.angles[0]
    for k in range(1, n_returns + 1):
        expected = trig_interpolate(sol.coupling, circle0,
                                    np.mod(phi1 + 2.0 * np.pi * k * sol.varrho, 2.0 * np.pi))
        devs[k - 1] = np.linalg.norm(res.y[k] - expected)
    return devs


def solve_fixed(
    vf: VectorField,
    sol: TorusSolution,
    released=("om1", "om2", "varrho"),
    tol: float = 1.0e-9,
    max_iter: int = 12,
) -> TorusSolution:
    """Newton-correct a torus guess as an isolated (square) problem.

    Releasing exactly three parameters balances the -3 dimension deficit,
    so the system is square: the torus at the remaining fixed parameters is
    isolated (the phase conditions pin both phases).  The reference section
    stays frozen at the guess during the solve and is re-anchored at the
    result.  Used to re-converge a solution on a finer discretization.
    """
    from .linsys import newton_square

    released = list(released)
    if len(released) != 3:
        raise ConfigError("solve_fixed needs exactly three released parameters")
    problem, u0 = continuation_problem(vf, sol, released, detect_bp=False)
    u, _ = newton_square(problem.residual, problem.jacobian, u0, tol=tol,
                         max_iter=max_iter, context="torus correction")
    return update_reference(vf, problem.embed(u))


# -- continuation adapter ------------------------------------------------------

#: number of released parameters a torus run needs for a 1-d manifold
N_RELEASED = 4


def continuation_problem(
    vf: VectorField,
    start: TorusSolution,
    released,
    bounds: Optional[dict] = None,
    detect_bp: bool = True,
    start_strategy: Optional[tuple] = None,
):
    """Wrap a torus solution as a ContinuationProblem; returns (problem, u0).

    ``released`` is the ordered list of parameter names to free; the first
    four become unknowns, any further names are monitored only.  The
    reference section moves: after each accepted point it is re-frozen at
    that point.
    """
    n_seg, nbp, n = start.x_seg.shape
    X_seg, X, q, rows_seg, rows, cols = _layout(start, vf)
    released = list(released)
    seen = set()
    for name in released:
        param_column(vf, X, name)  # validates
        if name in seen:
            raise ConfigError(f"parameter {name!r} released twice")
        seen.add(name)
    active = released[: min(len(released), N_RELEASED)]
    active_cols = [param_column(vf, X, name) for name in active]

    base_p = start.p.copy()
    base_extra = {"om1": start.om1, "om2": start.om2, "varrho": start.varrho}
    ref_cell = [start.reference or reference_from_solution(vf, start)]

    def embed(u):
        x_seg = u[:X].reshape(n_seg, nbp, n)
        p = base_p.copy()
        extra = dict(base_extra)
        # active values are stored past [x, T0, T] in released order
        for i, name in enumerate(active):
            val = u[X + 2 + i]
            if name in vf.param_names:
                p[vf.param_names.index(name)] = val
            else:
                extra[name] = val
        return TorusSolution(
            mesh=start.mesh,
            coupling=start.coupling,
            x_seg=x_seg,
            T0=u[X],
            T=u[X + 1],
            p=p,
            om1=extra["om1"],
            om2=extra["om2"],
            varrho=extra["varrho"],
            reference=ref_cell[0],
        )

    def residual(u):
        return torus_residual(vf, embed(u))

    keep_cols = np.concatenate([np.arange(X + 2), np.asarray(active_cols, dtype=int)])

    def jacobian(u):
        return torus_jacobian(vf, embed(u)).tocsc()[:, keep_cols].tocsr()

    monitor_names = list(vf.param_names) + list(EXTRA_PARAMS) + ["T0", "T"]

    def monitors(u):
        sol = embed(u)
        vals = {name: float(sol.p[i]) for i, name in enumerate(vf.param_names)}
        vals.update(om1=sol.om1, om2=sol.om2, varrho=sol.varrho, T0=sol.T0, T=sol.T)
        return vals

    def on_accept(u):
        ref_cell[0] = reference_from_solution(vf, embed(u))

    def u_of(sol):
        vals = []
        for name in active:
            if name in vf.param_names:
                vals.append(sol.p[vf.param_names.index(name)])
            else:
                vals.append(getattr(sol, name))
        return np.concatenate([sol.x_seg.ravel(), [sol.T0, sol.T], vals])

    u0 = u_of(start)
    if start_strategy is None:
        if active:
            start_strategy = ("pin", X + 2)  # hold the first released parameter
        else:
            start_strategy = ("pin_last", None)

    problem = contin.ContinuationProblem(
        n_unknowns=u0.size,
        residual=residual,
        jacobian=jacobian,
        monitors=monitors,
        monitor_names=monitor_names,
        released=released,
        active=active,
        embed=embed,
        kind="torus",
        bounds=dict(bounds or {}),
        on_accept=on_accept,
        events=[],
        detect_bp=detect_bp,
        start_strategy=start_strategy,
        dimension_deficit=dimension_deficit(vf, start),
    )
    return problem, u0
