"""Periodic-orbit boundary-value problem, Floquet data and TR detection.

The zero problem couples segment collocation with periodicity and, for
autonomous systems, a Poincare phase condition anchored at a frozen
reference point (moving section: the reference is replaced by the previous
accepted solution during continuation).  Floquet multipliers come from
direct integration of the variational equation along the converged orbit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import colloc
from .errors import ConvergenceError
from .ivp import IvpOptions, transition_matrix
from .linsys import newton_square
from .odesys import VectorField, eval_rhs

#: complex pairs need |Im mu| above this to count for TR testing
IMAG_TOL = 1.0e-6


@dataclass(frozen=True)
class PoReference:
    """Phase-condition anchor: section point and flow direction at t=0."""

    x0: np.ndarray
    f0: np.ndarray


@dataclass(frozen=True)
class PeriodicOrbit:
    traj: colloc.Trajectory
    p: np.ndarray
    reference: PoReference

    @property
    def period(self) -> float:
        return self.traj.duration


def make_reference(vf: VectorField, traj: colloc.Trajectory, p) -> PoReference:
    x0 = traj.x_bp[0].copy()
    return PoReference(x0=x0, f0=eval_rhs(vf, traj.t_offset, x0, p))


def po_residual(vf: VectorField, traj: colloc.Trajectory, p, reference: PoReference) -> np.ndarray:
    """Segment residual + periodicity + (autonomous) Poincare phase row.

    Ordering: collocation and continuity rows from
    :func:`colloc.segment_residual`, then x(T) - x(0), then for autonomous
    systems the scalar <f(0, x*(0), p*), x(0) - x*(0)>.  Non-autonomous
    orbits pin the period to the forcing period 2*pi/Omega instead.
    """
    res = colloc.segment_residual(vf, traj, p)
    periodicity = traj.x_bp[-1] - traj.x_bp[0]
    if vf.autonomous:
        phase = np.array([reference.f0 @ (traj.x_bp[0] - reference.x0)])
    else:
        p = np.asarray(p, dtype=float)
        omega = p[vf.param_index(vf.forcing_param)]
        phase = np.array([traj.duration - 2.0 * np.pi / omega])
    return np.concatenate([res, periodicity, phase])


def po_jacobian(vf: VectorField, traj: colloc.Trajectory, p, reference: PoReference):
    """Sparse Jacobian with columns ordered [x_bp, T, p_0 .. p_{q-1}]."""
    n = vf.dim_state
    X = traj.x_bp.size
    seg = colloc.segment_jacobian(vf, traj, p)
    rows_seg = seg.J_x.shape[0]
    rows = rows_seg + n + 1

    J = sp.lil_matrix((rows, X + 1 + vf.dim_params))
    J[:rows_seg, :X] = seg.J_x
    J[:rows_seg, X] = seg.J_T.reshape(-1, 1)
    if vf.dim_params:
        J[:rows_seg, X + 1 :] = seg.J_p
    r = rows_seg
    for i in range(n):
        J[r + i, X - n + i] = 1.0
        J[r + i, i] = -1.0
    r += n
    if vf.autonomous:
        J[r, :n] = reference.f0
    else:
        J[r, X] = 1.0
        iom = vf.param_index(vf.forcing_param)
        omega = np.asarray(p, dtype=float)[iom]
        J[r, X + 1 + iom] = 2.0 * np.pi / omega**2
    return J.tocsr()


def solve_po(
    vf: VectorField,
    traj_guess: colloc.Trajectory,
    p,
    reference: Optional[PoReference] = None,
    tol: float = 1.0e-10,
    max_iter: int = 20,
) -> PeriodicOrbit:
    """Newton-correct a near-periodic trajectory at fixed parameters."""
    p = np.asarray(p, dtype=float)
    n = vf.dim_state
    X = traj_guess.x_bp.size
    ref = reference or make_reference(vf, traj_guess, p)

    def embed(u):
        return replace(traj_guess, x_bp=u[:X].reshape(-1, n), duration=u[X])

    def res(u):
        return po_residual(vf, embed(u), p, ref)

    def jac(u):
        return po_jacobian(vf, embed(u), p, ref)[:, : X + 1]

    u0 = np.concatenate([traj_guess.x_bp.ravel(), [traj_guess.duration]])
    u, _ = newton_square(res, jac, u0, tol=tol, max_iter=max_iter, context="periodic orbit")
    traj = embed(u)
    if traj.duration <= 1e-6 * abs(traj_guess.duration):
        # constants with T = 0 satisfy the discretized problem; reject them
        raise ConvergenceError(
            f"orbit correction collapsed to a zero-period solution "
            f"(T = {traj.duration:.3e}); the initial guess does not bracket an orbit"
        )
    return PeriodicOrbit(traj=traj, p=p, reference=make_reference(vf, traj, p))


@dataclass
class FloquetData:
    """Monodromy eigendata of a periodic orbit.

    ``tr_angle``/``tr_eigvec`` describe the complex pair closest to the unit
    circle (the TR candidate), with the trivial flow multiplier excluded for
    autonomous systems.  ``warning`` flags an ill-conditioned eigenproblem.
    """

    multipliers: np.ndarray
    monodromy: np.ndarray
    trivial_index: Optional[int]
    tr_angle: Optional[float] = None
    tr_eigvec: Optional[np.ndarray] = None
    tr_distance: Optional[float] = None  # | |mu| - 1 | of the candidate pair
    warning: Optional[str] = None


def floquet(
    vf: VectorField,
    po: PeriodicOrbit,
    anchor_time: float = 0.0,
    rel_tol: float = 1.0e-10,
) -> FloquetData:
    """Multipliers of the monodromy matrix along a converged orbit.

    The variational equation is integrated jointly with the state from
    ``anchor_time`` over one period.  The trivial multiplier (autonomous
    systems) is the one closest to 1 and is excluded from TR candidacy.
    """
    t0 = po.traj.t_offset + anchor_time
    res = transition_matrix(
        vf,
        t0,
        po.period,
        po.traj,
        po.p,
        opts=IvpOptions(rel_tol=rel_tol, abs_tol=rel_tol * 1e-2),
    )
    M = res.monodromy
    warning = None
    try:
        mu, vecs = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        mu = np.linalg.eigvals(M)
        vecs = None
        warning = f"eigenvector computation failed: {exc}"

    trivial = int(np.argmin(np.abs(mu - 1.0))) if vf.autonomous else None

    tr_angle = tr_eigvec = tr_distance = None
    best = np.inf
    for i in range(mu.size):
        if trivial is not None and i == trivial:
            continue
        if mu[i].imag <= IMAG_TOL:  # keep one member of each conjugate pair
            continue
        dist = abs(abs(mu[i]) - 1.0)
        if dist < best:
            best = dist
            tr_angle = float(np.angle(mu[i]))
            tr_eigvec = vecs[:, i].copy() if vecs is not None else None
            tr_distance = dist
    if vecs is not None:
        cond = np.linalg.cond(vecs)
        if cond > 1e12:
            warning = f"ill-conditioned eigenvector basis (cond {cond:.2e})"
    return FloquetData(
        multipliers=mu,
        monodromy=M,
        trivial_index=trivial,
        tr_angle=tr_angle,
        tr_eigvec=tr_eigvec,
        tr_distance=tr_distance,
        warning=warning,
    )


def tr_test_function(floq: FloquetData) -> Optional[float]:
    """max(|mu| - 1) over non-trivial complex pairs, or None when no pair.

    A sign change of this value along a branch brackets a torus (TR)
    bifurcation; the continuation engine treats ``None`` as "no event".
    """
    best = None
    for i, mu in enumerate(floq.multipliers):
        if floq.trivial_index is not None and i == floq.trivial_index:
            continue
        if abs(mu.imag) <= IMAG_TOL:
            continue
        val = abs(mu) - 1.0
        if best is None or val > best:
            best = float(val)
    return best


def continuation_problem(
    vf: VectorField,
    start: PeriodicOrbit,
    released,
    bounds=None,
    detect_bp: bool = False,
    detect_tr: bool = True,
    start_strategy=None,
):
    """Wrap a periodic orbit as a ContinuationProblem; returns (problem, u0).

    The orbit zero problem has dimension deficit 0, so the first released
    name becomes active and any further names are monitor-only.  A TR event
    function (Floquet test) is attached unless ``detect_tr`` is false.
    """
    from . import contin
    from .errors import ConfigError

    n = vf.dim_state
    X = start.traj.x_bp.size
    released = list(released)
    for name in released:
        if name not in vf.param_names:
            raise ConfigError(
                f"unknown parameter {name!r}; known: {', '.join(vf.param_names)}"
            )
    active = released[:1]
    active_idx = [vf.param_index(name) for name in active]

    base_p = np.asarray(start.p, dtype=float).copy()
    ref_cell = [start.reference or make_reference(vf, start.traj, start.p)]

    def embed(u):
        p = base_p.copy()
        for i, ip in enumerate(active_idx):
            p[ip] = u[X + 1 + i]
        traj = colloc.Trajectory(
            mesh=start.traj.mesh,
            x_bp=u[:X].reshape(-1, n),
            duration=u[X],
            t_offset=start.traj.t_offset,
        )
        return PeriodicOrbit(traj=traj, p=p, reference=ref_cell[0])

    def residual(u):
        po_ = embed(u)
        return po_residual(vf, po_.traj, po_.p, po_.reference)

    def jacobian(u):
        po_ = embed(u)
        full = po_jacobian(vf, po_.traj, po_.p, po_.reference)
        keep = list(range(X + 1)) + [X + 1 + ip for ip in active_idx]
        return full.tocsc()[:, keep].tocsr()

    monitor_names = list(vf.param_names) + ["T"]

    def monitors(u):
        po_ = embed(u)
        vals = {name: float(po_.p[i]) for i, name in enumerate(vf.param_names)}
        vals["T"] = float(po_.period)
        return vals

    def on_accept(u):
        po_ = embed(u)
        ref_cell[0] = make_reference(vf, po_.traj, po_.p)

    events = []
    if detect_tr:
        def tr_event(u):
            return tr_test_function(floquet(vf, embed(u)))

        events.append(contin.EventSpec(name="TR", fn=tr_event))

    vals0 = [start.p[ip] for ip in active_idx]
    u0 = np.concatenate([start.traj.x_bp.ravel(), [start.traj.duration], vals0])
    if start_strategy is None:
        start_strategy = ("pin", X + 1) if active else ("pin_last", None)

    problem = contin.ContinuationProblem(
        n_unknowns=u0.size,
        residual=residual,
        jacobian=jacobian,
        monitors=monitors,
        monitor_names=monitor_names,
        released=released,
        active=active,
        embed=embed,
        kind="po",
        bounds=dict(bounds or {}),
        on_accept=on_accept,
        events=events,
        detect_bp=detect_bp,
        start_strategy=start_strategy,
        dimension_deficit=0,
    )
    return problem, u0


def sample_orbit(vf: VectorField, y0, p, mesh: colloc.SegmentMesh, duration: float,
                 t_offset: float = 0.0, rel_tol: float = 1.0e-10) -> colloc.Trajectory:
    """Integrate from ``y0`` and sample the flow at the mesh base points.

    Base points duplicate interior subinterval endpoints, so integration
    runs over the unique times and the states are scattered back.
    """
    from .ivp import integrate

    tb = t_offset + duration * mesh.basepoints
    uniq, inverse = np.unique(tb, return_inverse=True)
    sol = integrate(vf, uniq, np.asarray(y0, dtype=float), p,
                    IvpOptions(rel_tol=rel_tol, abs_tol=rel_tol * 1e-2))
    return colloc.Trajectory(mesh=mesh, x_bp=sol.y[inverse], duration=duration,
                             t_offset=t_offset)


def reanchor(vf: VectorField, po: PeriodicOrbit, t_shift: float) -> PeriodicOrbit:
    """Same orbit re-anchored so the section sits at time ``t_shift``.

    Rebuilds the base-point states by integrating from the interpolated
    shifted point; used to check phase-anchor invariance of the multipliers.
    """
    T = po.period
    y0 = colloc.interpolate(po.traj, po.traj.t_offset + (t_shift % T))
    traj = sample_orbit(vf, y0, po.p, po.traj.mesh, T)
    return solve_po(vf, traj, po.p)
