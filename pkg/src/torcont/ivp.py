"""Adaptive explicit initial-value integration and transition matrices.

Wraps scipy's Dormand-Prince 5(4) pair (``RK45``: embedded error estimate,
PI step control, quartic dense output) behind the package's vector-field
abstraction.  The variational equation is always integrated jointly with the
state as an augmented system of size n + n^2, so Floquet data never inherits
interpolation error from a frozen reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InputError, IntegrationError
from .odesys import VectorField, eval_jac_state, eval_rhs


@dataclass
class IvpOptions:
    rel_tol: float = 1.0e-8
    abs_tol: float = 1.0e-10
    max_step: Optional[float] = None
    dense_output: bool = False

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise InputError("tolerances must be positive")


@dataclass
class IvpResult:
    t: np.ndarray  # requested times
    y: np.ndarray  # states, shape (len(t), n)
    interpolant: Optional[object] = None  # scipy dense-output callable

    def __call__(self, t):
        if self.interpolant is None:
            raise InputError("integration was run without dense_output")
        return np.asarray(self.interpolant(t))


@dataclass
class TransitionMatrixResult:
    times: np.ndarray
    Phi: np.ndarray  # (len(times), n, n) raw transition matrices
    monodromy: np.ndarray  # Phi(t0+T, t0) Phi0^{-1}
    states: np.ndarray  # reference states at `times`


def integrate(vf: VectorField, t_span, y0, p, opts: Optional[IvpOptions] = None) -> IvpResult:
    """Integrate the field through the ordered times in ``t_span``.

    The first entry is the initial time; states are returned at every
    requested time.  Raises :class:`IntegrationError` carrying the last
    valid time when the integrator gives up (stiffness, blow-up).
    """
    opts = opts or IvpOptions()
    ts = np.asarray(t_span, dtype=float)
    if ts.ndim != 1 or ts.size < 2:
        raise InputError("t_span must contain at least two times")
    d = np.diff(ts)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise InputError("t_span must be strictly monotone")
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (vf.dim_state,):
        raise InputError(f"y0 has shape {y0.shape}, expected ({vf.dim_state},)")
    p = np.asarray(p, dtype=float)

    sol = solve_ivp(
        lambda t, y: eval_rhs(vf, t, y, p),
        (ts[0], ts[-1]),
        y0,
        method="RK45",
        t_eval=ts,
        rtol=opts.rel_tol,
        atol=opts.abs_tol,
        max_step=opts.max_step if opts.max_step is not None else np.inf,
        dense_output=opts.dense_output,
    )
    if not sol.success:
        last = sol.t[-1] if sol.t.size else ts[0]
        raise IntegrationError(f"integration failed at t={last}: {sol.message}", last_time=last)
    return IvpResult(t=sol.t, y=sol.y.T.copy(), interpolant=sol.sol)


def _ref_state_at(y_ref, t0, vf):
    """Initial state from a trajectory, interpolant or plain vector."""
    from .colloc import Trajectory, interpolate  # local import to avoid a cycle

    if isinstance(y_ref, Trajectory):
        if not (y_ref.t_offset - 1e-12 <= t0 <= y_ref.t_offset + y_ref.duration + 1e-12):
            raise InputError("reference trajectory does not cover the requested start time")
        return interpolate(y_ref, t0)
    if callable(y_ref):
        return np.asarray(y_ref(t0), dtype=float)
    y0 = np.asarray(y_ref, dtype=float)
    if y0.shape != (vf.dim_state,):
        raise InputError("y_ref must be a Trajectory, a callable or a state vector")
    return y0


def transition_matrix(
    vf: VectorField,
    t0: float,
    T: float,
    y_ref,
    p,
    sample_times=None,
    Phi0: Optional[np.ndarray] = None,
    opts: Optional[IvpOptions] = None,
) -> TransitionMatrixResult:
    """Solve the variational equation Phi' = f_x Phi along the flow.

    The state is regenerated from ``y_ref`` at ``t0`` and integrated jointly
    with Phi over [t0, t0+T].  ``sample_times`` (absolute times within that
    window) select where Phi is recorded; the monodromy
    M(t0+T, t0) = Phi(t0+T) Phi0^{-1} is always computed.
    """
    opts = opts or IvpOptions(rel_tol=1.0e-10, abs_tol=1.0e-12)
    if T <= 0:
        raise InputError("transition_matrix needs a positive duration T")
    n = vf.dim_state
    p = np.asarray(p, dtype=float)
    y0 = _ref_state_at(y_ref, t0, vf)
    if Phi0 is None:
        Phi0 = np.eye(n)
    else:
        Phi0 = np.asarray(Phi0, dtype=float)
        if Phi0.shape != (n, n):
            raise InputError(f"Phi0 has shape {Phi0.shape}, expected ({n}, {n})")

    if sample_times is None:
        ts = np.array([t0, t0 + T])
    else:
        ts = np.asarray(sample_times, dtype=float)
        lo, hi = min(t0, t0 + T), max(t0, t0 + T)
        if ts.min() < lo - 1e-12 or ts.max() > hi + 1e-12:
            raise InputError("sample_times must lie within [t0, t0+T]")
        ts = np.unique(np.concatenate([ts, [t0, t0 + T]]))

    def aug(t, z):
        y = z[:n]
        Phi = z[n:].reshape(n, n)
        fy = eval_jac_state(vf, t, y, p)
        return np.concatenate([eval_rhs(vf, t, y, p), (fy @ Phi).ravel()])

    z0 = np.concatenate([y0, Phi0.ravel()])
    sol = solve_ivp(
        aug,
        (t0, t0 + T),
        z0,
        method="RK45",
        t_eval=ts,
        rtol=opts.rel_tol,
        atol=opts.abs_tol,
    )
    if not sol.success:
        last = sol.t[-1] if sol.t.size else t0
        raise IntegrationError(
            f"variational integration failed at t={last}: {sol.message}", last_time=last
        )
    Phi_hist = sol.y[n:, :].T.reshape(-1, n, n).copy()
    states = sol.y[:n, :].T.copy()
    Phi_end = Phi_hist[-1]
    monodromy = Phi_end @ np.linalg.inv(Phi0)
    return TransitionMatrixResult(times=sol.t, Phi=Phi_hist, monodromy=monodromy, states=states)
