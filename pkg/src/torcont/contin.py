"""Pseudo-arclength continuation with events and branch switching.

The engine walks a one-dimensional solution manifold of a zero problem
F(u) = 0 with one more unknown than equations.  It alternates tangent or
secant prediction with Newton correction on the bordered system
{F(u) = 0, <t, u - u_pred> = 0}, adapts the step size from the corrector
iteration count, and watches scalar test functions for sign changes:
crossings are localized by bisection in arclength with full re-convergence
at every midpoint.  Branch points are flagged by determinant sign changes of
the bordered Jacobian taken from the accepted corrector factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import BranchPointError, ConfigError, ConvergenceError
from .linsys import bordered_matrix, det_sign_log, lu_factor, nullspace_tangent

CORRECTOR_TOL = 1.0e-8
CORRECTOR_MAX_ITER = 8
#: corrector iteration count at or below which the step size is doubled
FAST_ITERS = 4
EVENT_VALUE_TOL = 1.0e-6
EVENT_BRACKET_TOL = 1.0e-8
BP_DET_DROP = 1.0e-6  # relative |det| reduction that ends BP bisection


@dataclass
class EventSpec:
    """Scalar test function whose sign change triggers localization."""

    name: str  # bd point type for the located point (e.g. "TR")
    fn: Callable[[np.ndarray], Optional[float]]  # None means "no event possible here"


@dataclass
class ContinuationProblem:
    """A square-plus-one zero problem prepared for continuation.

    ``released`` is the requested ordered parameter list; only the first
    ``len(active)`` names are active unknowns, the rest are monitor-only
    (the usual continuation-toolbox convention, so extra names can
    ride along for monitoring).
    ``start_strategy`` fixes the border of the initial correction: a
    ("seed", vector) pair anchors the correction orthogonal to a known
    branch direction, ("pin", column) holds one unknown at its seed value.
    """

    n_unknowns: int
    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], sp.spmatrix]
    monitors: Callable[[np.ndarray], dict]
    monitor_names: list
    released: list
    active: list
    embed: Callable[[np.ndarray], object]
    kind: str = "generic"
    bounds: dict = field(default_factory=dict)
    on_accept: Callable[[np.ndarray], None] = lambda u: None
    events: list = field(default_factory=list)
    detect_bp: bool = False
    start_strategy: tuple = ("pin_last", None)
    dimension_deficit: Optional[int] = None


@dataclass
class ContinuationState:
    """Step-size policy and run limits."""

    h: float = 0.1
    h_min: float = 1.0e-3
    h_max: float = 10.0
    pt_max: int = 50
    bi_direct: bool = True
    pt_count: int = 0
    u: Optional[np.ndarray] = None
    tangent: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (0 < self.h_min <= self.h_max):
            raise ConfigError("need 0 < h_min <= h_max")
        self.h = min(max(self.h, self.h_min), self.h_max)


@dataclass
class BranchPoint:
    label: int
    ptype: str  # EP, RO, TR, BP
    u: np.ndarray
    monitors: dict
    tangent: np.ndarray
    det_sign: int = 0
    corrector_iters: int = 0


@dataclass
class Branch:
    points: list = field(default_factory=list)
    events: list = field(default_factory=list)
    termination: str = ""

    def by_type(self, ptype: str):
        return [pt for pt in self.points if pt.ptype == ptype]


# -- bordered Newton ----------------------------------------------------------


def _correct(problem, u_pred, border, anchor, tol=CORRECTOR_TOL,
             max_iter=CORRECTOR_MAX_ITER):
    """Newton on {F(u)=0, <border, u-anchor>=0}; returns (u, iters, lu)."""
    u = np.asarray(u_pred, dtype=float).copy()
    lu = None
    best = np.inf
    for it in range(max_iter + 1):
        res = problem.residual(u)
        nrm = np.abs(res).max() if res.size else 0.0
        gap = abs(border @ (u - anchor))
        if nrm < tol and gap < tol * max(1.0, np.abs(u).max()):
            if lu is None:
                try:
                    lu = lu_factor(bordered_matrix(problem.jacobian(u), border))
                except ConvergenceError:
                    lu = None  # converged on a singular point (e.g. exactly at a BP)
            return u, it, lu
        if not np.isfinite(nrm) or nrm > 1e8 * max(best, 1.0):
            raise ConvergenceError(f"corrector diverged (residual {nrm:.3e})")
        best = min(best, nrm)
        if it == max_iter:
            break
        lu = lu_factor(bordered_matrix(problem.jacobian(u), border))
        rhs = np.concatenate([res, [border @ (u - anchor)]])
        u = u - lu.solve(rhs)
    raise ConvergenceError(
        f"corrector did not converge in {max_iter} iterations (residual {best:.3e})"
    )


def _check_square_plus_one(problem, u0):
    J = problem.jacobian(u0)
    rows, cols = J.shape
    if cols != problem.n_unknowns:
        raise ConfigError(
            f"jacobian has {cols} columns but the layout declares {problem.n_unknowns}"
        )
    if cols < rows + 1:
        need = rows + 1 - cols
        raise ConfigError(
            f"zero problem is over-determined: {rows} equations, {cols} unknowns "
            f"({len(problem.active)} released); release {need} more parameter(s)"
        )
    if cols > rows + 1:
        raise ConfigError(
            f"zero problem is under-determined: {rows} equations, {cols} unknowns; "
            "too many released parameters for a one-dimensional manifold"
        )


def _initial_border(problem):
    kind, payload = problem.start_strategy
    vec = np.zeros(problem.n_unknowns)
    if kind == "seed":
        vec = np.asarray(payload, dtype=float).copy()
    elif kind == "pin":
        vec[payload] = 1.0
    else:  # pin_last
        vec[-1] = 1.0
    return vec / np.linalg.norm(vec)


# -- event localization -------------------------------------------------------


def locate_event(problem, u_a, u_b, border, test_fn,
                 value_tol=EVENT_VALUE_TOL, bracket_tol=EVENT_BRACKET_TOL):
    """Bisect in arclength between two points bracketing a sign change.

    Each midpoint is predicted along the chord and fully re-converged with
    the frozen ``border`` before the test function is evaluated.  Returns
    (u_located, value, iterations); raises :class:`ConvergenceError` when
    the bracket is lost (for example over a fold in the test function).
    """
    d = u_b - u_a
    val_a = test_fn(u_a)
    val_b = test_fn(u_b)
    if val_a is None or val_b is None or np.sign(val_a) == np.sign(val_b):
        raise ConvergenceError("locate_event needs opposite-sign bracket values")
    sign_a = np.sign(val_a)
    s_lo, s_hi = 0.0, 1.0
    u_mid, val_mid = u_a, val_a
    for it in range(60):
        s = 0.5 * (s_lo + s_hi)
        u_mid, _, _ = _correct(problem, u_a + s * d, border, u_a + s * d)
        val_mid = test_fn(u_mid)
        if val_mid is None:
            raise ConvergenceError("bracket lost during bisection (test function vanished)")
        if abs(val_mid) < value_tol:
            return u_mid, val_mid, it + 1
        if np.sign(val_mid) == sign_a:
            s_lo = s
        else:
            s_hi = s
        if (s_hi - s_lo) * np.linalg.norm(d) < bracket_tol:
            return u_mid, val_mid, it + 1
    return u_mid, val_mid, 60


def _correct_near_singular(problem, u_pred, border, anchor):
    """Corrector retry with a relaxed floor for near-singular points.

    Close to a branch point the bordered system's conditioning bounds the
    reachable residual at about kappa * eps; a single retry at a few times
    the standard tolerance keeps bisection going instead of losing the
    bracket."""
    try:
        return _correct(problem, u_pred, border, anchor)
    except ConvergenceError:
        return _correct(problem, u_pred, border, anchor,
                        tol=5.0 * CORRECTOR_TOL, max_iter=12)


def detect_branch_point(problem, u_a, u_b, border, sign_a, sign_b,
                        logdet_scale=0.0):
    """Localize a branch point bracketed by a determinant sign change.

    ``sign_a``/``sign_b`` are the bordered-Jacobian determinant signs at two
    consecutive accepted points (from the scaled LU sign/log-magnitude
    proxy, so magnitude under- or overflow cannot corrupt them); they must
    differ.  Bisection in arclength re-converges every midpoint with the
    frozen ``border`` and stops once |det| has dropped by ``BP_DET_DROP``
    relative to ``logdet_scale`` (log of the bracket-end magnitude) or the
    bracket is tighter than the arclength tolerance.
    """
    if sign_a == 0 or sign_b == 0 or sign_a == sign_b:
        raise ConvergenceError("detect_branch_point needs opposite determinant signs")
    d = u_b - u_a
    s_lo, s_hi = 0.0, 1.0
    u_best = None
    for it in range(60):
        s = 0.5 * (s_lo + s_hi)
        u_mid, _, lu = _correct_near_singular(problem, u_a + s * d, border, u_a + s * d)
        if lu is None:
            return u_mid, it + 1  # landed on an exactly singular point
        sign_mid, logdet_mid = det_sign_log(lu)
        u_best = u_mid
        if sign_mid == 0 or logdet_mid - logdet_scale < np.log(BP_DET_DROP):
            return u_best, it + 1
        if (s_hi - s_lo) * np.linalg.norm(d) < EVENT_BRACKET_TOL:
            return u_best, it + 1
        if sign_mid == sign_a:
            s_lo = s
        else:
            s_hi = s
    return u_best, 60


# -- branch switching ---------------------------------------------------------


def switch_branch(problem, u_bp: np.ndarray, incoming_tangent: np.ndarray,
                  null_tol: float = 1.0e-4):
    """Second branch direction at a localized branch point.

    At a simple branch point the Jacobian has a two-dimensional null space
    containing both branch tangents; bordering with the incoming tangent
    leaves exactly the null direction orthogonal to it, which inverse
    iteration on the near-singular bordered matrix extracts.  The result is
    orthogonalized against the incoming tangent and verified to be a null
    direction of J; failing that check means the point is not a simple
    branch point.
    """
    J = problem.jacobian(u_bp)
    B = bordered_matrix(J, incoming_tangent)
    try:
        lu = lu_factor(B)
    except ConvergenceError:
        # exactly singular at a perfectly localized BP: shift for the solve,
        # the inverse iteration still converges to the null direction
        shift = 1e-10 * max(1.0, abs(B).max())
        lu = lu_factor(B + shift * sp.identity(B.shape[0], format="csc"))
    n = B.shape[0]
    psi = None
    # inverse iteration needs a start with a component along the null
    # direction; try a few deterministic seeds
    seeds = [np.ones(n), np.resize([1.0, -1.0], n)]
    for seed in seeds:
        x = seed / np.linalg.norm(seed)
        for _ in range(3):
            x = lu.solve(x)
            x = x / np.linalg.norm(x)
        cand = x - (x @ incoming_tangent) * incoming_tangent
        nrm = np.linalg.norm(cand)
        if nrm > 1e-8:
            psi = cand / nrm
            break
    if psi is None:
        raise BranchPointError("no independent null direction at the branch point")
    scale = max(1.0, np.abs(J).max())
    defect = np.abs(J @ psi).max() / scale
    if defect > null_tol:
        raise BranchPointError(
            f"null space is not two-dimensional within tolerance (defect {defect:.2e})"
        )
    return psi


# -- main driver --------------------------------------------------------------


def run(problem: ContinuationProblem, u0: np.ndarray, state: ContinuationState,
        writer=None, progress: Optional[Callable] = None,
        initial_tangent: Optional[np.ndarray] = None,
        correct_start: bool = True) -> Branch:
    """Trace the solution branch through ``u0``.

    The start is corrected with a fixed border chosen by the problem's
    start strategy, then the branch is traversed with secant prediction and
    bordered Newton correction.  After each accepted point the problem's
    ``on_accept`` hook runs (moving Poincare sections), monitors are
    recorded, events are tested and bounds are enforced.  With
    ``bi_direct`` both tangent orientations are explored; labels keep
    ascending across the two passes.

    ``correct_start=False`` takes ``u0`` as already on the manifold and
    requires ``initial_tangent``; branch-point restarts use this because
    every bordered system is singular exactly at a branch point.
    """
    u0 = np.asarray(u0, dtype=float)
    _check_square_plus_one(problem, u0)

    start_iters = 0
    if correct_start:
        border0 = _initial_border(problem)
        try:
            u_start, start_iters, _ = _correct(problem, u0, border0, u0,
                                               max_iter=max(CORRECTOR_MAX_ITER, 10))
        except ConvergenceError as exc:
            raise ConvergenceError(f"initial correction failed: {exc}") from exc
    else:
        if initial_tangent is None:
            raise ConfigError("correct_start=False requires an explicit initial tangent")
        u_start = u0.copy()

    problem.on_accept(u_start)
    if initial_tangent is not None:
        t0 = np.asarray(initial_tangent, dtype=float)
        t0 = t0 / np.linalg.norm(t0)
    else:
        t0 = nullspace_tangent(problem.jacobian(u_start), border0)

    branch = Branch()
    label_counter = [0]

    def emit(u, ptype, tangent, det_sign=0, iters=0):
        label_counter[0] += 1
        pt = BranchPoint(
            label=label_counter[0],
            ptype=ptype,
            u=u.copy(),
            monitors=problem.monitors(u),
            tangent=tangent.copy(),
            det_sign=det_sign,
            corrector_iters=iters,
        )
        branch.points.append(pt)
        if writer is not None:
            writer.write_point(problem, pt)
        if progress is not None:
            progress(pt)
        return pt

    emit(u_start, "EP", t0, iters=start_iters)

    terminations = []
    # reverse direction first so the run's last EP label ends the forward
    # (tangent-oriented) sweep, which restarts pick up by default
    directions = (-1.0, 1.0) if state.bi_direct else (1.0,)
    for direction in directions:
        problem.on_accept(u_start)  # re-anchor moving sections at the start
        _walk(problem, branch, state, u_start, direction * t0, emit)
        terminations.append(branch.termination)
    branch.termination = "; ".join(terminations)
    return branch


def _walk(problem, branch, state, u_start, t0, emit):
    u_prev = u_start
    t_prev = t0
    sign_prev, logdet_prev = 0, 0.0
    if problem.detect_bp:
        try:
            lu0 = lu_factor(bordered_matrix(problem.jacobian(u_start), t0))
            sign_prev, logdet_prev = det_sign_log(lu0)
        except ConvergenceError:
            pass  # starting exactly on a singular point (e.g. a BP restart)
    event_prev = [ev.fn(u_prev) for ev in problem.events]
    mon_prev = problem.monitors(u_prev)
    h = min(max(state.h, state.h_min), state.h_max)
    accepted = 0
    pending = None  # accepted point not yet emitted (may become the final EP)

    def flush(ptype="RO"):
        nonlocal pending
        if pending is not None:
            u, t, sign, iters = pending
            emit(u, ptype, t, det_sign=sign, iters=iters)
            pending = None

    branch.termination = "pt_max"
    while accepted < state.pt_max:
        u_pred = u_prev + h * t_prev
        try:
            u_new, iters, lu = _correct(problem, u_pred, t_prev, u_pred)
        except ConvergenceError:
            if h <= state.h_min * (1 + 1e-12):
                flush("EP")
                branch.termination = "corrector failure at h_min"
                return
            h = max(0.5 * h, state.h_min)
            continue

        step = u_new - u_prev
        nrm = np.linalg.norm(step)
        if nrm == 0.0:
            flush("EP")
            branch.termination = "stagnated"
            return
        t_new = step / nrm
        sign_new, logdet_new = (
            det_sign_log(lu) if (problem.detect_bp and lu is not None) else (0, 0.0)
        )
        mon_new = problem.monitors(u_new)

        # scalar-event sign changes between the previous and the new point
        event_new = [ev.fn(u_new) for ev in problem.events]
        for k, ev in enumerate(problem.events):
            va, vb = event_prev[k], event_new[k]
            if va is None or vb is None or va == 0.0 or np.sign(va) == np.sign(vb):
                continue
            try:
                u_ev, _, _ = locate_event(problem, u_prev, u_new, t_prev, ev.fn)
            except ConvergenceError as exc:
                branch.events.append(
                    {"type": ev.name, "status": "unlocated", "reason": str(exc),
                     "bracket": (u_prev.copy(), u_new.copy())}
                )
                continue
            flush("RO")
            pt = emit(u_ev, ev.name, t_prev, iters=0)
            branch.events.append({"type": ev.name, "status": "located", "label": pt.label})

        # branch points: determinant sign change of the bordered Jacobian
        if problem.detect_bp and sign_prev != 0 and sign_new != 0 and sign_new != sign_prev:
            try:
                scale = max(logdet_prev, logdet_new)
                u_bp, _ = detect_branch_point(problem, u_prev, u_new, t_prev,
                                              sign_prev, sign_new, scale)
                flush("RO")
                pt = emit(u_bp, "BP", t_prev, iters=0)
                branch.events.append({"type": "BP", "status": "located", "label": pt.label})
            except ConvergenceError as exc:
                branch.events.append(
                    {"type": "BP", "status": "unlocated", "reason": str(exc),
                     "bracket": (u_prev.copy(), u_new.copy())}
                )

        # fold annotation: first active parameter reverses along the branch
        if problem.active:
            col = problem.n_unknowns - len(problem.active)
            if t_prev[col] * t_new[col] < 0:
                branch.events.append(
                    {"type": "FO", "status": "annotated", "monitor": problem.active[0],
                     "near_label": branch.points[-1].label if branch.points else 0}
                )

        # monitor bounds terminate the direction with an EP at the bound:
        # trigger when the new point exits the closed interval from inside
        # (a start exactly on an edge counts as inside)
        bound_hit = None
        for name, interval in problem.bounds.items():
            lo, hi = interval
            va, vb = mon_prev.get(name), mon_new.get(name)
            if va is None or vb is None:
                continue
            inside_a = (lo is None or va >= lo) and (hi is None or va <= hi)
            if not inside_a:
                continue
            if lo is not None and vb < lo:
                bound_hit = (name, lo)
            elif hi is not None and vb > hi:
                bound_hit = (name, hi)
            if bound_hit:
                break
        if bound_hit is not None:
            name, edge = bound_hit
            if abs(mon_prev[name] - edge) <= 1e-12 * max(1.0, abs(edge)):
                u_ep = u_prev  # started exactly on the bound, stop there
            else:
                try:
                    u_ep, _, _ = locate_event(
                        problem, u_prev, u_new, t_prev,
                        lambda u: problem.monitors(u)[name] - edge,
                        value_tol=1e-9 * max(1.0, abs(edge)),
                    )
                except ConvergenceError:
                    u_ep = u_new
            # flush the pending point under its own reference section, then
            # re-anchor at the endpoint before emitting it
            flush("RO")
            problem.on_accept(u_ep)
            emit(u_ep, "EP", t_new, iters=iters)
            branch.termination = f"bound {name}={edge}"
            return

        # accept: emit the pending point while the moving sections are still
        # anchored at it, then advance the reference to the new point
        flush("RO")
        problem.on_accept(u_new)
        pending = (u_new, t_new, sign_new, iters)
        u_prev, t_prev = u_new, t_new
        sign_prev, logdet_prev = sign_new, logdet_new
        event_prev = event_new
        mon_prev = mon_new
        accepted += 1
        if iters <= FAST_ITERS:
            h = min(2.0 * h, state.h_max)

    flush("EP")
