"""Continuation engine on algebraic normal forms and textbook manifolds."""

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import brentq

from torcont import contin
from torcont.errors import BranchPointError, ConfigError, ConvergenceError


def algebraic_problem(residual, jac, names, released=None, **kw):
    names = list(names)
    released = released if released is not None else [names[-1]]
    return contin.ContinuationProblem(
        n_unknowns=len(names),
        residual=lambda u: np.atleast_1d(residual(u)),
        jacobian=lambda u: sp.csr_matrix(np.atleast_2d(jac(u))),
        monitors=lambda u: dict(zip(names, (float(v) for v in u))),
        monitor_names=names,
        released=released,
        active=released,
        embed=lambda u: u,
        kind="algebraic",
        **kw,
    )


def circle_problem(**kw):
    return algebraic_problem(
        lambda u: u[0] ** 2 + u[1] ** 2 - 1.0,
        lambda u: [[2 * u[0], 2 * u[1]]],
        names=["x", "y"],
        **kw,
    )


class TestCircle:
    def test_traverses_full_circle(self):
        problem = circle_problem()
        state = contin.ContinuationState(h=0.1, h_min=1e-3, h_max=0.2, pt_max=100,
                                         bi_direct=False)
        branch = contin.run(problem, np.array([1.0, 0.0]), state)
        pts = np.array([pt.u for pt in branch.points])
        assert np.abs(pts[:, 0] ** 2 + pts[:, 1] ** 2 - 1).max() < 1e-8
        angles = np.unwrap(np.arctan2(pts[:, 1], pts[:, 0]))
        swept = np.abs(angles - angles[0]).max()
        assert swept > 2 * np.pi  # went all the way around
        iters = [pt.corrector_iters for pt in branch.points if pt.ptype == "RO"]
        assert max(iters) <= 4
        # the released parameter y reverses at the circle's top and bottom:
        # folds are annotated (not localized, not labeled)
        folds = [ev for ev in branch.events if ev["type"] == "FO"]
        assert len(folds) >= 2
        assert not branch.by_type("FO")  # no bd rows for folds

    def test_deterministic_repeat(self):
        runs = []
        for _ in range(2):
            problem = circle_problem()
            state = contin.ContinuationState(h=0.07, h_max=0.15, pt_max=40, bi_direct=True)
            branch = contin.run(problem, np.array([1.0, 0.0]), state)
            runs.append(np.array([pt.u for pt in branch.points]))
        assert runs[0].shape == runs[1].shape
        assert np.array_equal(runs[0], runs[1])

    def test_bound_terminates_with_ep_at_bound(self):
        problem = circle_problem(bounds={"y": (None, 0.5)})
        state = contin.ContinuationState(h=0.1, h_max=0.15, pt_max=100, bi_direct=False)
        branch = contin.run(problem, np.array([1.0, 0.0]), state)
        last = branch.points[-1]
        assert last.ptype == "EP"
        if "bound" in branch.termination:
            assert abs(last.monitors["y"] - 0.5) < 1e-7

    def test_over_determined_rejected_before_newton(self):
        calls = {"n": 0}

        def res(u):
            calls["n"] += 1
            return np.array([u[0] ** 2 + u[1] ** 2 - 1.0, u[0] - 0.5])

        problem = algebraic_problem(
            lambda u: res(u),
            lambda u: [[2 * u[0], 2 * u[1]], [1.0, 0.0]],
            names=["x", "y"],
            released=[],
        )
        with pytest.raises(ConfigError, match="over-determined"):
            contin.run(problem, np.array([1.0, 0.0]), contin.ContinuationState())

    def test_start_failure_reported(self):
        problem = algebraic_problem(
            lambda u: u[0] ** 2 + u[1] ** 2 + 1.0,  # empty zero set
            lambda u: [[2 * u[0], 2 * u[1]]],
            names=["x", "y"],
        )
        with pytest.raises(ConvergenceError, match="initial correction"):
            contin.run(problem, np.array([1.0, 0.0]), contin.ContinuationState())


def pitchfork_problem(**kw):
    # equilibria of x' = lam x - x^3; unknowns (x, lam), released lam
    return algebraic_problem(
        lambda u: u[1] * u[0] - u[0] ** 3,
        lambda u: [[u[1] - 3 * u[0] ** 2, u[0]]],
        names=["x", "lam"],
        detect_bp=True,
        **kw,
    )


def transcritical_problem(**kw):
    return algebraic_problem(
        lambda u: u[1] * u[0] - u[0] ** 2,
        lambda u: [[u[1] - 2 * u[0], u[0]]],
        names=["x", "lam"],
        detect_bp=True,
        **kw,
    )


class TestBranchPoints:
    @pytest.mark.parametrize("make,loc", [(pitchfork_problem, 0.0),
                                          (transcritical_problem, 0.0)])
    def test_bp_detected_at_origin(self, make, loc):
        problem = make()
        state = contin.ContinuationState(h=0.12, h_max=0.25, pt_max=30, bi_direct=False)
        branch = contin.run(problem, np.array([0.0, -1.0]), state)
        bps = branch.by_type("BP")
        assert len(bps) >= 1
        assert abs(bps[0].monitors["x"] - 0.0) < 1e-6
        assert abs(bps[0].monitors["lam"] - loc) < 1e-6

    def test_pitchfork_switch_leaves_trivial_branch(self):
        problem = pitchfork_problem()
        state = contin.ContinuationState(h=0.12, h_max=0.25, pt_max=30, bi_direct=False)
        branch = contin.run(problem, np.array([0.0, -1.0]), state)
        bp = branch.by_type("BP")[0]
        psi = contin.switch_branch(problem, bp.u, bp.tangent)
        assert abs(psi @ bp.tangent) < 1e-8
        state2 = contin.ContinuationState(h=0.05, h_max=0.1, pt_max=10, bi_direct=False)
        branch2 = contin.run(problem, bp.u, state2, initial_tangent=psi)
        xs = [abs(pt.monitors["x"]) for pt in branch2.points[1:]]
        assert max(xs) > 1e-2  # immediately off the trivial branch

    def test_switch_requires_two_dimensional_null_space(self):
        problem = circle_problem()
        u = np.array([1.0, 0.0])
        with pytest.raises(BranchPointError):
            contin.switch_branch(problem, u, np.array([0.0, 1.0]))


class TestLocateEvent:
    def test_linear_crossing_converges_fast(self):
        problem = circle_problem()
        state = contin.ContinuationState(h=0.05, h_max=0.1, pt_max=60, bi_direct=False)
        branch = contin.run(problem, np.array([1.0, 0.0]), state)
        pts = branch.points
        target = 0.37

        def test_fn(u):
            return u[1] - target

        for a, b in zip(pts, pts[1:]):
            va, vb = test_fn(a.u), test_fn(b.u)
            if va * vb < 0:
                u_loc, val, iters = contin.locate_event(problem, a.u, b.u, a.tangent, test_fn)
                assert iters <= 40
                assert abs(u_loc[1] - target) < 1e-6
                break
        else:
            pytest.fail("no bracket found")

    def test_monotone_cubic_matches_scalar_root_oracle(self):
        problem = circle_problem()
        state = contin.ContinuationState(h=0.05, h_max=0.1, pt_max=60, bi_direct=False)
        branch = contin.run(problem, np.array([1.0, 0.0]), state)
        pts = branch.points
        c = 0.4142

        def g(y):
            return (y - c) ** 3 + 0.2 * (y - c)

        def test_fn(u):
            return g(u[1])

        root = brentq(g, -1, 1, xtol=1e-14)
        for a, b in zip(pts, pts[1:]):
            if test_fn(a.u) * test_fn(b.u) < 0:
                u_loc, _, _ = contin.locate_event(
                    problem, a.u, b.u, a.tangent, test_fn,
                    value_tol=1e-14, bracket_tol=1e-11,
                )
                assert abs(u_loc[1] - root) < 1e-8
                break
        else:
            pytest.fail("no bracket found")

    def test_requires_sign_change(self):
        problem = circle_problem()
        with pytest.raises(ConvergenceError):
            contin.locate_event(problem, np.array([1.0, 0.0]), np.array([0.9, 0.43]),
                                np.array([0.0, 1.0]), lambda u: 1.0)

    def test_bracket_lost_when_test_function_vanishes(self):
        # a test function that becomes undefined near the crossing: bisection
        # must report the lost bracket instead of fabricating a root
        problem = circle_problem()
        state = contin.ContinuationState(h=0.05, h_max=0.1, pt_max=60, bi_direct=False)
        branch = contin.run(problem, np.array([1.0, 0.0]), state)
        pts = branch.points

        def test_fn(u):
            if 0.365 < u[1] < 0.375:
                return None  # pair disappears inside the bracket
            return u[1] - 0.37

        for a, b in zip(pts, pts[1:]):
            va, vb = test_fn(a.u), test_fn(b.u)
            if va is not None and vb is not None and va * vb < 0:
                with pytest.raises(ConvergenceError, match="bracket lost"):
                    contin.locate_event(problem, a.u, b.u, a.tangent, test_fn)
                break
        else:
            pytest.fail("no usable bracket found")

    def test_run_records_unlocated_event_with_bracket(self):
        problem = circle_problem()
        problem.events = [contin.EventSpec(
            name="ZZ",
            fn=lambda u: None if 0.365 < u[1] < 0.375 else u[1] - 0.37,
        )]
        state = contin.ContinuationState(h=0.05, h_max=0.1, pt_max=60, bi_direct=False)
        branch = contin.run(problem, np.array([1.0, 0.0]), state)
        unloc = [ev for ev in branch.events
                 if ev["type"] == "ZZ" and ev["status"] == "unlocated"]
        assert unloc
        ua, ub = unloc[0]["bracket"]
        assert ua.shape == (2,) and ub.shape == (2,)
        assert not branch.by_type("ZZ")  # nothing fabricated in the bd rows


class TestStepControl:
    def test_fast_corrector_doubles_step_until_h_max(self):
        problem = circle_problem()
        state = contin.ContinuationState(h=0.01, h_min=1e-3, h_max=0.5, pt_max=25,
                                         bi_direct=False)
        branch = contin.run(problem, np.array([1.0, 0.0]), state)
        pts = branch.points
        gaps = [np.linalg.norm(b.u - a.u) for a, b in zip(pts, pts[1:])]
        assert max(gaps) > 0.2  # grew well beyond the initial h
        assert all(g <= 2 * 0.5 + 1e-9 for g in gaps)

    def test_consecutive_points_bounded_by_h_max(self):
        problem = circle_problem()
        state = contin.ContinuationState(h=0.1, h_max=0.3, pt_max=50, bi_direct=True)
        branch = contin.run(problem, np.array([1.0, 0.0]), state)
        # manifold consistency: every accepted point satisfies the residual
        for pt in branch.points:
            assert abs(problem.residual(pt.u)).max() < 1e-8
