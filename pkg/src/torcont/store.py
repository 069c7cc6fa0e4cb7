"""Persistence of continuation runs and the four restart pathways.

One directory per run inside a store directory:

    <store>/<run_id>/meta.json        run-level header (system, problem kind,
                                      released names, monitor column order)
    <store>/<run_id>/bd.tsv           bifurcation-data table, one row per
                                      labeled point: label, type, monitors
    <store>/<run_id>/sol_<label>.json labeled solution snapshot

Everything is exact-decimal text: floats are written with ``repr``, which
round-trips IEEE doubles bit-exactly through JSON.  Formats carry a version
field; a mismatch raises :class:`FormatError` instead of misreading.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import colloc, contin, po as po_mod, torus as torus_mod
from .errors import ConfigError, FormatError, InputError, NotFoundError
from .fourier import dft_matrix
from .odesys import VectorField, get_builtin

FORMAT_VERSION = 1
BD_HEADER = "# torcont bd v1"


def _f(x) -> str:
    return repr(float(x))


def run_dir(store: str, run_id: str) -> str:
    return os.path.join(store, run_id)


# -- snapshot encoding ---------------------------------------------------------


def _system_header(vf: VectorField) -> dict:
    return {
        "name": vf.name,
        "dim_state": vf.dim_state,
        "param_names": list(vf.param_names),
        "autonomous": vf.autonomous,
        "forcing_param": vf.forcing_param,
    }


def torus_snapshot(vf: VectorField, sol: torus_mod.TorusSolution) -> dict:
    ref = sol.reference
    return {
        "format": "torcont-solution",
        "version": FORMAT_VERSION,
        "kind": "torus",
        "system": _system_header(vf),
        "mesh": {"ntst": sol.mesh.ntst, "degree": sol.mesh.degree},
        "fourier_modes": sol.N,
        "x_seg": sol.x_seg.tolist(),
        "T0": sol.T0,
        "T": sol.T,
        "p": sol.p.tolist(),
        "om1": sol.om1,
        "om2": sol.om2,
        "varrho": sol.varrho,
        "reference": {
            "v00": ref.v00.tolist(),
            "vphi": ref.vphi.tolist(),
            "vt": None if ref.vt is None else ref.vt.tolist(),
        },
    }


def po_snapshot(vf: VectorField, orbit: po_mod.PeriodicOrbit) -> dict:
    return {
        "format": "torcont-solution",
        "version": FORMAT_VERSION,
        "kind": "po",
        "system": _system_header(vf),
        "mesh": {"ntst": orbit.traj.mesh.ntst, "degree": orbit.traj.mesh.degree},
        "x_bp": orbit.traj.x_bp.tolist(),
        "T": orbit.traj.duration,
        "t_offset": orbit.traj.t_offset,
        "p": orbit.p.tolist(),
        "reference": {
            "x0": orbit.reference.x0.tolist(),
            "f0": orbit.reference.f0.tolist(),
        },
    }


def _check_format(doc: dict, path: str):
    if doc.get("format") != "torcont-solution":
        raise FormatError(f"{path}: not a torcont solution file")
    if doc.get("version") != FORMAT_VERSION:
        raise FormatError(
            f"{path}: format version {doc.get('version')} not supported "
            f"(this build reads version {FORMAT_VERSION})"
        )


def resolve_field(doc: dict, vf: Optional[VectorField]) -> VectorField:
    """Vector field for a snapshot: the given one, or the named builtin."""
    sysinfo = doc["system"]
    if vf is None:
        if sysinfo.get("name") is None:
            raise ConfigError(
                "snapshot was produced by an unnamed user-defined system; "
                "pass its VectorField explicitly to restart"
            )
        vf = get_builtin(sysinfo["name"])
    if vf.dim_state != sysinfo["dim_state"] or list(vf.param_names) != sysinfo["param_names"]:
        raise ConfigError("vector field does not match the snapshot's system header")
    return vf


def solution_from_snapshot(doc: dict, vf: Optional[VectorField] = None):
    """Rebuild a TorusSolution or PeriodicOrbit (with its field) from a dict."""
    vf = resolve_field(doc, vf)
    mesh = colloc.build_mesh(doc["mesh"]["ntst"], doc["mesh"]["degree"])
    if doc["kind"] == "torus":
        ref = doc["reference"]
        sol = torus_mod.TorusSolution(
            mesh=mesh,
            coupling=dft_matrix(doc["fourier_modes"]),
            x_seg=np.asarray(doc["x_seg"], dtype=float),
            T0=doc["T0"],
            T=doc["T"],
            p=np.asarray(doc["p"], dtype=float),
            om1=doc["om1"],
            om2=doc["om2"],
            varrho=doc["varrho"],
            reference=torus_mod.ReferenceSection(
                v00=np.asarray(ref["v00"], dtype=float),
                vphi=np.asarray(ref["vphi"], dtype=float),
                vt=None if ref["vt"] is None else np.asarray(ref["vt"], dtype=float),
            ),
        )
        return vf, sol
    if doc["kind"] == "po":
        traj = colloc.Trajectory(
            mesh=mesh,
            x_bp=np.asarray(doc["x_bp"], dtype=float),
            duration=doc["T"],
            t_offset=doc.get("t_offset", 0.0),
        )
        ref = doc["reference"]
        orbit = po_mod.PeriodicOrbit(
            traj=traj,
            p=np.asarray(doc["p"], dtype=float),
            reference=po_mod.PoReference(
                x0=np.asarray(ref["x0"], dtype=float),
                f0=np.asarray(ref["f0"], dtype=float),
            ),
        )
        return vf, orbit
    raise FormatError(f"unknown solution kind {doc['kind']!r}")


# -- run writer ----------------------------------------------------------------


@dataclass
class RunWriter:
    """Streams labeled points of one continuation run to disk."""

    store: str
    run_id: str
    vf: VectorField
    kind: str  # "po" | "torus"
    monitor_names: list
    released: list
    extras: dict = field(default_factory=dict)
    _dir: str = ""

    def __post_init__(self):
        self._dir = run_dir(self.store, self.run_id)
        os.makedirs(self._dir, exist_ok=True)
        meta = {
            "format": "torcont-run",
            "version": FORMAT_VERSION,
            "run_id": self.run_id,
            "kind": self.kind,
            "system": _system_header(self.vf),
            "monitor_names": list(self.monitor_names),
            "released": list(self.released),
        }
        meta.update(self.extras)
        with open(os.path.join(self._dir, "meta.json"), "w") as fh:
            json.dump(meta, fh, indent=1)
        with open(os.path.join(self._dir, "bd.tsv"), "w") as fh:
            fh.write(BD_HEADER + "\n")
            fh.write("\t".join(["label", "type"] + list(self.monitor_names)) + "\n")

    def write_point(self, problem: contin.ContinuationProblem, pt: contin.BranchPoint):
        with open(os.path.join(self._dir, "bd.tsv"), "a") as fh:
            cells = [str(pt.label), pt.ptype]
            cells += [_f(pt.monitors[name]) for name in self.monitor_names]
            fh.write("\t".join(cells) + "\n")
        sol = problem.embed(pt.u)
        if self.kind == "torus":
            doc = torus_snapshot(self.vf, sol)
        else:
            doc = po_snapshot(self.vf, sol)
        doc["label"] = pt.label
        doc["point_type"] = pt.ptype
        doc["released"] = list(problem.released)
        doc["active"] = list(problem.active)
        doc["tangent"] = pt.tangent.tolist()
        doc["monitors"] = {k: float(v) for k, v in pt.monitors.items()}
        path = os.path.join(self._dir, f"sol_{pt.label:06d}.json")
        with open(path, "w") as fh:
            json.dump(doc, fh)


# -- reading -------------------------------------------------------------------


@dataclass
class BdTable:
    run_id: str
    labels: list
    types: list
    columns: dict  # name -> list of floats

    def labels_of_type(self, ptype: str):
        return [lab for lab, t in zip(self.labels, self.types) if t == ptype]


def read_meta(store: str, run_id: str) -> dict:
    path = os.path.join(run_dir(store, run_id), "meta.json")
    if not os.path.exists(path):
        raise NotFoundError(f"run {run_id!r} not found in store {store!r}")
    with open(path) as fh:
        meta = json.load(fh)
    if meta.get("format") != "torcont-run" or meta.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported run format/version")
    return meta


def read_bd(store: str, run_id: str) -> BdTable:
    path = os.path.join(run_dir(store, run_id), "bd.tsv")
    if not os.path.exists(path):
        raise NotFoundError(f"run {run_id!r} has no bd table in store {store!r}")
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != BD_HEADER:
            raise FormatError(f"{path}: unsupported bd header {header!r}")
        names = fh.readline().rstrip("\n").split("\t")
        labels, types = [], []
        columns = {name: [] for name in names[2:]}
        for line in fh:
            cells = line.rstrip("\n").split("\t")
            if len(cells) != len(names):
                raise FormatError(f"{path}: malformed row {line!r}")
            labels.append(int(cells[0]))
            types.append(cells[1])
            for name, cell in zip(names[2:], cells[2:]):
                columns[name].append(float(cell))
    return BdTable(run_id=run_id, labels=labels, types=types, columns=columns)


def read_solution(store: str, run_id: str, label: int, vf: Optional[VectorField] = None):
    """Load a labeled snapshot; returns (doc, vf, solution object)."""
    path = os.path.join(run_dir(store, run_id), f"sol_{int(label):06d}.json")
    if not os.path.exists(path):
        raise NotFoundError(f"label {label} not found in run {run_id!r}")
    with open(path) as fh:
        doc = json.load(fh)
    _check_format(doc, path)
    vf, sol = solution_from_snapshot(doc, vf)
    return doc, vf, sol


@dataclass
class RunRecord:
    """One persisted continuation run: header, bd table, solution access."""

    store: str
    run_id: str
    meta: dict
    bd: BdTable

    def solution(self, label, vf: Optional[VectorField] = None):
        """Load the snapshot behind a bd label (or a label spec)."""
        return read_solution(self.store, self.run_id, pick_label(self.bd, label), vf)

    def labels_of_type(self, ptype: str):
        return self.bd.labels_of_type(ptype)


def load_run(store: str, run_id: str) -> RunRecord:
    """Open a run directory for reading (header + bd table)."""
    return RunRecord(store=store, run_id=run_id, meta=read_meta(store, run_id),
                     bd=read_bd(store, run_id))


def pick_label(bd: BdTable, spec) -> int:
    """Resolve a label spec: an int, or {"type": ..., "pick": first|last|index}."""
    if isinstance(spec, (int, np.integer)):
        if int(spec) not in bd.labels:
            raise NotFoundError(f"label {spec} not in run {bd.run_id!r}")
        return int(spec)
    if isinstance(spec, dict) and "type" in spec:
        labs = bd.labels_of_type(spec["type"])
        if not labs:
            raise NotFoundError(f"run {bd.run_id!r} has no {spec['type']} points")
        pick = spec.get("pick", "first")
        if pick == "first":
            return labs[0]
        if pick == "last":
            return labs[-1]
        try:
            return labs[int(pick)]
        except (ValueError, IndexError):
            raise NotFoundError(f"cannot pick {pick!r} from {len(labs)} labels") from None
    raise ConfigError(f"invalid label spec {spec!r}")


def list_runs(store: str):
    if not os.path.isdir(store):
        raise NotFoundError(f"store directory {store!r} does not exist")
    out = []
    for name in sorted(os.listdir(store)):
        if os.path.exists(os.path.join(store, name, "meta.json")):
            out.append(name)
    return out


# -- restart pathways ----------------------------------------------------------


def _map_tangent(doc: dict, X: int, old_released, new_active, n_unknowns):
    """Map a stored tangent onto a (possibly different) released set."""
    t_old = np.asarray(doc["tangent"], dtype=float)
    old_active = doc.get("active", old_released)[: len(t_old) - X - 2]
    seed = np.zeros(n_unknowns)
    k = min(X + 2, t_old.size)
    seed[:k] = t_old[:k]
    for i, name in enumerate(new_active):
        if name in old_active:
            j = old_active.index(name)
            if X + 2 + j < t_old.size:
                seed[X + 2 + i] = t_old[X + 2 + j]
    return seed


def restart_tor2tor(
    store: str,
    run_id: str,
    label,
    released=None,
    vf: Optional[VectorField] = None,
    bounds: Optional[dict] = None,
    detect_bp: bool = True,
    N: Optional[int] = None,
    ntst: Optional[int] = None,
    degree: Optional[int] = None,
):
    """Continue tori from a saved torus solution; returns (problem, u0).

    The discretization is rebuilt identically unless N/ntst/degree are
    overridden, in which case the saved solution is interpolated onto the
    finer grid (trigonometric in the angle, Lagrange in time) and
    re-converged as an isolated square problem before continuation.
    """
    bd = read_bd(store, run_id)
    lab = pick_label(bd, label)
    doc, vf, sol = read_solution(store, run_id, lab, vf)
    if doc["kind"] != "torus":
        raise ConfigError(f"label {lab} of run {run_id!r} is a {doc['kind']}, not a torus")
    released = list(released) if released is not None else list(doc["released"])

    refined = any(v is not None for v in (N, ntst, degree))
    if refined:
        sol = refine_torus(vf, sol, N=N, ntst=ntst, degree=degree)

    problem, u0 = torus_mod.continuation_problem(
        vf, sol, released, bounds=bounds, detect_bp=detect_bp)
    X = sol.x_seg.size
    if not refined and doc.get("tangent") is not None and len(doc["tangent"]) >= X + 2:
        seed = _map_tangent(doc, X, doc["released"], problem.active, problem.n_unknowns)
        if np.linalg.norm(seed) > 0:
            problem.start_strategy = ("seed", seed)
    return problem, u0


def refine_torus(vf, sol, N=None, ntst=None, degree=None):
    """Interpolate a torus onto a finer discretization and re-converge it."""
    from .fourier import trig_interpolate

    N_new = N or sol.N
    mesh_new = colloc.build_mesh(ntst or sol.mesh.ntst, degree or sol.mesh.degree)
    cm_new = dft_matrix(N_new)
    tb = sol.T0 + sol.T * mesh_new.basepoints
    n = sol.dim_state
    x_new = np.empty((cm_new.n_seg, mesh_new.n_base, n))
    for i, t in enumerate(tb):
        circle = torus_mod.eval_circle(sol, t)  # (old n_seg, n)
        x_new[:, i, :] = trig_interpolate(sol.coupling, circle, cm_new.angles)
    guess = torus_mod.TorusSolution(
        mesh=mesh_new, coupling=cm_new, x_seg=x_new, T0=sol.T0, T=sol.T,
        p=sol.p.copy(), om1=sol.om1, om2=sol.om2, varrho=sol.varrho, reference=None,
    )
    guess = torus_mod.update_reference(vf, guess)
    return torus_mod.solve_fixed(vf, guess)


def restart_TR2tor(
    store: str,
    run_id: str,
    label,
    released,
    N: int = 10,
    eps: Optional[float] = None,
    vf: Optional[VectorField] = None,
    bounds: Optional[dict] = None,
    detect_bp: bool = False,
):
    """Torus continuation seeded at a TR periodic orbit; returns (problem, u0).

    Floquet data is recomputed from the stored orbit; the start correction
    is bordered with the torus-function perturbation direction.
    """
    if eps is not None and eps == 0.0:
        raise InputError("eps = 0 gives the degenerate torus; use a positive eps "
                         "(or omit it for the amplitude-scaled default)")
    bd = read_bd(store, run_id)
    lab = pick_label(bd, label if label is not None else {"type": "TR", "pick": "first"})
    doc, vf, orbit = read_solution(store, run_id, lab, vf)
    if doc["kind"] != "po":
        raise ConfigError(f"label {lab} of run {run_id!r} is a {doc['kind']}, not a periodic orbit")
    if doc.get("point_type") != "TR":
        raise ConfigError(f"label {lab} of run {run_id!r} is type {doc.get('point_type')!r}, not TR")
    floq = po_mod.floquet(vf, orbit)
    if floq.tr_eigvec is None:
        raise ConfigError(f"no complex multiplier pair at label {lab}; cannot seed a torus")
    sol = torus_mod.init_from_TR(vf, orbit, floq, N=N, eps=eps)
    problem, u0 = torus_mod.continuation_problem(
        vf, sol, list(released), bounds=bounds, detect_bp=detect_bp)
    seed = np.concatenate([torus_mod.tr_perturbation_direction(sol),
                           np.zeros(problem.n_unknowns - sol.x_seg.size)])
    problem.start_strategy = ("seed", seed)
    return problem, u0


def restart_BP2tor(
    store: str,
    run_id: str,
    label,
    vf: Optional[VectorField] = None,
    bounds: Optional[dict] = None,
    detect_bp: bool = True,
):
    """Secondary-branch continuation through a stored torus branch point.

    Returns (problem, u0, switched_tangent); run with ``correct_start=False``
    and ``initial_tangent=switched_tangent`` (the driver below does this).
    """
    bd = read_bd(store, run_id)
    lab = pick_label(bd, label if label is not None else {"type": "BP", "pick": "first"})
    doc, vf, sol = read_solution(store, run_id, lab, vf)
    if doc["kind"] != "torus":
        raise ConfigError(f"label {lab} of run {run_id!r} is a {doc['kind']}, not a torus")
    if doc.get("point_type") != "BP":
        raise ConfigError(f"label {lab} of run {run_id!r} is type {doc.get('point_type')!r}, not BP")
    released = list(doc["released"])
    problem, u0 = torus_mod.continuation_problem(
        vf, sol, released, bounds=bounds, detect_bp=detect_bp)
    incoming = np.asarray(doc["tangent"], dtype=float)
    if incoming.size != problem.n_unknowns:
        raise FormatError("stored tangent does not match the rebuilt problem layout")
    psi = contin.switch_branch(problem, u0, incoming)
    return problem, u0, psi


def restart_isol2tor(
    samples_path: str,
    released,
    vf: Optional[VectorField] = None,
    ntst: int = 20,
    degree: int = 4,
    bounds: Optional[dict] = None,
    detect_bp: bool = False,
):
    """File-backed twin of ``torus.init_from_samples``; returns (problem, u0).

    The samples file is JSON: {"format": "torcont-samples", "version": 1,
    "system": <name or header>, "t_grid": [...], "samples": [[[...]]] with
    shape (segments, times, states), "params": {name: value, ...}}.
    """
    if not os.path.exists(samples_path):
        raise NotFoundError(f"samples file {samples_path!r} does not exist")
    with open(samples_path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "torcont-samples" or doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"{samples_path}: not a torcont samples file (or wrong version)")
    if vf is None:
        sysinfo = doc.get("system")
        name = sysinfo if isinstance(sysinfo, str) else (sysinfo or {}).get("name")
        if name is None:
            raise ConfigError("samples file names no builtin system; pass a VectorField")
        vf = get_builtin(name)
    sol = torus_mod.init_from_samples(
        vf,
        np.asarray(doc["t_grid"], dtype=float),
        np.asarray(doc["samples"], dtype=float),
        doc["params"],
        mesh=colloc.build_mesh(ntst, degree),
    )
    problem, u0 = torus_mod.continuation_problem(
        vf, sol, list(released), bounds=bounds, detect_bp=detect_bp)
    return problem, u0


def write_samples_file(path: str, vf: VectorField, t_grid, samples, params: dict):
    doc = {
        "format": "torcont-samples",
        "version": FORMAT_VERSION,
        "system": _system_header(vf),
        "t_grid": np.asarray(t_grid, dtype=float).tolist(),
        "samples": np.asarray(samples, dtype=float).tolist(),
        "params": {k: float(v) for k, v in params.items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
