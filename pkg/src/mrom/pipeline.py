"""Offline/online stages shared by the command line and the tests."""

from __future__ import annotations

import inspect
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mrom import archive as ar
from mrom.cases import CASES, CaseSpec
from mrom.errors import AlignmentError, ConfigError
from mrom.metrics import FieldComparison, extract_slice, field_values, relative_discrepancy
from mrom.reference import ReferenceSpace, Snapshot, SnapshotMatrix, assemble_snapshots, energy_table, pod, stack_state
from mrom.rom import ApgConfig, RomSolver
from mrom.sph import FomSolver, kinetic_energy, max_density_deviation
from mrom.spline import SplineBasis, build_spline_basis

log = logging.getLogger(__name__)

SPEC_OVERRIDES = ("Ma", "delta", "chi", "xi_shift", "cfl", "relax_steps", "tau", "ghost_normal",
                  "wall_continuity")


def make_case(name: str, params: dict | None = None) -> CaseSpec:
    """Case spec from its factory arguments plus field overrides."""
    if name not in CASES:
        raise ConfigError(f"unknown case {name!r}; expected one of {sorted(CASES)}")
    params = dict(params or {})
    factory = CASES[name]
    accepted = set(inspect.signature(factory).parameters)
    args = {k: params.pop(k) for k in list(params) if k in accepted}
    overrides = {k: params.pop(k) for k in list(params) if k in SPEC_OVERRIDES}
    if params:
        raise ConfigError(f"parameters {sorted(params)} do not apply to case {name!r}")
    if "band" in args:
        args["band"] = tuple(args["band"])
    try:
        spec = factory(**args)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return spec.with_overrides(**overrides) if overrides else spec


@dataclass
class FomRun:
    snapshots: list[Snapshot]
    log_rows: list[tuple]
    x0: np.ndarray
    spec: CaseSpec
    flagged_steps: list[int] = field(default_factory=list)

    def to_archive(self) -> ar.SnapshotArchive:
        return snapshots_archive(self.snapshots, self.x0, self.spec)


def snapshots_archive(snaps: list[Snapshot], x0: np.ndarray, spec: CaseSpec) -> ar.SnapshotArchive:
    N = len(x0)
    S = np.column_stack([s.state for s in snaps]) if snaps else np.empty((3 * N, 0))
    pos = np.stack([s.x for s in snaps]) if snaps else np.empty((0, N, 2))
    return ar.SnapshotArchive(x0, S, spec.dx, spec.h, np.array([s.t for s in snaps]), pos)


def archive_snapshots(arc: ar.SnapshotArchive) -> list[Snapshot]:
    if arc.positions is None or arc.times is None:
        raise AlignmentError("archive lacks the times/positions trailer needed for reference mapping")
    out = []
    for k in range(arc.n_snapshots):
        b = arc.S[:, k].reshape(-1, 3)
        out.append(Snapshot(k, float(arc.times[k]), arc.positions[k], b[:, 0].copy(), b[:, 1:].copy()))
    return out


def run_fom(spec: CaseSpec, n_steps: int | None = None, include_initial: bool = False) -> FomRun:
    """Run the full-order model, sampling every ``spec.snapshot_interval`` steps."""
    model = spec.model()
    ps = spec.initial_particles()
    solver = FomSolver(ps, spec.geometry, model, spec.dt)
    x0 = solver.ps.x[solver.ps.fluid].copy()
    snaps = [Snapshot.of(solver.ps, 0, solver.t)] if include_initial else []
    rows = []
    t_wall = time.perf_counter()

    def record(s: FomSolver):
        rows.append((s.step_count, s.t, max_density_deviation(s.ps, model.rho0), kinetic_energy(s.ps),
                     time.perf_counter() - t_wall))
        if s.step_count % spec.snapshot_interval == 0:
            snaps.append(Snapshot.of(s.ps, s.step_count, s.t))

    solver.run(spec.n_steps if n_steps is None else n_steps, callback=record)
    return FomRun(snaps, rows, x0, spec, solver.flagged_steps)


@dataclass
class Training:
    basis: object
    spline: SplineBasis
    ref: ReferenceSpace
    reference: SnapshotMatrix
    lagrangian: SnapshotMatrix

    def energy_rows(self, M_max: int = 50) -> list[tuple[int, float, float]]:
        er = energy_table(self.reference, M_max)
        el = energy_table(self.lagrangian, M_max)
        return [(int(m), float(a), float(b)) for (m, a), b in zip(er, el[:, 1])]


def train(archives: list[ar.SnapshotArchive], spec: CaseSpec, M: int, k: int = 3, weight: str = "fixed",
          workers: int = 1) -> Training:
    """Reference snapshots, POD basis and spline fit from one or more FOM archives."""
    if not archives:
        raise ConfigError("training needs at least one archive")
    N = archives[0].n_particles
    if any(a.n_particles != N for a in archives):
        raise AlignmentError("training archives have different particle counts")
    first = archives[0]
    ref = ReferenceSpace(first.x_G, spec.geometry, first.dx, first.h)
    refs, lags = [], []
    for arc in archives:
        R, L = assemble_snapshots(archive_snapshots(arc), ref, 1, weight)
        refs.append(R)
        lags.append(L)
    R, L = SnapshotMatrix.hstack(refs), SnapshotMatrix.hstack(lags)
    if R.n_snapshots == 0:
        raise ConfigError("training archives hold no snapshots")
    M = min(M, R.n_snapshots)
    basis = pod(R, M)
    return Training(basis, build_spline_basis(basis, ref, k, workers), ref, R, L)


def run_rom(spec: CaseSpec, spline: SplineBasis, projection: str = "gpod", apg: ApgConfig | None = None,
            block_scaling: bool = False, n_steps: int | None = None,
            include_initial: bool = False) -> tuple[list[Snapshot], np.ndarray]:
    """Reduced run from the case initial condition; returns sampled snapshots and ``x0``."""
    model = spec.model()
    ps = spec.initial_particles()
    f = ps.fluid
    rom = RomSolver(spline, ps, spec.geometry, model, spec.dt, projection,
                    apg if apg is not None else ApgConfig(tau=spec.tau), block_scaling)
    rom.initialise(ps.x[f], stack_state(ps.rho[f], ps.u[f]))
    snaps = []

    def record(r: RomSolver):
        q = r.reconstruct()
        snaps.append(Snapshot.of(q, r.step_count, r.state.t))

    if include_initial:
        record(rom)
    for _ in range(spec.n_steps if n_steps is None else n_steps):
        rom.step()
        if rom.step_count % spec.snapshot_interval == 0:
            record(rom)
    return snaps, ps.x[f].copy()


def check_aligned(fom: ar.SnapshotArchive, rom: ar.SnapshotArchive, label: str) -> None:
    if fom.n_particles != rom.n_particles:
        raise AlignmentError(f"{label}: {rom.n_particles} particles vs {fom.n_particles} in the FOM archive")
    if fom.times is None or rom.times is None:
        raise AlignmentError(f"{label}: archives need sample times to be compared")
    if fom.times.shape != rom.times.shape or not np.allclose(fom.times, rom.times, rtol=0, atol=1e-9):
        raise AlignmentError(f"{label}: sample times differ from the FOM archive")


def compare_archives(fom: ar.SnapshotArchive, rom: ar.SnapshotArchive, field_name: str, rho0: float,
                     c0: float) -> FieldComparison:
    """Particle-wise relative discrepancy at every shared sample time."""
    check_aligned(fom, rom, "rom")
    vals = []
    for k in range(fom.n_snapshots):
        a = fom.S[:, k].reshape(-1, 3)
        b = rom.S[:, k].reshape(-1, 3)
        vals.append(relative_discrepancy(field_values(field_name, a[:, 0], a[:, 1:], rho0, c0),
                                         field_values(field_name, b[:, 0], b[:, 1:], rho0, c0)))
    return FieldComparison(fom.times, np.array(vals), field_name)


def archive_slice(arc: ar.SnapshotArchive, k: int, field_name: str, spec: CaseSpec, axis: int,
                  coordinate: float, probes: int) -> np.ndarray:
    model = spec.model()
    b = arc.S[:, k].reshape(-1, 3)
    x = arc.positions[k] if arc.positions is not None else arc.x_G
    v = field_values(field_name, b[:, 0], b[:, 1:], model.rho0, model.c0)
    return extract_slice(x, v, spec.geometry, spec.h, axis, coordinate, probes, dx=spec.dx)


def output_path(out: Path, name: str | None, default: str) -> Path:
    p = Path(name or default)
    return p if p.is_absolute() else out / p
