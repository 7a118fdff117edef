"""Reference space: map moving-particle snapshots onto fixed points, then POD.

A state vector stacks ``[rho, u_x, u_y]`` per particle (particle-major), so
row ``3 k + c`` holds component ``c`` of particle ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from mrom import kernel
from mrom.domain import CellGrid, Geometry, ParticleSystem, build_cells, query_pairs
from mrom.errors import HoleError

D_BAR = 3


def stack_state(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Particle-major state vector ``[rho_0, ux_0, uy_0, rho_1, ...]``."""
    return np.column_stack([rho, u]).ravel()


def split_state(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`stack_state`; also accepts ``(3N, k)`` column stacks."""
    w = np.asarray(w)
    if w.ndim == 1:
        b = w.reshape(-1, D_BAR)
        return b[:, 0].copy(), b[:, 1:].copy()
    b = w.reshape(-1, D_BAR, w.shape[1])
    return b[:, 0], b[:, 1:]


@dataclass
class Snapshot:
    """Fluid-particle fields at one output instant."""

    step: int
    t: float
    x: np.ndarray
    rho: np.ndarray
    u: np.ndarray

    @classmethod
    def of(cls, ps: ParticleSystem, step: int, t: float) -> "Snapshot":
        f = ps.fluid
        return cls(step, t, ps.x[f].copy(), ps.rho[f].copy(), ps.u[f].copy())

    @property
    def state(self) -> np.ndarray:
        return stack_state(self.rho, self.u)


class ReferenceSpace:
    """Fixed interpolation points ``x_G`` with their cell list.

    Parameters
    ----------
    x_G : (N, 2) array
        Reference positions, copied and frozen.
    geometry : Geometry
    dx, h : float
        Spacing of the reference cloud and the smoothing length used by the map.
    """

    def __init__(self, x_G: np.ndarray, geometry: Geometry, dx: float, h: float):
        x_G = np.array(x_G, dtype=float).reshape(-1, 2)
        x_G.setflags(write=False)
        self.x_G = x_G
        self.geometry = geometry
        self.dx = float(dx)
        self.h = float(h)
        self.grid: CellGrid = build_cells(x_G, geometry, h)

    @property
    def n(self) -> int:
        return len(self.x_G)


def map_fields(points: np.ndarray, x: np.ndarray, values: np.ndarray, geometry: Geometry, h: float,
               weights: np.ndarray | None = None) -> np.ndarray:
    """Shepard interpolation of per-particle ``values`` onto ``points``.

    ``weights`` multiplies each donor's kernel value (a constant weight
    cancels). Raises :class:`HoleError` for points without donors.
    """
    values = np.asarray(values, dtype=float)
    flat = values.reshape(len(x), -1)
    grid = build_cells(x, geometry, h)
    pairs = query_pairs(points, grid)
    w = kernel.eval(pairs.r, h)
    if weights is not None:
        w = w * np.asarray(weights, dtype=float)[pairs.j]
    den = pairs.sum_i(w)
    holes = np.flatnonzero(den <= 0.0)
    if len(holes):
        raise HoleError(holes)
    num = pairs.sum_i(w[:, None] * flat[pairs.j])
    out = num / den[:, None]
    return out.reshape((len(points),) + values.shape[1:])


def map_to_reference(snap: Snapshot | ParticleSystem, ref: ReferenceSpace, weight: str = "fixed") -> np.ndarray:
    """Reference-space state vector of one snapshot.

    ``weight="fixed"`` uses the constant ``dx^2`` per donor; ``"volume"``
    uses the particle volume ``m / rho`` (ParticleSystem input only).
    """
    if isinstance(snap, ParticleSystem):
        f = snap.fluid
        x, rho, u = snap.x[f], snap.rho[f], snap.u[f]
        vol = snap.V[f]
    else:
        x, rho, u, vol = snap.x, snap.rho, snap.u, None
    if weight == "fixed":
        wts = None
    elif weight == "volume":
        if vol is None:
            raise ValueError("volume weights need particle masses")
        wts = vol
    else:
        raise ValueError(f"unknown weight {weight!r}")
    fields = map_fields(ref.x_G, x, np.column_stack([rho, u]), ref.geometry, ref.h, wts)
    return fields.ravel()


@dataclass
class SnapshotMatrix:
    """Snapshot columns in time order; ``space_tag`` is ``lagrangian`` or ``reference``."""

    data: np.ndarray
    sample_interval: int
    space_tag: str
    times: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.space_tag not in ("lagrangian", "reference"):
            raise ValueError(f"unknown space tag {self.space_tag!r}")
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[0] % D_BAR:
            raise ValueError(f"snapshot data must be (3N, N_S), got {self.data.shape}")

    @property
    def n_snapshots(self) -> int:
        return self.data.shape[1]

    @property
    def n_particles(self) -> int:
        return self.data.shape[0] // D_BAR

    @staticmethod
    def hstack(mats: list["SnapshotMatrix"]) -> "SnapshotMatrix":
        """Concatenate matrices of one space (e.g. several training parameters)."""
        tags = {m.space_tag for m in mats}
        rows = {m.data.shape[0] for m in mats}
        if len(tags) != 1 or len(rows) != 1:
            raise ValueError("cannot concatenate snapshot matrices of different spaces or sizes")
        return SnapshotMatrix(np.hstack([m.data for m in mats]), mats[0].sample_interval, tags.pop(),
                              np.concatenate([m.times for m in mats]))


def assemble_snapshots(stream: Iterable[Snapshot], ref: ReferenceSpace, interval: int = 1,
                       weight: str = "fixed") -> tuple[SnapshotMatrix, SnapshotMatrix]:
    """Build reference and Lagrangian snapshot matrices in one pass.

    Snapshots whose ``step`` is a multiple of ``interval`` are kept, in the
    order received.
    """
    if interval < 1:
        raise ValueError("interval must be >= 1")
    ref_cols, lag_cols, times = [], [], []
    n = None
    for snap in stream:
        if snap.step % interval:
            continue
        if n is None:
            n = len(snap.x)
        elif len(snap.x) != n:
            raise ValueError(f"snapshot at step {snap.step} has {len(snap.x)} particles, expected {n}")
        lag_cols.append(snap.state)
        ref_cols.append(map_to_reference(snap, ref, weight))
        times.append(snap.t)
    n_ref = D_BAR * ref.n
    n_lag = D_BAR * (n if n is not None else ref.n)
    R = np.column_stack(ref_cols) if ref_cols else np.empty((n_ref, 0))
    Lg = np.column_stack(lag_cols) if lag_cols else np.empty((n_lag, 0))
    t = np.asarray(times, dtype=float)
    return SnapshotMatrix(R, interval, "reference", t), SnapshotMatrix(Lg, interval, "lagrangian", t)


@dataclass
class TrialBasis:
    """Leading left singular vectors with the full singular spectrum."""

    Phi: np.ndarray
    sigma: np.ndarray
    mean: np.ndarray | None = None

    @property
    def M(self) -> int:
        return self.Phi.shape[1]

    def energy(self, M: int | None = None) -> float:
        """Cumulative energy fraction of the first ``M`` singular values."""
        return cumulative_energy(self.sigma, self.M if M is None else M)

    def truncate(self, M: int) -> "TrialBasis":
        if not 1 <= M <= self.M:
            raise ValueError(f"cannot truncate a rank-{self.M} basis to {M}")
        return TrialBasis(self.Phi[:, :M].copy(), self.sigma, self.mean)


def cumulative_energy(sigma: np.ndarray, M: int) -> float:
    s2 = np.asarray(sigma, dtype=float) ** 2
    total = s2.sum()
    return float(s2[:M].sum() / total) if total > 0 else 1.0


def fix_signs(U: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    U = U.copy()
    if U.size == 0:
        return U
    idx = np.argmax(np.abs(U), axis=0)
    s = np.sign(U[idx, np.arange(U.shape[1])])
    s[s == 0] = 1.0
    return U * s


def pod(S: SnapshotMatrix | np.ndarray, M: int, centre: bool = False) -> TrialBasis:
    """Thin SVD of the snapshot matrix truncated to ``M`` modes.

    With ``centre=True`` the row mean is removed first and kept on the
    basis; the reduced-order solver only accepts uncentred bases.
    """
    data = S.data if isinstance(S, SnapshotMatrix) else np.asarray(S, dtype=float)
    rmax = min(data.shape)
    if not (isinstance(M, (int, np.integer)) and 1 <= M <= rmax):
        raise ValueError(f"rank M={M} outside [1, {rmax}]")
    mean = data.mean(axis=1) if centre else None
    U, sigma, _ = np.linalg.svd(data - mean[:, None] if centre else data, full_matrices=False)
    return TrialBasis(fix_signs(U[:, :M]), sigma, mean)


def energy_table(S: SnapshotMatrix | np.ndarray, M_max: int = 50) -> np.ndarray:
    """Rows ``(M, energy(M))`` for ``M = 1..min(M_max, N_S)``."""
    data = S.data if isinstance(S, SnapshotMatrix) else np.asarray(S, dtype=float)
    sigma = np.linalg.svd(data, compute_uv=False)
    top = min(M_max, data.shape[1])
    return np.array([[m, cumulative_energy(sigma, m)] for m in range(1, top + 1)])
