"""Particle storage, rectangular geometry, cell linked-list and ghost particles.

Geometry is a union of axis-aligned fluid rectangles inside a bounding box.
An axis is either periodic (minimum-image distances, no walls) or bounded by
walls that are discretised with layers of fixed ghost particles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from mrom._loops import cell_pairs
from mrom.errors import OutOfDomainError

FLUID = 0
GHOST = 1

Rect = tuple[float, float, float, float]  # (x0, x1, y0, y1)


@dataclass
class Geometry:
    """Fluid region, periodicity and wall data of a 2D case.

    ``bounds`` is the fluid bounding box ``(x0, x1, y0, y1)``; along periodic
    axes it is also the period. ``regions`` defaults to the bounding box.
    ``wall_velocity(x, normal)`` returns the prescribed velocity of ghosts at
    ``x`` (zero walls when omitted). ``wall_pad`` is the thickness reserved
    for ghost layers outside walled sides.
    """

    bounds: Rect
    periodic: tuple[bool, bool] = (False, False)
    regions: list[Rect] | None = None
    wall_velocity: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    no_slip: bool = True
    wall_pad: float = 0.0

    def __post_init__(self):
        x0, x1, y0, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"degenerate bounds {self.bounds}")
        if self.regions is None:
            self.regions = [tuple(self.bounds)]
        self.periodic = tuple(bool(p) for p in self.periodic)

    @property
    def lo(self) -> np.ndarray:
        return np.array([self.bounds[0], self.bounds[2]])

    @property
    def hi(self) -> np.ndarray:
        return np.array([self.bounds[1], self.bounds[3]])

    @property
    def length(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def fully_periodic(self) -> bool:
        return all(self.periodic)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Map positions back into the period along periodic axes."""
        x = np.array(x, dtype=float, copy=True)
        for a in range(2):
            if self.periodic[a]:
                lo, L = self.lo[a], self.length[a]
                x[..., a] = lo + np.mod(x[..., a] - lo, L)
                # mod can return L itself for tiny negative inputs
                x[..., a] = np.where(x[..., a] >= lo + L, lo, x[..., a])
        return x

    def min_image(self, d: np.ndarray) -> np.ndarray:
        """Apply the minimum-image convention to displacement vectors in place."""
        for a in range(2):
            if self.periodic[a]:
                L = self.length[a]
                d[..., a] -= L * np.round(d[..., a] / L)
        return d

    def inside(self, x: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the union of fluid regions."""
        x = np.atleast_2d(x)
        mask = np.zeros(len(x), dtype=bool)
        for x0, x1, y0, y1 in self.regions:
            mask |= (x[:, 0] >= x0) & (x[:, 0] <= x1) & (x[:, 1] >= y0) & (x[:, 1] <= y1)
        return mask


@dataclass
class ParticleSystem:
    """Structure-of-arrays state for fluid particles followed by ghosts.

    Fluid particles occupy indices ``[0, n_fluid)``; ghosts follow. ``normal``
    and ``wall_u`` are only meaningful for ghosts (unit wall normal pointing
    into the fluid and prescribed wall velocity).
    """

    x: np.ndarray
    u: np.ndarray
    rho: np.ndarray
    m: np.ndarray
    kind: np.ndarray
    normal: np.ndarray = None
    wall_u: np.ndarray = None

    def __post_init__(self):
        n = len(self.x)
        self.x = np.asarray(self.x, dtype=float).reshape(n, 2)
        self.u = np.asarray(self.u, dtype=float).reshape(n, 2)
        self.rho = np.asarray(self.rho, dtype=float).reshape(n)
        self.m = np.asarray(self.m, dtype=float).reshape(n)
        self.kind = np.asarray(self.kind, dtype=np.int8).reshape(n)
        if self.normal is None:
            self.normal = np.zeros((n, 2))
        if self.wall_u is None:
            self.wall_u = np.zeros((n, 2))
        nf = int(np.count_nonzero(self.kind == FLUID))
        if np.any(self.kind[:nf] != FLUID):
            raise ValueError("fluid particles must precede ghosts")

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def n_fluid(self) -> int:
        return int(np.count_nonzero(self.kind == FLUID))

    @property
    def n_ghost(self) -> int:
        return self.n - self.n_fluid

    @property
    def V(self) -> np.ndarray:
        return self.m / self.rho

    @property
    def fluid(self) -> slice:
        return slice(0, self.n_fluid)

    @property
    def ghost(self) -> slice:
        return slice(self.n_fluid, self.n)

    def copy(self) -> "ParticleSystem":
        return ParticleSystem(
            self.x.copy(), self.u.copy(), self.rho.copy(), self.m.copy(),
            self.kind.copy(), self.normal.copy(), self.wall_u.copy(),
        )

    @classmethod
    def from_blocks(cls, x, u, rho, m, ghosts: "GhostBlock | None" = None, rho0: float = 1.0):
        """Stack a fluid block and an optional ghost block."""
        nf = len(x)
        if ghosts is None or len(ghosts.x) == 0:
            return cls(x, u, rho, np.broadcast_to(m, (nf,)).copy(), np.zeros(nf, np.int8))
        ng = len(ghosts.x)
        m_f = np.broadcast_to(np.asarray(m, float), (nf,))
        m_g = np.full(ng, float(np.mean(m_f)) if nf else rho0 * ghosts.dx**2)
        return cls(
            np.vstack([x, ghosts.x]),
            np.vstack([u, ghosts.wall_u]),
            np.concatenate([rho, np.full(ng, rho0)]),
            np.concatenate([m_f, m_g]),
            np.concatenate([np.zeros(nf, np.int8), np.ones(ng, np.int8)]),
            np.vstack([np.zeros((nf, 2)), ghosts.normal]),
            np.vstack([np.zeros((nf, 2)), ghosts.wall_u]),
        )


@dataclass
class CellGrid:
    """Cell linked-list over a rectangle; cell width is at least ``2 h``.

    Cells are indexed row-major as ``ix * dims[1] + iy``. Particles are
    sorted by cell so that ``order[start[c]:start[c] + count[c]]`` lists the
    particles of cell ``c``.
    """

    lo: np.ndarray
    length: np.ndarray
    dims: tuple[int, int]
    cell_width: np.ndarray
    periodic: tuple[bool, bool]
    cell_of: np.ndarray
    order: np.ndarray
    start: np.ndarray
    count: np.ndarray
    x: np.ndarray = field(repr=False)
    h: float = 0.0
    geometry: Geometry = field(default=None, repr=False)

    @property
    def n_cells(self) -> int:
        return self.dims[0] * self.dims[1]

    @property
    def cells(self) -> list[np.ndarray]:
        return [self.order[s:s + c] for s, c in zip(self.start, self.count)]

    def cell_coords(self, points: np.ndarray, strict: bool = True) -> np.ndarray:
        """Integer (ix, iy) of arbitrary points; wraps periodic axes first."""
        p = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        ij = np.empty(p.shape, dtype=np.int64)
        bad = np.zeros(len(p), dtype=bool)
        for a in range(2):
            K = self.dims[a]
            if self.periodic[a]:
                p[:, a] = self.lo[a] + np.mod(p[:, a] - self.lo[a], self.length[a])
            k = np.floor((p[:, a] - self.lo[a]) / self.cell_width[a]).astype(np.int64)
            if self.periodic[a]:
                k = np.mod(k, K)
            else:
                bad |= (p[:, a] < self.lo[a]) | (p[:, a] > self.lo[a] + self.length[a])
                k = np.clip(k, 0, K - 1)
            ij[:, a] = k
        if strict and bad.any():
            idx = np.flatnonzero(bad)
            raise OutOfDomainError(
                f"{len(idx)} point(s) outside the non-periodic domain, first index {idx[0]} "
                f"at {p[idx[0]].tolist()}",
                idx,
            )
        return ij

    def offsets(self) -> list[tuple[int, int]]:
        """Distinct neighbour-cell offsets (fewer than 9 when a periodic axis has < 3 cells)."""
        per_axis = []
        for a in range(2):
            K = self.dims[a]
            if self.periodic[a] and K < 3:
                per_axis.append(list(range(K)))
            else:
                per_axis.append([-1, 0, 1])
        return [(ox, oy) for ox in per_axis[0] for oy in per_axis[1]]

    def neighbour_cells(self, ij: np.ndarray, ox: int, oy: int):
        """Flat index of the cell at offset (ox, oy) from each ``ij``; -1 if outside."""
        nx, ny = ij[:, 0] + ox, ij[:, 1] + oy
        valid = np.ones(len(ij), dtype=bool)
        if self.periodic[0]:
            nx = np.mod(nx, self.dims[0])
        else:
            valid &= (nx >= 0) & (nx < self.dims[0])
        if self.periodic[1]:
            ny = np.mod(ny, self.dims[1])
        else:
            valid &= (ny >= 0) & (ny < self.dims[1])
        return np.where(valid, nx * self.dims[1] + ny, -1)


def grid_box(geometry: Geometry) -> tuple[np.ndarray, np.ndarray]:
    """Lower corner and extent of the cell-grid rectangle (walls padded)."""
    lo = geometry.lo.astype(float).copy()
    length = geometry.length.astype(float).copy()
    for a in range(2):
        if not geometry.periodic[a]:
            lo[a] -= geometry.wall_pad
            length[a] += 2.0 * geometry.wall_pad
    return lo, length


def build_cells(x: np.ndarray, geometry: Geometry, h: float) -> CellGrid:
    """Populate a cell linked-list of width >= 2h with particle indices.

    Accepts a :class:`ParticleSystem` or a raw ``(N, 2)`` position array.
    Raises :class:`OutOfDomainError` for particles outside walled sides.
    """
    if isinstance(x, ParticleSystem):
        x = x.x
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    lo, length = grid_box(geometry)
    alpha = 2.0 * h
    dims = tuple(max(1, int(np.floor(length[a] / alpha * (1 + 1e-12)))) for a in range(2))
    width = length / np.array(dims)
    grid = CellGrid(
        lo=lo, length=length, dims=dims, cell_width=width, periodic=geometry.periodic,
        cell_of=np.empty(0, np.int64), order=np.empty(0, np.int64),
        start=np.zeros(dims[0] * dims[1], np.int64), count=np.zeros(dims[0] * dims[1], np.int64),
        x=x, h=float(h), geometry=geometry,
    )
    ij = grid.cell_coords(x)
    cell = ij[:, 0] * dims[1] + ij[:, 1]
    order = np.argsort(cell, kind="stable")
    count = np.bincount(cell, minlength=grid.n_cells)
    start = np.concatenate([[0], np.cumsum(count)[:-1]])
    grid.cell_of, grid.order, grid.count, grid.start = cell, order, count, start
    return grid


@dataclass
class Pairs:
    """All interacting ordered pairs ``(i, j)``, ``i != j``, with ``r < cutoff``.

    ``dx`` holds ``x_i - x_j`` under the minimum-image convention.
    """

    i: np.ndarray
    j: np.ndarray
    dx: np.ndarray
    r: np.ndarray
    n: int

    def __len__(self):
        return len(self.i)

    def sum_i(self, values: np.ndarray) -> np.ndarray:
        """Scatter-add per-pair values onto their ``i`` particle (fixed order)."""
        values = np.asarray(values)
        if values.ndim == 1:
            return np.bincount(self.i, weights=values, minlength=self.n)
        out = np.empty((self.n,) + values.shape[1:])
        flat = values.reshape(len(values), -1)
        out_flat = out.reshape(self.n, -1)
        for c in range(flat.shape[1]):
            out_flat[:, c] = np.bincount(self.i, weights=flat[:, c], minlength=self.n)
        return out

    def select(self, mask: np.ndarray) -> "Pairs":
        return Pairs(self.i[mask], self.j[mask], self.dx[mask], self.r[mask], self.n)


def _axis_offsets(grid: CellGrid) -> tuple[np.ndarray, np.ndarray]:
    per_axis = []
    for a in range(2):
        K = grid.dims[a]
        per_axis.append(np.arange(K) if grid.periodic[a] and K < 3 else np.array([-1, 0, 1]))
    return per_axis[0].astype(np.int64), per_axis[1].astype(np.int64)


def _search(grid: CellGrid, points: np.ndarray, cutoff: float, exclude_self: bool, strict: bool) -> Pairs:
    qcell = grid.cell_coords(points, strict=strict)
    offx, offy = _axis_offsets(grid)
    i, j, d, r = cell_pairs(
        qcell, np.ascontiguousarray(points, dtype=float), np.ascontiguousarray(grid.x, dtype=float),
        grid.order, grid.start, grid.count, np.asarray(grid.dims, np.int64),
        np.asarray(grid.periodic, np.bool_), np.asarray(grid.length, float), offx, offy,
        float(cutoff), exclude_self,
    )
    return Pairs(i, j, d, r, len(points))


def find_pairs(grid: CellGrid, cutoff: float | None = None) -> Pairs:
    """Every ordered neighbour pair of the particles the grid was built on, sorted by ``i``."""
    cutoff = 2.0 * grid.h if cutoff is None else cutoff
    return _search(grid, grid.x, cutoff, True, True)


def query_pairs(points: np.ndarray, grid: CellGrid, cutoff: float | None = None) -> Pairs:
    """Pairs (query point, grid particle) within ``cutoff``; ``n`` is the query count."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    cutoff = 2.0 * grid.h if cutoff is None else cutoff
    return _search(grid, points, cutoff, False, False)


def neighbors(x, grid: CellGrid, i: int, include_self: bool = False) -> list[int]:
    """Indices ``j`` with ``|x_i - x_j| < 2h`` found through the cell list."""
    if isinstance(x, ParticleSystem):
        x = x.x
    x = np.asarray(x, dtype=float)
    h, geometry = grid.h, grid.geometry
    ij = grid.cell_coords(x[i:i + 1])
    found = []
    for ox, oy in grid.offsets():
        c = grid.neighbour_cells(ij, ox, oy)[0]
        if c < 0:
            continue
        found.append(grid.order[grid.start[c]:grid.start[c] + grid.count[c]])
    if not found:
        return []
    cand = np.concatenate(found)
    d = geometry.min_image(x[i] - x[cand])
    r = np.sqrt(np.sum(d * d, axis=1))
    hits = cand[r < 2.0 * h]
    if not include_self:
        hits = hits[hits != i]
    return sorted(int(k) for k in hits)


def lattice_points(geometry: Geometry, dx: float, pad_layers: int = 0) -> np.ndarray:
    """Cell-centred lattice over the bounding box, extended across walled sides."""
    axes = []
    for a in range(2):
        lo, L = geometry.lo[a], geometry.length[a]
        n = int(round(L / dx))
        extra = 0 if geometry.periodic[a] else pad_layers
        k = np.arange(-extra, n + extra)
        axes.append(lo + (k + 0.5) * dx)
    X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def fluid_lattice(geometry: Geometry, dx: float) -> np.ndarray:
    """Uniform fluid particle positions filling the fluid regions."""
    pts = lattice_points(geometry, dx)
    return pts[geometry.inside(pts)]


@dataclass
class GhostBlock:
    """Fixed wall particles: positions, inward unit normals, wall velocities."""

    x: np.ndarray
    normal: np.ndarray
    wall_u: np.ndarray
    dx: float


def _region_offsets(geometry: Geometry, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per region: displacement from each point to the region, and its sup-norm."""
    disp, dist = [], []
    for x0, x1, y0, y1 in geometry.regions:
        c = np.column_stack([np.clip(pts[:, 0], x0, x1), np.clip(pts[:, 1], y0, y1)])
        d = c - pts
        disp.append(d)
        dist.append(np.max(np.abs(d), axis=1))
    return np.stack(disp), np.stack(dist)


def generate_ghosts(geometry: Geometry, dx: float, layers: int = 3) -> GhostBlock:
    """Lattice ghosts within ``layers * dx`` of the fluid region, outside it.

    Corner ghosts appear once and get the diagonal normal (sum of the sign
    vectors of every nearest region side).
    """
    if layers < 1:
        raise ValueError("layers must be >= 1")
    if geometry.fully_periodic:
        return GhostBlock(np.empty((0, 2)), np.empty((0, 2)), np.empty((0, 2)), dx)
    pts = lattice_points(geometry, dx, pad_layers=layers)
    pts = pts[~geometry.inside(pts)]
    disp, dist = _region_offsets(geometry, pts)
    dmin = dist.min(axis=0)
    keep = dmin < layers * dx
    pts, disp, dist, dmin = pts[keep], disp[:, keep], dist[:, keep], dmin[keep]
    tol = 1e-9 * dx
    nearest = dist <= dmin[None, :] + tol
    signs = np.where(np.abs(disp) > tol, np.sign(disp), 0.0) * nearest[..., None]
    n = signs.sum(axis=0)
    n = np.sign(n)
    norm = np.linalg.norm(n, axis=1)
    bad = norm == 0
    if bad.any():
        k = np.argmin(dist[:, bad], axis=0)
        fallback = disp[k, np.flatnonzero(bad)]
        n[bad] = fallback
        norm[bad] = np.linalg.norm(fallback, axis=1)
    normal = n / norm[:, None]
    if geometry.wall_velocity is None:
        wall_u = np.zeros_like(pts)
    else:
        wall_u = np.asarray(geometry.wall_velocity(pts, normal), dtype=float).reshape(-1, 2)
    return GhostBlock(pts, normal, wall_u, dx)


def brute_force_neighbors(x: np.ndarray, geometry: Geometry, cutoff: float) -> list[set[int]]:
    """All-pairs O(N^2) neighbour sets; reference for checking the cell list."""
    x = np.asarray(x, dtype=float)
    d = geometry.min_image(x[:, None, :] - x[None, :, :])
    r = np.sqrt(np.sum(d * d, axis=-1))
    np.fill_diagonal(r, np.inf)
    return [set(np.flatnonzero(row < cutoff).tolist()) for row in r]


def ghost_count_per_wall(block: GhostBlock) -> dict[str, int]:
    """Count of non-corner ghosts by wall orientation (for diagnostics)."""
    n = block.normal
    axis_aligned = (np.abs(n[:, 0]) < 1e-12) | (np.abs(n[:, 1]) < 1e-12)
    out = {}
    for name, vec in {"left": (1, 0), "right": (-1, 0), "bottom": (0, 1), "top": (0, -1)}.items():
        out[name] = int(np.count_nonzero(axis_aligned & np.all(np.isclose(n, vec), axis=1)))
    out["corner"] = int(np.count_nonzero(~axis_aligned))
    return out

