"""Cell-local polyharmonic splines turning discrete modes into functions of space.

Every cell of the reference cell list owns one interpolant built from the
reference points of its 3x3 cell block,

    phi(x) = sum_j xi_j gamma(|x - x_j|) + eta . (1, x, y),   gamma(r) = r^k,

with the side condition ``Q^T xi = 0``. The three state components of every
mode are interpolated independently. Across periodic boundaries donors (and
queries) are unwrapped relative to the cell centre, so ``eta`` refers to that
unwrapped frame.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solve
from scipy.spatial.distance import cdist

from mrom.domain import CellGrid
from mrom.errors import HoleError, NumericalError
from mrom.reference import D_BAR, ReferenceSpace, TrialBasis


def gamma(r: np.ndarray, k: int = 3) -> np.ndarray:
    """Polyharmonic radial function ``r^k`` (odd ``k``) or ``r^k log r`` (even ``k``)."""
    r = np.asarray(r, dtype=float)
    if k % 2:
        return r**k
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(r > 0, r**k * np.log(np.where(r > 0, r, 1.0)), 0.0)


@dataclass
class LocalSpline:
    """Weights of one cell: ``xi`` is (n_donors, C), ``eta`` is (3, C)."""

    donors: np.ndarray
    points: np.ndarray
    centre: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    stencil: int = 1


def _cell_centre(grid: CellGrid, c: int) -> np.ndarray:
    ix, iy = divmod(c, grid.dims[1])
    return grid.lo + (np.array([ix, iy]) + 0.5) * grid.cell_width


def _unwrap(grid: CellGrid, pts: np.ndarray, centre: np.ndarray) -> np.ndarray:
    d = pts - centre
    grid.geometry.min_image(d)
    return centre + d


def _donors(grid: CellGrid, c: int, reach: int) -> np.ndarray:
    ix, iy = divmod(c, grid.dims[1])
    per_axis = []
    for a, k in enumerate((ix, iy)):
        K = grid.dims[a]
        if grid.periodic[a]:
            per_axis.append(sorted({(k + o) % K for o in range(-reach, reach + 1)}))
        else:
            per_axis.append([k + o for o in range(-reach, reach + 1) if 0 <= k + o < K])
    cells = [nx * grid.dims[1] + ny for nx in per_axis[0] for ny in per_axis[1]]
    idx = [grid.order[grid.start[n]:grid.start[n] + grid.count[n]] for n in cells]
    return np.sort(np.concatenate(idx)) if idx else np.empty(0, np.int64)


def solve_local(points: np.ndarray, values: np.ndarray, k: int = 3,
                centre: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Solve the bordered system ``[G Q; Q^T 0][xi; eta] = [values; 0]``.

    ``values`` may hold several columns. The tail is solved in coordinates
    centred (and scaled) about ``centre`` and returned for raw coordinates.
    Raises ``LinAlgError`` when the donors do not determine a linear tail.
    """
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float).reshape(len(points), -1)
    n = len(points)
    centre = points.mean(axis=0) if centre is None else centre
    local = points - centre
    scale = max(float(np.max(np.abs(local))), 1e-300) if n else 1.0
    Q = np.column_stack([np.ones(n), local / scale])
    if n < 3 or np.linalg.matrix_rank(Q) < 3:
        raise LinAlgError("donor points are collinear or too few for a linear tail")
    A = np.zeros((n + 3, n + 3))
    A[:n, :n] = gamma(cdist(points, points), k)
    A[:n, n:] = Q
    A[n:, :n] = Q.T
    rhs = np.zeros((n + 3, values.shape[1]))
    rhs[:n] = values
    sol = solve(A, rhs, assume_a="sym", check_finite=False)
    xi, eta_local = sol[:n], sol[n:]
    eta = np.empty_like(eta_local)
    eta[1:] = eta_local[1:] / scale
    eta[0] = eta_local[0] - centre @ eta[1:]
    return xi, eta


class SplineBasis:
    """Local spline approximation ``Phi~(x)`` of a reference trial basis.

    Attributes
    ----------
    ref : ReferenceSpace
    M : int
        Number of modes.
    k : int
        Polyharmonic order.
    cells : list of LocalSpline or None
        One entry per cell of ``ref.grid`` (``None`` when a cell has no donors).
    basis_hash : str
        SHA-256 of the mode matrix the splines were fitted to.
    """

    def __init__(self, ref: ReferenceSpace, M: int, k: int, cells: list[LocalSpline | None], basis_hash: str):
        self.ref = ref
        self.M = M
        self.k = k
        self.cells = cells
        self.basis_hash = basis_hash

    def weights(self, cell: int, mode: int, component: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """``(xi, eta)`` of one mode component in one cell."""
        loc = self.cells[cell]
        col = component * self.M + mode
        return loc.xi[:, col], loc.eta[:, col]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return eval_basis(self, x)


def basis_hash(Phi: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(Phi, dtype="<f8").tobytes()).hexdigest()


def build_spline_basis(basis: TrialBasis | np.ndarray, ref: ReferenceSpace, k: int = 3,
                       workers: int = 1) -> SplineBasis:
    """Fit one local spline per cell to every mode component.

    A cell whose 3x3 donor block is degenerate retries once with a 5x5 block;
    if that also fails a :class:`NumericalError` names the cell.
    """
    if isinstance(basis, TrialBasis) and basis.mean is not None:
        raise ValueError("centred bases are not supported by the reduced-order model")
    Phi = basis.Phi if isinstance(basis, TrialBasis) else np.asarray(basis, dtype=float)
    if Phi.shape[0] != D_BAR * ref.n:
        raise ValueError(f"basis has {Phi.shape[0]} rows, reference space needs {D_BAR * ref.n}")
    M = Phi.shape[1]
    # per reference point: (3, M) block flattened component-major
    data = Phi.reshape(ref.n, D_BAR * M)
    grid = ref.grid

    def fit(c: int) -> LocalSpline | None:
        centre = _cell_centre(grid, c)
        for reach in (1, 2):
            donors = _donors(grid, c, reach)
            if len(donors) == 0:
                return None
            pts = _unwrap(grid, ref.x_G[donors], centre)
            try:
                xi, eta = solve_local(pts, data[donors], k, centre)
            except LinAlgError:
                continue
            return LocalSpline(donors, pts, centre, xi, eta, reach)
        raise NumericalError(f"singular spline system in cell {c} even with a 5x5 stencil")

    cells_ids = range(grid.n_cells)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            cells = list(pool.map(fit, cells_ids))
    else:
        cells = [fit(c) for c in cells_ids]
    return SplineBasis(ref, M, k, cells, basis_hash(Phi))


def eval_basis(sb: SplineBasis, x_query: np.ndarray) -> np.ndarray:
    """Rows of ``Phi~`` at the query points: a ``(3 N_q, M)`` matrix.

    Raises :class:`OutOfDomainError` for queries beyond walled sides and
    :class:`HoleError` for queries in cells without a spline.
    """
    x_query = np.atleast_2d(np.asarray(x_query, dtype=float))
    grid = sb.ref.grid
    ij = grid.cell_coords(x_query, strict=True)
    cell = ij[:, 0] * grid.dims[1] + ij[:, 1]
    out = np.empty((len(x_query), D_BAR * sb.M))
    order = np.argsort(cell, kind="stable")
    bounds = np.flatnonzero(np.diff(cell[order])) + 1
    for group in np.split(order, bounds):
        if len(group) == 0:
            continue
        loc = sb.cells[cell[group[0]]]
        if loc is None:
            raise HoleError(group)
        p = _unwrap(grid, x_query[group], loc.centre)
        G = gamma(cdist(p, loc.points), sb.k)
        out[group] = G @ loc.xi + loc.eta[0] + p @ loc.eta[1:]
    return out.reshape(len(x_query) * D_BAR, sb.M)
