"""Binary snapshot and basis archives, spline files and CSV output.

Snapshot archive (little-endian)::

    header   magic "MROM", u32 version, u32 N, u32 d, u32 N_S, f64 dx, f64 h
    x_G      N x 2 f64, row by row
    S        (d N) x N_S f64, column-major
    trailer  optional: magic "MRTL", u32 flags, then times f64[N_S] (flag 1)
             and positions f64[N_S, N, 2] (flag 2); flag 4 marks reference-space data

Basis file: the same header with magic "MROB" (N_S counts singular values),
then x_G, u32 M, sigma f64[N_S] and Phi column-major.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mrom.errors import FormatError
from mrom.reference import D_BAR, ReferenceSpace, TrialBasis
from mrom.spline import LocalSpline, SplineBasis, basis_hash

VERSION = 1
SNAP_MAGIC = b"MROM"
BASIS_MAGIC = b"MROB"
TRAILER_MAGIC = b"MRTL"
HEADER = struct.Struct("<4sIIIIdd")
U32 = struct.Struct("<I")

FLAG_TIMES = 1
FLAG_POSITIONS = 2
FLAG_REFERENCE = 4


@dataclass
class SnapshotArchive:
    x_G: np.ndarray
    S: np.ndarray
    dx: float
    h: float
    times: np.ndarray | None = None
    positions: np.ndarray | None = None
    reference: bool = False

    @property
    def n_particles(self) -> int:
        return len(self.x_G)

    @property
    def n_snapshots(self) -> int:
        return self.S.shape[1]


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated while reading {what} "
                              f"(need {n} bytes at offset {self.pos}, file has {len(self.buf)})")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def f64(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(float)

    @property
    def remaining(self) -> int:
        return len(self.buf) - self.pos


def _header(reader: _Reader, magic: bytes):
    raw = reader.take(HEADER.size, "header")
    found, version, N, d, n_s, dx, h = HEADER.unpack(raw)
    if found != magic:
        raise FormatError(f"{reader.path}: bad magic {found!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"{reader.path}: version {version}, expected {VERSION}")
    if d != D_BAR:
        raise FormatError(f"{reader.path}: {d} components per particle, expected {D_BAR}")
    return N, n_s, dx, h


def _f64_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def write_snapshots(path, archive: SnapshotArchive) -> None:
    S = np.asarray(archive.S, dtype=float)
    N = len(archive.x_G)
    if S.shape[0] != D_BAR * N:
        raise ValueError(f"S has {S.shape[0]} rows, expected {D_BAR * N}")
    n_s = S.shape[1]
    parts = [HEADER.pack(SNAP_MAGIC, VERSION, N, D_BAR, n_s, archive.dx, archive.h),
             _f64_bytes(archive.x_G), _f64_bytes(S.T)]
    flags = (FLAG_TIMES if archive.times is not None else 0) \
        | (FLAG_POSITIONS if archive.positions is not None else 0) \
        | (FLAG_REFERENCE if archive.reference else 0)
    if flags:
        parts += [TRAILER_MAGIC, U32.pack(flags)]
        if archive.times is not None:
            parts.append(_f64_bytes(np.asarray(archive.times).reshape(n_s)))
        if archive.positions is not None:
            parts.append(_f64_bytes(np.asarray(archive.positions).reshape(n_s, N, 2)))
    Path(path).write_bytes(b"".join(parts))


def read_snapshots(path) -> SnapshotArchive:
    reader = _Reader(Path(path).read_bytes(), path)
    N, n_s, dx, h = _header(reader, SNAP_MAGIC)
    x_G = reader.f64(2 * N, "reference positions").reshape(N, 2)
    S = reader.f64(D_BAR * N * n_s, "snapshot matrix").reshape(n_s, D_BAR * N).T.copy()
    times = positions = None
    reference = False
    if reader.remaining:
        if reader.take(4, "trailer magic") != TRAILER_MAGIC:
            raise FormatError(f"{path}: unexpected {reader.remaining + 4} trailing bytes")
        (flags,) = U32.unpack(reader.take(4, "trailer flags"))
        if flags & FLAG_TIMES:
            times = reader.f64(n_s, "times")
        if flags & FLAG_POSITIONS:
            positions = reader.f64(n_s * N * 2, "positions").reshape(n_s, N, 2)
        reference = bool(flags & FLAG_REFERENCE)
        if reader.remaining:
            raise FormatError(f"{path}: {reader.remaining} unexpected trailing bytes")
    return SnapshotArchive(x_G, S, dx, h, times, positions, reference)


def write_basis(path, basis: TrialBasis, x_G: np.ndarray, dx: float, h: float) -> None:
    N = len(x_G)
    sigma = np.asarray(basis.sigma, dtype=float)
    Path(path).write_bytes(b"".join([
        HEADER.pack(BASIS_MAGIC, VERSION, N, D_BAR, len(sigma), dx, h),
        _f64_bytes(x_G), U32.pack(basis.M), _f64_bytes(sigma), _f64_bytes(basis.Phi.T),
    ]))


def read_basis(path) -> tuple[TrialBasis, np.ndarray, float, float]:
    """Returns ``(basis, x_G, dx, h)``."""
    reader = _Reader(Path(path).read_bytes(), path)
    N, n_sigma, dx, h = _header(reader, BASIS_MAGIC)
    x_G = reader.f64(2 * N, "reference positions").reshape(N, 2)
    (M,) = U32.unpack(reader.take(4, "rank"))
    sigma = reader.f64(n_sigma, "singular values")
    Phi = reader.f64(D_BAR * N * M, "modes").reshape(M, D_BAR * N).T.copy()
    if reader.remaining:
        raise FormatError(f"{path}: {reader.remaining} unexpected trailing bytes")
    return TrialBasis(Phi, sigma), x_G, dx, h


def save_spline(path, sb: SplineBasis) -> None:
    present = np.array([c is not None for c in sb.cells])
    cells = [c for c in sb.cells if c is not None]
    sizes = np.array([len(c.donors) for c in cells], dtype=np.int64)
    C = D_BAR * sb.M
    np.savez(
        path,
        basis_hash=np.array(sb.basis_hash), k=np.array(sb.k), M=np.array(sb.M),
        dims=np.array(sb.ref.grid.dims), present=present, sizes=sizes,
        donors=np.concatenate([c.donors for c in cells]) if cells else np.empty(0, np.int64),
        points=np.concatenate([c.points for c in cells]) if cells else np.empty((0, 2)),
        xi=np.concatenate([c.xi for c in cells]) if cells else np.empty((0, C)),
        eta=np.stack([c.eta for c in cells]) if cells else np.empty((0, 3, C)),
        centre=np.stack([c.centre for c in cells]) if cells else np.empty((0, 2)),
        stencil=np.array([c.stencil for c in cells], dtype=np.int64),
    )


def load_spline(path, ref: ReferenceSpace, basis: TrialBasis | None = None) -> SplineBasis:
    """Load a spline file; with ``basis`` given, its hash must match."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"spline file {path} not found")
    try:
        z = np.load(path, allow_pickle=False)
        h_stored = str(z["basis_hash"])
        k, M = int(z["k"]), int(z["M"])
        dims = tuple(int(v) for v in z["dims"])
        present, sizes = z["present"], z["sizes"]
        donors, points, xi, eta = z["donors"], z["points"], z["xi"], z["eta"]
        centre, stencil = z["centre"], z["stencil"]
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"{path}: unreadable spline file ({exc})") from exc
    if basis is not None and basis_hash(basis.Phi) != h_stored:
        raise FormatError(f"{path}: spline was fitted to a different basis (hash mismatch)")
    if dims != tuple(ref.grid.dims):
        raise FormatError(f"{path}: spline cell grid {dims} does not match reference grid {ref.grid.dims}")
    cells: list[LocalSpline | None] = []
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    k_cell = 0
    for has in present:
        if not has:
            cells.append(None)
            continue
        a, b = offsets[k_cell], offsets[k_cell + 1]
        cells.append(LocalSpline(donors[a:b], points[a:b], centre[k_cell], xi[a:b], eta[k_cell],
                                 int(stencil[k_cell])))
        k_cell += 1
    return SplineBasis(ref, M, k, cells, h_stored)


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)
