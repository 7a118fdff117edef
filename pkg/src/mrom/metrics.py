"""FOM-vs-ROM error metrics and slice extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mrom import kernel
from mrom.domain import Geometry

FIELDS = ("velocity_norm", "pressure", "density")


def relative_discrepancy(f_fom, f_rom) -> float:
    """``mean |f_fom - f_rom| / |max f_fom - min f_fom|``, as a fraction (not percent)."""
    a = np.asarray(f_fom, dtype=float).ravel()
    b = np.asarray(f_rom, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"field lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty fields")
    span = abs(float(a.max() - a.min()))
    if span == 0.0:
        raise ValueError("relative discrepancy undefined: reference field has zero range")
    return float(np.mean(np.abs(a - b)) / span)


def field_values(field: str, rho: np.ndarray, u: np.ndarray, rho0: float, c0: float) -> np.ndarray:
    """Scalar per particle: ``|u|``, ``c0^2 (rho - rho0)`` or ``rho``."""
    if field == "velocity_norm":
        return np.sqrt(np.sum(np.asarray(u) ** 2, axis=1))
    if field == "pressure":
        return c0**2 * (np.asarray(rho) - rho0)
    if field == "density":
        return np.asarray(rho, dtype=float)
    raise ValueError(f"unknown field {field!r}; expected one of {FIELDS}")


@dataclass
class FieldComparison:
    times: np.ndarray
    discrepancy: np.ndarray
    field: str

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.discrepancy = np.asarray(self.discrepancy, dtype=float)
        if self.times.shape != self.discrepancy.shape:
            raise ValueError("times and discrepancy lengths differ")

    @property
    def peak(self) -> float:
        return float(self.discrepancy.max()) if self.discrepancy.size else 0.0


def extract_slice(x: np.ndarray, values: np.ndarray, geometry: Geometry, h: float, axis: int,
                  coordinate: float, n_probes: int = 50, band: float | None = None,
                  dx: float | None = None) -> np.ndarray:
    """Shepard-interpolated values on ``n_probes`` uniform points of a line.

    The line is ``x[axis] = coordinate`` and spans the bounding box along
    the other axis. Only particles within ``band`` (default ``1.5 dx``) of
    the line contribute. Returns rows ``(position, value...)`` sorted by
    position.
    """
    x = np.asarray(x, dtype=float)
    vals = np.asarray(values, dtype=float).reshape(len(x), -1)
    if band is None:
        if dx is None:
            raise ValueError("give either band or dx")
        band = 1.5 * dx
    other = 1 - axis
    d = x[:, axis] - coordinate
    if geometry.periodic[axis]:
        L = geometry.length[axis]
        d -= L * np.round(d / L)
    inside = np.abs(d) <= band
    if not inside.any():
        raise ValueError(f"no particles within {band:g} of {'xy'[axis]} = {coordinate:g}")
    lo, L = geometry.lo[other], geometry.length[other]
    s = lo + (np.arange(n_probes) + 0.5) * L / n_probes
    probes = np.empty((n_probes, 2))
    probes[:, axis] = coordinate
    probes[:, other] = s
    donors = x[inside]
    diff = probes[:, None, :] - donors[None, :, :]
    geometry.min_image(diff)
    w = kernel.eval(np.sqrt(np.sum(diff**2, axis=-1)), h)
    den = w.sum(axis=1)
    gaps = s[den <= 0]
    if len(gaps):
        raise ValueError(f"slice has {len(gaps)} probe(s) without donors, e.g. at {gaps[:5].tolist()}")
    out = (w @ vals[inside]) / den[:, None]
    return np.column_stack([s, out])
