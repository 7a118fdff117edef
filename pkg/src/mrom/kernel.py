"""Wendland C2 (quintic) smoothing kernel in two dimensions.

With ``q = r / h`` the kernel reads

    W(r, h) = 7 / (4 pi h^2) * (1 - q/2)^4 * (1 + 2 q),   0 <= q <= 2

and vanishes for ``q >= 2``, so the support radius is ``2 h``.
"""

from __future__ import annotations

import math

import numpy as np

KAPPA = 2.0


def _check_h(h: float) -> float:
    h = float(h)
    if not math.isfinite(h) or h <= 0.0:
        raise ValueError(f"smoothing length must be finite and positive, got {h!r}")
    return h


def norm_2d(h: float) -> float:
    """Normalisation constant 7 / (4 pi h^2)."""
    return 7.0 / (4.0 * math.pi * h * h)


def eval(r, h):
    """Kernel value ``W(r, h)``; accepts scalars or arrays of distances."""
    h = _check_h(h)
    q = np.asarray(r, dtype=float) / h
    t = np.clip(1.0 - 0.5 * q, 0.0, None)
    t2 = t * t
    w = norm_2d(h) * (t2 * t2) * (1.0 + 2.0 * q)
    return w if w.ndim else float(w)


def dwdr(r, h):
    """Radial derivative ``dW/dr`` (non-positive, zero at r = 0 and r >= 2h)."""
    h = _check_h(h)
    q = np.asarray(r, dtype=float) / h
    t = np.clip(1.0 - 0.5 * q, 0.0, None)
    d = -5.0 * norm_2d(h) / h * q * t**3
    return d if d.ndim else float(d)


def dwdr_over_r(r, h):
    """``(dW/dr) / r``; finite at r = 0 so pair gradients need no special case."""
    h = _check_h(h)
    q = np.asarray(r, dtype=float) / h
    t = np.clip(1.0 - 0.5 * q, 0.0, None)
    d = -5.0 * norm_2d(h) / (h * h) * t**3
    return d if d.ndim else float(d)


def grad(x_i, x_j, h):
    """Gradient of ``W(|x_i - x_j|, h)`` with respect to ``x_i``.

    Works on single 2-vectors or on ``(n, 2)`` stacks. Returns the zero vector
    for coincident points and for pairs beyond the support.
    """
    d = np.asarray(x_i, dtype=float) - np.asarray(x_j, dtype=float)
    r = np.sqrt(np.sum(d * d, axis=-1))
    return dwdr_over_r(r, h)[..., None] * d if d.ndim > 1 else dwdr_over_r(r, h) * d


class WendlandC2:
    """Kernel bound to a fixed smoothing length.

    Attributes
    ----------
    h : float
        Smoothing length.
    dx : float
        Particle spacing, kept alongside for ``V0 = dx**2`` and ``W(dx)``.
    """

    def __init__(self, h: float, dx: float | None = None):
        self.h = _check_h(h)
        self.dx = dx

    @property
    def support_radius(self) -> float:
        return KAPPA * self.h

    @property
    def norm_2d(self) -> float:
        return norm_2d(self.h)

    def __call__(self, r):
        return eval(r, self.h)

    def derivative(self, r):
        return dwdr(r, self.h)

    def derivative_over_r(self, r):
        return dwdr_over_r(r, self.h)

    def grad(self, x_i, x_j):
        return grad(x_i, x_j, self.h)

    def __repr__(self):
        return f"WendlandC2(h={self.h!r}, dx={self.dx!r})"
