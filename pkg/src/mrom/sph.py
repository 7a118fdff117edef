"""Weakly compressible delta-plus SPH: right-hand side, wall ghosts, RK4.

All pair sums run over every neighbour (fluid and ghost) of a particle using
``grad_i W_ij = dW/dr (x_i - x_j) / r``. Ghost particles carry no shifting
velocity and are refreshed from the fluid at every Runge-Kutta stage.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from mrom import _loops, kernel
from mrom.domain import GHOST, CellGrid, Geometry, GhostBlock, Pairs, ParticleSystem, build_cells, find_pairs
from mrom.errors import ConfigError, NumericalError

log = logging.getLogger(__name__)

BodyForce = Callable[[np.ndarray, float], np.ndarray]

RENORM_COND_MAX = 1e8
SHEPARD_MIN = 1e-12
# "mirror": u_g = 2 u_w - u~ (impermeable); "copy": only the tangential part is mirrored
GHOST_NORMAL_RULES = ("mirror", "copy")
DIM = 2


@dataclass
class FluidModel:
    """Physical and numerical constants of a weakly compressible run.

    ``c0`` follows from ``U_max / Ma``. ``body_force(x, t)`` returns an
    ``(n, 2)`` acceleration array (``None`` means no forcing).
    """

    rho0: float
    U_max: float
    mu: float
    h: float
    dx: float
    Ma: float = 0.1
    delta: float = 0.1
    chi: float = 0.2
    xi_shift: float = 4.0
    cfl: float = 1.5
    body_force: BodyForce | None = None
    shifting: bool = True
    wall_shift_correction: bool = True
    ghost_normal: str = "mirror"
    wall_continuity: bool = True

    def __post_init__(self):
        for name in ("rho0", "U_max", "h", "dx", "Ma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive and finite, got {v!r}")
        if self.mu < 0:
            raise ConfigError(f"mu must be non-negative, got {self.mu!r}")
        if self.ghost_normal not in GHOST_NORMAL_RULES:
            raise ConfigError(f"ghost_normal must be one of {GHOST_NORMAL_RULES}, got {self.ghost_normal!r}")

    @property
    def c0(self) -> float:
        return self.U_max / self.Ma

    @property
    def nu(self) -> float:
        return self.mu / self.rho0

    @property
    def K(self) -> float:
        """Viscous prefactor ``2 (n + 2) mu / rho0``."""
        return 2.0 * (DIM + 2) * self.mu / self.rho0

    @property
    def mass(self) -> float:
        return self.rho0 * self.dx**2

    @property
    def w_dx(self) -> float:
        return kernel.eval(self.dx, self.h)

    def max_dt(self) -> float:
        return self.cfl * self.h / self.c0

    def check_dt(self, dt: float) -> None:
        if not (dt > 0 and math.isfinite(dt)):
            raise ConfigError(f"time step must be positive, got {dt!r}")
        if dt > self.max_dt() * (1 + 1e-12):
            raise ConfigError(
                f"time step {dt:g} s violates CFL: dt <= {self.cfl:g} h / c0 = {self.max_dt():g} s"
            )

    def force(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.body_force is None:
            return np.zeros_like(x)
        return np.asarray(self.body_force(x, t), dtype=float).reshape(x.shape)


def eos_pressure(rho, model: FluidModel):
    """Linear equation of state ``p = c0^2 (rho - rho0)``."""
    return model.c0**2 * (np.asarray(rho, dtype=float) - model.rho0)


def eos_density(p, model: FluidModel):
    """Inverse equation of state ``rho = p / c0^2 + rho0``."""
    return np.asarray(p, dtype=float) / model.c0**2 + model.rho0


@dataclass
class Neighbourhood:
    """Cell grid, neighbour pairs and kernel values of one particle configuration."""

    grid: CellGrid
    pairs: Pairs
    w: np.ndarray
    fw: np.ndarray
    r2: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, ps: ParticleSystem, geometry: Geometry, h: float) -> "Neighbourhood":
        grid = build_cells(ps.x, geometry, h)
        pairs = find_pairs(grid)
        return cls(grid, pairs, kernel.eval(pairs.r, h), kernel.dwdr_over_r(pairs.r, h), pairs.r**2)

    @property
    def i(self):
        return self.pairs.i

    @property
    def j(self):
        return self.pairs.j

    @property
    def d(self):
        """``x_i - x_j`` per pair."""
        return self.pairs.dx

    @property
    def gw(self):
        """``grad_i W_ij`` per pair."""
        return self.fw[:, None] * self.pairs.dx

    def sum_i(self, values):
        return self.pairs.sum_i(values)


def _dot(a, b):
    return a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]


def shifting_velocity(ps: ParticleSystem, nb: Neighbourhood, model: FluidModel) -> np.ndarray:
    """Clamped particle-shifting velocity; zero rows for ghosts.

    Near walls the component pointing into the wall is removed.
    """
    if not model.shifting:
        return np.zeros((ps.n, 2))
    is_ghost = ps.kind == GHOST
    raw, n_wall = _loops.shift_sums(nb.i, nb.j, nb.d, nb.w, nb.fw, ps.V, is_ghost, ps.normal,
                                    model.chi / model.w_dx, float(model.xi_shift), ps.n)
    raw *= -2.0 * model.h * model.c0 * model.Ma
    mag = np.sqrt(raw[:, 0] ** 2 + raw[:, 1] ** 2)
    scale = np.where(mag > 0, np.minimum(mag, 0.5 * model.U_max) / np.where(mag > 0, mag, 1.0), 0.0)
    du = raw * scale[:, None]
    du[is_ghost] = 0.0
    if model.wall_shift_correction and ps.n_ghost:
        norm = np.sqrt(n_wall[:, 0] ** 2 + n_wall[:, 1] ** 2)
        near = norm > 0
        n_hat = np.zeros_like(n_wall)
        n_hat[near] = n_wall[near] / norm[near, None]
        into = _dot(du, n_hat)
        fix = near & (into < 0)
        du[fix] -= into[fix, None] * n_hat[fix]
    return du


def boundary_interpolate(ps: ParticleSystem, nb: Neighbourhood, model: FluidModel, t: float = 0.0,
                         no_slip: bool = True) -> ParticleSystem:
    """Refresh ghost velocity, pressure and density from the fluid (in place).

    Shepard-weighted fluid averages with a hydrostatic body-force correction.
    The tangential velocity is mirrored about the prescribed wall velocity;
    the normal component is mirrored too unless ``model.ghost_normal`` is
    ``"copy"``.
    """
    if ps.n_ghost == 0:
        return ps
    den, p_num, u_num, hyd = _loops.ghost_sums(nb.i, nb.j, nb.d, nb.w, ps.kind == GHOST,
                                               eos_pressure(ps.rho, model), ps.rho, ps.u, ps.n)
    gs = ps.ghost
    b = model.force(ps.x[gs], t)
    den_g = den[gs]
    ok = den_g > SHEPARD_MIN
    safe = np.where(ok, den_g, 1.0)
    p_g = np.where(ok, (p_num[gs] + _dot(b, hyd[gs])) / safe, 0.0)
    u_t = u_num[gs] / safe[:, None]
    if no_slip:
        nrm = ps.normal[gs]
        uw = ps.wall_u[gs]
        if model.ghost_normal == "mirror":
            u_g = 2.0 * uw - u_t
        else:
            u_n = _dot(u_t, nrm)[:, None] * nrm
            u_g = 2.0 * (uw - _dot(uw, nrm)[:, None] * nrm) - (u_t - u_n) + u_n
    else:
        u_g = u_t
    u_g[~ok] = ps.wall_u[gs][~ok]
    ps.u[gs] = u_g
    ps.rho[gs] = np.where(ok, eos_density(p_g, model), model.rho0)
    return ps


def _invert_2x2(A: np.ndarray, kind: np.ndarray) -> np.ndarray:
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    fro2 = np.sum(A * A, axis=(1, 2))
    # cond_2 of a 2x2 matrix from its Frobenius norm and determinant
    with np.errstate(divide="ignore", invalid="ignore"):
        s = fro2 / np.abs(det)
        cond = 0.5 * (s + np.sqrt(np.maximum(s * s - 4.0, 0.0)))
    bad = ~(np.isfinite(cond) & (cond <= RENORM_COND_MAX) & (det != 0))
    L = np.empty_like(A)
    safe_det = np.where(bad, 1.0, det)
    L[:, 0, 0] = A[:, 1, 1] / safe_det
    L[:, 1, 1] = A[:, 0, 0] / safe_det
    L[:, 0, 1] = -A[:, 0, 1] / safe_det
    L[:, 1, 0] = -A[:, 1, 0] / safe_det
    if bad.any():
        fluid_bad = np.count_nonzero(bad & (kind != GHOST))
        if fluid_bad:
            log.warning("identity renormalization for %d fluid particle(s) with singular L", fluid_bad)
        L[bad] = np.eye(2)
    return L


def renormalization(ps: ParticleSystem, nb: Neighbourhood) -> np.ndarray:
    """Per-particle ``L_i = [sum_j (x_j - x_i) (x) grad_i W_ij V_j]^-1``.

    Falls back to the identity when the matrix is singular or its condition
    number exceeds 1e8.
    """
    A, _ = _loops.renorm_sums(nb.i, nb.j, nb.d, nb.fw, ps.V, ps.rho, ps.n)
    return _invert_2x2(A, ps.kind)


def density_gradient(ps: ParticleSystem, nb: Neighbourhood) -> np.ndarray:
    """Renormalised density gradient ``L_i sum_j (rho_j - rho_i) grad_i W_ij V_j``."""
    A, g = _loops.renorm_sums(nb.i, nb.j, nb.d, nb.fw, ps.V, ps.rho, ps.n)
    return np.einsum("nab,nb->na", _invert_2x2(A, ps.kind), g)


@dataclass
class PairSums:
    """Raw pair sums of one configuration; see :func:`mrom._loops.rate_sums`."""

    cols: np.ndarray
    adv: np.ndarray


def continuity_velocity(ps: ParticleSystem, model: FluidModel) -> np.ndarray:
    """Velocities seen by the divergence term: ghosts move with the wall when ``wall_continuity``."""
    if not (model.wall_continuity and ps.n_ghost):
        return ps.u
    uc = ps.u.copy()
    uc[ps.ghost] = ps.wall_u[ps.ghost]
    return uc


def pair_sums(ps: ParticleSystem, nb: Neighbourhood, shift: np.ndarray, model: FluidModel) -> PairSums:
    cols, adv = _loops.rate_sums(nb.i, nb.j, nb.d, nb.r2, nb.fw, ps.V, ps.rho, eos_pressure(ps.rho, model),
                                 ps.u, continuity_velocity(ps, model), shift, density_gradient(ps, nb), ps.n)
    return PairSums(cols, adv)


def diffusive_term(ps: ParticleSystem, nb: Neighbourhood, sums: PairSums | None = None) -> np.ndarray:
    """Density diffusion operator ``D_i`` (without the ``delta h c0`` factor)."""
    if sums is None:
        zero = np.zeros((ps.n, 2))
        cols, _ = _loops.rate_sums(nb.i, nb.j, nb.d, nb.r2, nb.fw, ps.V, ps.rho, np.zeros(ps.n),
                                   ps.u, ps.u, zero, density_gradient(ps, nb), ps.n)
        return 2.0 * cols[:, 2]
    return 2.0 * sums.cols[:, 2]


def continuity_rhs(ps: ParticleSystem, nb: Neighbourhood, model: FluidModel,
                   shift: np.ndarray | None = None, sums: PairSums | None = None) -> np.ndarray:
    """``d rho / dt`` for every particle (only fluid rows are meaningful)."""
    if sums is None:
        shift = shifting_velocity(ps, nb, model) if shift is None else shift
        sums = pair_sums(ps, nb, shift, model)
    c = sums.cols
    return -ps.rho * c[:, 0] + c[:, 1] + model.delta * model.h * model.c0 * 2.0 * c[:, 2]


@dataclass
class MomentumTerms:
    pressure: np.ndarray
    viscous: np.ndarray
    shifting: np.ndarray
    body: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.pressure + self.viscous + self.shifting + self.body


def momentum_terms(ps: ParticleSystem, nb: Neighbourhood, model: FluidModel,
                   shift: np.ndarray | None = None, t: float = 0.0,
                   sums: PairSums | None = None) -> MomentumTerms:
    """Individual contributions to ``du/dt`` for every particle."""
    if sums is None:
        shift = shifting_velocity(ps, nb, model) if shift is None else shift
        sums = pair_sums(ps, nb, shift, model)
    c = sums.cols
    inv_rho = 1.0 / ps.rho
    scale = (model.rho0 * inv_rho)[:, None]
    pressure = -inv_rho[:, None] * c[:, 3:5]
    viscous = scale * model.K * c[:, 5:7]
    shifting = scale * (c[:, 7:9] - ps.u * c[:, 9:10])
    return MomentumTerms(pressure, viscous, shifting, model.force(ps.x, t))


def momentum_rhs(ps: ParticleSystem, nb: Neighbourhood, model: FluidModel,
                 shift: np.ndarray | None = None, t: float = 0.0) -> np.ndarray:
    """``du/dt`` for every particle (only fluid rows are meaningful)."""
    return momentum_terms(ps, nb, model, shift, t).total


def advection_terms(ps: ParticleSystem, sums: PairSums) -> tuple[np.ndarray, np.ndarray]:
    """Discrete ``u . grad rho`` and ``(u . grad) u`` for every particle.

    Built as ``div(rho u) - rho div u`` and ``div(u u) - u div u`` from
    symmetric pair sums.
    """
    c = sums.cols
    return c[:, 10] - ps.rho * c[:, 11], sums.adv - ps.u * c[:, 11:12]


@dataclass
class StageRates:
    """Fluid-particle rates of one RHS evaluation, plus the data used to get them."""

    drho: np.ndarray
    du: np.ndarray
    shift: np.ndarray
    ps: ParticleSystem
    nb: Neighbourhood
    sums: PairSums = field(repr=False, default=None)


def field_rates(ps: ParticleSystem, geometry: Geometry, model: FluidModel, t: float,
                nb: Neighbourhood | None = None) -> StageRates:
    """Rebuild neighbours, refresh ghosts, and evaluate continuity and momentum.

    ``ps`` is modified in place (ghost values). Returned rates cover fluid
    particles only.
    """
    if nb is None:
        nb = Neighbourhood.build(ps, geometry, model.h)
    boundary_interpolate(ps, nb, model, t, no_slip=geometry.no_slip)
    shift = shifting_velocity(ps, nb, model)
    sums = pair_sums(ps, nb, shift, model)
    drho = continuity_rhs(ps, nb, model, sums=sums)
    du = momentum_terms(ps, nb, model, t=t, sums=sums).total
    f = ps.fluid
    return StageRates(drho[f], du[f], shift[f], ps, nb, sums)


# State vector layout: one row per fluid particle, columns [rho, ux, uy, x, y].
STATE_COLS = 5


def pack_state(ps: ParticleSystem) -> np.ndarray:
    f = ps.fluid
    return np.column_stack([ps.rho[f], ps.u[f], ps.x[f]])


def unpack_state(w: np.ndarray, template: ParticleSystem, geometry: Geometry) -> ParticleSystem:
    """Copy of ``template`` with fluid rows replaced from the state array."""
    ps = template.copy()
    f = ps.fluid
    ps.rho[f] = w[:, 0]
    ps.u[f] = w[:, 1:3]
    ps.x[f] = geometry.wrap(w[:, 3:5])
    return ps


def fom_rhs(w: np.ndarray, t: float, template: ParticleSystem, geometry: Geometry,
            model: FluidModel) -> np.ndarray:
    """Semi-discrete SPH right-hand side ``dw/dt`` in the packed state layout."""
    ps = unpack_state(w, template, geometry)
    rates = field_rates(ps, geometry, model, t)
    return np.column_stack([rates.drho, rates.du, ps.u[ps.fluid] + rates.shift])


def rk4_step(w: np.ndarray, t: float, dt: float, rhs: Callable[[np.ndarray, float], np.ndarray],
             post: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Classical four-stage Runge-Kutta update of ``dw/dt = rhs(w, t)``.

    Raises :class:`NumericalError` naming the stage at the first non-finite
    stage derivative.
    """
    def checked(k, stage):
        if not np.all(np.isfinite(k)):
            raise NumericalError(f"non-finite right-hand side in RK4 stage {stage}", stage=stage)
        return k

    k1 = checked(rhs(w, t), 1)
    k2 = checked(rhs(w + 0.5 * dt * k1, t + 0.5 * dt), 2)
    k3 = checked(rhs(w + 0.5 * dt * k2, t + 0.5 * dt), 3)
    k4 = checked(rhs(w + dt * k3, t + dt), 4)
    out = w + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return post(out) if post is not None else out


def kinetic_energy(ps: ParticleSystem) -> float:
    """Particle-averaged kinetic energy per unit mass of the fluid."""
    u = ps.u[ps.fluid]
    return 0.5 * float(np.mean(u[:, 0] ** 2 + u[:, 1] ** 2))


def max_density_deviation(ps: ParticleSystem, rho0: float) -> float:
    return float(np.max(np.abs(ps.rho[ps.fluid] / rho0 - 1.0)))


class FomSolver:
    """Full-order SPH time stepper owning the particle system.

    Parameters
    ----------
    ps : ParticleSystem
        Initial fluid + ghost particles.
    geometry : Geometry
    model : FluidModel
    dt : float
        Uniform time step, checked against the CFL bound at construction.
    """

    def __init__(self, ps: ParticleSystem, geometry: Geometry, model: FluidModel, dt: float,
                 t0: float = 0.0, rho_guard: float = 0.1):
        model.check_dt(dt)
        self.ps = ps.copy()
        self.ps.x[self.ps.fluid] = geometry.wrap(self.ps.x[self.ps.fluid])
        self.geometry = geometry
        self.model = model
        self.dt = float(dt)
        self.t = float(t0)
        self.step_count = 0
        self.rho_guard = rho_guard
        self.flagged_steps: list[int] = []
        self._ghost_x = self.ps.x[self.ps.ghost].copy()

    def rhs(self, w: np.ndarray, t: float) -> np.ndarray:
        return fom_rhs(w, t, self.ps, self.geometry, self.model)

    def _wrap(self, w: np.ndarray) -> np.ndarray:
        w[:, 3:5] = self.geometry.wrap(w[:, 3:5])
        return w

    def step(self) -> ParticleSystem:
        w = pack_state(self.ps)
        try:
            w = rk4_step(w, self.t, self.dt, self.rhs, post=self._wrap)
        except NumericalError as exc:
            exc.step = self.step_count + 1
            raise
        f = self.ps.fluid
        self.ps.rho[f] = w[:, 0]
        self.ps.u[f] = w[:, 1:3]
        self.ps.x[f] = w[:, 3:5]
        self.t += self.dt
        self.step_count += 1
        # refresh ghosts for the stored end-of-step state
        nb = Neighbourhood.build(self.ps, self.geometry, self.model.h)
        boundary_interpolate(self.ps, nb, self.model, self.t, no_slip=self.geometry.no_slip)
        if max_density_deviation(self.ps, self.model.rho0) >= self.rho_guard:
            self.flagged_steps.append(self.step_count)
            log.warning("step %d: density deviation beyond guard band %.3g", self.step_count, self.rho_guard)
        return self.ps

    def run(self, n_steps: int, callback: Callable[["FomSolver"], None] | None = None):
        for _ in range(n_steps):
            self.step()
            if callback is not None:
                callback(self)
        return self.ps

    @property
    def ghost_positions_unchanged(self) -> bool:
        return np.array_equal(self._ghost_x, self.ps.x[self.ps.ghost])


def make_particles(x_fluid: np.ndarray, u: np.ndarray, rho: np.ndarray, model: FluidModel,
                   ghosts: GhostBlock | None = None) -> ParticleSystem:
    """Fluid + ghost system with ``m = rho0 dx^2`` for every particle."""
    nf = len(x_fluid)
    ps = ParticleSystem.from_blocks(x_fluid, u, rho, np.full(nf, model.mass), ghosts, rho0=model.rho0)
    ps.m[:] = model.mass
    return ps
