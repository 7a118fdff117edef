"""Benchmark configurations: Taylor-Green vortex, lid-driven cavity, open cavity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from mrom.domain import Geometry, ParticleSystem, fluid_lattice, generate_ghosts
from mrom.errors import ConfigError
from mrom.sph import FluidModel, Neighbourhood, eos_density, make_particles, shifting_velocity

TWO_PI = 2.0 * math.pi
TGV_WAVENUMBER = TWO_PI


TGV_PRESSURE = ("negative", "balanced")


def tgv_analytic(x, y, t: float, nu: float, rho0: float = 1000.0, pressure: str = "negative"):
    """Analytic Taylor-Green velocity and pressure on the unit periodic square.

    Returns ``(ux, uy, p)``; the decay uses the wavenumber ``2 pi``. The
    default pressure is ``-rho0/4 (cos 4 pi x + cos 4 pi y)``, so ``p(0, 0) =
    -rho0/2``. ``pressure="balanced"`` flips the sign, which is the one that
    satisfies ``(u . grad) u = -grad p / rho`` for this velocity field.
    """
    if pressure not in TGV_PRESSURE:
        raise ConfigError(f"unknown TGV pressure variant {pressure!r}; expected one of {TGV_PRESSURE}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k2 = TGV_WAVENUMBER**2
    fu = math.exp(-2.0 * nu * k2 * t)
    fp = math.exp(-4.0 * nu * k2 * t)
    ux = np.sin(TWO_PI * x) * np.cos(TWO_PI * y) * fu
    uy = -np.cos(TWO_PI * x) * np.sin(TWO_PI * y) * fu
    sign = -1.0 if pressure == "negative" else 1.0
    p = sign * 0.25 * rho0 * (np.cos(2 * TWO_PI * x) + np.cos(2 * TWO_PI * y)) * fp
    return ux, uy, p


def tgv_energy_ratio(t: float, nu: float) -> float:
    """Analytic kinetic-energy ratio ``E(t) / E(0) = exp(-4 nu k^2 t)``."""
    return math.exp(-4.0 * nu * TGV_WAVENUMBER**2 * t)


def lid_profile(x):
    """Regularised lid velocity ``(1 - (2x - 1)^14)^2``; zero outside [0, 1]."""
    x = np.asarray(x, dtype=float)
    u = (1.0 - (2.0 * x - 1.0) ** 14) ** 2
    return np.where((x >= 0.0) & (x <= 1.0), u, 0.0)


@dataclass
class LogisticForcing:
    """Streamwise body force switched by a logistic function of time.

    With ``ramp="decay"`` (the default) the argument is ``f + f0`` with ``f = -t``, which
    decays from about ``b0`` to ``k0 b0``; ``ramp="up"`` uses ``t - f0``.
    The force acts only inside ``band = (x0, x1, y0, y1)``.
    """

    b0: float = 100.0
    k: float = 400.0
    k0: float = 0.001
    f0: float = 0.01
    band: tuple[float, float, float, float] = (0.1, 0.3, 0.1, 0.2)
    ramp: str = "decay"

    def __post_init__(self):
        if self.ramp not in ("decay", "up"):
            raise ConfigError(f"unknown ramp variant {self.ramp!r}")

    def magnitude(self, t: float) -> float:
        arg = (-t + self.f0) if self.ramp == "decay" else (t - self.f0)
        z = -self.k * arg
        logistic = 0.0 if z > 700 else 1.0 / (1.0 + math.exp(z))
        return self.b0 * (logistic + self.k0)

    def in_band(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        x0, x1, y0, y1 = self.band
        return (x[:, 0] >= x0) & (x[:, 0] <= x1) & (x[:, 1] >= y0) & (x[:, 1] <= y1)

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        out = np.zeros_like(np.atleast_2d(x), dtype=float)
        out[self.in_band(x), 0] = self.magnitude(t)
        return out


@dataclass
class CaseSpec:
    """Everything needed to set up one benchmark run."""

    name: str
    geometry: Geometry
    dx: float
    h_factor: float
    dt: float
    t_final: float
    rho0: float
    Ma: float
    U_ref: float
    mu: float
    Re: float | None = None
    L_ref: float = 1.0
    snapshot_interval: int = 10
    tau: float = 1e-4
    forcing: Callable | None = None
    ghost_layers: int = 3
    relax_steps: int = 0
    delta: float = 0.1
    chi: float = 0.2
    xi_shift: float = 4.0
    cfl: float = 1.5
    ghost_normal: str = "mirror"
    wall_continuity: bool = True
    init: Callable[["CaseSpec", np.ndarray], tuple[np.ndarray, np.ndarray]] | None = field(default=None, repr=False)

    @property
    def h(self) -> float:
        return self.h_factor * self.dx

    @property
    def nu(self) -> float:
        return self.mu / self.rho0

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def model(self) -> FluidModel:
        return FluidModel(
            rho0=self.rho0, U_max=self.U_ref, mu=self.mu, h=self.h, dx=self.dx, Ma=self.Ma,
            delta=self.delta, chi=self.chi, xi_shift=self.xi_shift, cfl=self.cfl, body_force=self.forcing,
            ghost_normal=self.ghost_normal, wall_continuity=self.wall_continuity,
        )

    def with_overrides(self, **kw) -> "CaseSpec":
        spec = replace(self, **kw)
        if "Re" in kw and "mu" not in kw and kw["Re"] is not None:
            spec = replace(spec, mu=spec.rho0 * spec.U_ref * spec.L_ref / kw["Re"])
        return spec

    def initial_particles(self) -> ParticleSystem:
        """Lattice (optionally relaxed) fluid particles plus ghost layers."""
        model = self.model()
        x = fluid_lattice(self.geometry, self.dx)
        ghosts = generate_ghosts(self.geometry, self.dx, self.ghost_layers)
        if self.relax_steps > 0:
            x = relax_positions(x, ghosts, self.geometry, model, self.relax_steps)
        u, rho = self.init(self, x) if self.init else (np.zeros_like(x), np.full(len(x), self.rho0))
        return make_particles(x, u, rho, model, ghosts)


def relax_positions(x: np.ndarray, ghosts, geometry: Geometry, model: FluidModel, steps: int,
                    dt: float | None = None) -> np.ndarray:
    """Move particles with the shifting velocity only (fields frozen at rest)."""
    dt = model.max_dt() / 4 if dt is None else dt
    x = x.copy()
    for _ in range(steps):
        ps = make_particles(x, np.zeros_like(x), np.full(len(x), model.rho0), model, ghosts)
        nb = Neighbourhood.build(ps, geometry, model.h)
        x = geometry.wrap(x + dt * shifting_velocity(ps, nb, model)[ps.fluid])
    return x


def _tgv_fields(pressure: str):
    def init(spec: CaseSpec, x: np.ndarray):
        ux, uy, p = tgv_analytic(x[:, 0], x[:, 1], 0.0, spec.nu, spec.rho0, pressure)
        return np.column_stack([ux, uy]), eos_density(p, spec.model())

    return init


def tgv_spec(n: int = 300, Re: float = 100.0, h_factor: float = 4.0, dt: float | None = None,
             t_final: float = 1.0, snapshot_interval: int = 10, pressure: str = "negative") -> CaseSpec:
    """Periodic unit-square Taylor-Green vortex; ``mu = rho0 U L / Re``."""
    if pressure not in TGV_PRESSURE:
        raise ConfigError(f"unknown TGV pressure variant {pressure!r}; expected one of {TGV_PRESSURE}")
    rho0, U = 1000.0, 1.0
    dx = 1.0 / n
    return CaseSpec(
        name="tgv",
        geometry=Geometry((0.0, 1.0, 0.0, 1.0), periodic=(True, True)),
        dx=dx, h_factor=h_factor,
        dt=5e-4 * (300.0 / n) if dt is None else dt,
        t_final=t_final, rho0=rho0, Ma=0.1, U_ref=U, mu=rho0 * U * 1.0 / Re, Re=Re,
        snapshot_interval=snapshot_interval, tau=1e-4, init=_tgv_fields(pressure),
    )


def tgv_init(dx: float, Re: float, t0: float = 0.0, h_factor: float = 4.0,
             pressure: str = "negative") -> ParticleSystem:
    """Lattice particles carrying the analytic Taylor-Green fields at ``t0``."""
    spec = tgv_spec(n=int(round(1.0 / dx)), Re=Re, h_factor=h_factor, pressure=pressure)
    model = spec.model()
    x = fluid_lattice(spec.geometry, spec.dx)
    ux, uy, p = tgv_analytic(x[:, 0], x[:, 1], t0, spec.nu, spec.rho0, pressure)
    return make_particles(x, np.column_stack([ux, uy]), eos_density(p, model), model)


def _ldc_wall_velocity(x: np.ndarray, normal: np.ndarray) -> np.ndarray:
    u = np.zeros_like(x)
    lid = (x[:, 1] > 1.0) & (x[:, 0] >= 0.0) & (x[:, 0] <= 1.0)
    u[lid, 0] = lid_profile(x[lid, 0])
    return u


def ldc_spec(Re: float = 100.0, n: int = 200, dt: float | None = None, t_final: float = 10.0,
             snapshot_interval: int = 50, ghost_layers: int = 3) -> CaseSpec:
    """Lid-driven unit cavity, regularised lid, ``rho0 = 1``, ``mu = rho0 U L / Re``."""
    if not 50.0 <= Re <= 200.0:
        raise ConfigError(f"lid-driven cavity Reynolds number {Re} outside [50, 200]")
    rho0, U = 1.0, 1.0
    dx = 1.0 / n
    geometry = Geometry((0.0, 1.0, 0.0, 1.0), periodic=(False, False),
                        wall_velocity=_ldc_wall_velocity, wall_pad=ghost_layers * dx + 1e-9)
    return CaseSpec(
        name="ldc", geometry=geometry, dx=dx, h_factor=2.0,
        dt=2e-4 * (200.0 / n) if dt is None else dt,
        t_final=t_final, rho0=rho0, Ma=0.1, U_ref=U, mu=rho0 * U * 1.0 / Re, Re=Re,
        snapshot_interval=snapshot_interval, tau=1e-7, ghost_layers=ghost_layers,
    )


OPEN_CAVITY_LENGTH = 0.2
OPEN_CAVITY_RE = 2400.0


def open_cavity_spec(dx: float = 0.001, dt: float | None = None, t_final: float = 1.0,
                     ramp: str = "decay", band: tuple[float, float, float, float] = (0.1, 0.3, 0.1, 0.2),
                     snapshot_interval: int = 50, ghost_layers: int = 3) -> CaseSpec:
    """Channel [0, 0.4] x [0.1, 0.2] (periodic in x) over a cavity [0.1, 0.3] x [0, 0.1].

    Viscosity follows from ``Re = U_ref L_cavity / nu`` with ``Re = 2400``.
    """
    rho0, U = 1.0, 2.0
    geometry = Geometry(
        (0.0, 0.4, 0.0, 0.2), periodic=(True, False),
        regions=[(0.0, 0.4, 0.1, 0.2), (0.1, 0.3, 0.0, 0.1)],
        wall_pad=ghost_layers * dx + 1e-9,
    )
    nu = U * OPEN_CAVITY_LENGTH / OPEN_CAVITY_RE
    return CaseSpec(
        name="cavity", geometry=geometry, dx=dx, h_factor=2.0,
        dt=2.5e-5 * (dx / 0.001) if dt is None else dt,
        t_final=t_final, rho0=rho0, Ma=0.1, U_ref=U, mu=rho0 * nu, Re=OPEN_CAVITY_RE,
        L_ref=OPEN_CAVITY_LENGTH, snapshot_interval=snapshot_interval, tau=1e-7,
        forcing=LogisticForcing(band=band, ramp=ramp), ghost_layers=ghost_layers,
    )


CASES = {"tgv": tgv_spec, "ldc": ldc_spec, "cavity": open_cavity_spec}
