"""Meshless projection-based reduced model (Galerkin POD and adjoint Petrov-Galerkin).

The reduced state is ``omega_hat`` plus the particle positions. At each RK4
stage the spline basis is evaluated at the particles, the full field
``omega~ = Phi~ omega_hat`` is rebuilt, the advection-free SPH functional is
evaluated and projected back onto the basis. Particles move with the
back-projected velocity plus the shifting velocity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import qr, solve_triangular

from mrom.domain import Geometry, ParticleSystem
from mrom.errors import ConfigError, NumericalError
from mrom.reference import D_BAR, split_state, stack_state
from mrom.sph import FluidModel, Neighbourhood, advection_terms, field_rates, rk4_step
from mrom.spline import SplineBasis, eval_basis

log = logging.getLogger(__name__)

RANK_TOL = 1e-12


@dataclass
class ApgConfig:
    """Adjoint Petrov-Galerkin memory length ``tau`` (s) and Jacobian perturbation ``eps``."""

    tau: float = 1e-4
    eps: float = 1e-5

    def __post_init__(self):
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise ConfigError(f"APG memory length must be >= 0, got {self.tau!r}")
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ConfigError(f"APG perturbation must be > 0, got {self.eps!r}")


@dataclass
class RomState:
    omega_hat: np.ndarray
    x: np.ndarray
    t: float = 0.0


class Projector:
    """Least-squares pseudo-inverse of a tall matrix via pivoted QR.

    ``row_scale`` optionally weights the rows (block scaling of density and
    velocity rows) before factorising.
    """

    def __init__(self, A: np.ndarray, row_scale: np.ndarray | None = None):
        self.A = A
        self.row_scale = row_scale
        As = A if row_scale is None else A * row_scale[:, None]
        Q, R, perm = qr(As, mode="economic", pivoting=True)
        d = np.abs(np.diag(R))
        if len(d) and (d[0] == 0.0 or d[-1] <= RANK_TOL * d[0]):
            cond = math.inf if d[-1] == 0.0 else d[0] / d[-1]
            raise NumericalError(f"rank-deficient evaluated basis (condition estimate {cond:.3g})")
        self.Q, self.R, self.perm = Q, R, perm

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        """``A^+ f``."""
        fs = f if self.row_scale is None else f * self.row_scale
        z = solve_triangular(self.R, self.Q.T @ fs, check_finite=False)
        out = np.empty_like(z)
        out[self.perm] = z
        return out

    def orthogonal(self, f: np.ndarray) -> np.ndarray:
        """``(I - A A^+) f``."""
        return f - self.A @ self.coefficients(f)


def project_gpod(Phi_tilde: np.ndarray | Projector, f_bar: np.ndarray) -> np.ndarray:
    """Galerkin reduced right-hand side ``Phi~^+ f_bar``."""
    P = Phi_tilde if isinstance(Phi_tilde, Projector) else Projector(Phi_tilde)
    return P.coefficients(f_bar)


def project_apg(Phi_tilde: np.ndarray | Projector, f_bar: np.ndarray, omega_tilde: np.ndarray,
                apg: ApgConfig, rhs_evaluator: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Adjoint Petrov-Galerkin reduced right-hand side.

    ``Phi~^+ (f + tau/eps [f(omega~ + eps Pi' f) - f(omega~)])`` with the
    orthogonal projector ``Pi' = I - Phi~ Phi~^+``. ``rhs_evaluator`` maps a
    full field state to ``f_bar`` at fixed particle positions. ``tau = 0``
    returns the Galerkin result directly.
    """
    P = Phi_tilde if isinstance(Phi_tilde, Projector) else Projector(Phi_tilde)
    if apg.tau == 0.0:
        return project_gpod(P, f_bar)
    orth = P.orthogonal(f_bar)
    perturbed = rhs_evaluator(omega_tilde + apg.eps * orth)
    if not np.all(np.isfinite(perturbed)):
        raise NumericalError("non-finite right-hand side at the APG perturbed state")
    jac_action = (perturbed - f_bar) / apg.eps
    return P.coefficients(f_bar + apg.tau * jac_action)


def fluid_system(template: ParticleSystem, geometry: Geometry, x: np.ndarray, omega: np.ndarray) -> ParticleSystem:
    """Copy of ``template`` whose fluid rows take positions ``x`` and the stacked fields ``omega``."""
    ps = template.copy()
    f = ps.fluid
    rho, u = split_state(omega)
    ps.x[f] = geometry.wrap(x)
    ps.rho[f] = rho
    ps.u[f] = u
    return ps


@dataclass
class ReferenceRates:
    """Advection-free functional and particle velocities of one evaluation."""

    f_bar: np.ndarray
    velocity: np.ndarray
    nb: Neighbourhood


def reference_rhs(ps: ParticleSystem, geometry: Geometry, model: FluidModel, t: float = 0.0,
                  nb: Neighbourhood | None = None) -> ReferenceRates:
    """SPH functional with the field-advection sums removed, stacked per particle.

    Particle shifting terms are kept. ``ps`` gets refreshed ghosts (in place).
    The returned ``velocity`` is ``u + du_shift`` of the fluid particles.
    """
    rates = field_rates(ps, geometry, model, t, nb)
    adv_rho, adv_u = advection_terms(ps, rates.sums)
    f = ps.fluid
    f_bar = stack_state(rates.drho - adv_rho[f], rates.du - adv_u[f])
    return ReferenceRates(f_bar, ps.u[f] + rates.shift, rates.nb)


def block_weights(n: int, model: FluidModel) -> np.ndarray:
    """Row weights dividing density rows by ``rho0`` and velocity rows by ``U_max``."""
    w = np.empty((n, D_BAR))
    w[:, 0] = 1.0 / model.rho0
    w[:, 1:] = 1.0 / model.U_max
    return w.ravel()


class RomSolver:
    """Reduced-order time stepper.

    Parameters
    ----------
    spline : SplineBasis
        Spatial basis ``Phi~(x)``.
    template : ParticleSystem
        Supplies masses and ghost particles (positions, normals, wall velocities).
    geometry, model :
        As for the full-order solver.
    dt : float
        Time step, checked against the CFL bound.
    projection : {"gpod", "apg"}
    apg : ApgConfig, optional
    block_scaling : bool
        Weight density and velocity rows by ``1/rho0`` and ``1/U_max`` in the
        least-squares projections.
    """

    def __init__(self, spline: SplineBasis, template: ParticleSystem, geometry: Geometry, model: FluidModel,
                 dt: float, projection: str = "gpod", apg: ApgConfig | None = None, block_scaling: bool = False):
        if projection not in ("gpod", "apg"):
            raise ConfigError(f"unknown projection {projection!r}")
        model.check_dt(dt)
        self.spline = spline
        self.template = template.copy()
        self.geometry = geometry
        self.model = model
        self.dt = float(dt)
        self.projection = projection
        self.apg = apg if apg is not None else ApgConfig()
        self.block_scaling = block_scaling
        self.state: RomState | None = None
        self.step_count = 0

    @property
    def n_fluid(self) -> int:
        return self.template.n_fluid

    def _projector(self, Phi_tilde: np.ndarray) -> Projector:
        scale = block_weights(self.n_fluid, self.model) if self.block_scaling else None
        return Projector(Phi_tilde, scale)

    def initialise(self, x0: np.ndarray, omega0: np.ndarray, t0: float = 0.0) -> RomState:
        """Least-squares fit ``omega_hat0 = Phi~(x0)^+ omega0``."""
        x0 = self.geometry.wrap(np.asarray(x0, dtype=float))
        P = self._projector(eval_basis(self.spline, x0))
        self.state = RomState(P.coefficients(np.asarray(omega0, dtype=float)), x0, float(t0))
        self.step_count = 0
        return self.state

    def reconstruct(self, state: RomState | None = None) -> ParticleSystem:
        """Particle system carrying ``Phi~(x) omega_hat`` at the state's positions."""
        state = self.state if state is None else state
        omega = eval_basis(self.spline, state.x) @ state.omega_hat
        return fluid_system(self.template, self.geometry, state.x, omega)

    def rhs(self, omega_hat: np.ndarray, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Reduced rates ``(d omega_hat/dt, dx/dt)`` of one stage."""
        Phi_tilde = eval_basis(self.spline, x)
        omega = Phi_tilde @ omega_hat
        ps = fluid_system(self.template, self.geometry, x, omega)
        base = reference_rhs(ps, self.geometry, self.model, t)
        P = self._projector(Phi_tilde)
        if self.projection == "gpod":
            f_hat = project_gpod(P, base.f_bar)
        else:
            def evaluate(omega_perturbed):
                q = fluid_system(self.template, self.geometry, x, omega_perturbed)
                return reference_rhs(q, self.geometry, self.model, t, nb=base.nb).f_bar

            f_hat = project_apg(P, base.f_bar, omega, self.apg, evaluate)
        return f_hat, base.velocity

    def _packed_rhs(self, w: np.ndarray, t: float) -> np.ndarray:
        M = len(self.state.omega_hat)
        f_hat, vel = self.rhs(w[:M], w[M:].reshape(-1, 2), t)
        return np.concatenate([f_hat, vel.ravel()])

    def _wrap(self, w: np.ndarray) -> np.ndarray:
        M = len(self.state.omega_hat)
        w[M:] = self.geometry.wrap(w[M:].reshape(-1, 2)).ravel()
        return w

    def step(self) -> RomState:
        if self.state is None:
            raise RuntimeError("initialise() the reduced state first")
        s = self.state
        w = np.concatenate([s.omega_hat, s.x.ravel()])
        try:
            w = rk4_step(w, s.t, self.dt, self._packed_rhs, post=self._wrap)
        except NumericalError as exc:
            exc.step = self.step_count + 1
            raise
        M = len(s.omega_hat)
        self.state = RomState(w[:M], w[M:].reshape(-1, 2), s.t + self.dt)
        self.step_count += 1
        return self.state

    def run(self, n_steps: int, callback: Callable[["RomSolver"], None] | None = None) -> RomState:
        for _ in range(n_steps):
            self.step()
            if callback is not None:
                callback(self)
        return self.state


def rom_step(state: RomState, solver: RomSolver) -> RomState:
    """Advance ``state`` by one RK4 step of ``solver`` (the solver's own state is replaced)."""
    solver.state = state
    return solver.step()


@dataclass
class BasisInterval:
    lo: float
    hi: float
    basis: object


def select_local_basis(registry: Sequence[tuple[tuple[float, float], object]] | Sequence[BasisInterval],
                       Re: float):
    """Pick the basis whose interval holds ``Re``.

    Intervals are half-open ``[a, b)`` except the last one, which is closed.
    """
    items = [r if isinstance(r, BasisInterval) else BasisInterval(r[0][0], r[0][1], r[1]) for r in registry]
    items.sort(key=lambda b: b.lo)
    for k, item in enumerate(items):
        last = k == len(items) - 1
        if item.lo <= Re < item.hi or (last and Re == item.hi):
            return item.basis
    raise LookupError(f"no local basis covers Re = {Re}")
