"""Explicit finite-volume integration of the species system and the scalar
aggregate equation.

The species equations are written in the form
``d_t u_i = div(p(u0) grad u_i + q(u0) u_i grad u0 + r(u0) u_i grad phi)``
with ``-phi'' = u0 - f``.  Face fluxes carry the sign of the divergence
argument, so the update is ``u_j += dt/dx (F_{j+1/2} - F_{j-1/2})``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .coefficients import CoefficientModel, Q_increment
from .errors import IncompatibleSourceError, NumericalError, StateOutOfRangeError
from .fields import Grid1D, PoissonSolution, SpeciesState, compat_tol, mass, solve_poisson

log = logging.getLogger(__name__)

RANGE_TOL = 1e-9
TINY = 1e-30
TAINT_FRACTION = 1e-6


@dataclass(frozen=True)
class SchemeConfig:
    """Discretization options.

    ``dt`` may be ``None`` when ``auto_cfl`` is set.  ``q_consistent`` selects
    the flux whose weighted species sum is exactly the aggregate flux
    ``(Q(u0_R) - Q(u0_L))/dx + R_face grad phi``.
    """

    dt: Optional[float] = None
    t_end: float = 0.0
    drift_flux: str = "centered"
    face_average: str = "arithmetic"
    cfl_safety: float = 0.45
    positivity_floor: float = 0.0
    auto_cfl: bool = False
    q_consistent: bool = False
    output_every: int = 1

    def __post_init__(self):
        if self.dt is None and not self.auto_cfl:
            raise ValueError("dt is required unless auto_cfl is set")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        if self.drift_flux not in ("centered", "upwind"):
            raise ValueError("drift_flux must be 'centered' or 'upwind'")
        if self.face_average not in ("arithmetic", "harmonic"):
            raise ValueError("face_average must be 'arithmetic' or 'harmonic'")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if not self.positivity_floor >= 0:
            raise ValueError("positivity_floor must be nonnegative")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")


@dataclass(frozen=True)
class Snapshot:
    t: float
    state: SpeciesState
    poisson: PoissonSolution


@dataclass
class Trajectory:
    snapshots: list = field(default_factory=list)
    records: list = field(default_factory=list)
    steps: int = 0
    clamped_mass: float = 0.0
    clamp_events: int = 0
    initial_mass: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    @property
    def tainted(self) -> bool:
        return self.clamped_mass > TAINT_FRACTION * max(self.initial_mass, TINY)


# -- face quantities -------------------------------------------------------


def _check_range(model: CoefficientModel, u0f):
    lo, hi = float(np.min(u0f, initial=0.0)), float(np.max(u0f, initial=0.0))
    upper = model.L + RANGE_TOL * max(1.0, model.L) if math.isfinite(model.L) else math.inf
    if lo < -RANGE_TOL or hi > upper:
        raise StateOutOfRangeError(
            f"aggregate face value outside [0, {model.L}] (min {lo:.6g}, max {hi:.6g})"
        )


def _face_p(model, u0, u0f, config):
    if config.face_average == "arithmetic":
        return model.p(u0f)
    pc = model.p(u0)
    pl, pr = pc[:-1], pc[1:]
    s = pl + pr
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(s > 0, 2.0 * pl * pr / np.where(s > 0, s, 1.0), 0.0)


def _face_values(values, velocity, config):
    """Face value of cell data: mean (centered) or donor cell (upwind)."""
    left, right = values[..., :-1], values[..., 1:]
    if config.drift_flux == "centered":
        return 0.5 * (left + right)
    # flux term is +velocity * u, so material moves against velocity
    return np.where(velocity > 0, right, left)


def _interior(model, u0, grid, phi_solution, config):
    u0f = 0.5 * (u0[:-1] + u0[1:])
    _check_range(model, u0f)
    du0 = np.diff(u0) / grid.dx
    gphi = phi_solution.grad_phi[1:-1]
    pf = _face_p(model, u0, u0f, config)
    qf = model.q(u0f)
    rf = model.r(u0f)
    velocity = qf * du0 + rf * gphi
    return u0f, du0, gphi, pf, qf, rf, velocity


def species_flux(grid, state, model, phi_solution, config) -> np.ndarray:
    """Face fluxes of shape ``(n, N+1)``; boundary faces are zero."""
    u = state.u
    u0 = state.u0
    u0f, du0, gphi, pf, qf, rf, velocity = _interior(model, u0, grid, phi_solution, config)
    duf = np.diff(u, axis=1) / grid.dx
    uf = _face_values(u, velocity, config)
    flux = np.zeros((state.n, grid.N + 1))
    if config.q_consistent:
        # cross term distributed by centered species shares so that
        # sum_i a_i F_i = dQ/dx + r u0_face grad phi exactly
        ubar = 0.5 * (u[:, :-1] + u[:, 1:])
        u0bar = state.a @ ubar
        share = np.divide(ubar, u0bar, out=np.zeros_like(ubar), where=u0bar > 0)
        cross = Q_increment(model, u0[:-1], u0[1:]) / grid.dx - pf * du0
        flux[:, 1:-1] = pf * duf + share * cross + rf * uf * gphi
    else:
        flux[:, 1:-1] = pf * duf + (qf * du0 + rf * gphi) * uf
    return flux


def aggregate_flux(grid, u0, model, phi_solution, config) -> np.ndarray:
    """Face flux of the scalar aggregate equation, length ``N+1``."""
    u0 = np.asarray(u0, dtype=float)
    u0f, du0, gphi, pf, qf, rf, velocity = _interior(model, u0, grid, phi_solution, config)
    face = _face_values(u0, velocity, config)
    flux = np.zeros(grid.N + 1)
    flux[1:-1] = Q_increment(model, u0[:-1], u0[1:]) / grid.dx + rf * face * gphi
    return flux


def _divergence(flux, dx):
    return (flux[..., 1:] - flux[..., :-1]) / dx


# -- time step -------------------------------------------------------------


def cfl_dt(state, model, grid, config, phi_solution=None) -> float:
    """Explicit step bound ``safety dx^2 / (2 max(p + |q| u0 + dx |r grad phi|/2))``."""
    u0 = state.u0 if isinstance(state, SpeciesState) else np.asarray(state, dtype=float)
    u0f = 0.5 * (u0[:-1] + u0[1:])
    gphi = 0.0 if phi_solution is None else phi_solution.grad_phi[1:-1]
    coeff = model.p(u0f) + np.abs(model.q(u0f)) * u0f + grid.dx * np.abs(model.r(u0f) * gphi) / 2
    return config.cfl_safety * grid.dx**2 / (2.0 * float(np.max(coeff)) + TINY)


def poisson_for(grid, u0, f) -> PoissonSolution:
    return solve_poisson(grid, np.asarray(u0, dtype=float) - np.asarray(f, dtype=float))


@dataclass
class StepResult:
    state: SpeciesState
    poisson: PoissonSolution
    dt: float
    clamped_mass: float


def advance(state, model, grid, f, config, dt=None, poisson=None) -> StepResult:
    """One explicit Euler step; ``poisson`` is the potential of ``state`` if
    already known.  The returned ``poisson`` belongs to the *old* state."""
    if poisson is None:
        poisson = poisson_for(grid, state.u0, f)
    if dt is None:
        dt = config.dt if not config.auto_cfl else cfl_dt(state, model, grid, config, poisson)
    flux = species_flux(grid, state, model, poisson, config)
    u = state.u + dt * _divergence(flux, grid.dx)
    if not np.all(np.isfinite(u)):
        raise NumericalError("non-finite values after update")
    clamped = 0.0
    low = u < config.positivity_floor
    if np.any(low):
        clamped = float(np.sum(config.positivity_floor - u[low]) * grid.dx)
        u[low] = config.positivity_floor
    return StepResult(state.replace(u), poisson, dt, clamped)


def step(state, model, grid, f, config) -> SpeciesState:
    res = advance(state, model, grid, f, config)
    if res.clamped_mass:
        log.warning("positivity clamp added mass %.3e", res.clamped_mass)
    return res.state


def aggregate_step(u0, model, grid, f, config, dt=None) -> np.ndarray:
    """One explicit step of ``d_t u0 = div(grad Q(u0) + R(u0) grad phi)``."""
    u0 = np.asarray(u0, dtype=float)
    poisson = poisson_for(grid, u0, f)
    if dt is None:
        dt = config.dt if not config.auto_cfl else cfl_dt(u0, model, grid, config, poisson)
    out = u0 + dt * _divergence(aggregate_flux(grid, u0, model, poisson, config), grid.dx)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite values after aggregate update")
    return out


Monitor = Callable[[float, SpeciesState, PoissonSolution], dict]


def run(initial, model, grid, f, config, monitor: Optional[Monitor] = None,
        record_every: int = 1) -> Trajectory:
    """Integrate to ``config.t_end``.

    Snapshots are taken at step 0, every ``config.output_every`` steps, and at
    the final time.  Mass added by the positivity clamp is matched by a
    uniform shift of the background so the potential stays well defined.  ``monitor(t, state, poisson)`` results are collected in
    ``Trajectory.records`` every ``record_every`` steps and at the end.
    """
    f = np.broadcast_to(np.asarray(f, dtype=float), (grid.N,))
    rhs0 = initial.u0 - f
    defect = float(np.sum(rhs0) * grid.dx)
    if abs(defect) > compat_tol(grid, rhs0):
        raise IncompatibleSourceError(defect, compat_tol(grid, rhs0))

    traj = Trajectory(initial_mass=float(np.sum(mass(grid, initial.u))))
    state = initial
    poisson = poisson_for(grid, state.u0, f)
    t = 0.0
    traj.snapshots.append(Snapshot(t, state, poisson))
    if monitor is not None:
        traj.records.append(monitor(t, state, poisson))

    k = 0
    while t < config.t_end:
        if config.auto_cfl:
            dt = min(cfl_dt(state, model, grid, config, poisson), config.t_end - t)
            t_next = t + dt if t + dt < config.t_end else config.t_end
        else:
            t_next = min((k + 1) * config.dt, config.t_end)
            if config.t_end - t_next < 1e-9 * config.dt:
                t_next = config.t_end
            dt = t_next - t
        try:
            res = advance(state, model, grid, f, config, dt=dt, poisson=poisson)
            state = res.state
            if res.clamped_mass:
                f = f + (np.mean(state.u0) - np.mean(f))
            poisson = poisson_for(grid, state.u0, f)
        except IncompatibleSourceError as exc:
            raise NumericalError(f"step {k + 1} (t={t:.6g}): {exc}") from exc
        except NumericalError as exc:
            raise type(exc)(f"step {k + 1} (t={t:.6g}): {exc}") from exc
        k += 1
        t = t_next
        if res.clamped_mass:
            traj.clamped_mass += res.clamped_mass
            traj.clamp_events += 1
            log.warning("step %d: positivity clamp added mass %.3e", k, res.clamped_mass)
        last = t >= config.t_end
        if k % config.output_every == 0 or last:
            traj.snapshots.append(Snapshot(t, state, poisson))
        if monitor is not None and (k % record_every == 0 or last):
            traj.records.append(monitor(t, state, poisson))
    traj.steps = k
    return traj
