"""Uniform 1-D cell-centered grid, species state, and the Neumann Poisson solver."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .errors import IncompatibleSourceError


@dataclass(frozen=True)
class Grid1D:
    N: int
    length: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise ValueError("grid needs at least 3 cells")
        if not self.length > 0:
            raise ValueError("grid length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.N

    @cached_property
    def centers(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) * self.dx

    @cached_property
    def faces(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dx


@dataclass(frozen=True)
class SpeciesState:
    """Concentrations ``u`` of shape ``(n, N)`` with weights ``a``.

    The aggregate ``u0`` is recomputed on every access.
    """

    u: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float, ndmin=2)
        a = np.array(self.a, dtype=float).reshape(-1)
        if u.ndim != 2 or u.shape[0] != a.size:
            raise ValueError(f"state has {u.shape[0]} species but {a.size} weights")
        if not np.all(np.isfinite(u)):
            raise ValueError("state contains non-finite values")
        u.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def N(self) -> int:
        return self.u.shape[1]

    @property
    def u0(self) -> np.ndarray:
        return aggregate(self.u, self.a)

    def replace(self, u) -> "SpeciesState":
        return SpeciesState(u, self.a)


@dataclass(frozen=True)
class PoissonSolution:
    phi: np.ndarray
    grad_phi: np.ndarray
    residual_inf: float


def aggregate(u, a) -> np.ndarray:
    """Weighted species sum ``u0_j = sum_i a_i u_ij``."""
    if isinstance(u, SpeciesState):
        u = u.u
    u = np.asarray(u, dtype=float)
    a = np.asarray(a, dtype=float)
    if u.ndim != 2 or u.shape[0] != a.size:
        raise ValueError("weights and species count disagree")
    return a @ u


def mass(grid: Grid1D, f) -> float | np.ndarray:
    """Midpoint integral; for a 2-D array, one value per row."""
    total = np.sum(np.asarray(f, dtype=float), axis=-1) * grid.dx
    return float(total) if np.ndim(total) == 0 else total


def compat_tol(grid: Grid1D, rhs) -> float:
    return 1e-8 * grid.N * max(1.0, float(np.max(np.abs(rhs))))


def neumann_laplacian(grid: Grid1D, phi) -> np.ndarray:
    """``-phi''`` with the three-point Neumann stencil."""
    phi = np.asarray(phi, dtype=float)
    flux = np.zeros(grid.N + 1)
    flux[1:-1] = np.diff(phi)
    return -(flux[1:] - flux[:-1]) / grid.dx**2


def solve_poisson(grid: Grid1D, rhs) -> PoissonSolution:
    """Solve ``-phi'' = rhs`` with homogeneous Neumann data and zero mean.

    The rhs is first projected onto zero mean (after the compatibility check),
    then the system with ``phi_0 = 0`` pinned is solved as a tridiagonal
    system and the mean is subtracted.  ``residual_inf`` is measured against
    the projected rhs.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (grid.N,):
        raise ValueError(f"rhs must have shape ({grid.N},)")
    defect = float(np.sum(rhs) * grid.dx)
    tol = compat_tol(grid, rhs)
    if abs(defect) > tol:
        raise IncompatibleSourceError(defect, tol)
    b = rhs - np.mean(rhs)
    if not np.any(b):
        zero = np.zeros(grid.N)
        return PoissonSolution(zero, np.zeros(grid.N + 1), 0.0)

    m = grid.N - 1
    bands = np.empty((3, m))
    bands[0] = -1.0
    bands[1] = 2.0
    bands[1, -1] = 1.0
    bands[2] = -1.0
    phi = np.zeros(grid.N)
    phi[1:] = solve_banded((1, 1), bands, grid.dx**2 * b[1:])
    phi -= np.mean(phi)

    grad = np.zeros(grid.N + 1)
    grad[1:-1] = np.diff(phi) / grid.dx
    resid = float(np.max(np.abs(neumann_laplacian(grid, phi) - b)))
    return PoissonSolution(phi, grad, resid)


def hminus1_seminorm(grid: Grid1D, w) -> float:
    """Dual norm of zero-mean ``w``: L2 norm of the gradient of ``(-Lap)^{-1} w``."""
    sol = solve_poisson(grid, w)
    return float(np.sqrt(np.sum(sol.grad_phi**2) * grid.dx))
