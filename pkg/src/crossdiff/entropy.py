"""Entropy functionals and semimetrics between species states.

``h(s) = s(log s - 1) + 1`` and its shift ``h_eps(s) = h(s + eps)``.  Two
semimetrics are offered: the Gajewski distance
``sum_i int h_eps(u_i) + h_eps(v_i) - 2 h_eps((u_i + v_i)/2)`` and the
symmetrized relative entropy ``sum_i int (log(u_i+eps) - log(v_i+eps))(u_i - v_i)``.
Integrals are midpoint cell sums.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError
from .fields import Grid1D, PoissonSolution, SpeciesState, hminus1_seminorm, mass

KINDS = ("gajewski", "relative_sym")


@dataclass(frozen=True)
class EntropySpec:
    eps: float = 1e-8
    kind: str = "gajewski"

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")


@dataclass
class DistanceReport:
    value: float
    per_species: np.ndarray
    lower_bound: float


def entropy_h(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("entropy defined for s >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s > 0, s * (np.log(np.where(s > 0, s, 1.0)) - 1.0) + 1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def entropy_h_eps(s, eps):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("entropy defined for s >= 0")
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    t = s + eps
    out = t * (np.log(t) - 1.0) + 1.0
    return float(out) if out.ndim == 0 else out


def _arrays(a, b):
    u = a.u if isinstance(a, SpeciesState) else np.atleast_2d(np.asarray(a, dtype=float))
    v = b.u if isinstance(b, SpeciesState) else np.atleast_2d(np.asarray(b, dtype=float))
    if u.shape != v.shape:
        raise ValueError(f"state shapes differ: {u.shape} vs {v.shape}")
    return u, v


def quadratic_lower_bound(grid, a_state, b_state) -> float:
    """``1/4 sum_i int (u_i - v_i)^2 / (max(u_i, v_i) + 1)``."""
    u, v = _arrays(a_state, b_state)
    return float(0.25 * np.sum((u - v) ** 2 / (np.maximum(u, v) + 1.0)) * grid.dx)


def semimetric(grid: Grid1D, a_state, b_state, spec: EntropySpec = EntropySpec()) -> DistanceReport:
    u, v = _arrays(a_state, b_state)
    if np.any(u < 0) or np.any(v < 0):
        raise DomainError("semimetrics need nonnegative states")
    eps = spec.eps
    if spec.kind == "gajewski":
        dens = entropy_h_eps(u, eps) + entropy_h_eps(v, eps) - 2.0 * entropy_h_eps(0.5 * (u + v), eps)
    else:
        dens = (np.log(u + eps) - np.log(v + eps)) * (u - v)
    per = np.sum(dens, axis=1) * grid.dx
    return DistanceReport(float(np.sum(per)), per, quadratic_lower_bound(grid, u, v))


def gajewski_identity_check(u, v, du, dv, eps):
    """Both sides of the pointwise identity behind the Gajewski estimate.

    ``lhs = du^2/(u+e) + dv^2/(v+e) - (du+dv)^2/(u+v+2e)`` and
    ``rhs = (sqrt((v+e)/(u+e)) du - sqrt((u+e)/(v+e)) dv)^2 / (u+v+2e)``.
    Works elementwise on arrays.
    """
    u, v, du, dv = (np.asarray(x, dtype=float) for x in (u, v, du, dv))
    if np.any(u < 0) or np.any(v < 0) or not np.all(np.asarray(eps) > 0):
        raise DomainError("need u, v >= 0 and eps > 0")
    ue, ve = u + eps, v + eps
    lhs = du**2 / ue + dv**2 / ve - (du + dv) ** 2 / (ue + ve)
    rhs = (np.sqrt(ve / ue) * du - np.sqrt(ue / ve) * dv) ** 2 / (ue + ve)
    return lhs, rhs


# -- condition u g_uu + v g_uv = 0 --------------------------------------------


def gajewski_integrand(u, v):
    return entropy_h(u) + entropy_h(v) - 2.0 * entropy_h(0.5 * (u + v))


def relsym_integrand(u, v):
    return (np.log(u) - np.log(v)) * (u - v)


@dataclass
class FamilyReport:
    max_violation: float
    argmax: tuple
    nonfinite_points: list = field(default_factory=list)
    tol: float = 1e-6

    @property
    def ok(self) -> bool:
        return not self.nonfinite_points and self.max_violation <= self.tol


def semimetric_family_check(
    g: Callable, samples: int = 50, box=(0.1, 2.0), h_rel: float = 1e-2, tol: float = 1e-6
) -> FamilyReport:
    """Max of ``|u g_uu + v g_uv|`` over a ``samples x samples`` grid on ``box^2``.

    Derivatives are central differences with step ``h_rel * min(u, v)``,
    Richardson-extrapolated to fourth order.
    """
    lo, hi = box
    s = np.linspace(lo, hi, samples)
    U, V = np.meshgrid(s, s, indexing="ij")

    def combo(h):
        g_uu = (g(U + h, V) - 2.0 * g(U, V) + g(U - h, V)) / h**2
        g_uv = (g(U + h, V + h) - g(U + h, V - h) - g(U - h, V + h) + g(U - h, V - h)) / (4 * h * h)
        return U * g_uu + V * g_uv

    h = h_rel * np.minimum(np.abs(U), np.abs(V))
    with np.errstate(all="ignore"):
        viol = np.abs((4.0 * combo(h / 2) - combo(h)) / 3.0)
    bad = ~np.isfinite(viol)
    points = [(float(U[i]), float(V[i])) for i in zip(*np.nonzero(bad))]
    viol = np.where(bad, 0.0, viol)
    k = np.unravel_index(int(np.argmax(viol)), viol.shape)
    return FamilyReport(float(viol[k]), (float(U[k]), float(V[k])), points, tol)


def entropy_functional(grid: Grid1D, state, spec: EntropySpec = EntropySpec()) -> float:
    u = state.u if isinstance(state, SpeciesState) else np.atleast_2d(state)
    return float(np.sum(entropy_h_eps(u, spec.eps)) * grid.dx)


# -- per-step diagnostics ----------------------------------------------------


@dataclass
class DiagnosticsRecord:
    """Diagnostics at one time.

    For a single run the distances compare the state with the well-mixed state
    of equal species masses and ``hminus1`` is the field energy
    ``||grad phi||``; for a pair of runs they compare the two states and
    ``hminus1`` is the dual norm of the aggregate difference.
    """

    t: float
    H_total: float
    d_gajewski: float
    d_relsym: float
    lower_bound: float
    hminus1: float
    masses: np.ndarray
    max_grad_phi: float = 0.0
    l2_diff: float = 0.0

    COLUMNS = ("t", "H_total", "d_gajewski", "d_relsym", "lower_bound", "hminus1")

    def row(self):
        return [self.t, self.H_total, self.d_gajewski, self.d_relsym, self.lower_bound,
                self.hminus1, *self.masses, self.max_grad_phi, self.l2_diff]

    @staticmethod
    def header(n: int):
        return [*DiagnosticsRecord.COLUMNS, *(f"mass_{i + 1}" for i in range(n)),
                "max_grad_phi", "l2_diff"]


def _distances(grid, u, v, eps):
    dg = semimetric(grid, u, v, EntropySpec(eps, "gajewski"))
    dr = semimetric(grid, u, v, EntropySpec(eps, "relative_sym"))
    return dg.value, dr.value, dg.lower_bound


def single_record(grid, t, state, poisson: PoissonSolution, eps=1e-8) -> DiagnosticsRecord:
    u = state.u
    mixed = np.broadcast_to(np.mean(u, axis=1, keepdims=True), u.shape)
    dg, dr, lb = _distances(grid, u, mixed, eps)
    energy = float(np.sqrt(np.sum(poisson.grad_phi**2) * grid.dx))
    return DiagnosticsRecord(
        t, entropy_functional(grid, u, EntropySpec(eps)), dg, dr, lb, energy,
        np.atleast_1d(mass(grid, u)), float(np.max(np.abs(poisson.grad_phi))),
        float(np.sqrt(np.sum((u - mixed) ** 2) * grid.dx)),
    )


def pair_record(grid, t, a_state, b_state, eps=1e-8, max_grad_phi=0.0) -> DiagnosticsRecord:
    u, v = a_state.u, b_state.u
    dg, dr, lb = _distances(grid, u, v, eps)
    w = a_state.u0 - b_state.u0
    hm = hminus1_seminorm(grid, w) if np.any(w) else 0.0
    H = entropy_functional(grid, u, EntropySpec(eps)) + entropy_functional(grid, v, EntropySpec(eps))
    return DiagnosticsRecord(
        t, H, dg, dr, lb, hm, np.atleast_1d(mass(grid, u)), max_grad_phi,
        float(np.sqrt(np.sum((u - v) ** 2) * grid.dx)),
    )
