"""Coefficient models for the cross-diffusion class.

A model is defined by scalar functions ``p``, ``q``, ``r`` of the aggregate
concentration ``u0 = sum_i a_i u_i`` and nonnegative weights ``a_i``.  The
diffusion matrix is ``A_ij(u) = p(u0) delta_ij + a_j u_i q(u0)`` and the drift
matrix is ``B_ij(u) = r(u0) u_i delta_ij``.  Summing the species equations with
weights ``a_i`` gives the scalar equation
``d_t u0 = div(grad Q(u0) + R(u0) grad phi)`` with ``R(s) = r(s) s`` and
``Q(s) = int_0^s p(t) + q(t) t dt``.

All coefficient callables are vectorized over numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError, InversionError, ModelError
from .expr import Expression

ScalarFn = Callable[[np.ndarray], np.ndarray]

TOL = 1e-12
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _const(value: float) -> ScalarFn:
    def fn(s):
        return np.full(np.shape(s), value, dtype=float) if np.ndim(s) else float(value)

    return fn


@dataclass(frozen=True)
class CoefficientModel:
    """Immutable description of ``p, q, r`` and the weights ``a``.

    ``L`` is the upper bound of the admissible aggregate; ``math.inf`` is
    allowed only when ``r`` vanishes identically.  ``r_prime`` may be omitted,
    in which case a central difference is used and ``r_prime_is_fd`` is set.
    ``Q`` is an optional closed form of the integral of ``p + q s``.
    """

    n: int
    a: np.ndarray
    p: ScalarFn
    q: ScalarFn
    r: ScalarFn
    L: float
    r_prime: Optional[ScalarFn] = None
    Q: Optional[ScalarFn] = None
    r_is_zero: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.array(self.a, dtype=float).reshape(-1)
        if self.n < 1 or a.size != self.n:
            raise ValueError(f"need {self.n} weights, got {a.size}")
        if np.any(a < 0) or not np.any(a > 0):
            raise ValueError("weights must be nonnegative with at least one positive")
        if not (self.L > 0):
            raise ValueError("L must be positive")
        if math.isinf(self.L) and not self.r_is_zero:
            raise ValueError("an unbounded aggregate range requires r == 0")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def r_prime_is_fd(self) -> bool:
        return self.r_prime is None

    def dr(self, s):
        """Derivative of ``r``; central differences if no closed form."""
        if self.r_prime is not None:
            return self.r_prime(s)
        s = np.asarray(s, dtype=float)
        h = 1e-6 * max(1.0, self.L if math.isfinite(self.L) else 1.0)
        hi = np.minimum(s + h, self.L)
        lo = np.maximum(s - h, 0.0)
        return (self.r(hi) - self.r(lo)) / (hi - lo)

    def Q_prime(self, s):
        return self.p(s) + self.q(s) * s

    def R(self, s):
        return self.r(s) * s

    def with_bound(self, L: float) -> "CoefficientModel":
        return CoefficientModel(
            self.n, self.a, self.p, self.q, self.r, L, self.r_prime, self.Q,
            self.r_is_zero, self.name, dict(self.params, L=L),
        )


@dataclass
class StructuralReport:
    min_p: float
    min_p_plus_qs: float
    sup_ratio: float
    cond1_ok: bool
    cond2_ok: bool
    sample_count: int
    argmin_p: float
    argmin_p_plus_qs: float
    argmax_ratio: float
    r_prime_fd: bool
    L: float
    max_dev_p_plus_qs: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.cond1_ok and self.cond2_ok

    def lines(self):
        yield f"samples           {self.sample_count} on [0, {self.L:g}]"
        yield f"min p             {self.min_p:.17g} at s={self.argmin_p:.6g}"
        yield f"min p+q*s         {self.min_p_plus_qs:.17g} at s={self.argmin_p_plus_qs:.6g}"
        yield f"sup ratio (M)     {self.sup_ratio:.17g} at s={self.argmax_ratio:.6g}"
        yield f"r' by finite diff {self.r_prime_fd}"
        yield f"condition 1       {'ok' if self.cond1_ok else 'FAIL'}"
        yield f"condition 2       {'ok' if self.cond2_ok else 'FAIL'}"


def _check_domain(model: CoefficientModel, s):
    arr = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > model.L):
        raise DomainError(f"s={s!r} outside [0, {model.L}]")


def eval_Q(model: CoefficientModel, s: float) -> float:
    """Integral of ``p(t) + q(t) t`` from 0 to ``s``."""
    _check_domain(model, s)
    if model.Q is not None:
        return float(model.Q(float(s)))
    if s == 0:
        return 0.0
    value, _ = integrate.quad(
        lambda t: float(model.Q_prime(t)), 0.0, float(s), epsabs=1e-12, epsrel=1e-12,
        limit=200,
    )
    return value


def eval_R(model: CoefficientModel, s: float) -> float:
    _check_domain(model, s)
    return float(model.R(float(s)))


def Q_increment(model: CoefficientModel, lo, hi):
    """Vectorized ``Q(hi) - Q(lo)``.

    Uses the closed form when one is registered, otherwise 8-point
    Gauss-Legendre on each interval ``[lo, hi]``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if model.Q is not None:
        return model.Q(hi) - model.Q(lo)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    total = np.zeros(np.broadcast(lo, hi).shape)
    for x, w in zip(_GL_NODES, _GL_WEIGHTS):
        total = total + w * model.Q_prime(mid + half * x)
    return half * total


def check_conditions(
    model: CoefficientModel, samples: int = 1000, L: Optional[float] = None
) -> StructuralReport:
    """Check ``p >= 0``, ``p + q s >= 0`` and boundedness of
    ``(r + r' s)^2 / (p + q s)`` on a uniform grid over ``[0, L]``.

    The supremum is reported as the model's best constant ``M``; points where
    both numerator and denominator are below ``TOL`` contribute 0.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    upper = model.L if L is None else float(L)
    if not math.isfinite(upper):
        raise DomainError("an infinite range cannot be sampled; pass a finite L")
    s = np.linspace(0.0, upper, samples)
    values = {}
    for name, fn in (("p", model.p), ("q", model.q), ("r", model.r), ("r'", model.dr)):
        try:
            with np.errstate(all="ignore"):
                v = np.broadcast_to(np.asarray(fn(s), dtype=float), s.shape)
        except Exception as exc:
            raise ModelError(f"{name} failed to evaluate: {exc}") from exc
        bad = ~np.isfinite(v)
        if np.any(bad):
            raise ModelError(f"{name} is not finite at s={s[bad][0]:.17g}")
        values[name] = v
    p, q, r, dr = values["p"], values["q"], values["r"], values["r'"]
    denom = p + q * s
    numer = (r + dr * s) ** 2
    ratio = np.zeros_like(s)
    small = (numer <= TOL) & (denom <= TOL)
    pos = denom > TOL
    ratio[pos] = numer[pos] / denom[pos]
    ratio[~pos & ~small] = math.inf
    if model.r_is_zero:
        ratio[:] = 0.0

    i_p, i_d, i_r = int(np.argmin(p)), int(np.argmin(denom)), int(np.argmax(ratio))
    return StructuralReport(
        min_p=float(p[i_p]),
        min_p_plus_qs=float(denom[i_d]),
        sup_ratio=float(ratio[i_r]),
        cond1_ok=bool(p[i_p] >= -TOL and denom[i_d] >= -TOL),
        cond2_ok=bool(math.isfinite(ratio[i_r])),
        sample_count=samples,
        argmin_p=float(s[i_p]),
        argmin_p_plus_qs=float(s[i_d]),
        argmax_ratio=float(s[i_r]),
        r_prime_fd=model.r_prime_is_fd and not model.r_is_zero,
        L=upper,
    )


def build_A_matrix(model: CoefficientModel, u) -> np.ndarray:
    """Diffusion matrix ``A_ij = p(u0) delta_ij + a_j u_i q(u0)``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (model.n,):
        raise ValueError(f"expected {model.n} concentrations, got shape {u.shape}")
    if np.any(u < 0):
        raise DomainError("concentrations must be nonnegative")
    u0 = float(model.a @ u)
    _check_domain(model, u0)
    return float(model.p(u0)) * np.eye(model.n) + float(model.q(u0)) * np.outer(u, model.a)


# -- presets -----------------------------------------------------------------


def preset_maxwell_stefan(D0: float, D: float, n: int) -> CoefficientModel:
    """Equal-coefficient Maxwell-Stefan system: ``d_ij = D0``, ``d_i,n+1 = D``."""
    if not (D0 > 0 and D > 0):
        raise ValueError("D0 and D must be positive")

    def p(s):
        return D / (D * D + D * (D0 - D) * np.asarray(s, dtype=float))

    def q(s):
        return (D0 - D) / (D * D + D * (D0 - D) * np.asarray(s, dtype=float))

    return CoefficientModel(
        n=n, a=np.ones(n), p=p, q=q, r=_const(0.0), L=1.0, r_prime=_const(0.0),
        Q=lambda s: np.asarray(s, dtype=float) / D, r_is_zero=True,
        name="maxwell_stefan", params={"D0": D0, "D": D, "n": n},
    )


def preset_skt(a0: float, a: Sequence[float], L: float = 10.0) -> CoefficientModel:
    """Population model with ``p = a0 + s``, ``q = r = 1``."""
    a = np.asarray(a, dtype=float)
    if not a0 > 0 or np.any(a <= 0):
        raise ValueError("SKT preset needs a0 > 0 and a_j > 0")
    return CoefficientModel(
        n=a.size, a=a, p=lambda s: a0 + np.asarray(s, dtype=float), q=_const(1.0),
        r=_const(1.0), L=L, r_prime=_const(0.0),
        Q=lambda s: a0 * np.asarray(s, dtype=float) + np.asarray(s, dtype=float) ** 2,
        name="skt", params={"a0": a0, "a": a.tolist(), "L": L},
    )


def preset_ion_transport(D: float, z: float, n: int) -> CoefficientModel:
    """Volume-filling ion transport: ``p = D(1-s)``, ``q = D``, ``r = z(1-s)``."""
    if not D > 0:
        raise ValueError("D must be positive")
    return CoefficientModel(
        n=n, a=np.ones(n), p=lambda s: D * (1.0 - np.asarray(s, dtype=float)),
        q=_const(D), r=lambda s: z * (1.0 - np.asarray(s, dtype=float)), L=1.0,
        r_prime=_const(-z), Q=lambda s: D * np.asarray(s, dtype=float),
        r_is_zero=(z == 0), name="ion_transport", params={"D": D, "z": z, "n": n},
    )


def custom_model(
    p: str, q: str, r: str, a: Sequence[float], L: float = 1.0
) -> CoefficientModel:
    """Model from expression strings in the variable ``s``."""
    pe, qe, re_ = Expression(p, "s"), Expression(q, "s"), Expression(r, "s")
    a = np.asarray(a, dtype=float)
    r_zero = _is_zero_expression(re_)
    return CoefficientModel(
        n=a.size, a=a, p=pe, q=qe, r=re_, L=L,
        r_prime=_const(0.0) if r_zero else None, r_is_zero=r_zero,
        name="custom", params={"p": p, "q": q, "r": r, "a": a.tolist(), "L": L},
    )


def _is_zero_expression(e: Expression) -> bool:
    probe = np.linspace(0.0, 1.0, 7)
    try:
        return bool(np.all(e(probe) == 0.0))
    except Exception:
        return False


# -- Maxwell-Stefan algebra ----------------------------------------------------


@dataclass(frozen=True)
class MSCoefficients:
    """Symmetric ``(n+1) x (n+1)`` Maxwell-Stefan matrix with zero diagonal."""

    d: np.ndarray

    def __post_init__(self):
        d = np.array(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 2:
            raise ValueError("d must be a square matrix of size >= 2")
        if not np.array_equal(d, d.T):
            raise ValueError("d must be symmetric")
        if np.any(d < 0) or np.any(np.diag(d) != 0):
            raise ValueError("d must be nonnegative with zero diagonal")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.d.shape[0] - 1

    @classmethod
    def equal(cls, D0: float, D: float, n: int) -> "MSCoefficients":
        d = np.full((n + 1, n + 1), float(D0))
        d[:, n] = d[n, :] = D
        np.fill_diagonal(d, 0.0)
        return cls(d)


def ms_build_A0(ms: MSCoefficients, u) -> np.ndarray:
    """Matrix ``A0`` of the reduced flux-gradient relation ``grad u' = A0 J'``."""
    u = np.asarray(u, dtype=float)
    n = ms.n
    if u.shape != (n,):
        raise ValueError(f"expected {n} concentrations, got shape {u.shape}")
    if np.any(u < 0) or u.sum() > 1 + TOL:
        raise DomainError("need u_i >= 0 and sum(u) <= 1")
    d = ms.d
    dn = d[:n, n]
    diff = d[:n, :n] - dn[:, None]
    A0 = -diff * u[:, None]
    off = diff * u[None, :]
    np.fill_diagonal(off, 0.0)
    A0[np.diag_indices(n)] = off.sum(axis=1) + dn
    return A0


def ms_invert_A0(A0) -> np.ndarray:
    A0 = np.asarray(A0, dtype=float)
    if A0.ndim != 2 or A0.shape[0] != A0.shape[1]:
        raise ValueError("A0 must be square")
    cond = float(np.linalg.cond(A0))
    if not np.isfinite(cond) or cond >= 1e12:
        raise InversionError(f"matrix is ill-conditioned (cond={cond:.3g})", cond)
    inv = np.linalg.inv(A0)
    resid = np.max(np.abs(A0 @ inv - np.eye(A0.shape[0])).sum(axis=1))
    if resid > 1e-10:
        raise InversionError(f"inverse residual {resid:.3g} too large", cond)
    return inv


def ms_closed_form_inverse(D0: float, D: float, u) -> np.ndarray:
    """Closed-form inverse of ``A0`` when ``d_ij = D0`` and ``d_i,n+1 = D``."""
    u = np.asarray(u, dtype=float)
    denom = D * D + D * (D0 - D) * u.sum()
    return (D * np.eye(u.size) + (D0 - D) * np.outer(u, np.ones(u.size))) / denom
