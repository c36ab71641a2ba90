"""Paired-run experiments: determinism, same-aggregate contraction, the H^-1
growth bound for aggregate differences, and resolution studies.

Every verdict is recomputed from the stored series by :func:`evaluate`, so a
report written to disk can be re-checked without rerunning anything.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .coefficients import CoefficientModel
from .entropy import pair_record
from .errors import ExperimentSpecError
from .fields import Grid1D, SpeciesState, compat_tol, mass
from .solver import SchemeConfig, advance, aggregate_step, cfl_dt, poisson_for, run

KINDS = ("duplicate", "same_aggregate", "gronwall", "refinement")
GRONWALL_FIT_TOL = 1e-6
GRONWALL_ZERO_TOL = 1e-10
QUANTUM = 2.0**-40


@dataclass(frozen=True)
class Problem:
    """Everything needed to start a run on any resolution.

    ``initial(grid)`` returns the ``(n, N)`` concentrations; ``background(grid, u0)``
    returns ``f`` on the grid (it may depend on the initial aggregate).
    """

    model: CoefficientModel
    grid: Grid1D
    scheme: SchemeConfig
    initial: Callable[[Grid1D], np.ndarray]
    background: Callable[[Grid1D, np.ndarray], np.ndarray]
    eps: float = 1e-8

    def state(self, grid: Optional[Grid1D] = None) -> SpeciesState:
        grid = grid or self.grid
        return SpeciesState(self.initial(grid), self.model.a)

    def f(self, grid: Optional[Grid1D] = None, state: Optional[SpeciesState] = None):
        grid = grid or self.grid
        state = state or self.state(grid)
        return np.broadcast_to(np.asarray(self.background(grid, state.u0), dtype=float), (grid.N,))


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    problem: Problem
    delta: float = 0.0
    seed: int = 0
    tol_decay: float = 1e-3
    initial_b: Optional[Callable[[Grid1D], np.ndarray]] = None
    ladder: Sequence[int] = ()
    refine: bool = False
    semimetric: str = "gajewski"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ExperimentSpecError(f"unknown experiment kind {self.kind!r}")
        if not self.delta >= 0:
            raise ExperimentSpecError("delta must be nonnegative")
        if not self.tol_decay >= 0:
            raise ExperimentSpecError("tol_decay must be nonnegative")
        if self.semimetric not in ("gajewski", "relative_sym"):
            raise ExperimentSpecError("semimetric must be gajewski or relative_sym")
        if self.kind == "refinement" and len(self.ladder) < 3:
            raise ExperimentSpecError("refinement needs a ladder of at least 3 resolutions")


@dataclass
class ExperimentReport:
    kind: str
    series: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    tainted: bool = False
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.verdicts.values()) and not self.tainted

    def summary_lines(self):
        yield f"experiment {self.kind}"
        for k, v in self.constants.items():
            yield f"  {k} = {_fmt(v)}"
        for k, v in self.tolerances.items():
            yield f"  tol {k} = {_fmt(v)}"
        for k, v in self.verdicts.items():
            yield f"  verdict {k}: {'PASS' if v else 'FAIL'}"
        yield f"  tainted: {self.tainted}"
        for note in self.notes:
            yield f"  note: {note}"
        yield f"result: {'PASS' if self.ok else 'FAIL'}"

    def write(self, out_dir, stem: Optional[str] = None, header_time: Optional[str] = None):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or f"experiment_{self.kind}"
        cols = list(self.series)
        with open(out / f"{stem}.csv", "w", newline="") as fh:
            if header_time:
                fh.write(f"# generated {header_time}\n")
            w = csv.writer(fh)
            w.writerow(cols)
            length = max((len(v) for v in self.series.values()), default=0)
            for i in range(length):
                w.writerow([_fmt(self.series[c][i]) if i < len(self.series[c]) else ""
                            for c in cols])
        with open(out / f"{stem}_summary.txt", "w") as fh:
            if header_time:
                fh.write(f"# generated {header_time}\n")
            fh.write("\n".join(self.summary_lines()) + "\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


# -- verdicts from series ----------------------------------------------------


def worst_increase(d) -> float:
    """Largest single-step increase of ``d`` relative to ``d[0]`` (0 if none)."""
    d = np.asarray(d, dtype=float)
    if d.size < 2 or d[0] == 0:
        return 0.0 if not np.any(d) else math.inf
    return max(0.0, float(np.max(np.diff(d)))) / d[0]


def gronwall_rate(t, y):
    """Smallest ``C`` with ``y(t) <= y(0) exp(C t)`` and the least-squares
    slope of ``log(y/y0)`` through the origin; samples with ``y <= 1e-24``
    are skipped."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if y[0] <= 1e-24:
        return 0.0, 0.0
    keep = (t > 0) & (y > 1e-24)
    if not np.any(keep):
        return 0.0, 0.0
    logs = np.log(np.maximum(y[keep], 1e-30)) - math.log(y[0])
    tk = t[keep]
    return float(np.max(logs / tk)), float(np.sum(tk * logs) / np.sum(tk * tk))


def observed_orders(diffs) -> np.ndarray:
    d = np.asarray(diffs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log2(d[:-1] / d[1:])


def evaluate(report: ExperimentReport) -> dict:
    """Recompute verdicts (and derived constants) from the stored series."""
    s, tol = report.series, report.tolerances
    if report.kind == "duplicate":
        return {"bitwise_identical": bool(np.all(np.asarray(s["max_abs_diff"]) == 0))}
    if report.kind == "same_aggregate":
        key = "d_" + tol.get("semimetric", "gajewski")
        d = np.asarray(s[key])
        verdict = {"decay": worst_increase(d) <= tol["tol_decay"]}
        if "refined_" + key in s:
            verdict["refinement_shrinks"] = (
                worst_increase(s["refined_" + key]) <= worst_increase(d)
            )
        return verdict
    if report.kind == "gronwall":
        y = np.asarray(s["y"])
        c_hat, _ = gronwall_rate(s["t"], y)
        zero_ok = True if y[0] > 0 else bool(np.all(y <= GRONWALL_ZERO_TOL))
        return {"rate_finite": math.isfinite(c_hat), "zero_stays_zero": zero_ok}
    if report.kind == "refinement":
        out = {}
        for name, need in (("dx", tol["order_dx"]), ("dt", tol["order_dt"])):
            diffs = np.asarray(s[f"diff_{name}"])
            if np.all(diffs == 0):
                out[f"order_{name}"] = True
                continue
            orders = observed_orders(diffs)
            monotone = bool(np.all(np.diff(diffs) < 0))
            out[f"order_{name}"] = monotone and bool(np.all(orders >= need))
        return out
    raise ExperimentSpecError(f"unknown kind {report.kind!r}")


# -- paired integration --------------------------------------------------------


def _paired(problem: Problem, grid, scheme, sa, sb, f, on_step):
    """Advance two states in lockstep with a common step size."""
    pa = poisson_for(grid, sa.u0, f)
    pb = poisson_for(grid, sb.u0, f)
    model = problem.model
    fa = fb = np.asarray(f, dtype=float)
    t, k = 0.0, 0
    clamped = 0.0
    on_step(t, sa, sb, pa, pb)
    while t < scheme.t_end:
        if scheme.auto_cfl:
            dt = min(cfl_dt(sa, model, grid, scheme, pa), cfl_dt(sb, model, grid, scheme, pb))
            t_next = min(t + dt, scheme.t_end)
        else:
            t_next = min((k + 1) * scheme.dt, scheme.t_end)
            if scheme.t_end - t_next < 1e-9 * scheme.dt:
                t_next = scheme.t_end
        dt = t_next - t
        ra = advance(sa, model, grid, fa, scheme, dt=dt, poisson=pa)
        rb = advance(sb, model, grid, fb, scheme, dt=dt, poisson=pb)
        clamped += ra.clamped_mass + rb.clamped_mass
        sa, sb = ra.state, rb.state
        # clamped mass is matched in the background, as in solver.run
        if ra.clamped_mass:
            fa = fa + (np.mean(sa.u0) - np.mean(fa))
        if rb.clamped_mass:
            fb = fb + (np.mean(sb.u0) - np.mean(fb))
        pa = poisson_for(grid, sa.u0, fa)
        pb = poisson_for(grid, sb.u0, fb)
        t, k = t_next, k + 1
        on_step(t, sa, sb, pa, pb)
    return clamped


def _pair_series(problem, grid, scheme, sa, sb, f):
    rows = []

    def on_step(t, a, b, pa, pb):
        gmax = float(max(np.max(np.abs(pa.grad_phi)), np.max(np.abs(pb.grad_phi))))
        rows.append(pair_record(grid, t, a, b, problem.eps, gmax))

    clamped = _paired(problem, grid, scheme, sa, sb, f, on_step)
    series = {
        "t": np.array([r.t for r in rows]),
        "d_gajewski": np.array([r.d_gajewski for r in rows]),
        "d_relsym": np.array([r.d_relsym for r in rows]),
        "lower_bound": np.array([r.lower_bound for r in rows]),
        "hminus1": np.array([r.hminus1 for r in rows]),
        "l2_diff": np.array([r.l2_diff for r in rows]),
        "max_grad_phi": np.array([r.max_grad_phi for r in rows]),
    }
    initial_mass = float(np.sum(mass(grid, sa.u)) + np.sum(mass(grid, sb.u)))
    return series, clamped, clamped > 1e-6 * max(initial_mass, 1e-300)


# -- experiments ---------------------------------------------------------------


def _snapshot_diff(ta, tb) -> np.ndarray:
    if len(ta.snapshots) != len(tb.snapshots):
        return np.array([math.inf])
    diffs = []
    for a, b in zip(ta.snapshots, tb.snapshots):
        same = (
            a.t == b.t
            and np.array_equal(a.state.u, b.state.u)
            and np.array_equal(a.poisson.phi, b.poisson.phi)
            and np.array_equal(a.poisson.grad_phi, b.poisson.grad_phi)
        )
        diffs.append(0.0 if same else max(float(np.max(np.abs(a.state.u - b.state.u))), 1e-300))
    return np.array(diffs)


def run_duplicate(spec: ExperimentSpec) -> ExperimentReport:
    """Run the same configuration twice and compare bitwise."""
    p = spec.problem
    state = p.state()
    f = p.f(state=state)
    ta = run(state, p.model, p.grid, f, p.scheme)
    tb = run(p.state(), p.model, p.grid, p.f(), p.scheme)
    report = ExperimentReport(
        "duplicate",
        series={"t": ta.times, "max_abs_diff": _snapshot_diff(ta, tb)},
        constants={"snapshots": len(ta.snapshots), "steps": ta.steps},
        tainted=ta.tainted or tb.tainted,
    )
    report.verdicts = evaluate(report)
    return report


def _quantize(x):
    return np.round(np.asarray(x, dtype=float) / QUANTUM) * QUANTUM


def same_aggregate_pair(problem: Problem, delta: float, grid: Optional[Grid1D] = None):
    """Base state and a copy with mass moved between species 1 and 2 so the
    weighted aggregate is unchanged.

    Values are rounded to multiples of 2^-40 so that, for dyadic weights, the
    two aggregates agree bitwise.
    """
    grid = grid or problem.grid
    a = problem.model.a
    if a.size < 2:
        raise ExperimentSpecError("same_aggregate needs at least two species")
    if a[0] <= 0 or a[1] <= 0:
        raise ExperimentSpecError("species 1 and 2 need positive weights")
    base = _quantize(problem.initial(grid))
    w = np.sin(2.0 * np.pi * grid.centers / grid.length)
    shift = _quantize(delta * w)
    other = base.copy()
    other[0] = base[0] + shift / a[0]
    other[1] = base[1] - shift / a[1]
    if np.any(other < 0):
        raise ExperimentSpecError(
            f"perturbation delta={delta} makes a concentration negative"
        )
    return SpeciesState(base, a), SpeciesState(other, a)


def run_same_aggregate(spec: ExperimentSpec) -> ExperimentReport:
    p = spec.problem
    sa, sb = same_aggregate_pair(p, spec.delta)
    f = p.f(state=sa)
    key = "d_" + spec.semimetric
    series, clamped, tainted = _pair_series(p, p.grid, p.scheme, sa, sb, f)
    report = ExperimentReport(
        "same_aggregate", series=series,
        tolerances={"tol_decay": spec.tol_decay, "semimetric": spec.semimetric},
        constants={
            "initial_aggregate_mismatch": float(np.max(np.abs(sa.u0 - sb.u0))),
            "d0": float(series[key][0]),
            "steps": len(series["t"]) - 1,
            "clamped_mass": clamped,
        },
        tainted=tainted,
    )
    if spec.refine:
        fine = Grid1D(2 * p.grid.N, p.grid.length)
        dt = (p.scheme.dt / 4.0) if p.scheme.dt is not None else None
        scheme = replace(p.scheme, dt=dt)
        fa, fb = same_aggregate_pair(p, spec.delta, fine)
        fseries, fclamped, ftaint = _pair_series(p, fine, scheme, fa, fb, p.f(fine, fa))
        report.series["refined_t"] = fseries["t"]
        report.series["refined_" + key] = fseries[key]
        report.tainted = report.tainted or ftaint
        report.constants["refined_worst_increase"] = worst_increase(fseries[key])
    report.constants["worst_increase"] = worst_increase(series[key])
    report.constants["final_bound_check"] = bool(
        series["d_gajewski"][-1] >= series["lower_bound"][-1] * (1.0 - 1e-12)
    )
    report.verdicts = evaluate(report)
    return report


def _gronwall_partner(problem, grid, spec, state):
    if spec.initial_b is not None:
        return SpeciesState(spec.initial_b(grid), problem.model.a)
    rng = np.random.default_rng(spec.seed)
    coeffs = rng.uniform(-1.0, 1.0, size=3)
    x = grid.centers / grid.length
    w = sum(c * np.cos((k + 1) * np.pi * x) for k, c in enumerate(coeffs))
    w /= np.max(np.abs(w))
    u = state.u.copy()
    u[0] = u[0] + spec.delta * w
    if np.any(u < 0):
        raise ExperimentSpecError(f"perturbation delta={spec.delta} makes u_1 negative")
    return SpeciesState(u, problem.model.a)


def run_gronwall(spec: ExperimentSpec) -> ExperimentReport:
    p = spec.problem
    sa = p.state()
    sb = _gronwall_partner(p, p.grid, spec, sa)
    gap = float(mass(p.grid, sa.u0) - mass(p.grid, sb.u0))
    if abs(gap) > compat_tol(p.grid, sa.u0 - sb.u0):
        raise ExperimentSpecError(
            f"initial aggregates differ in total mass by {gap:.6g}; the difference "
            "must integrate to zero"
        )
    f = p.f(state=sa)
    series, clamped, tainted = _pair_series(p, p.grid, p.scheme, sa, sb, f)
    series["y"] = series["hminus1"] ** 2
    c_hat, c_lsq = gronwall_rate(series["t"], series["y"])
    report = ExperimentReport(
        "gronwall", series=series,
        constants={"C_hat": c_hat, "C_lsq": c_lsq, "y0": float(series["y"][0]),
                   "max_grad_phi": float(np.max(series["max_grad_phi"])),
                   "clamped_mass": clamped},
        tolerances={"fit_tol": GRONWALL_FIT_TOL, "zero_tol": GRONWALL_ZERO_TOL},
        tainted=tainted,
    )
    report.verdicts = evaluate(report)
    return report


def restrict(u, factor: int) -> np.ndarray:
    """Average groups of ``factor`` fine cells onto the coarse grid."""
    u = np.asarray(u, dtype=float)
    return u.reshape(*u.shape[:-1], u.shape[-1] // factor, factor).mean(axis=-1)


def _final(problem, grid, scheme):
    state = problem.state(grid)
    traj = run(state, problem.model, grid, problem.f(grid, state), scheme)
    return traj.final.state.u, traj.tainted


def aggregation_residual(problem: Problem, grid: Grid1D, dt: Optional[float] = None) -> float:
    """``max |aggregate(species step) - aggregate_step|`` for the initial state,
    using the Q-consistent flux."""
    scheme = replace(problem.scheme, q_consistent=True)
    state = problem.state(grid)
    f = problem.f(grid, state)
    if dt is None:
        dt = scheme.dt if scheme.dt is not None else cfl_dt(
            state, problem.model, grid, scheme, poisson_for(grid, state.u0, f))
    species = advance(state, problem.model, grid, f, scheme, dt=dt).state.u0
    scalar = aggregate_step(state.u0, problem.model, grid, f, scheme, dt=dt)
    return float(np.max(np.abs(species - scalar)))


def run_refinement(spec: ExperimentSpec) -> ExperimentReport:
    """Successive differences at ``t_end`` over a grid ladder (``dt ~ dx^2``)
    and over a step ladder ``dt, dt/2, dt/4`` on the coarsest grid."""
    p = spec.problem
    cells = sorted(int(c) for c in spec.ladder)
    length = p.grid.length
    grids = [Grid1D(N, length) for N in cells]
    for g0, g1 in zip(cells, cells[1:]):
        if g1 != 2 * g0:
            raise ExperimentSpecError("ladder resolutions must double")
    base = p.scheme
    if base.dt is not None:
        dt0 = base.dt * (p.grid.N / cells[0]) ** 2
    else:
        s0 = p.state(grids[0])
        dt0 = cfl_dt(s0, p.model, grids[0], base,
                     poisson_for(grids[0], s0.u0, p.f(grids[0], s0)))
    tainted = False

    finals = []
    for g in grids:
        scheme = replace(base, dt=dt0 * (cells[0] / g.N) ** 2, auto_cfl=False)
        u, taint = _final(p, g, scheme)
        finals.append(u)
        tainted |= taint
    diff_dx = []
    for k in range(len(grids) - 1):
        coarse, fine = finals[k], restrict(finals[k + 1], 2)
        diff_dx.append(float(np.sqrt(np.sum((coarse - fine) ** 2) * grids[k].dx)))

    dts = [dt0 / 2**k for k in range(len(cells))]
    tfinals = []
    for dt in dts:
        u, taint = _final(p, grids[0], replace(base, dt=dt, auto_cfl=False))
        tfinals.append(u)
        tainted |= taint
    diff_dt = [float(np.sqrt(np.sum((a - b) ** 2) * grids[0].dx))
               for a, b in zip(tfinals, tfinals[1:])]

    residuals = [aggregation_residual(p, g, dt0 * (cells[0] / g.N) ** 2) for g in grids]
    report = ExperimentReport(
        "refinement",
        series={"cells": np.array(cells), "diff_dx": np.array(diff_dx),
                "dt": np.array(dts), "diff_dt": np.array(diff_dt),
                "agg_residual": np.array(residuals)},
        tolerances={"order_dx": 1.8, "order_dt": 0.9},
        tainted=tainted,
    )
    report.constants["orders_dx"] = " ".join(f"{o:.4f}" for o in observed_orders(diff_dx))
    report.constants["orders_dt"] = " ".join(f"{o:.4f}" for o in observed_orders(diff_dt))
    report.constants["max_agg_residual"] = max(residuals)
    report.verdicts = evaluate(report)
    return report


RUNNERS = {
    "duplicate": run_duplicate,
    "same_aggregate": run_same_aggregate,
    "gronwall": run_gronwall,
    "refinement": run_refinement,
}


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    return RUNNERS[spec.kind](spec)
