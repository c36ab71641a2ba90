"""INI-style run configuration.

Example::

    [model]
    preset = skt
    a0 = 1.0
    a = 1.0, 1.0
    L = 3

    [grid]
    cells = 128
    length = 1.0

    [scheme]
    auto_cfl = true
    t_end = 0.02

    [initial]
    u1 = "0.5 + 0.2*cos(pi*x)"
    u2 = 0.4

    [background]
    f = auto

Every problem found is collected and reported together, keyed by
``section.key``.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import coefficients as coef
from .errors import ConfigError
from .experiments import KINDS as EXPERIMENT_KINDS
from .experiments import ExperimentSpec, Problem
from .expr import Expression, ExpressionError
from .fields import Grid1D, compat_tol
from .solver import SchemeConfig

PRESETS = ("maxwell_stefan", "skt", "ion_transport", "custom")
PRESET_KEYS = {
    "maxwell_stefan": {"D0", "D", "n"},
    "skt": {"a0", "a", "L"},
    "ion_transport": {"D", "z", "n"},
    "custom": {"p", "q", "r", "a", "L"},
}
SECTION_KEYS = {
    "model": {"preset", "D0", "D", "z", "a0", "a", "n", "L", "p", "q", "r"},
    "grid": {"cells", "length"},
    "scheme": {"dt", "auto_cfl", "t_end", "drift_flux", "face_average", "cfl_safety",
               "positivity_floor", "output_every", "q_consistent"},
    "diagnostics": {"eps", "kind", "record_every"},
    "experiment": {"kind", "delta", "seed", "tol_decay", "ladder", "refine"},
    "background": {"f"},
    "output": {"dir"},
    "check": {"samples"},
}
SPECIES_SECTIONS = ("initial", "initial_b")


@dataclass
class RunConfig:
    model: coef.CoefficientModel
    grid: Optional[Grid1D] = None
    scheme: Optional[SchemeConfig] = None
    eps: float = 1e-8
    diagnostics_kind: str = "gajewski"
    record_every: int = 1
    experiment: dict = field(default_factory=dict)
    out_dir: Path = Path("out")
    initial: Optional[list] = None
    initial_b: Optional[list] = None
    background: object = "auto"
    samples: int = 1000

    def require_run(self):
        missing = [name for name, v in (("grid", self.grid), ("scheme", self.scheme),
                                       ("initial", self.initial)) if v is None]
        if missing:
            raise ConfigError([f"{m}: section required for this command" for m in missing])

    def problem(self) -> Problem:
        self.require_run()
        return Problem(self.model, self.grid, self.scheme, _species_fn(self.initial),
                       _background_fn(self.background), self.eps)

    def experiment_spec(self) -> ExperimentSpec:
        if not self.experiment:
            raise ConfigError("experiment: section required for this command")
        e = self.experiment
        return ExperimentSpec(
            kind=e["kind"], problem=self.problem(), delta=e.get("delta", 0.0),
            seed=e.get("seed", 0), tol_decay=e.get("tol_decay", 1e-3),
            initial_b=_species_fn(self.initial_b) if self.initial_b else None,
            ladder=tuple(e.get("ladder", ())), refine=e.get("refine", False),
            semimetric=self.diagnostics_kind,
        )


def _species_fn(items):
    def build(grid: Grid1D):
        x = grid.centers
        return np.array([np.broadcast_to(item(x) if callable(item) else item, x.shape)
                         for item in items], dtype=float)
    return build


def _background_fn(spec):
    def build(grid: Grid1D, u0):
        if spec == "auto":
            return np.full(grid.N, float(np.mean(u0)))
        if callable(spec):
            return np.broadcast_to(spec(grid.centers), (grid.N,))
        return np.full(grid.N, float(spec))
    return build


class _Reader:
    def __init__(self, parser: configparser.ConfigParser):
        self.cp = parser
        self.errors: list[str] = []

    def raw(self, section, key):
        if not self.cp.has_option(section, key):
            return None
        return self.cp.get(section, key).strip()

    def _get(self, section, key, convert, default, required, what):
        text = self.raw(section, key)
        if text is None:
            if required:
                self.errors.append(f"{section}.{key}: required")
            return default
        try:
            return convert(_unquote(text))
        except (ValueError, ExpressionError) as exc:
            self.errors.append(f"{section}.{key}: expected {what}, got {text!r} ({exc})")
            return default

    def float(self, section, key, default=None, required=False):
        return self._get(section, key, _to_float, default, required, "a number")

    def int(self, section, key, default=None, required=False):
        return self._get(section, key, _to_int, default, required, "an integer")

    def bool(self, section, key, default=False):
        return self._get(section, key, _to_bool, default, False, "true/false")

    def str(self, section, key, default=None, required=False):
        return self._get(section, key, str, default, required, "a string")

    def floats(self, section, key, default=None, required=False):
        return self._get(section, key, _to_floats, default, required, "a list of numbers")

    def check(self, ok, path, message):
        if not ok:
            self.errors.append(f"{path}: {message}")
        return ok


def _unquote(text: str) -> str:
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def _to_float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _to_int(text):
    v = float(text)
    if v != int(v):
        raise ValueError("not an integer")
    return int(v)


def _to_bool(text):
    t = text.lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError("not a boolean")


def _to_floats(text):
    return [_to_float(p.strip()) for p in text.split(",") if p.strip()]


def _value_or_expression(text: str):
    """A number, or an expression in ``x``."""
    t = _unquote(text.strip())
    try:
        return _to_float(t)
    except ValueError:
        return Expression(t, "x")


def _parse_model(rd: _Reader):
    preset = rd.str("model", "preset", required=True)
    if preset is None:
        return None
    if preset not in PRESETS:
        rd.errors.append(f"model.preset: unknown preset {preset!r} (choose from {', '.join(PRESETS)})")
        return None
    for key in rd.cp.options("model"):
        if key != "preset" and key in SECTION_KEYS["model"] and key not in PRESET_KEYS[preset]:
            rd.errors.append(f"model.{key}: not a parameter of preset {preset!r}")
    n_err = len(rd.errors)
    try:
        if preset == "maxwell_stefan":
            D0 = rd.float("model", "D0", required=True)
            D = rd.float("model", "D", required=True)
            n = rd.int("model", "n", required=True)
            rd.check(D0 is None or D0 > 0, "model.D0", "must be positive")
            rd.check(D is None or D > 0, "model.D", "must be positive")
            rd.check(n is None or n >= 1, "model.n", "must be >= 1")
            if len(rd.errors) == n_err:
                return coef.preset_maxwell_stefan(D0, D, n)
        elif preset == "skt":
            a0 = rd.float("model", "a0", required=True)
            a = rd.floats("model", "a", required=True)
            L = rd.float("model", "L", default=10.0)
            rd.check(a0 is None or a0 > 0, "model.a0", "must be positive")
            rd.check(a is None or (len(a) > 0 and all(v > 0 for v in a)), "model.a",
                     "must be a nonempty list of positive weights")
            rd.check(L is None or L > 0, "model.L", "must be positive")
            if len(rd.errors) == n_err:
                return coef.preset_skt(a0, a, L)
        elif preset == "ion_transport":
            D = rd.float("model", "D", required=True)
            z = rd.float("model", "z", required=True)
            n = rd.int("model", "n", required=True)
            rd.check(D is None or D > 0, "model.D", "must be positive")
            rd.check(n is None or n >= 1, "model.n", "must be >= 1")
            if len(rd.errors) == n_err:
                return coef.preset_ion_transport(D, z, n)
        else:
            p = rd.str("model", "p", required=True)
            q = rd.str("model", "q", default="0")
            r = rd.str("model", "r", default="0")
            a = rd.floats("model", "a", default=[1.0])
            L = rd.float("model", "L", default=1.0)
            for key, src in (("p", p), ("q", q), ("r", r)):
                if src is not None:
                    try:
                        Expression(src, "s")
                    except ExpressionError as exc:
                        rd.errors.append(f"model.{key}: {exc}")
            rd.check(a is None or (len(a) > 0 and all(v >= 0 for v in a) and any(v > 0 for v in a)),
                     "model.a", "weights must be nonnegative with one positive")
            rd.check(L is None or L > 0, "model.L", "must be positive")
            if len(rd.errors) == n_err:
                return coef.custom_model(p, q, r, a, L)
    except ValueError as exc:
        rd.errors.append(f"model: {exc}")
    return None


def _parse_species(rd: _Reader, section, n):
    if not rd.cp.has_section(section):
        return None
    items = []
    for key in rd.cp.options(section):
        if key not in {f"u{i + 1}" for i in range(n or 0)}:
            rd.errors.append(f"{section}.{key}: unknown key (expected u1..u{n})")
    for i in range(n or 0):
        text = rd.raw(section, f"u{i + 1}")
        if text is None:
            rd.errors.append(f"{section}.u{i + 1}: required")
            items.append(0.0)
            continue
        try:
            items.append(_value_or_expression(text))
        except ExpressionError as exc:
            rd.errors.append(f"{section}.u{i + 1}: {exc}")
            items.append(0.0)
    return items


def parse_config(path) -> RunConfig:
    """Read and validate a configuration file.

    Raises :class:`ConfigError` carrying every problem found.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    rd = _Reader(cp)

    for section in cp.sections():
        if section in SPECIES_SECTIONS:
            continue
        if section not in SECTION_KEYS:
            rd.errors.append(f"{section}: unknown section")
            continue
        for key in cp.options(section):
            if key not in SECTION_KEYS[section]:
                rd.errors.append(f"{section}.{key}: unknown key")

    if not cp.has_section("model"):
        rd.errors.append("model: section required")
        raise ConfigError(rd.errors)
    model = _parse_model(rd)
    n = model.n if model is not None else None

    grid = None
    if cp.has_section("grid"):
        cells = rd.int("grid", "cells", required=True)
        length = rd.float("grid", "length", default=1.0)
        if rd.check(cells is None or cells >= 3, "grid.cells", "must be >= 3") and \
                rd.check(length is None or length > 0, "grid.length", "must be positive") and \
                cells is not None and length is not None:
            grid = Grid1D(cells, length)

    scheme = None
    if cp.has_section("scheme"):
        s = "scheme"
        dt = rd.float(s, "dt")
        auto = rd.bool(s, "auto_cfl")
        t_end = rd.float(s, "t_end", required=True)
        drift = rd.str(s, "drift_flux", "centered")
        face = rd.str(s, "face_average", "arithmetic")
        safety = rd.float(s, "cfl_safety", 0.45)
        floor = rd.float(s, "positivity_floor", 0.0)
        every = rd.int(s, "output_every", 1)
        qc = rd.bool(s, "q_consistent")
        n_err = len(rd.errors)
        rd.check(dt is None or dt > 0, "scheme.dt", f"must be positive, got {dt}")
        rd.check(dt is not None or auto, "scheme.dt", "required unless scheme.auto_cfl = true")
        rd.check(t_end is None or t_end >= 0, "scheme.t_end", "must be nonnegative")
        rd.check(drift in ("centered", "upwind"), "scheme.drift_flux", "must be centered or upwind")
        rd.check(face in ("arithmetic", "harmonic"), "scheme.face_average",
                 "must be arithmetic or harmonic")
        rd.check(safety is None or 0 < safety <= 1, "scheme.cfl_safety", "must lie in (0, 1]")
        rd.check(floor is None or floor >= 0, "scheme.positivity_floor", "must be nonnegative")
        rd.check(every is None or every >= 1, "scheme.output_every", "must be >= 1")
        if len(rd.errors) == n_err and t_end is not None:
            scheme = SchemeConfig(dt=dt, t_end=t_end, drift_flux=drift, face_average=face,
                                  cfl_safety=safety, positivity_floor=floor, auto_cfl=auto,
                                  q_consistent=qc, output_every=every)

    eps = rd.float("diagnostics", "eps", 1e-8)
    kind = rd.str("diagnostics", "kind", "gajewski")
    record_every = rd.int("diagnostics", "record_every", 1)
    rd.check(eps is None or 0 < eps < 1, "diagnostics.eps", "must lie in (0, 1)")
    rd.check(kind in ("gajewski", "relative_sym"), "diagnostics.kind",
             "must be gajewski or relative_sym")
    rd.check(record_every is None or record_every >= 1, "diagnostics.record_every", "must be >= 1")

    experiment = {}
    if cp.has_section("experiment"):
        e = "experiment"
        experiment["kind"] = rd.str(e, "kind", required=True)
        rd.check(experiment["kind"] is None or experiment["kind"] in EXPERIMENT_KINDS,
                 "experiment.kind", f"must be one of {', '.join(EXPERIMENT_KINDS)}")
        experiment["delta"] = rd.float(e, "delta", 0.0)
        experiment["seed"] = rd.int(e, "seed", 0)
        experiment["tol_decay"] = rd.float(e, "tol_decay", 1e-3)
        experiment["ladder"] = [int(v) for v in rd.floats(e, "ladder", []) or []]
        experiment["refine"] = rd.bool(e, "refine")
        rd.check(experiment["delta"] is None or experiment["delta"] >= 0,
                 "experiment.delta", "must be nonnegative")
        rd.check(experiment["tol_decay"] is None or experiment["tol_decay"] >= 0,
                 "experiment.tol_decay", "must be nonnegative")
        if experiment["kind"] == "refinement":
            rd.check(len(experiment["ladder"]) >= 3, "experiment.ladder",
                     "refinement needs at least 3 resolutions")

    initial = _parse_species(rd, "initial", n)
    initial_b = _parse_species(rd, "initial_b", n)

    background = "auto"
    text = rd.raw("background", "f")
    if text is not None and _unquote(text) != "auto":
        try:
            background = _value_or_expression(text)
        except ExpressionError as exc:
            rd.errors.append(f"background.f: {exc}")

    out_dir = Path(rd.str("output", "dir", "out"))
    samples = rd.int("check", "samples", 1000)
    rd.check(samples is None or samples >= 2, "check.samples", "must be >= 2")

    if not rd.errors and grid is not None and initial is not None and model is not None:
        _check_initial(rd, model, grid, initial, background, "initial")
        if initial_b is not None:
            _check_initial(rd, model, grid, initial_b, background, "initial_b")

    if rd.errors:
        raise ConfigError(rd.errors)
    return RunConfig(model=model, grid=grid, scheme=scheme, eps=eps, diagnostics_kind=kind,
                     record_every=record_every, experiment=experiment, out_dir=out_dir,
                     initial=initial, initial_b=initial_b, background=background,
                     samples=samples)


def _check_initial(rd, model, grid, items, background, section):
    u = _species_fn(items)(grid)
    if not np.all(np.isfinite(u)):
        rd.errors.append(f"{section}: initial data not finite on the grid")
        return
    if np.any(u < 0):
        rd.errors.append(f"{section}: initial data must be nonnegative")
    u0 = model.a @ u
    if math.isfinite(model.L) and np.max(u0) > model.L:
        rd.errors.append(f"{section}: aggregate exceeds L={model.L} (max {np.max(u0):.6g})")
    if background == "auto" or section != "initial":
        return
    f = _background_fn(background)(grid, u0)
    defect = float(np.sum(u0 - f) * grid.dx)
    tol = compat_tol(grid, u0 - f)
    if abs(defect) > tol:
        rd.errors.append(
            f"{section}: compatibility violated, integral of (u0 - f) is {defect:.17g} "
            f"(tolerance {tol:.3g})"
        )
