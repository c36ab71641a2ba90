"""Command-line interface.

    crossdiff run --config run.ini [--out DIR]
    crossdiff check --config run.ini
    crossdiff experiment --config run.ini
    crossdiff ms-invert --D0 2 --D 1 --u 0.2,0.3

Exit codes: 0 success, 1 configuration or experiment-spec error, 2 numerical
failure (including tainted runs), 3 I/O failure, 4 an experiment verdict failed.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import coefficients as coef
from .config import RunConfig, parse_config
from .entropy import DiagnosticsRecord, single_record
from .errors import (ConfigError, CrossDiffError, ExperimentSpecError, IncompatibleSourceError,
                     InversionError, ModelError, NumericalError)
from .experiments import run_experiment
from .solver import run

log = logging.getLogger("crossdiff")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO, EXIT_VERDICT = 0, 1, 2, 3, 4


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _header_time(args):
    if args.no_header_time:
        return None
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out) if args.out else cfg.out_dir


def write_snapshot(path, grid, snap, header_time=None):
    state = snap.state
    with open(path, "w", newline="") as fh:
        if header_time:
            fh.write(f"# generated {header_time}\n")
        w = csv.writer(fh)
        w.writerow(["x", *(f"u_{i + 1}" for i in range(state.n)), "u0", "phi"])
        u0 = state.u0
        for j, x in enumerate(grid.centers):
            w.writerow([_fmt(x), *(_fmt(v) for v in state.u[:, j]), _fmt(u0[j]),
                        _fmt(snap.poisson.phi[j])])


def write_diagnostics(path, records, n, header_time=None):
    with open(path, "w", newline="") as fh:
        if header_time:
            fh.write(f"# generated {header_time}\n")
        w = csv.writer(fh)
        w.writerow(DiagnosticsRecord.header(n))
        for rec in records:
            w.writerow([_fmt(v) for v in rec.row()])


# -- commands -------------------------------------------------------------------


def cmd_run(cfg: RunConfig, args) -> int:
    problem = cfg.problem()
    grid = problem.grid
    state = problem.state()
    f = problem.f(state=state)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _header_time(args)

    def monitor(t, st, poisson):
        return single_record(grid, t, st, poisson, cfg.eps)

    traj = run(state, problem.model, grid, f, problem.scheme, monitor, cfg.record_every)
    for k, snap in enumerate(traj.snapshots):
        write_snapshot(out / f"snapshot_{k:05d}.csv", grid, snap, stamp)
    write_diagnostics(out / "diagnostics.csv", traj.records, state.n, stamp)
    print(f"steps {traj.steps}, snapshots {len(traj.snapshots)}, t_end {traj.final.t:.6g}")
    print(f"clamp events {traj.clamp_events}, clamped mass {traj.clamped_mass:.3e}")
    if traj.tainted:
        print("run TAINTED: clamped mass exceeds 1e-6 of the initial mass")
        return EXIT_NUMERICAL
    return EXIT_OK


def _expected_p_plus_qs(model):
    if model.name == "maxwell_stefan":
        return 1.0 / model.params["D"]
    if model.name == "ion_transport":
        return model.params["D"]
    return None


def cmd_check(cfg: RunConfig, args) -> int:
    model = cfg.model
    report = coef.check_conditions(model, cfg.samples)
    print(f"model {model.name} {model.params}")
    for line in report.lines():
        print(line)
    expected = _expected_p_plus_qs(model)
    if expected is not None:
        s = np.linspace(0.0, report.L, cfg.samples)
        dev = float(np.max(np.abs(model.p(s) + model.q(s) * s - expected)))
        report.max_dev_p_plus_qs = dev
        print(f"max |p+q*s - {expected:.17g}| = {dev:.3e}")
    print("PASS" if report.ok else "FAIL")
    return EXIT_OK if report.ok else EXIT_CONFIG


def cmd_experiment(cfg: RunConfig, args) -> int:
    spec = cfg.experiment_spec()
    report = run_experiment(spec)
    report.write(_out_dir(args, cfg), header_time=_header_time(args))
    for line in report.summary_lines():
        print(line)
    if report.tainted:
        return EXIT_NUMERICAL
    return EXIT_OK if report.ok else EXIT_VERDICT


def _read_matrix(path):
    text = Path(path).read_text().replace(",", " ")
    rows = [[float(v) for v in line.split()] for line in text.splitlines()
            if line.strip() and not line.lstrip().startswith("#")]
    return np.array(rows)


def cmd_ms_invert(args) -> int:
    if args.d_matrix:
        ms = coef.MSCoefficients(_read_matrix(args.d_matrix))
        equal = None
    else:
        if args.D0 is None or args.D is None:
            raise ConfigError("ms-invert needs --D0 and --D, or --d-matrix")
        n = args.n if args.n is not None else (len(args.u) if args.u else 2)
        ms = coef.MSCoefficients.equal(args.D0, args.D, n)
        equal = (args.D0, args.D)
    u = np.array(args.u if args.u else [0.0] * ms.n, dtype=float)
    if u.size != ms.n:
        raise ConfigError(f"--u needs {ms.n} values")
    A0 = coef.ms_build_A0(ms, u)
    inv = coef.ms_invert_A0(A0)
    np.set_printoptions(precision=17)
    print("A0 =")
    print(A0)
    print("inverse =")
    print(inv)
    resid = float(np.max(np.abs(A0 @ inv - np.eye(ms.n))))
    print(f"max |A0 * inverse - I| = {resid:.3e}")
    if equal is not None:
        closed = coef.ms_closed_form_inverse(*equal, u)
        print("closed form =")
        print(closed)
        print(f"max |inverse - closed form| = {float(np.max(np.abs(inv - closed))):.3e}")
    return EXIT_OK


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    def common(p, suppress):
        d = argparse.SUPPRESS if suppress else None
        p.add_argument("--config", default=d, help="configuration file")
        p.add_argument("--out", default=d, help="output directory (overrides output.dir)")
        p.add_argument("--no-header-time", action="store_true",
                       default=argparse.SUPPRESS if suppress else False,
                       help="omit the timestamp line from output files")
        p.add_argument("--verbose", action="store_true",
                       default=argparse.SUPPRESS if suppress else False)

    parser = argparse.ArgumentParser(prog="crossdiff", description=__doc__.splitlines()[0])
    common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "integrate a configuration and write CSV output"),
                        ("check", "check the structural conditions of the model"),
                        ("experiment", "run the configured paired experiment")):
        common(sub.add_parser(name, help=help_), suppress=True)
    ms = sub.add_parser("ms-invert", help="invert the Maxwell-Stefan matrix A0")
    common(ms, suppress=True)
    ms.add_argument("--D0", type=float)
    ms.add_argument("--D", type=float)
    ms.add_argument("--n", type=int)
    ms.add_argument("--u", type=_floats, help="comma-separated concentrations")
    ms.add_argument("--d-matrix", help="file with the (n+1)x(n+1) coefficient matrix")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "ms-invert":
            return cmd_ms_invert(args)
        if not args.config:
            raise ConfigError("--config is required")
        cfg = parse_config(args.config)
        return {"run": cmd_run, "check": cmd_check, "experiment": cmd_experiment}[
            args.command](cfg, args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExperimentSpecError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IncompatibleSourceError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, InversionError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CrossDiffError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
