"""Command-line interface: ``yosida-fde {solve,verify,asymptotics,sweep,scenarios}``.

Exit status: 0 on success, 2 when a run completes with a failure report
(convergence failure, failed verification check), 1 on hard errors
(invalid configuration, violated preconditions, unreadable files).  A hard
error leaves no artifacts behind.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, pipeline
from .config import (SWEEP_AXES, apply_overrides, bundled_scenario_path, bundled_scenarios,
                     load_config, parse_config, tomllib)
from .errors import ConfigError, YosidaError
from .grid import state_norm
from .io import read_trajectory, write_json, write_table, write_trajectory

log = logging.getLogger("yosida_fde")

EXIT_OK = 0
EXIT_HARD = 1
EXIT_REPORT = 2


class _Staging:
    """Collect artifacts in a temporary directory and move them into place on success."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out_dir.parent))

    def path(self, name):
        p = self.tmp / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def commit(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for src in sorted(self.tmp.rglob("*")):
            if src.is_file():
                dst = self.out_dir / src.relative_to(self.tmp)
                dst.parent.mkdir(parents=True, exist_ok=True)
                os.replace(src, dst)
                written.append(str(dst))
        shutil.rmtree(self.tmp, ignore_errors=True)
        return written

    def discard(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def _resolve_config_path(value):
    """A file path, falling back to a bundled scenario of that name."""
    p = Path(value)
    if not p.exists() and value.removesuffix(".toml") in bundled_scenarios():
        return bundled_scenario_path(value)
    return p


def _load(args):
    cfg = load_config(_resolve_config_path(args.config))
    if args.seed is not None:
        raw = dict(cfg.raw)
        raw["seed"] = args.seed
        cfg = parse_config(raw, _resolve_config_path(args.config).parent)
    return cfg


def _out_dir(args, cfg):
    return Path(args.out) if args.out else Path(cfg.output_dir) / cfg.name


def _manifest(cfg, result, command):
    rates = pipeline.summarize_rates(result.report)
    return {
        "command": command,
        "version": __version__,
        "name": cfg.name,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "config": cfg.echo(),
        "converged": result.converged,
        "message": result.message,
        "oracle_error": result.oracle_error,
        "rates": rates,
        "report": result.report.to_dict(include_timings=False) if result.report else None,
        "timings": {"solve_seconds": result.seconds,
                    **(result.report.timings if result.report else {})},
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args):
    cfg = _load(args)
    result = pipeline.solve(cfg)
    stage = _Staging(_out_dir(args, cfg))
    try:
        files = []
        if result.trajectory is not None:
            write_trajectory(result.trajectory, stage.path("trajectory.csv"),
                             extra={"converged": result.converged})
            files += ["trajectory.csv", "trajectory.json"]
        manifest = _manifest(cfg, result, "solve")
        manifest["artifacts"] = files + ["manifest.json"]
        write_json(manifest, stage.path("manifest.json"))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    if result.oracle_error is not None:
        print(f"oracle error: {result.oracle_error:.6e}")
    print(f"{'converged' if result.converged else 'NOT converged'}: {result.message}")
    return EXIT_OK if result.converged else EXIT_REPORT


def cmd_verify(args):
    cfg = _load(args)
    traj = read_trajectory(args.trajectory)
    checks = cfg.verify.get("checks", [])
    if not checks:
        log.warning("no verification checks enabled in the configuration")
    reports = pipeline.run_checks(cfg, traj, checks)
    stage = _Staging(_out_dir(args, cfg))
    try:
        for name, rep in reports.items():
            write_json(rep.to_dict(), stage.path(f"verify/{name}.json"))
        write_json({"seed": cfg.seed, "trajectory": str(args.trajectory),
                    "checks": {k: r.passed for k, r in reports.items()}},
                   stage.path("verify/summary.json"))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    for name, rep in reports.items():
        print(f"{'PASS' if rep.passed else 'FAIL'} {name}: worst residual "
              f"{rep.worst_residual:.3e} (tolerance {rep.tolerance:.3e})")
    return EXIT_OK if all(r.passed for r in reports.values()) else EXIT_REPORT


def cmd_asymptotics(args):
    cfg = _load(args)
    if args.trajectory:
        traj = read_trajectory(args.trajectory)
        if traj.initial_history.geometry != cfg.operator.geometry:
            raise ConfigError("trajectory geometry differs from the configuration")
    else:
        result = pipeline.solve(cfg)
        if not result.converged:
            print(f"NOT converged: {result.message}")
            return EXIT_REPORT
        traj = result.trajectory
    out, split = pipeline.run_asymptotics(cfg, traj)
    stage = _Staging(_out_dir(args, cfg))
    try:
        write_json(out, stage.path("asymptotics/asymptotics.json"))
        decay = out["decay"]
        rows = [{"t_start": w[0], "t_end": w[1], "sup": s}
                for w, s in zip(decay["windows"], decay["sups"])]
        write_table(rows, stage.path("asymptotics/window_profile.csv"),
                    ["t_start", "t_end", "sup"])
        if split is not None:
            norms = state_norm(split.residual, cfg.operator.norm)
            prof = [{"t": t, "residual_norm": r} for t, r in zip(split.times, norms)]
            write_table(prof, stage.path("asymptotics/residual_profile.csv"),
                        ["t", "residual_norm"])
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(f"decay verdict: {out['decay']['verdict']}")
    if split is not None:
        print(f"ap split defect {split.defect:.3e}, stable={split.stable}; "
              f"{'PASS' if out['passed'] else 'FAIL'}")
        return EXIT_OK if out["passed"] else EXIT_REPORT
    return EXIT_OK


def load_sweep(path):
    """Parse a sweep file: ``[sweep]`` with ``tie_h_to_lambda`` and ``[sweep.axes]``."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"sweep file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    sweep = data.get("sweep", {})
    unknown = set(data) - {"sweep"} | set(sweep) - {"axes", "tie_h_to_lambda"}
    if unknown:
        raise ConfigError(f"unknown keys in sweep file: {sorted(unknown)}")
    axes = dict(sweep.get("axes", {}))
    bad = set(axes) - set(SWEEP_AXES)
    if bad:
        raise ConfigError(f"sweep over undeclared axes {sorted(bad)}; allowed {SWEEP_AXES}")
    for key, values in axes.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep axis {key!r} needs a nonempty list of values")
    return axes, bool(sweep.get("tie_h_to_lambda", False))


def sweep_cells(axes):
    """Cartesian product of the axis values in declaration order; one empty cell without axes."""
    names = list(axes)
    return [dict(zip(names, combo)) for combo in itertools.product(*(axes[n] for n in names))]


def run_cell(raw, base_dir, overrides, tie):
    """One sweep cell; failures are recorded in the row, never raised."""
    row = dict(overrides)
    t0 = time.perf_counter()
    try:
        cfg = parse_config(apply_overrides(raw, overrides, tie), base_dir)
        result = pipeline.solve(cfg)
        row.update(status="ok" if result.converged else "not_converged",
                   error=result.oracle_error, **pipeline.summarize_rates(result.report))
        if not result.converged:
            row["message"] = result.message
    except (YosidaError, ValueError, ArithmeticError) as exc:
        row.update(status="error", message=f"{type(exc).__name__}: {exc}")
    row["seconds"] = time.perf_counter() - t0
    return row


def sweep_rows(cfg, base_dir, axes, tie, jobs=1):
    """Run every cell and attach the error ratio between consecutive cells."""
    cells = sweep_cells(axes)
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(run_cell, cfg.raw, base_dir, c, tie) for c in cells]
            rows = [f.result() for f in futs]
    else:
        rows = [run_cell(cfg.raw, base_dir, c, tie) for c in cells]
    prev = None
    for row in rows:
        err = row.get("error")
        row["error_ratio"] = (prev / err) if (prev is not None and err) else None
        prev = err
    return rows


SWEEP_COLUMNS = list(SWEEP_AXES) + ["status", "error", "error_ratio", "outer_iterations",
                                    "max_ratio", "factorial_constant", "observed_factor",
                                    "predicted_factor", "cross_lambda_final", "seconds",
                                    "message"]


def cmd_sweep(args):
    cfg = _load(args)
    config_path = _resolve_config_path(args.config)
    if args.sweep:
        axes, tie = load_sweep(args.sweep)
    else:
        axes, tie = {}, False
    rows = sweep_rows(cfg, config_path.parent, axes, tie, jobs=args.jobs)
    columns = [c for c in SWEEP_COLUMNS if c not in SWEEP_AXES or c in axes]
    stage = _Staging(_out_dir(args, cfg))
    try:
        write_table(rows, stage.path("sweep/sweep.csv"), columns)
        for i, row in enumerate(rows):
            cell = {k: v for k, v in row.items() if k != "seconds"}
            write_json({"cell": i, "seed": cfg.seed, "row": cell,
                        "timings": {"seconds": row["seconds"]}},
                       stage.path(f"sweep/cells/cell_{i:03d}.json"))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    for row in rows:
        print(", ".join(f"{k}={row.get(k)}" for k in columns if k in row and k != "message"))
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_REPORT


def cmd_scenarios(args):
    for name in bundled_scenarios():
        print(f"{name}\t{bundled_scenario_path(name)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="yosida-fde",
        description="Solve, verify and analyse nonlinear functional differential equations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help="TOML configuration file or bundled scenario name")
        p.add_argument("--out", help="output directory (default: output_dir/name from config)")
        p.add_argument("--seed", type=int, help="override the configured RNG seed")

    p = sub.add_parser("solve", help="run the double-limit solver")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run the enabled checks on a stored trajectory")
    common(p)
    p.add_argument("--trajectory", required=True, help="trajectory CSV written by solve")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("asymptotics", help="decay and almost-periodic analysis")
    common(p)
    p.add_argument("--trajectory", help="trajectory CSV (solved from the config if omitted)")
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("sweep", help="parameter study over declared axes")
    common(p)
    p.add_argument("--sweep", help="TOML sweep file; omit for the single configured cell")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scenarios", help="list the bundled scenario files")
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except (YosidaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, (ConfigError, OSError)):
            parser.print_usage(sys.stderr)
        return EXIT_HARD


if __name__ == "__main__":
    sys.exit(main())
