"""Command-line entry point.

Subcommands: run | ensemble | converge | twin | verify | export.
Exit codes: 0 success, 1 usage, 2 configuration error, 3 numerical failure
(blow-up), 4 verification failure.  Every invocation writes a run manifest
listing the resolved configuration and the checksums of every output file.
"""

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import SimConfig, parse_config, serialize_config
from .diagnostics import CSV_COLUMNS
from .errors import ConfigError, StcnsError
from .harness import (
    checkpoint_load,
    checkpoint_save,
    ensemble_run,
    refinement_study,
    twin_run,
)
from .integrator import run as run_trajectory
from .verify import run_verification

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFICATION = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def emit_diagnostics(records, path):
    """CSV with one row per record, 17 significant digits, fixed column order."""
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        cells = []
        for name in CSV_COLUMNS:
            value = getattr(rec, name)
            if name == "floored_points":
                cells.append(str(int(value)))
            else:
                cells.append(format(float(value), ".17g"))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def _sha256(path):
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


class Manifest:
    def __init__(self, out_dir, config):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.started = time.time()
        self.config = config
        self.outputs = []

    def add(self, path):
        self.outputs.append(Path(path))
        return path

    def write(self, seed=None, extra=None):
        doc = {
            "tool": "stcns",
            "version": __version__,
            "master_seed": seed,
            "config": json.loads(serialize_config(self.config)) if self.config else None,
            "started_unix": self.started,
            "finished_unix": time.time(),
            "outputs": {p.name: _sha256(p) for p in self.outputs},
        }
        if extra:
            doc.update(extra)
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _load_config(args):
    if getattr(args, "config", None):
        config = parse_config(Path(args.config).read_text())
    else:
        config = SimConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "variant", None):
        overrides["variant"] = args.variant
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _cmd_run(args):
    config = _load_config(args)
    grid = config.make_grid()
    scheme = config.make_scheme()
    problem = config.make_problem(grid)
    initial = config.make_initial_state(grid)
    manifest = Manifest(args.out, config)
    traj = run_trajectory(
        initial, scheme, problem, config.seed, args.path_id,
        config.output_times(), diagnostics_mode=config.diagnostics,
        diagnostics_stride=config.diagnostics_stride,
    )
    csv_path = manifest.add(Path(args.out) / "diagnostics.csv")
    emit_diagnostics(traj.records, csv_path)
    ckpt_path = manifest.add(Path(args.out) / "state.stcn")
    checkpoint_save(traj, scheme, ckpt_path)
    summary = {
        "status": traj.status,
        "failure_time": traj.failure_time,
        "increments_digest": traj.increments_digest,
        "final_step": traj.final_step,
    }
    summary_path = manifest.add(Path(args.out) / "run.json")
    Path(summary_path).write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    manifest.write(seed=config.seed)
    if traj.status != "completed":
        print(f"trajectory ended with status {traj.status} at t={traj.failure_time}")
        return EXIT_NUMERICAL
    print(f"completed {traj.final_step} steps; diagnostics in {csv_path}")
    return EXIT_OK


def _cmd_ensemble(args):
    config = _load_config(args)
    grid = config.make_grid()
    scheme = config.make_scheme()
    problem = config.make_problem(grid)
    initial = config.make_initial_state(grid)
    manifest = Manifest(args.out, config)
    report = ensemble_run(
        initial, scheme, problem, config.seed, args.paths,
        p_list=tuple(args.powers), diagnostics_stride=config.diagnostics_stride
        if config.diagnostics != "none" else 10,
    )
    doc = {
        "path_count": report.path_count,
        "statuses": report.statuses,
        "failure_count": report.failure_count,
        "sup_F": report.sup_F,
        "int_G": report.int_G,
        "sup_F_moments": {str(p): v for p, v in report.sup_F_moments.items()},
        "int_G_moments": {str(p): v for p, v in report.int_G_moments.items()},
    }
    out_path = manifest.add(Path(args.out) / "ensemble.json")
    Path(out_path).write_text(json.dumps(_jsonable(doc), indent=2) + "\n")
    manifest.write(seed=config.seed)
    print(f"{report.path_count - report.failure_count}/{report.path_count} paths completed; "
          f"E[sup F] = {report.sup_F_moments[args.powers[0]][0]:.6g}")
    return EXIT_OK if report.failure_count == 0 else EXIT_NUMERICAL


def _cmd_converge(args):
    config = _load_config(args)
    grid = config.make_grid()
    scheme = config.make_scheme()
    problem = config.make_problem(grid)
    initial = config.make_initial_state(grid)
    manifest = Manifest(args.out, config)
    levels = [float(v) for v in args.levels.split(",")]
    axis = {"eps": "eps", "k": "k", "dt": "dt"}[args.axis]
    report = refinement_study(
        initial, scheme, problem, config.seed, args.path_id, axis, levels,
        output_times=[config.T], sobolev_index=args.sobolev,
    )
    doc = {
        "axis": report.axis,
        "levels": report.levels,
        "errors": report.errors,
        "observed_order": report.observed_order,
        "sobolev_index": report.sobolev_index,
        "failures": {str(k): v for k, v in report.failures.items()},
    }
    out_path = manifest.add(Path(args.out) / "convergence.json")
    Path(out_path).write_text(json.dumps(_jsonable(doc), indent=2) + "\n")
    manifest.write(seed=config.seed)
    print(f"axis {report.axis}: errors {report.errors}, observed order {report.observed_order:.3f}")
    return EXIT_OK if not report.failures else EXIT_NUMERICAL


def _cmd_twin(args):
    config = _load_config(args)
    grid = config.make_grid()
    scheme = config.make_scheme()
    problem = config.make_problem(grid)
    initial = config.make_initial_state(grid)
    manifest = Manifest(args.out, config)
    report = twin_run(initial, scheme, problem, config.seed, args.path_id, args.delta,
                      perturbation_mode=args.mode)
    doc = {
        "delta": report.delta,
        "times": report.times,
        "divergence": report.divergence,
        "growth_rate": report.growth_rate,
        "digests_match": report.digests_match,
        "perturbation_mode": report.perturbation_mode,
    }
    out_path = manifest.add(Path(args.out) / "twin.json")
    Path(out_path).write_text(json.dumps(_jsonable(doc), indent=2) + "\n")
    manifest.write(seed=config.seed)
    print(f"delta {report.delta:g}: max divergence {max(report.divergence):.3e}, "
          f"fitted rate {report.growth_rate:.3f}, digests match {report.digests_match}")
    return EXIT_OK


def _cmd_verify(args):
    config = _load_config(args)
    manifest = Manifest(args.out, config)
    results = run_verification(quick=args.quick, seed=config.seed)
    failures = 0
    doc = []
    for res in results:
        line = "pass" if res.passed else "FAIL"
        print(f"[{line}] {res.name}: {res.detail}")
        doc.append({"name": res.name, "passed": res.passed, "detail": res.detail})
        failures += 0 if res.passed else 1
    out_path = manifest.add(Path(args.out) / "verification.json")
    Path(out_path).write_text(json.dumps(_jsonable(doc), indent=2) + "\n")
    manifest.write(seed=config.seed)
    return EXIT_OK if failures == 0 else EXIT_VERIFICATION


def _cmd_export(args):
    manifest = Manifest(args.out, None)
    wrote = []
    if args.checkpoint:
        traj, stored = checkpoint_load(args.checkpoint)
        state = traj.states[-1]
        from .diagnostics import monitor_extrema_and_mass, monitor_sobolev
        doc = {
            "time": state.t,
            "step": traj.final_step,
            "path_id": traj.path_id,
            "seed": traj.seed,
            "scheme": stored,
            "grid": list(state.grid.shape),
            "box_length": list(state.grid.box_length),
            "extrema": monitor_extrema_and_mass(state),
            "sobolev": monitor_sobolev(state),
        }
        out_path = manifest.add(Path(args.out) / (Path(args.checkpoint).stem + ".json"))
        Path(out_path).write_text(json.dumps(_jsonable(doc), indent=2) + "\n")
        wrote.append(out_path)
    if args.report:
        doc = json.loads(Path(args.report).read_text())
        rows = _flatten_report(doc)
        out_path = manifest.add(Path(args.out) / (Path(args.report).stem + ".csv"))
        Path(out_path).write_text("\n".join(rows) + "\n")
        wrote.append(out_path)
    if not wrote:
        print("nothing to export: pass --checkpoint and/or --report", file=sys.stderr)
        return EXIT_USAGE
    manifest.write()
    for path in wrote:
        print(f"wrote {path}")
    return EXIT_OK


def _flatten_report(doc):
    """Flatten a report JSON object into key,value CSV rows."""
    rows = ["key,value"]

    def walk(prefix, node):
        if isinstance(node, dict):
            for key, val in node.items():
                walk(f"{prefix}.{key}" if prefix else str(key), val)
        elif isinstance(node, list):
            for i, val in enumerate(node):
                walk(f"{prefix}[{i}]", val)
        else:
            rows.append(f"{prefix},{node}")

    walk("", doc)
    return rows


def build_parser():
    parser = _Parser(prog="stcns", description=__doc__)
    parser.add_argument("--version", action="version", version=f"stcns {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="path to a JSON config document")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--variant", choices=("exact", "mollified", "truncated"),
                       help="override the system variant")
        p.add_argument("--path-id", type=int, default=0, help="Wiener path identifier")

    p_run = sub.add_parser("run", help="integrate a single trajectory")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_ens = sub.add_parser("ensemble", help="Monte-Carlo ensemble of paths")
    common(p_ens)
    p_ens.add_argument("--paths", type=int, default=8, help="number of Wiener paths")
    p_ens.add_argument("--powers", type=float, nargs="+", default=[1.0],
                       help="moment exponents for E[sup F]^p and E[int G]^p")
    p_ens.set_defaults(func=_cmd_ensemble)

    p_conv = sub.add_parser("converge", help="refinement study along one axis")
    common(p_conv)
    p_conv.add_argument("--axis", choices=("k", "eps", "dt"), required=True)
    p_conv.add_argument("--levels", required=True,
                        help="comma-separated refinement levels, coarse to fine")
    p_conv.add_argument("--sobolev", type=float, default=1.0,
                        help="Sobolev index of the comparison norm")
    p_conv.set_defaults(func=_cmd_converge)

    p_twin = sub.add_parser("twin", help="twin-path stability run")
    common(p_twin)
    p_twin.add_argument("--delta", type=float, default=1e-6,
                        help="initial perturbation size")
    p_twin.add_argument("--mode", choices=("u", "n", "c"), default="u",
                        help="which field receives the perturbation")
    p_twin.set_defaults(func=_cmd_twin)

    p_ver = sub.add_parser("verify", help="run the identity/inequality suites")
    common(p_ver)
    p_ver.add_argument("--quick", action="store_true", help="smaller field counts")
    p_ver.set_defaults(func=_cmd_verify)

    p_exp = sub.add_parser("export", help="convert checkpoints/reports to CSV/JSON")
    p_exp.add_argument("--checkpoint", help="binary checkpoint to summarize")
    p_exp.add_argument("--report", help="report JSON to flatten into CSV")
    p_exp.add_argument("--out", default=".", help="output directory")
    p_exp.set_defaults(func=_cmd_export)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StcnsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
