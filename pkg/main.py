"""
Command line entry point.

    python main.py simulate      --config F [--seed S] [--path-index P] [--out DIR]
    python main.py deterministic --config F [--out DIR]
    python main.py scaling       --config F [--paths P] [--seed S] [--out DIR]
    python main.py consistency   --config F [--out DIR]
    python main.py uniqueness    --config F [--out DIR]
    python main.py verify        --config F [--out DIR]
    python main.py show          --snapshot F

Exit codes: 0 success, 1 validation error, 2 numeric abort, 3 I/O.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional

import numpy as np

from core.config import get_config, get_output_config, setup_logging
from core.dynamics import Scheme, SolverConfig, run_trajectory
from core.exceptions import EXIT_IO, EXIT_OK, EXIT_VALIDATION, ConfigError, SimulationError
from core.monitoring import collect_resources, get_monitor
from core.noise import BrownianDriver
from core.spectral import sobolev_norm
from handlers.consistency_handler import ConsistencyStudySpec, run_consistency
from handlers.invariant_handler import invariant_suite
from handlers.scaling_handler import ScalingStudySpec, scaling_study
from handlers.uniqueness_handler import UniquenessStudySpec, uniqueness_probe
from models.schemas import config_dict, load_config
from utils.file_utils import RunManifest, read_snapshot, write_manifest, write_snapshot, write_text
from utils.performance_utils import emit_report

logger = logging.getLogger("smagorinsky")


def _out_dir(args) -> Path:
    return Path(args.out or get_output_config().directory)


def _expect(obj, kind, what: str):
    if not isinstance(obj, kind):
        raise ConfigError(f"the {what} command needs a {kind.__name__} document, got {type(obj).__name__}")
    return obj


def _reports(report, out: Path, stem: str) -> List[Path]:
    paths = emit_report(report, "csv", out, stem) + emit_report(report, "plotdata", out, stem)
    if get_output_config().figures:
        paths += emit_report(report, "figure", out, stem)
    return paths


def _finish(command: str, obj, seed: int, out: Path, outputs: List[Path], path_seeds=None):
    manifest = RunManifest(
        command=command,
        config=config_dict(obj),
        master_seed=int(seed),
        version=get_config().version,
        path_seeds=list(path_seeds or []),
        resources=asdict(collect_resources()),
    )
    manifest.resources["timings"] = get_monitor().get_summary_stats()["seconds_by_task"]
    write_manifest(manifest, out, outputs)


def cmd_simulate(args) -> int:
    cfg = _expect(load_config(args.config), SolverConfig, "simulate")
    if args.seed is not None:
        cfg = cfg.replace(master_seed=args.seed)
    if not cfg.stochastic:
        raise ConfigError("simulate runs one stochastic path; use 'deterministic' for the limit equation", "scheme")
    out = _out_dir(args)
    omega0 = cfg.initial_condition.build(cfg.grid)
    driver = BrownianDriver.for_noise(cfg.theta, cfg.master_seed, args.path_index)
    with get_monitor().track("simulate"):
        record = run_trajectory(cfg.replace(keep_snapshots=True), omega0, driver)
    outputs = _reports(record, out, "record")
    outputs.append(write_snapshot(record.snapshots[-1], out / "final.w2ds"))
    _finish("simulate", cfg, cfg.master_seed, out, outputs, [record.seeds])
    print(f"t={record.final_time:g} |w|={record.l2_norms[-1]:.10g} budget C={record.budget_constant():.4g}")
    return EXIT_OK


def cmd_deterministic(args) -> int:
    cfg = _expect(load_config(args.config), SolverConfig, "deterministic")
    cfg = cfg.replace(scheme=Scheme.DETERMINISTIC, theta=None, keep_snapshots=True)
    out = _out_dir(args)
    with get_monitor().track("deterministic"):
        record = run_trajectory(cfg, cfg.initial_condition.build(cfg.grid))
    outputs = _reports(record, out, "record")
    outputs.append(write_snapshot(record.snapshots[-1], out / "final.w2ds"))
    _finish("deterministic", cfg, cfg.master_seed, out, outputs)
    print(f"t={record.final_time:g} |w|={record.l2_norms[-1]:.10g}")
    return EXIT_OK


def cmd_scaling(args) -> int:
    spec = _expect(load_config(args.config), ScalingStudySpec, "scaling")
    if args.paths is not None:
        spec = ScalingStudySpec(spec.base, spec.shells, args.paths, spec.delta, spec.reference_check)
    if args.seed is not None:
        spec = ScalingStudySpec(spec.base.replace(master_seed=args.seed), spec.shells, spec.paths_per_shell,
                                spec.delta, spec.reference_check)
    out = _out_dir(args)
    with get_monitor().track("scaling"):
        table = scaling_study(spec)
    outputs = _reports(table, out, "convergence")
    outputs.append(write_text(out / "summary.json", json.dumps(
        dict(table.summary(), aborted=table.aborted), indent=2, default=str)))
    _finish("scaling", spec, spec.base.master_seed, out, outputs, [table.seeds])
    print(table.to_frame().to_string(index=False))
    return EXIT_OK


def cmd_consistency(args) -> int:
    spec = _expect(load_config(args.config), ConsistencyStudySpec, "consistency")
    out = _out_dir(args)
    with get_monitor().track("consistency"):
        table = run_consistency(spec)
    outputs = _reports(table, out, "consistency")
    order = table.order.as_dict() if table.order else None
    outputs.append(write_text(out / "summary.json", json.dumps(
        {"order": order, "monotone": table.is_monotone()}, indent=2)))
    _finish("consistency", spec, spec.base.master_seed, out, outputs)
    print(table.to_frame().to_string(index=False))
    return EXIT_OK


def cmd_uniqueness(args) -> int:
    spec = _expect(load_config(args.config), UniquenessStudySpec, "uniqueness")
    out = _out_dir(args)
    omega0 = spec.base.initial_condition.build(spec.base.grid)
    with get_monitor().track("uniqueness"):
        report = uniqueness_probe(spec.base, omega0, spec.resolutions)
    outputs = _reports(report, out, "uniqueness")
    outputs.append(write_text(out / "summary.json", json.dumps(
        {"passed": report.passed, "failures": report.failures}, indent=2)))
    _finish("uniqueness", spec, spec.base.master_seed, out, outputs)
    print(report.to_frame().to_string(index=False))
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_verify(args) -> int:
    cfg = _expect(load_config(args.config), SolverConfig, "verify")
    with get_monitor().track("verify"):
        report = invariant_suite(cfg)
    text = json.dumps(report.as_dict(), indent=2, default=str)
    if args.out:
        out = _out_dir(args)
        outputs = [write_text(out / "invariants.json", text)] + emit_report(report, "csv", out, "invariants")
        _finish("verify", cfg, cfg.master_seed, out, outputs)
    print(text)
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_show(args) -> int:
    omega = read_snapshot(args.snapshot)
    grid = omega.grid
    print(f"grid n={grid.n} max_mode={grid.max_mode} modes={grid.size} nonzero={int(np.count_nonzero(omega.coeffs))}")
    print(f"L2={omega.norm():.17g} H1={sobolev_norm(omega, 1.0):.17g} H-1={sobolev_norm(omega, -1.0):.17g}")
    order = np.argsort(-np.abs(omega.coeffs), kind="stable")[:args.top]
    for i in order:
        if omega.coeffs[i] == 0:
            break
        l1, l2 = grid.points[i]
        print(f"  l=({int(l1):4d},{int(l2):4d})  c={omega.coeffs[i]: .17g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smagorinsky", description="Transport-noise vorticity solver suite")
    parser.add_argument("--log-level", default=None, help="Override SMAG_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, config=True, out=True):
        p = sub.add_parser(name, help=help_text)
        if config:
            p.add_argument("--config", required=True, help="JSON configuration file")
        if out:
            p.add_argument("--out", default=None, help="Output directory (default SMAG_OUTPUT_DIR)")
        p.set_defaults(func=fn)
        return p

    p = add("simulate", cmd_simulate, "One stochastic path")
    p.add_argument("--seed", type=int, default=None, help="Master seed")
    p.add_argument("--path-index", type=int, default=0, help="Path index under the master seed")
    add("deterministic", cmd_deterministic, "The limit equation")
    p = add("scaling", cmd_scaling, "Scaling-limit study")
    p.add_argument("--paths", type=int, default=None, help="Paths per shell")
    p.add_argument("--seed", type=int, default=None, help="Master seed")
    add("consistency", cmd_consistency, "Ito/Stratonovich consistency study")
    add("uniqueness", cmd_uniqueness, "Deterministic refinement probe")
    add("verify", cmd_verify, "Invariant suite; exit code 0 iff every check passes")
    p = add("show", cmd_show, "Norms and leading modes of a snapshot", config=False, out=False)
    p.add_argument("--snapshot", required=True, help="Snapshot file")
    p.add_argument("--top", type=int, default=10, help="Number of modes to print")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_VALIDATION if e.code else EXIT_OK
    setup_logging(args.log_level)
    get_monitor().reset()
    try:
        return args.func(args)
    except SimulationError as e:
        logger.error(f"{type(e).__name__}: {e}")
        logger.debug("traceback", exc_info=True)
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        logger.debug("traceback", exc_info=True)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
