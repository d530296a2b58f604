import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import IO, Optional

import numpy as np

REPO_ROOT = Path(__file__).parent.parent
sys.path.append(str(REPO_ROOT))

from methods.analyze import estimate, extract_crossing_tree, scale_invariance_check  # noqa: E402
from methods.builtin import CATALOG, builtin_model, parse_params  # noqa: E402
from methods.config import load_model  # noqa: E402
from methods.engine import initialize, initialize_random_start, load_state, run, save_state  # noqa: E402
from methods.oracle import build_tree, compare_with_engine, dump_tree, refine_w  # noqa: E402
from methods.spectral import check_assumptions, spectral_summary  # noqa: E402
from models.errors import (  # noqa: E402
    AssumptionViolation,
    ConfigError,
    DegenerateFirstCrossing,
    EbpError,
    MalformedPath,
    SnapshotError,
    UnknownModel,
)
from models.model import ModelSpec  # noqa: E402
from models.pattern import Orientation  # noqa: E402
from models.table import FORMATS, RecordWriter, SampleTable  # noqa: E402

logger = logging.getLogger("ebpsim")

EXIT_ERROR = 1
EXIT_INPUT = 2
EXIT_ASSUMPTION = 3
EXIT_VALIDATION = 4

LOG_ENV = "EBPSIM_LOG"


def configure_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def load_source(builtin: Optional[str], model_path: Optional[Path], params: list[str]) -> ModelSpec:
    if model_path is not None:
        if params:
            raise ConfigError("--param applies to builtin models only")
        return load_model(model_path)
    if builtin is None:
        raise ConfigError("give a model with --builtin NAME or --model FILE")
    return builtin_model(builtin, parse_params(params))


def load(args: argparse.Namespace) -> ModelSpec:
    return load_source(args.builtin, args.model, args.param or [])


def emit(payload: dict, as_json: bool, lines: list[str], out: Optional[IO[str]] = None) -> None:
    out = out or sys.stdout
    if as_json:
        out.write(json.dumps(payload, sort_keys=True, default=str) + "\n")
    else:
        out.write("\n".join(lines) + "\n")


def cmd_spectral(args: argparse.Namespace) -> int:
    model = load(args)
    summary = spectral_summary(model)
    report = check_assumptions(model)
    lines = [
        f"model: {model.name}",
        f"mu+ = {summary.mu_plus:.12g}",
        f"mu- = {summary.mu_minus:.12g}",
        f"mu = {summary.mu:.12g}",
        f"H = {summary.hurst_H:.12g}",
        f"a = {summary.fixed_point_a:.12g}",
        f"P(first up | up) = {summary.first_up_given_up:.12g}",
        f"P(first up | down) = {summary.first_up_given_down:.12g}",
        f"M0 = {np.array(summary.M0).tolist()}",
        f"M0 left/right = {list(summary.m0_left)} / {list(summary.m0_right)}",
        f"M(1) = {np.array(summary.m1).tolist()}",
        f"mu(1) = {summary.mu1:.12g}",
        f"u = {list(summary.left_u)}",
        f"v = {list(summary.right_v)}",
    ]
    lines += [f"warning: {w}" for w in model.warnings]
    lines += report.lines()
    payload = {
        "model": model.name,
        "summary": summary.__dict__,
        "warnings": list(model.warnings),
        "assumptions": {name: report.status(name).value for name in report.checks},
        "passed": report.passed,
    }
    emit(payload, args.json, lines)
    return 0 if report.passed else EXIT_ASSUMPTION


def _replica_path(path: Path, replica: int) -> Path:
    return path.with_name(f"{path.stem}.r{replica}{path.suffix}")


def _simulate_one(model: ModelSpec, args: argparse.Namespace, seed: int, out: Optional[Path]) -> None:
    resuming = args.resume is not None
    if resuming:
        state = load_state(args.resume, model)
    elif args.random_start:
        state = initialize_random_start(model, seed, allow_violations=args.force)
    else:
        state = initialize(model, seed, allow_violations=args.force)

    header = not resuming
    if out is None:
        run(state, args.steps, RecordWriter(sys.stdout, args.format, header=header))
    else:
        with open(out, "a" if resuming else "w", encoding="utf-8", newline="\n") as f:
            run(state, args.steps, RecordWriter(f, args.format, header=header))
    if args.snapshot is not None:
        save_state(state, args.snapshot)
    logger.info("seed %d: %d crossings, depth %d, t = %.6g", seed, state.k, state.depth, state.t)


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.steps < 0:
        raise ConfigError("--steps must be >= 0")
    model = load(args)
    if args.replicas == 1:
        _simulate_one(model, args, args.seed, args.out)
        return 0
    if args.out is None or args.snapshot is not None or args.resume is not None:
        raise ConfigError("--replicas needs --out and works without --snapshot/--resume")
    with ThreadPoolExecutor() as pool:
        futures = [
            pool.submit(_simulate_one, model, args, args.seed + r, _replica_path(args.out, r)) for r in range(args.replicas)
        ]
        for f in futures:
            f.result()
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    table = SampleTable()
    table.import_records(args.input, args.format)
    times, levels = table.path()
    tree = extract_crossing_tree(levels, args.max_level, times)
    report = estimate(tree)
    payload = {"estimate": report.to_dict()}
    lines = [f"{len(table)} crossings from {args.input}", *report.lines()]
    if args.levels is not None:
        model = load(args) if (args.builtin or args.model) else None
        scale = scale_invariance_check(tree, args.levels[0], args.levels[1], model, args.min_crossings)
        payload["scale"] = scale.to_dict()
        lines += scale.lines()
        if not scale.passed:
            emit(payload, args.json, lines)
            return EXIT_VALIDATION
    emit(payload, args.json, lines)
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    model = load(args)
    engine_model = None
    if args.engine_builtin or args.engine_model:
        engine_model = load_source(args.engine_builtin, args.engine_model, [])
    report = compare_with_engine(model, args.crossings, args.depth, args.trees, args.seed, engine_model)
    emit(report.to_dict(), args.json, report.lines())
    return 0 if report.passed else EXIT_VALIDATION


def cmd_tree(args: argparse.Namespace) -> int:
    model = load(args)
    root = Orientation.from_symbol(args.root) if args.root else None
    tree = build_tree(model, args.depth, args.seed, root_orientation=root)
    if args.refine:
        refine_w(tree)
    sys.stdout.write(dump_tree(tree, args.print_depth) + "\n")
    return 0


def parse_args(argv: Optional[list[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="ebpsim", description="Embedded branching process simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    model = argparse.ArgumentParser(add_help=False)
    source = model.add_mutually_exclusive_group()
    source.add_argument("--builtin", choices=sorted(CATALOG), help="builtin model")
    source.add_argument("--model", type=Path, help="model configuration file")
    model.add_argument("--param", action="append", metavar="KEY=VALUE", help="override a builtin parameter")
    model.add_argument("--json", action="store_true", help="machine-readable report")

    p = sub.add_parser("spectral", parents=[model], help="mean matrices, eigenvectors and assumption checks")
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("simulate", parents=[model], help="stream level-0 crossings")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--random-start", action="store_true", help="start from a typical time instead of the origin")
    p.add_argument("--out", type=Path, help="output file (default stdout)")
    p.add_argument("--format", choices=FORMATS, default="ndjson")
    p.add_argument("--snapshot", type=Path, help="write the simulator state here when done")
    p.add_argument("--resume", type=Path, help="continue from a snapshot")
    p.add_argument("--replicas", type=int, default=1, help="independent runs with seeds seed, seed+1, ...")
    p.add_argument("--force", action="store_true", help="simulate even if assumptions fail")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=[model], help="crossing-tree estimates from a record file")
    p.add_argument("input", type=Path)
    p.add_argument("--format", choices=FORMATS, default=None)
    p.add_argument("--max-level", type=int, default=32)
    p.add_argument("--levels", type=int, nargs=2, metavar=("N1", "N2"), help="run the scale check between two levels")
    p.add_argument("--min-crossings", type=int, default=1000)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("validate", parents=[model], help="compare the engine against oracle trees")
    p.add_argument("--crossings", type=int, default=100_000)
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--trees", type=int, default=200, help="oracle trees, each giving its first 2^depth crossings")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--engine-builtin", choices=sorted(CATALOG), help="run the engine on another builtin")
    p.add_argument("--engine-model", type=Path, help="run the engine on another model file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("tree", parents=[model], help="dump an oracle tree")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--root", choices=("+", "-"))
    p.add_argument("--refine", action="store_true", help="fill in W estimates")
    p.add_argument("--print-depth", type=int, default=None)
    p.set_defaults(func=cmd_tree)

    return parser.parse_args(argv)


def main(argv: Optional[list[str]] = None) -> int:
    configure_logging()
    args = parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UnknownModel, MalformedPath, SnapshotError) as e:
        logger.error("%s", e)
        return EXIT_INPUT
    except (AssumptionViolation, DegenerateFirstCrossing) as e:
        logger.error("%s", e)
        return EXIT_ASSUMPTION
    except (EbpError, OSError) as e:
        logger.error("%s", e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
