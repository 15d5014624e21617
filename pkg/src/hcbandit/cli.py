"""Command line entry point: gen-world, build-tree, run, report.

Exit codes: 0 success, 2 config error, 3 input-file error, 4 internal
consistency error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import (
    ConsistencyError,
    CorruptTreeError,
    InvalidConfigError,
    InvalidDimensionError,
    MissingLabelError,
    NotFoundError,
    ParseError,
)
from .embeddings import write_labels
from .experiment import (
    ExperimentConfig,
    ExperimentLog,
    category_labels,
    format_table,
    load_config,
    make_tree,
    make_world,
    report,
    run_experiment,
    with_overrides,
    write_summary_csv,
)
from .tree import serialize_tree
from .world import export_world

EXIT_CONFIG, EXIT_INPUT, EXIT_INTERNAL = 2, 3, 4


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return with_overrides(cfg, seeds=args.seed, policies=args.policies, budget=args.budget)


def cmd_gen_world(args) -> None:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    world = make_world(cfg.world)
    ext = ".csv" if args.format == "csv" else ".emb"
    export_world(world, out / f"items{ext}", out / f"users{ext}")
    if world.item_blobs is not None:
        write_labels(out / "labels.csv", category_labels(cfg.world, world))
    print(f"wrote {len(world.item_ids)} items and {len(world.user_ids)} users to {out}")


def cmd_build_tree(args) -> None:
    cfg = _config(args)
    if args.items:
        cfg.world.source, cfg.world.items = "import", args.items
        cfg.world.users = args.users or args.items
    world = make_world(cfg.world)
    tree = make_tree(cfg.tree, world)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    serialize_tree(tree, out / "tree.json")
    print(f"wrote tree with level sizes {tree.level_sizes} to {out / 'tree.json'}")


def cmd_run(args) -> None:
    cfg = _config(args)
    logs = run_experiment(cfg)
    path = Path(args.out) / "log.csv" if args.out else Path(cfg.output)
    logs.to_csv(path)
    violations = sum(t.violations for t in logs.budget.values())
    print(f"wrote {len(logs.rows)} rows to {path}; budget violations: {violations}")


def cmd_report(args) -> None:
    checkpoints = load_config(args.config).checkpoints if args.config else (100, 500, 1000, 2000)
    logs = [ExperimentLog.from_csv(p) for p in args.logs]
    rows = report(logs, checkpoints)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_csv(rows, out / "summary.csv")
    table = format_table(rows)
    (out / "summary.txt").write_text(table + "\n")
    print(table)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hcbandit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--seed", type=_int_list, help="comma-separated seeds (overrides config)")
        p.add_argument("--policies", type=_str_list, help="comma-separated policy names (overrides config)")
        p.add_argument("--budget", type=int, help="score budget per user-round (overrides config)")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("gen-world", help="generate a synthetic world and write embedding files")
    common(p)
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("build-tree", help="cluster item embeddings into a hierarchy tree")
    common(p)
    p.add_argument("--items", help="item embedding file (default: generate from config)")
    p.add_argument("--users", help="user vector file accompanying --items")
    p.set_defaults(func=cmd_build_tree)

    p = sub.add_parser("run", help="run the configured policy comparison")
    common(p, out_required=False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarize log CSVs at the configured checkpoints")
    common(p)
    p.add_argument("logs", nargs="+", help="log CSV files")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except InvalidConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, NotFoundError, MissingLabelError, InvalidDimensionError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConsistencyError, CorruptTreeError) as exc:
        print(f"internal consistency error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
