"""Command-line entry point: ``fairac {train,sweep,report,make-synthetic}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .datasets import DATA_ROOT_ENV, load_dataset_spec
from .experiment import (
    ExperimentConfig,
    emit_results,
    load_experiment_config,
    load_results,
    run_experiment,
    sweep,
)
from .synthetic import write_dataset


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="built-in dataset name or path to a dataset .cfg")
    p.add_argument("--method", choices=["gcn", "fairac", "base-ac"])
    p.add_argument("--alpha", type=float, help="attribute missing rate")
    p.add_argument("--beta", type=float, help="adversarial weight")
    p.add_argument("--seed", type=int, nargs="+", dest="seeds")
    p.add_argument("--epochs", type=int, help="total FairAC epochs including pretraining")
    p.add_argument("--gcn-epochs", type=int)
    p.add_argument("--max-nodes", type=int)
    p.add_argument("--config", help="key = value experiment configuration file")
    p.add_argument("--data-root", help=f"dataset directory (default ${DATA_ROOT_ENV} or ./data)")
    p.add_argument("--cache-dir", help="DeepWalk cache directory")
    p.add_argument("--output", "-o", help="output directory")
    p.add_argument("--format", choices=["json", "csv", "md"], action="append",
                   help="extra table formats; results.json is always written")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairac", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("train", help="run one configuration over all seeds"))

    sw = sub.add_parser("sweep", help="sweep alpha or beta")
    _common(sw)
    sw.add_argument("--param", choices=["alpha", "beta"], required=True)
    sw.add_argument("--values", type=float, nargs="*", help="defaults to the configured grid")

    rp = sub.add_parser("report", help="render a results.json as a table")
    rp.add_argument("results", help="results.json file")
    rp.add_argument("--format", choices=["json", "csv", "md"], default="md")
    rp.add_argument("--output", "-o", help="output directory (default: alongside the input)")

    syn = sub.add_parser("make-synthetic", help="write a synthetic biased dataset")
    syn.add_argument("directory")
    syn.add_argument("--name", default="synthetic")
    syn.add_argument("--nodes", type=int, default=400)
    syn.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg = load_experiment_config(args.config, cfg)
    if args.dataset:
        cfg.dataset = args.dataset
    if args.data_root:
        cfg.data_root = args.data_root
    # the dataset file supplies its default beta unless set explicitly
    if args.beta is None and not (args.config and _config_sets(args.config, "beta")):
        try:
            spec = load_dataset_spec(cfg.dataset, cfg.data_root)
            if "beta" in spec.extra:
                cfg.fairac = replace(cfg.fairac, beta=float(spec.extra["beta"]))
        except FileNotFoundError:
            pass
    if args.method:
        cfg.method = args.method.replace("-", "_")
    updates = {k: v for k, v in (("alpha", args.alpha), ("beta", args.beta), ("epochs", args.epochs))
               if v is not None}
    if updates:
        cfg.fairac = replace(cfg.fairac, **updates)
    if args.seeds:
        cfg.seeds = list(args.seeds)
    if args.gcn_epochs is not None:
        cfg.gcn_epochs = args.gcn_epochs
    if args.max_nodes is not None:
        cfg.max_nodes = args.max_nodes
    if args.cache_dir:
        cfg.cache_dir = args.cache_dir
    if args.output:
        cfg.output_dir = args.output
    cfg.__post_init__()
    return cfg


def _config_sets(path: str, key: str) -> bool:
    from .datasets import read_kv_config

    return key in read_kv_config(path)


def _emit(records, cfg: ExperimentConfig, formats) -> None:
    print(emit_results(records, "json", cfg.output_dir))
    for fmt in formats or []:
        if fmt != "json":
            print(emit_results(records, fmt, cfg.output_dir))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        if args.command == "make-synthetic":
            print(write_dataset(args.directory, args.name, n_nodes=args.nodes, seed=args.seed))
        elif args.command == "report":
            records = load_results(args.results)
            out = args.output or Path(args.results).parent
            print(emit_results(records, args.format, out))
        elif args.command == "train":
            cfg = config_from_args(args)
            _emit([run_experiment(cfg)], cfg, args.format)
        elif args.command == "sweep":
            cfg = config_from_args(args)
            if args.values is not None:
                values = args.values
            else:
                values = cfg.alphas if args.param == "alpha" else cfg.betas
            _emit(sweep(cfg, args.param, values), cfg, args.format)
    except (FileNotFoundError, ValueError, KeyError, OSError) as exc:
        print(f"fairac: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
