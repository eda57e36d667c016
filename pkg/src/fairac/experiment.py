"""Experiment protocol: training, periodic downstream evaluation, threshold-gated
model selection, sweeps and result tables."""

from __future__ import annotations

import copy
import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .datasets import apply_missing, load_dataset, load_dataset_spec, read_kv_config
from .deepwalk import cached_deepwalk
from .downstream import GCN_EPOCHS, GCNTrainer, normalize_adjacency, predict
from .graph import UNLABELED, Graph, make_split
from .metrics import EvalReport, build_similarity, evaluate
from .model import FairACConfig, FairACModel, FairACTrainer, produce_embeddings

log = logging.getLogger(__name__)

METHODS = ("gcn", "fairac", "base_ac")
DEFAULT_SEEDS = (40, 41, 42)
DEFAULT_ALPHAS = (0.1, 0.3, 0.5, 0.8)
DEFAULT_BETAS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

# (EvalReport field, table header, scale)
TABLE_COLUMNS = (
    ("acc", "Acc", 100.0),
    ("auc", "AUC", 100.0),
    ("dsp", "ΔSP", 100.0),
    ("deo", "ΔEO", 100.0),
    ("dsp_plus_deo", "ΔSP+ΔEO", 100.0),
    ("consistency", "Consistency", 1.0),
)


@dataclass
class ExperimentConfig:
    dataset: str = "nba"
    method: str = "fairac"
    fairac: FairACConfig = field(default_factory=FairACConfig)
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    gcn_epochs: int = GCN_EPOCHS
    alphas: list[float] = field(default_factory=lambda: list(DEFAULT_ALPHAS))
    betas: list[float] = field(default_factory=lambda: list(DEFAULT_BETAS))
    output_dir: str = "results"
    data_root: str | None = None
    cache_dir: str | None = ".cache/deepwalk"
    max_nodes: int | None = None
    similarity_k: int = 10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.gcn_epochs < 0:
            raise ValueError("gcn_epochs must be >= 0")


@dataclass
class SeedResult:
    seed: int
    report: EvalReport
    selected_epoch: int
    qualified: bool
    evaluations: list[tuple[int, EvalReport]]
    n_unreachable: int = 0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "report": self.report.to_dict(),
            "selected_epoch": self.selected_epoch,
            "qualified": self.qualified,
            "evaluations": [{"epoch": e, "report": r.to_dict()} for e, r in self.evaluations],
            "n_unreachable": self.n_unreachable,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SeedResult:
        return cls(
            seed=d["seed"],
            report=EvalReport.from_dict(d["report"]),
            selected_epoch=d["selected_epoch"],
            qualified=d["qualified"],
            evaluations=[(e["epoch"], EvalReport.from_dict(e["report"])) for e in d["evaluations"]],
            n_unreachable=d.get("n_unreachable", 0),
        )


@dataclass
class ResultRecord:
    dataset: str
    method: str
    alpha: float
    beta: float
    per_seed: list[SeedResult] = field(default_factory=list)
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)
    no_qualified_model: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "per_seed"}
        d["per_seed"] = [s.to_dict() for s in self.per_seed]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ResultRecord:
        d = dict(d)
        d["per_seed"] = [SeedResult.from_dict(s) for s in d["per_seed"]]
        return cls(**d)

    def aggregate(self) -> None:
        """Mean and sample standard deviation (n-1) across seeds."""
        self.no_qualified_model = any(not s.qualified for s in self.per_seed)
        self.mean, self.std = {}, {}
        if not self.per_seed:
            return
        for f in fields(EvalReport):
            v = np.array([getattr(s.report, f.name) for s in self.per_seed], dtype=np.float64)
            self.mean[f.name] = float(v.mean())
            self.std[f.name] = float(v.std(ddof=1)) if len(v) > 1 else 0.0


def select_best(
    evals: Sequence[EvalReport], acc_threshold: float, auc_threshold: float
) -> int | None:
    """Index of the fairest evaluation passing both thresholds, or None.

    Fairness is ΔSP+ΔEO; ties go to the earliest evaluation.
    """
    if not evals:
        raise ValueError("no evaluations to select from")
    best = None
    for i, r in enumerate(evals):
        if r.acc >= acc_threshold and r.auc >= auc_threshold:
            if best is None or r.dsp_plus_deo < evals[best].dsp_plus_deo:
                best = i
    return best


def _best_accuracy(evals: Sequence[EvalReport]) -> int:
    return int(np.argmax([r.acc for r in evals]))


@dataclass
class _Context:
    graph: Graph
    split: object
    adj: object
    test: np.ndarray
    similarity: object


def _prepare(g: Graph, k: int) -> _Context:
    split = make_split(g.n_nodes)
    test = split.test[g.labels[split.test] != UNLABELED]
    if test.size == 0:
        raise ValueError("test split has no labeled node")
    # similarity on the original (unmasked) attributes of the test nodes
    sim = build_similarity(g.features[test], k)
    return _Context(g, split, normalize_adjacency(g), test, sim)


def _evaluate_model(ctx: _Context, model, x: np.ndarray, g: Graph) -> EvalReport:
    scores, preds = predict(model, x, ctx.adj, ctx.test)
    t = ctx.test
    return evaluate(scores, preds, g.labels[t], g.sensitive[t], ctx.similarity)


def run_seed(ctx: _Context, cfg: ExperimentConfig, seed: int) -> SeedResult:
    fc = replace(cfg.fairac, seed=seed)
    if cfg.method == "base_ac":
        fc = replace(fc, beta=0.0, adversary=False)
    g = apply_missing(ctx.graph, fc.alpha, np.random.default_rng([seed, 100]))
    evals: list[tuple[int, EvalReport]] = []
    n_unreachable = 0

    if cfg.method == "gcn":
        trainer = GCNTrainer(g.features, ctx.adj, g.labels, ctx.split.gnn_train, seed=seed,
                             lr=fc.lr, weight_decay=fc.weight_decay, dropout=fc.dropout)
        for epoch in fc.eval_epochs():
            trainer.run(epoch - trainer.epoch)
            evals.append((epoch, _evaluate_model(ctx, trainer.model, g.features, g)))
    else:
        T = cached_deepwalk(ctx.graph, seed, cfg.cache_dir)
        model = FairACModel(g.n_features, seed=seed, hidden=fc.hidden)
        trainer = FairACTrainer(model, g, T, ctx.split, fc)

        def on_eval(epoch: int) -> None:
            nonlocal n_unreachable
            res = produce_embeddings(model, g, T)
            n_unreachable = res.n_unreachable
            gcn = GCNTrainer(res.embeddings, ctx.adj, g.labels, ctx.split.gnn_train,
                             seed=seed * 100003 + epoch, lr=fc.lr,
                             weight_decay=fc.weight_decay, dropout=fc.dropout)
            gcn.run(cfg.gcn_epochs)
            report = _evaluate_model(ctx, gcn.model, res.embeddings, g)
            log.info("seed %d epoch %d: %s", seed, epoch, report)
            evals.append((epoch, report))

        trainer.fit(on_eval)

    if not evals:
        raise ValueError("configuration produced no evaluation epochs")
    reports = [r for _, r in evals]
    idx = select_best(reports, fc.acc_threshold, fc.auc_threshold)
    qualified = idx is not None
    if idx is None:
        idx = _best_accuracy(reports)
        log.warning("seed %d: no evaluation passed the thresholds; reporting best accuracy", seed)
    return SeedResult(seed, reports[idx], evals[idx][0], qualified, evals, n_unreachable)


def run_on_graph(
    g: Graph, cfg: ExperimentConfig, dataset: str | None = None
) -> ResultRecord:
    ctx = _prepare(g, cfg.similarity_k)
    beta = 0.0 if cfg.method == "base_ac" else cfg.fairac.beta
    rec = ResultRecord(dataset or g.name, cfg.method, cfg.fairac.alpha, beta)
    for seed in cfg.seeds:
        rec.per_seed.append(run_seed(ctx, cfg, seed))
    rec.aggregate()
    return rec


def run_experiment(cfg: ExperimentConfig) -> ResultRecord:
    """Load the dataset and run every seed of ``cfg``."""
    spec = load_dataset_spec(cfg.dataset, cfg.data_root)
    g = load_dataset(spec, cfg.max_nodes)
    cfg = replace(
        cfg,
        fairac=replace(cfg.fairac, min_ac_train=spec.min_ac_train, min_sens_train=spec.min_sens_train),
    )
    return run_on_graph(g, cfg, spec.name)


def sweep(
    cfg: ExperimentConfig,
    parameter: str,
    values: Sequence[float],
    runner: Callable[[ExperimentConfig], ResultRecord] = run_experiment,
) -> list[ResultRecord]:
    """One run per value of ``alpha`` or ``beta``; failures become error records."""
    if parameter not in ("alpha", "beta"):
        raise ValueError(f"can only sweep alpha or beta, not {parameter!r}")
    out = []
    for v in values:
        run_cfg = copy.deepcopy(cfg)
        run_cfg.fairac = replace(run_cfg.fairac, **{parameter: float(v)})
        try:
            out.append(runner(run_cfg))
        except Exception as exc:  # noqa: BLE001 - the sweep records and continues
            log.error("%s=%s failed: %s", parameter, v, exc)
            beta = 0.0 if cfg.method == "base_ac" else run_cfg.fairac.beta
            out.append(ResultRecord(cfg.dataset, cfg.method, run_cfg.fairac.alpha, beta,
                                    error=f"{type(exc).__name__}: {exc}"))
    return out


# ---------------------------------------------------------------- output


def _cell(rec: ResultRecord, key: str, scale: float) -> str:
    if rec.error or key not in rec.mean:
        return "-"
    return f"{rec.mean[key] * scale:.2f} ± {rec.std[key] * scale:.2f}"


def table_rows(records: Sequence[ResultRecord]) -> tuple[list[str], list[list[str]]]:
    header = ["Dataset", "Method", "α", "β"] + [h for _, h, _ in TABLE_COLUMNS] + ["Note"]
    rows = []
    for r in records:
        note = r.error or ("no_qualified_model" if r.no_qualified_model else "")
        rows.append(
            [r.dataset, r.method, f"{r.alpha:g}", f"{r.beta:g}"]
            + [_cell(r, k, s) for k, _, s in TABLE_COLUMNS]
            + [note]
        )
    return header, rows


def emit_results(records: Sequence[ResultRecord], fmt: str, output_dir: str | Path) -> Path:
    """Write ``results.{json,csv,md}`` into ``output_dir`` and return its path."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out / "results.json"
        path.write_text(json.dumps([r.to_dict() for r in records], indent=2) + "\n")
    elif fmt == "csv":
        path = out / "results.csv"
        header, rows = table_rows(records)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    elif fmt in ("md", "markdown"):
        path = out / "results.md"
        header, rows = table_rows(records)
        arrows = {"Acc": " ↑", "AUC": " ↑", "ΔSP": " ↓", "ΔEO": " ↓", "ΔSP+ΔEO": " ↓", "Consistency": " ↑"}
        header = [h + arrows.get(h, "") for h in header]
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def load_results(path: str | Path) -> list[ResultRecord]:
    return [ResultRecord.from_dict(d) for d in json.loads(Path(path).read_text())]


# ---------------------------------------------------------------- config files


def _coerce(value: str, like):
    if isinstance(like, bool):
        v = value.strip().lower()
        if v not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {value!r}")
        return v in ("true", "1", "yes")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, list):
        kind = int if like and isinstance(like[0], int) else float
        return [kind(t) for t in value.replace(",", " ").split()]
    if value.strip().lower() == "none" and (like is None or isinstance(like, str)):
        return None
    if like is None:
        return int(value) if value.isdigit() else value
    return value


def apply_overrides(cfg: ExperimentConfig, overrides: dict[str, str]) -> ExperimentConfig:
    """Apply string-valued ``key = value`` settings to a config."""
    cfg = copy.deepcopy(cfg)
    fair_fields = {f.name for f in fields(FairACConfig)}
    exp_fields = {f.name for f in fields(ExperimentConfig)} - {"fairac"}
    fair_updates = {}
    for key, raw in overrides.items():
        if key in exp_fields:
            setattr(cfg, key, _coerce(raw, getattr(cfg, key)))
        elif key in fair_fields:
            fair_updates[key] = _coerce(raw, getattr(cfg.fairac, key))
        else:
            raise KeyError(f"unknown configuration key {key!r}")
    cfg.fairac = replace(cfg.fairac, **fair_updates)
    cfg.__post_init__()
    return cfg


def load_experiment_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return apply_overrides(base or ExperimentConfig(), read_kv_config(path))
