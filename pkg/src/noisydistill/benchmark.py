"""Method comparison on a dataset with a clean and a noisy training split.

Methods, in their canonical order (the index feeds the per-method seed):

    Baseline-Clean       trained on clean-train only; the teacher
    Baseline-Noisy       trained on the whole training pool with observed labels
    Baseline-Ensemble    geometric mean of the two baselines' probabilities
    Bootstrap            targets blended with the model's own previous epoch
    Label Smooth         targets blended with the uniform vector
    Finetune             Baseline-Clean weights trained further on noisy-train
    Distillation         targets blended with the teacher's soft labels
    Guided Distillation  as above, soft labels propagated through the label graph
    Upper Bound          trained on the whole pool with the true labels
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .datagen import TRAIN_SPLITS, Dataset, NoiseConfig, SyntheticSpec, dumps_records
from .kgraph import KnowledgeGraph, build_relation_matrix
from .labels import (ConfigurationError, PseudoLabelSpec, TargetProvider,
                     build_target_provider, guided_soft, lambda_heuristic, pseudo_distill)
from .metrics import mean_average_precision
from .model import MLPClassifier, TrainConfig, finetune, soft_predict, train

METHODS = (
    "Baseline-Clean",
    "Baseline-Noisy",
    "Baseline-Ensemble",
    "Bootstrap",
    "Label Smooth",
    "Finetune",
    "Distillation",
    "Guided Distillation",
    "Upper Bound",
)
CSV_COLUMNS = ("method", "lambda", "T", "dev_map", "test_map", "seed")


def benchmark_spec(seed: int = 0) -> SyntheticSpec:
    """The default desk-scale benchmark: 16 labels in 8 sibling pairs, 1:4
    clean:noisy, 40% sibling-directed flips and 10% background records."""
    return SyntheticSpec(L=16, d=16, n_parents=8, labels_per_sample=(1, 2), samples=4000,
                         child_spread=0.5, noise=NoiseConfig(0.4, 1.0, 0.1, seed),
                         clean_fraction=0.2, seed=seed)


@dataclass(frozen=True)
class BenchmarkConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden: tuple[int, ...] = (64,)
    lam: float | str = "auto"
    temperature: float = 1.0
    beta: float = 0.4
    lambda_grid: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9)
    seed: int = 0

    def method_seed(self, method: str) -> int:
        return self.seed ^ METHODS.index(method)

    def train_cfg(self, method: str) -> TrainConfig:
        return replace(self.train, seed=self.method_seed(method))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["lambda_grid"] = list(self.lambda_grid)
        return d


@dataclass
class ExperimentReport:
    rows: list[dict]
    metadata: dict
    models: dict = field(default_factory=dict, repr=False, compare=False)

    def row(self, method: str) -> dict:
        for r in self.rows:
            if r["method"] == method:
                return r
        raise KeyError(method)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "metadata": self.metadata}

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def to_csv(self, path) -> None:
        write_rows_csv(self.rows, path)


def write_rows_csv(rows, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow(["" if r[c] is None else r[c] for c in CSV_COLUMNS])


def dataset_hash(ds: Dataset) -> str:
    h = hashlib.sha256()
    for line in dumps_records(ds):
        h.update(line.encode("utf-8") + b"\n")
    return h.hexdigest()


def config_hash(cfg: BenchmarkConfig, methods) -> str:
    doc = {"config": cfg.to_dict(), "methods": list(methods)}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


def timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _scores(model, ds, split_name, T=1.0):
    rows = ds.rows(split_name)
    return soft_predict(model, ds.x[rows], T)


def _maps(scores_dev, scores_test, ds):
    return (mean_average_precision(scores_dev, ds.y[ds.rows("dev")]),
            mean_average_precision(scores_test, ds.y[ds.rows("test")]))


class _Runner:
    """Trains each method once, caching the shared baselines."""

    def __init__(self, ds: Dataset, graph: KnowledgeGraph | None, cfg: BenchmarkConfig):
        self.ds, self.graph, self.cfg = ds, graph, cfg
        self.arch = MLPClassifier.initialize((ds.d, *cfg.hidden, ds.L), 0)
        self.models = {}
        self.dev_maps = {}

    def fit(self, method, targets, splits=TRAIN_SPLITS, init=None):
        cfg = self.cfg.train_cfg(method)
        if init is None:
            return train(self.arch, self.ds, targets, cfg, splits=splits)
        return finetune(init, self.ds, targets, cfg, splits=splits)

    def baseline(self, method):
        if method not in self.models:
            splits = ("clean-train",) if method == "Baseline-Clean" else TRAIN_SPLITS
            model, hist = self.fit(method, TargetProvider(self.ds.y.astype(np.float64)), splits)
            self.models[method] = model
            self.dev_maps[method] = hist.best_dev_map
        return self.models[method]

    def auto_lambda(self):
        if self.cfg.lam != "auto":
            return float(self.cfg.lam)
        self.baseline("Baseline-Clean")
        self.baseline("Baseline-Noisy")
        return lambda_heuristic(self.dev_maps["Baseline-Clean"], self.dev_maps["Baseline-Noisy"])

    def relation_matrix(self):
        if self.graph is None:
            raise ConfigurationError("Guided Distillation needs a knowledge graph")
        return build_relation_matrix(self.graph, self.ds.label_names, self.cfg.beta)

    def distill(self, method, lam, T):
        teacher = self.baseline("Baseline-Clean")
        if method == "Guided Distillation":
            spec = PseudoLabelSpec("guided-distill", lam, T, self.relation_matrix())
        else:
            spec = PseudoLabelSpec("distill", lam, T)
        model, _ = self.fit(method, build_target_provider(spec, self.ds, teacher))
        return model

    def grid_search(self, method, strategy):
        best = None
        for lam in self.cfg.lambda_grid:
            provider = build_target_provider(PseudoLabelSpec(strategy, lam), self.ds)
            model, hist = self.fit(method, provider)
            if best is None or hist.best_dev_map > best[2]:
                best = (lam, model, hist.best_dev_map)
        return best[0], best[1]

    def run(self, method) -> dict:
        ds, T = self.ds, self.cfg.temperature
        lam = temp = None
        if method in ("Baseline-Clean", "Baseline-Noisy"):
            model = self.baseline(method)
        elif method == "Baseline-Ensemble":
            pc, pn = self.baseline("Baseline-Clean"), self.baseline("Baseline-Noisy")
            dev = np.sqrt(_scores(pc, ds, "dev") * _scores(pn, ds, "dev"))
            test = np.sqrt(_scores(pc, ds, "test") * _scores(pn, ds, "test"))
            dev_map, test_map = _maps(dev, test, ds)
            return self._row(method, None, None, dev_map, test_map)
        elif method == "Bootstrap":
            lam, model = self.grid_search(method, "bootstrap")
        elif method == "Label Smooth":
            lam, model = self.grid_search(method, "smooth")
        elif method == "Finetune":
            model, _ = self.fit(method, TargetProvider(ds.y.astype(np.float64)),
                                splits=("noisy-train",), init=self.baseline("Baseline-Clean"))
        elif method in ("Distillation", "Guided Distillation"):
            if method == "Guided Distillation" and self.graph is None:
                raise ConfigurationError("Guided Distillation needs a knowledge graph")
            lam, temp = self.auto_lambda(), T
            model = self.distill(method, lam, T)
        elif method == "Upper Bound":
            if ds.y_true is None:
                raise ConfigurationError("Upper Bound needs y_true on every training record")
            model, _ = self.fit(method, build_target_provider(PseudoLabelSpec("clean-truth"), ds))
        else:
            raise ConfigurationError(f"unknown method {method!r}")
        self.models[method] = model
        dev_map, test_map = _maps(_scores(model, ds, "dev"), _scores(model, ds, "test"), ds)
        return self._row(method, lam, temp, dev_map, test_map)

    def _row(self, method, lam, T, dev_map, test_map):
        return {"method": method, "lambda": lam, "T": T, "dev_map": dev_map,
                "test_map": test_map, "seed": self.cfg.seed}


def _check_methods(methods, ds, graph):
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigurationError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
    if len(set(methods)) != len(methods):
        raise ConfigurationError("methods must not repeat")
    if "Upper Bound" in methods and ds.y_true is None:
        raise ConfigurationError("Upper Bound needs y_true on every training record")
    if "Guided Distillation" in methods and graph is None:
        raise ConfigurationError("Guided Distillation needs a knowledge graph")


def run_benchmark(dataset: Dataset, graph: KnowledgeGraph | None, methods=METHODS,
                  cfg: BenchmarkConfig = BenchmarkConfig(), stamp: str | None = None) -> ExperimentReport:
    """Train and evaluate every requested method; rows follow ``methods``.

    Trained models are kept on ``report.models`` (not serialised).
    """
    methods = list(methods)
    _check_methods(methods, dataset, graph)
    runner = _Runner(dataset, graph, cfg)
    rows = [runner.run(m) for m in methods]
    meta = {
        "dataset_hash": dataset_hash(dataset),
        "config_hash": config_hash(cfg, methods),
        "timestamp": stamp if stamp is not None else timestamp(),
    }
    if "Baseline-Clean" in runner.dev_maps and "Baseline-Noisy" in runner.dev_maps:
        meta["lambda_auto"] = lambda_heuristic(runner.dev_maps["Baseline-Clean"],
                                               runner.dev_maps["Baseline-Noisy"])
    return ExperimentReport(rows, meta, dict(runner.models))


def temperature_sweep(dataset: Dataset, graph: KnowledgeGraph | None, T_values=(1, 2, 5, 10),
                      cfg: BenchmarkConfig = BenchmarkConfig()) -> list[tuple[float, float]]:
    """Distillation test mAP per temperature; the teacher, lambda and seeds
    are shared across temperatures. Duplicate temperatures are dropped."""
    temps = list(dict.fromkeys(float(t) for t in T_values))
    if not temps or min(temps) <= 0:
        raise ValueError("temperatures must be positive and non-empty")
    runner = _Runner(dataset, graph, cfg)
    lam = runner.auto_lambda()
    out = []
    for T in temps:
        model = runner.distill("Distillation", lam, T)
        out.append((T, mean_average_precision(_scores(model, dataset, "test"),
                                              dataset.y[dataset.rows("test")])))
    return out


def aggregate(rows) -> list[dict]:
    """Median dev/test mAP per method over seeds, in first-seen method order."""
    by_method = {}
    for r in rows:
        by_method.setdefault(r["method"], []).append(r)
    out = []
    for method, rs in by_method.items():
        lams = [r["lambda"] for r in rs if r["lambda"] is not None]
        Ts = [r["T"] for r in rs if r["T"] is not None]
        out.append({
            "method": method,
            "lambda": float(np.median(lams)) if lams else None,
            "T": float(np.median(Ts)) if Ts else None,
            "dev_map": float(np.median([r["dev_map"] for r in rs])),
            "test_map": float(np.median([r["test_map"] for r in rs])),
            "seed": "median",
        })
    return out


# -- pseudo-label ranking ------------------------------------------------------

@dataclass(frozen=True)
class RankedRecord:
    rank: int
    id: str
    pseudo: float
    true: int | None
    observed: int


def _ranked(ids, values, truth, observed):
    order = sorted(range(len(ids)), key=lambda i: (-values[i], ids[i]))
    return [RankedRecord(k + 1, ids[i], float(values[i]),
                         None if truth is None else int(truth[i]), int(observed[i]))
            for k, i in enumerate(order)]


def rank_by_pseudo(dataset: Dataset, class_index: int, lam: float, aux_model: MLPClassifier,
                   T: float = 1.0, relation_matrix=None, splits=TRAIN_SPLITS) -> dict:
    """Rank the observed positives of one class by their pseudo-label value.

    Returns ``{"distill": [...]}`` plus ``"guided"`` when a relation matrix is
    given; both list the same records. Ties go to the smaller id.
    """
    if not 0 <= class_index < dataset.L:
        raise IndexError(f"class index {class_index} outside [0, {dataset.L})")
    rows = dataset.rows(splits)
    rows = rows[dataset.y[rows, class_index] == 1]
    if rows.size == 0:
        raise ValueError(f"class {dataset.label_names[class_index]!r} has no observed positives")
    y = dataset.y[rows].astype(np.float64)
    s = soft_predict(aux_model, dataset.x[rows], T)
    ids = [dataset.ids[i] for i in rows]
    truth = None if dataset.y_true is None else dataset.y_true[rows, class_index]
    observed = dataset.y[rows, class_index]
    out = {"distill": _ranked(ids, pseudo_distill(y, s, lam)[:, class_index], truth, observed)}
    if relation_matrix is not None:
        guided = pseudo_distill(y, guided_soft(relation_matrix, s), lam)[:, class_index]
        out["guided"] = _ranked(ids, guided, truth, observed)
    return out


def mean_ranks(ranking) -> tuple[float, float]:
    """Mean rank of true positives and of false positives (NaN if absent)."""
    tp = [r.rank for r in ranking if r.true == 1]
    fp = [r.rank for r in ranking if r.true == 0]
    return (float(np.mean(tp)) if tp else float("nan"),
            float(np.mean(fp)) if fp else float("nan"))


def write_ranking_csv(ranking, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "id", "pseudo", "true", "observed"])
        for r in ranking:
            w.writerow([r.rank, r.id, repr(r.pseudo), "" if r.true is None else r.true, r.observed])
