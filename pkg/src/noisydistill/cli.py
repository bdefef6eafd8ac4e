"""``noisy-distill`` command line.

Every subcommand reads an optional JSON config; each config key is also a
``--flag`` (flags win). ``NOISY_DISTILL_SEED`` overrides ``seed`` when set.
Exit codes: 0 success, 1 verification failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import benchmark as bm
from . import datagen, kgraph, risk
from .labels import (ConfigurationError, PseudoLabelSpec, STRATEGIES, TargetProvider,
                     build_target_provider, lambda_heuristic)
from .model import MLPClassifier, TrainConfig, evaluate_map, soft_predict, train

SEED_ENV = "NOISY_DISTILL_SEED"


class ConfigError(Exception):
    pass


class VerificationFailure(Exception):
    pass


def _bool(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("1", "true", "yes", "on"):
        return True
    if isinstance(v, str) and v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _json(v):
    return json.loads(v) if isinstance(v, str) else v


def _lambda(v):
    if v == "auto":
        return v
    v = float(v)
    if not 0.0 <= v <= 1.0:
        raise ValueError("lambda must be 'auto' or lie in [0, 1]")
    return v


def _int(v):
    if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
        raise ValueError(f"not an integer: {v!r}")
    return int(v)


def _float(v):
    if isinstance(v, bool):
        raise ValueError(f"not a number: {v!r}")
    return float(v)


def _opt_str(v):
    return None if v in (None, "") else str(v)


@dataclass(frozen=True)
class Key:
    name: str
    default: object
    conv: object
    help: str = ""


TRAIN_KEYS = [
    Key("hidden", [64], _json, "hidden layer widths (JSON list)"),
    Key("epochs", 250, _int, "training epochs"),
    Key("initial_lr", 0.001, _float, "initial Adam learning rate"),
    Key("lr_decay", 0.9, _float, "learning-rate multiplier"),
    Key("decay_every", 5, _int, "epochs between learning-rate decays"),
    Key("batch_size", 64, _int, "mini-batch size"),
    Key("early_stop", True, _bool, "return the best-dev-mAP checkpoint"),
]
SEED_KEY = Key("seed", 0, _int, "global seed (env NOISY_DISTILL_SEED overrides)")

SPEC_DEFAULTS = datagen.SyntheticSpec()
NOISE_DEFAULTS = datagen.NoiseConfig()

COMMANDS = {
    "gen-data": [
        Key("output", "data/dataset.jsonl", str, "dataset JSONL path"),
        Key("graph_output", "data/graph.tsv", str, "knowledge-graph TSV path"),
        Key("L", SPEC_DEFAULTS.L, _int, "label count"),
        Key("d", SPEC_DEFAULTS.d, _int, "feature dimension"),
        Key("n_parents", SPEC_DEFAULTS.n_parents, _int, "parent classes in the hierarchy"),
        Key("labels_per_sample", list(SPEC_DEFAULTS.labels_per_sample), _json, "[min, max] true labels per record"),
        Key("samples", SPEC_DEFAULTS.samples, _int, "record count"),
        Key("parent_spread", SPEC_DEFAULTS.parent_spread, _float, "std of parent centres"),
        Key("child_spread", SPEC_DEFAULTS.child_spread, _float, "std of child centres around parents"),
        Key("cluster_spread", SPEC_DEFAULTS.cluster_spread, _float, "per-record feature noise std"),
        Key("background_spread", SPEC_DEFAULTS.background_spread, _float, "std of background features"),
        Key("flip_rate", NOISE_DEFAULTS.flip_rate, _float, "probability a positive is corrupted"),
        Key("sibling_bias", NOISE_DEFAULTS.sibling_bias, _float, "probability a replacement is a sibling"),
        Key("background_fraction", NOISE_DEFAULTS.background_fraction, _float, "background share of noisy-train/dev/test"),
        Key("noise_seed", NOISE_DEFAULTS.seed, _int, "extra seed for the corruption stream"),
        Key("split_ratios", list(SPEC_DEFAULTS.split_ratios), _json, "train:dev:test ratios"),
        Key("clean_fraction", SPEC_DEFAULTS.clean_fraction, _float, "clean share of train"),
        SEED_KEY,
    ],
    "train": [
        Key("dataset", None, str, "dataset JSONL path"),
        Key("output", "model.json", str, "model JSON output path"),
        Key("history", None, _opt_str, "optional training-history JSON path"),
        Key("strategy", "noisy", str, f"one of {', '.join(STRATEGIES)}"),
        Key("lambda", 1.0, _lambda, "label weight or 'auto'"),
        Key("temperature", 1.0, _float, "auxiliary soft-label temperature"),
        Key("aux_model", None, _opt_str, "auxiliary (clean-trained) model JSON"),
        Key("graph", None, _opt_str, "knowledge-graph TSV (guided-distill)"),
        Key("beta", 0.4, _float, "sibling weight of the relation matrix"),
        Key("splits", list(datagen.TRAIN_SPLITS), _json, "training split tags"),
        *TRAIN_KEYS,
        SEED_KEY,
    ],
    "benchmark": [
        Key("dataset", None, str, "dataset JSONL path"),
        Key("graph", None, _opt_str, "knowledge-graph TSV path"),
        Key("output_dir", "benchmark_out", str, "report directory"),
        Key("methods", list(bm.METHODS), _json, "method names (JSON list)"),
        Key("seeds", None, _json, "seeds to run (JSON list); default [seed]"),
        Key("lambda", "auto", _lambda, "distillation label weight or 'auto'"),
        Key("temperature", 1.0, _float, "distillation temperature"),
        Key("beta", 0.4, _float, "sibling weight of the relation matrix"),
        Key("lambda_grid", [0.5, 0.6, 0.7, 0.8, 0.9], _json, "dev grid for smoothing/bootstrap"),
        *TRAIN_KEYS,
        SEED_KEY,
    ],
    "verify-prop1": [
        Key("mode", "independent", str, "independent | correlated | trained-auxiliary"),
        Key("n", 10000, _int, "sample count (synthetic modes)"),
        Key("L", 10, _int, "label count (synthetic modes)"),
        Key("flip_rate", 0.3, _float, "independent per-element flip probability"),
        Key("sigma", 0.5, _float, "soft-label noise std (independent mode)"),
        Key("positive_rate", 0.2, _float, "truth positive rate (synthetic modes)"),
        Key("grid_points", 101, _int, "lambda grid size"),
        Key("n_se", 3.0, _float, "tolerance in standard errors"),
        Key("lambda_tol", 0.05, _float, "allowed |lambda_emp - lambda_pred|"),
        Key("min_rel_tol", 0.02, _float, "allowed relative gap of the minimum"),
        Key("dataset", None, _opt_str, "dataset JSONL (trained-auxiliary mode)"),
        Key("ensemble", 3, _int, "auxiliary models for bias/variance (trained-auxiliary)"),
        Key("output", "prop1_report.json", str, "report JSON path"),
        Key("curve_output", "prop1_curve.csv", str, "risk curve CSV path"),
        *TRAIN_KEYS,
        SEED_KEY,
    ],
    "temp-sweep": [
        Key("dataset", None, str, "dataset JSONL path"),
        Key("graph", None, _opt_str, "knowledge-graph TSV path"),
        Key("temperatures", [1, 2, 5, 10], _json, "temperatures (JSON list)"),
        Key("lambda", "auto", _lambda, "label weight or 'auto'"),
        Key("output", "temp_sweep.csv", str, "CSV output path"),
        *TRAIN_KEYS,
        SEED_KEY,
    ],
    "rank": [
        Key("dataset", None, str, "dataset JSONL path"),
        Key("aux_model", None, str, "auxiliary model JSON"),
        Key("graph", None, _opt_str, "knowledge-graph TSV path"),
        Key("class_name", None, str, "label to rank"),
        Key("lambda", 0.5, _float, "label weight"),
        Key("temperature", 1.0, _float, "soft-label temperature"),
        Key("beta", 0.4, _float, "sibling weight of the relation matrix"),
        Key("guided", False, _bool, "also emit the graph-guided ranking"),
        Key("output", "ranking.csv", str, "CSV path; the guided ranking adds a _guided suffix"),
    ],
}


def _flag(name):
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisy-distill", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, keys in COMMANDS.items():
        epilog = "config keys:\n" + "\n".join(
            f"  {k.name:20s} {k.help} (default: {json.dumps(k.default)})" for k in keys)
        p = sub.add_parser(cmd, epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("config", nargs="?", help="JSON config file")
        for k in keys:
            p.add_argument(_flag(k.name), dest=k.name, default=None, metavar="VALUE", help=k.help)
        if cmd == "benchmark":
            p.add_argument("--jobs", type=int, default=1, help="parallel seed workers")
    return parser


def resolve(cmd: str, config_path, flags: dict, environ=None) -> dict:
    """Defaults < config file < NOISY_DISTILL_SEED < command-line flags."""
    environ = os.environ if environ is None else environ
    keys = {k.name: k for k in COMMANDS[cmd]}
    raw = {}
    if config_path:
        try:
            raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        for name in raw:
            if name not in keys:
                raise ConfigError(f"unknown key: {name}")
    if "seed" in keys and environ.get(SEED_ENV):
        raw["seed"] = environ[SEED_ENV]
    raw.update({k: v for k, v in flags.items() if k in keys and v is not None})
    out = {}
    for name, key in keys.items():
        value = raw.get(name, key.default)
        if value is None:
            out[name] = None
            continue
        try:
            out[name] = key.conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for {name}: {value!r} ({exc})") from None
    return out


def _require(cfg, *names):
    for name in names:
        if cfg.get(name) is None:
            raise ConfigError(f"missing required key: {name}")


def _input(path, what):
    if path is None or not Path(path).is_file():
        raise ConfigError(f"{what} file not found: {path}")
    return Path(path)


def _train_cfg(cfg) -> TrainConfig:
    try:
        return TrainConfig(epochs=cfg["epochs"], initial_lr=cfg["initial_lr"], lr_decay=cfg["lr_decay"],
                           decay_every=cfg["decay_every"], batch_size=cfg["batch_size"],
                           seed=cfg.get("seed", 0), early_stop=cfg["early_stop"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _hidden(cfg) -> tuple[int, ...]:
    h = cfg["hidden"]
    if not isinstance(h, list) or not all(isinstance(v, int) and v > 0 for v in h):
        raise ConfigError("hidden must be a list of positive integers")
    return tuple(h)


def _mkparent(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)


# -- commands -------------------------------------------------------------------

def cmd_gen_data(cfg) -> int:
    try:
        spec = datagen.SyntheticSpec(
            L=cfg["L"], d=cfg["d"], n_parents=cfg["n_parents"],
            labels_per_sample=tuple(cfg["labels_per_sample"]), samples=cfg["samples"],
            parent_spread=cfg["parent_spread"], child_spread=cfg["child_spread"],
            cluster_spread=cfg["cluster_spread"], background_spread=cfg["background_spread"],
            noise=datagen.NoiseConfig(cfg["flip_rate"], cfg["sibling_bias"],
                                      cfg["background_fraction"], cfg["noise_seed"]),
            split_ratios=tuple(cfg["split_ratios"]), clean_fraction=cfg["clean_fraction"],
            seed=cfg["seed"])
        ds, graph = datagen.generate(spec)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    _mkparent(cfg["output"])
    _mkparent(cfg["graph_output"])
    datagen.save(ds, cfg["output"])
    kgraph.save_triples(graph, cfg["graph_output"])
    for tag in datagen.SPLITS:
        print(f"{tag:12s} {ds.rows(tag).size}")
    noisy = ds.rows("noisy-train")
    changed = np.any(ds.y[noisy] != ds.y_true[noisy], axis=1).mean()
    r = risk.risk(risk.LabeledCollection(ds.y_true[noisy], ds.y[noisy]))
    print(f"noisy-train records with corrupted labels: {changed:.4f}")
    print(f"noisy-train label risk vs truth: {r:.4f}")
    return 0


def _load_dataset(path):
    try:
        return datagen.load(_input(path, "dataset"))
    except datagen.DatasetParseError as exc:
        raise ConfigError(str(exc)) from None


def _load_graph(path):
    if path is None:
        return None
    try:
        return kgraph.load_triples(_input(path, "graph"))
    except kgraph.GraphParseError as exc:
        raise ConfigError(str(exc)) from None


def cmd_train(cfg) -> int:
    _require(cfg, "dataset")
    ds = _load_dataset(cfg["dataset"])
    tcfg = _train_cfg(cfg)
    arch = MLPClassifier.initialize((ds.d, *_hidden(cfg), ds.L), 0)
    aux = MLPClassifier.load(_input(cfg["aux_model"], "aux_model")) if cfg["aux_model"] else None
    lam = cfg["lambda"]
    if lam == "auto":
        if aux is None:
            raise ConfigError("lambda 'auto' needs aux_model (the clean-trained baseline)")
        _, noisy_hist = train(arch, ds, TargetProvider(ds.y), tcfg)
        lam = lambda_heuristic(evaluate_map(aux, ds, "dev"), noisy_hist.best_dev_map)
    rel = None
    if cfg["strategy"] == "guided-distill":
        graph = _load_graph(cfg["graph"])
        if graph is None:
            raise ConfigError("guided-distill needs graph")
        rel = kgraph.build_relation_matrix(graph, ds.label_names, cfg["beta"])
    try:
        spec = PseudoLabelSpec(cfg["strategy"], lam, cfg["temperature"], rel)
        provider = build_target_provider(spec, ds, aux)
        model, hist = train(arch, ds, provider, tcfg, splits=tuple(cfg["splits"]))
    except (ConfigurationError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    _mkparent(cfg["output"])
    model.save(cfg["output"])
    if cfg["history"]:
        _mkparent(cfg["history"])
        Path(cfg["history"]).write_text(json.dumps({
            "train_loss": hist.train_loss, "dev_map": hist.dev_map,
            "best_epoch": hist.best_epoch, "lambda": lam}, indent=2) + "\n", encoding="utf-8")
    print(f"best dev mAP {hist.best_dev_map:.4f} at epoch {hist.best_epoch}; lambda {lam}")
    return 0


def _bench_cfg(cfg, seed) -> bm.BenchmarkConfig:
    return bm.BenchmarkConfig(train=_train_cfg(cfg), hidden=_hidden(cfg), lam=cfg["lambda"],
                              temperature=cfg["temperature"], beta=cfg["beta"],
                              lambda_grid=tuple(cfg["lambda_grid"]), seed=seed)


def _bench_one(args):
    cfg, seed = args
    ds = _load_dataset(cfg["dataset"])
    graph = _load_graph(cfg["graph"])
    return bm.run_benchmark(ds, graph, cfg["methods"], _bench_cfg(cfg, seed)).to_dict()


def cmd_benchmark(cfg, jobs: int = 1) -> int:
    _require(cfg, "dataset")
    ds = _load_dataset(cfg["dataset"])
    graph = _load_graph(cfg["graph"])
    seeds = cfg["seeds"] if cfg["seeds"] is not None else [cfg["seed"]]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a non-empty list of integers")
    try:
        bm._check_methods(cfg["methods"], ds, graph)
    except ConfigurationError as exc:
        raise ConfigError(str(exc)) from None
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_bench_one, [(cfg, s) for s in seeds]))
    else:
        reports = [bm.run_benchmark(ds, graph, cfg["methods"], _bench_cfg(cfg, s)).to_dict()
                   for s in seeds]
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    all_rows = []
    for seed, rep in zip(seeds, reports):
        (out / f"report_seed{seed}.json").write_text(json.dumps(rep, indent=2) + "\n", encoding="utf-8")
        bm.write_rows_csv(rep["rows"], out / f"report_seed{seed}.csv")
        all_rows.extend(rep["rows"])
    bm.write_rows_csv(all_rows, out / "benchmark.csv")
    agg = bm.aggregate(all_rows)
    bm.write_rows_csv(agg, out / "aggregate.csv")
    (out / "aggregate.json").write_text(json.dumps(
        {"rows": agg, "seeds": seeds, "metadata": reports[0]["metadata"]}, indent=2) + "\n",
        encoding="utf-8")
    for r in agg:
        lam = "" if r["lambda"] is None else f"  lambda={r['lambda']:.4f}"
        print(f"{r['method']:20s} test mAP {r['test_map']:.4f}{lam}")
    return 0


def cmd_verify_prop1(cfg) -> int:
    mode = cfg["mode"]
    if mode not in ("independent", "correlated", "trained-auxiliary"):
        raise ConfigError(f"unknown mode {mode!r}")
    if cfg["grid_points"] < 2:
        raise ConfigError("grid_points must be >= 2")
    predictions = None
    if mode == "trained-auxiliary":
        truth, y, s, predictions = _trained_auxiliary(cfg)
    else:
        if cfg["n"] < 1 or cfg["L"] < 1:
            raise ConfigError("n and L must be positive")
        truth, y, s = risk.independent_corruption(cfg["n"], cfg["L"], cfg["flip_rate"], cfg["sigma"],
                                                  cfg["positive_rate"], cfg["seed"])
        if mode == "correlated":
            s = y.copy()
    report, curve = risk.verify_prop1(
        y, s, truth, risk.default_grid(cfg["grid_points"]), cfg["n_se"], cfg["lambda_tol"],
        cfg["min_rel_tol"], correlated=(mode == "correlated"), predictions=predictions)
    _mkparent(cfg["output"])
    _mkparent(cfg["curve_output"])
    report.to_json(cfg["output"])
    curve.to_csv(cfg["curve_output"])
    print(f"R_y={report.R_y:.6g} R_s={report.R_s:.6g} cross={report.cross_term:.4g}"
          f" lambda*={report.lambda_star_predicted:.4f} (grid {report.lambda_star_empirical:.4f})")
    for c in report.checks:
        print(f"{c.status:14s} {c.name}: {c.detail}")
    if not report.ok:
        failed = "; ".join(c.detail for c in report.checks if c.passed is False)
        raise VerificationFailure(failed)
    return 0


def _trained_auxiliary(cfg):
    """Soft labels from clean-trained models on held-out records; labels
    re-corrupted with the dataset's sibling noise at ``flip_rate``."""
    _require(cfg, "dataset")
    ds = _load_dataset(cfg["dataset"])
    if ds.y_true is None:
        raise ConfigError("trained-auxiliary mode needs y_true in the dataset")
    if cfg["ensemble"] < 2:
        raise ConfigError("ensemble must be >= 2")
    held = ds.rows(("dev", "test"))
    truth = ds.y_true[held].astype(np.float64)
    arch = MLPClassifier.initialize((ds.d, *_hidden(cfg), ds.L), 0)
    preds = []
    for k in range(cfg["ensemble"]):
        tcfg = _train_cfg({**cfg, "seed": cfg["seed"] + k})
        model, _ = train(arch, ds, TargetProvider(ds.y), tcfg, splits=("clean-train",))
        preds.append(soft_predict(model, ds.x[held]))
    # uniform (not sibling-directed) flips keep the label noise independent
    # of the auxiliary model's errors
    sibs = [np.empty(0, dtype=np.int64)] * ds.L
    noise = datagen.NoiseConfig(cfg["flip_rate"], 0.0, 0.0, cfg["seed"])
    rng = np.random.default_rng([cfg["seed"], 5])
    y = np.array([datagen.corrupt(t, noise, sibs, rng) for t in ds.y_true[held]], dtype=np.float64)
    return truth, y, preds[0], preds


def cmd_temp_sweep(cfg) -> int:
    _require(cfg, "dataset")
    ds = _load_dataset(cfg["dataset"])
    graph = _load_graph(cfg["graph"])
    temps = cfg["temperatures"]
    if not isinstance(temps, list) or not temps:
        raise ConfigError("temperatures must be a non-empty list")
    bcfg = bm.BenchmarkConfig(train=_train_cfg(cfg), hidden=_hidden(cfg), lam=cfg["lambda"],
                              seed=cfg["seed"])
    try:
        rows = bm.temperature_sweep(ds, graph, temps, bcfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _mkparent(cfg["output"])
    with Path(cfg["output"]).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("T,test_map\n")
        for T, m in rows:
            fh.write(f"{T!r},{m!r}\n")
    maps = [m for _, m in rows]
    for T, m in rows:
        print(f"T={T:g}  test mAP {m:.4f}")
    print(f"spread (max - min): {max(maps) - min(maps):.4f}")
    return 0


def cmd_rank(cfg) -> int:
    _require(cfg, "dataset", "aux_model", "class_name")
    ds = _load_dataset(cfg["dataset"])
    aux = MLPClassifier.load(_input(cfg["aux_model"], "aux_model"))
    if cfg["class_name"] not in ds.label_names:
        raise ConfigError(f"unknown class {cfg['class_name']!r}; valid: {', '.join(ds.label_names)}")
    rel = None
    if cfg["guided"]:
        graph = _load_graph(cfg["graph"])
        if graph is None:
            raise ConfigError("--guided needs a graph")
        rel = kgraph.build_relation_matrix(graph, ds.label_names, cfg["beta"])
    try:
        out = bm.rank_by_pseudo(ds, ds.label_names.index(cfg["class_name"]), cfg["lambda"], aux,
                                cfg["temperature"], rel)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    path = Path(cfg["output"])
    _mkparent(path)
    bm.write_ranking_csv(out["distill"], path)
    print(f"distill ranking: {path}")
    if "guided" in out:
        gpath = path.with_name(path.stem + "_guided" + path.suffix)
        bm.write_ranking_csv(out["guided"], gpath)
        print(f"guided ranking: {gpath}")
    for name, ranking in out.items():
        tp, fp = bm.mean_ranks(ranking)
        print(f"{name}: mean rank true positives {tp:.2f}, false positives {fp:.2f}")
    return 0


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "verify-prop1": cmd_verify_prop1,
    "temp-sweep": cmd_temp_sweep,
    "rank": cmd_rank,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k.name: getattr(args, k.name) for k in COMMANDS[args.command]}
    try:
        cfg = resolve(args.command, args.config, flags)
        if args.command == "benchmark":
            return cmd_benchmark(cfg, args.jobs)
        return HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VerificationFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
