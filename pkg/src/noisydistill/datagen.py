"""Synthetic multi-label data with hidden truth and structured label noise,
plus JSON-lines persistence.

Noise follows two observed failure modes of tag-derived labels: a positive
label replaced by a confusable sibling class, and "background" samples that
belong to no class but still carry a spurious tag.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kgraph import KnowledgeGraph

FORMAT = "noisy-distill-v1"
SPLITS = ("clean-train", "noisy-train", "dev", "test")
TRAIN_SPLITS = ("clean-train", "noisy-train")


class DataError(ValueError):
    pass


class DatasetParseError(ValueError):
    pass


@dataclass
class Dataset:
    """Column-oriented record store.

    ``y`` holds observed labels, ``y_true`` the hidden truth (``None`` for
    real data). Row ``i`` of every array belongs to record ``ids[i]``.
    """

    ids: list[str]
    x: np.ndarray
    y: np.ndarray
    split: np.ndarray
    label_names: list[str]
    y_true: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int8)
        self.split = np.asarray(self.split, dtype=object)
        if self.y_true is not None:
            self.y_true = np.asarray(self.y_true, dtype=np.int8)
        n, L = len(self.ids), len(self.label_names)
        if self.x.ndim != 2 or self.x.shape[0] != n:
            raise DataError("x must be n x d")
        if self.y.shape != (n, L):
            raise DataError(f"y must be {n} x {L}, got {self.y.shape}")
        if self.y_true is not None and self.y_true.shape != (n, L):
            raise DataError("y_true must match y in shape")
        if self.split.shape != (n,):
            raise DataError("one split tag per record")
        bad = set(self.split) - set(SPLITS)
        if bad:
            raise DataError(f"unknown split tags: {sorted(bad)}")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def L(self) -> int:
        return len(self.label_names)

    def rows(self, splits) -> np.ndarray:
        if isinstance(splits, str):
            splits = (splits,)
        unknown = set(splits) - set(SPLITS)
        if unknown:
            raise DataError(f"unknown split tags: {sorted(unknown)}")
        return np.flatnonzero(np.isin(self.split, list(splits)))

    def equals(self, other: "Dataset") -> bool:
        same_truth = (self.y_true is None and other.y_true is None) or (
            self.y_true is not None and other.y_true is not None
            and np.array_equal(self.y_true, other.y_true))
        return (self.ids == other.ids and self.label_names == other.label_names
                and np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)
                and list(self.split) == list(other.split) and same_truth)


@dataclass(frozen=True)
class NoiseConfig:
    flip_rate: float = 0.4
    sibling_bias: float = 0.8
    background_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("flip_rate", "sibling_bias", "background_fraction"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")


@dataclass(frozen=True)
class SyntheticSpec:
    L: int = 16
    d: int = 16
    n_parents: int = 4
    labels_per_sample: tuple[int, int] = (1, 3)
    samples: int = 3000
    parent_spread: float = 3.0
    child_spread: float = 1.5
    cluster_spread: float = 1.0
    background_spread: float = 3.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    split_ratios: tuple[float, float, float] = (6, 3, 1)
    clean_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.labels_per_sample
        if self.L < 2 or self.d < 1 or self.samples < 4:
            raise ValueError("need L >= 2, d >= 1 and at least 4 samples")
        if not 1 <= self.n_parents <= self.L:
            raise ValueError("n_parents must lie in [1, L]")
        if not 1 <= lo <= hi <= self.L:
            raise ValueError("labels_per_sample must satisfy 1 <= lo <= hi <= L")
        if len(self.split_ratios) != 3 or min(self.split_ratios) <= 0:
            raise ValueError("split_ratios must be three positive numbers")
        if not 0.0 < self.clean_fraction < 1.0:
            raise ValueError("clean_fraction must lie in (0, 1)")
        for name in ("parent_spread", "child_spread", "cluster_spread", "background_spread"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def hierarchy(L: int, n_parents: int) -> tuple[list[str], KnowledgeGraph]:
    """Label names and a two-level taxonomy: parents ``p<k>`` own children
    ``c<j>`` in round-robin blocks."""
    width = len(str(L - 1))
    labels = [f"c{j:0{width}d}" for j in range(L)]
    triples = tuple((f"p{j * n_parents // L}", labels[j], "class") for j in range(L))
    return labels, KnowledgeGraph(triples)


def sibling_table(graph: KnowledgeGraph, labels) -> list[np.ndarray]:
    index = {name: i for i, name in enumerate(labels)}
    known = graph.entities
    out = []
    for name in labels:
        sib = graph.siblings(name) if name in known else set()
        out.append(np.array(sorted(index[s] for s in sib if s in index), dtype=np.int64))
    return out


def corrupt(y_true, noise: NoiseConfig, sibs, rng: np.random.Generator) -> np.ndarray:
    """Corrupt one binary label vector.

    Each positive is dropped with ``flip_rate``; every drop adds a replacement
    positive, drawn from the dropped label's siblings with ``sibling_bias`` and
    otherwise uniformly from labels that are not true. ``sibs`` is the
    per-label sibling index table from :func:`sibling_table`.
    """
    y_true = np.asarray(y_true, dtype=np.int8)
    y = y_true.copy()
    negatives = np.flatnonzero(y_true == 0)
    if negatives.size == 0:
        return y
    for m in np.flatnonzero(y_true):
        if rng.random() >= noise.flip_rate:
            continue
        y[m] = 0
        cand = sibs[m]
        use_sibling = cand.size > 0 and rng.random() < noise.sibling_bias
        if use_sibling:
            free = cand[y_true[cand] == 0]
            pool = free if free.size else cand
        else:
            pool = negatives
        y[pool[rng.integers(pool.size)]] = 1
    return y


def split_sizes(n: int, ratios) -> tuple[int, int, int]:
    total = float(sum(ratios))
    n_dev = math.floor(n * ratios[1] / total + 1e-9)
    n_test = math.floor(n * ratios[2] / total + 1e-9)
    return n - n_dev - n_test, n_dev, n_test


def clean_count(n_train: int, clean_fraction: float) -> int:
    return math.floor(n_train * clean_fraction + 1e-9)


def split(n: int, ratios=(6, 3, 1), clean_fraction: float = 0.2, seed: int = 0) -> np.ndarray:
    """Split tags for ``n`` records: seeded shuffle, then contiguous
    train/dev/test blocks, the first ``clean_fraction`` of train being clean.

    Dev and test receive ``floor`` of their share; the remainder goes to train.
    """
    if len(ratios) != 3 or min(ratios) <= 0:
        raise ValueError("ratios must be three positive numbers")
    n_train, n_dev, n_test = split_sizes(n, ratios)
    n_clean = clean_count(n_train, clean_fraction)
    if n_dev < 1 or n_test < 1 or n_clean < 1 or n_train - n_clean < 1:
        raise DataError(f"{n} records are too few to fill every split")
    order = np.random.default_rng([seed, 7]).permutation(n)
    tags = np.empty(n, dtype=object)
    tags[order[:n_clean]] = "clean-train"
    tags[order[n_clean:n_train]] = "noisy-train"
    tags[order[n_train:n_train + n_dev]] = "dev"
    tags[order[n_train + n_dev:]] = "test"
    return tags


def generate(spec: SyntheticSpec) -> tuple[Dataset, KnowledgeGraph]:
    rng = np.random.default_rng([spec.seed, 1])
    noise_rng = np.random.default_rng([spec.seed, spec.noise.seed, 2])
    labels, graph = hierarchy(spec.L, spec.n_parents)
    parent_of = np.array([j * spec.n_parents // spec.L for j in range(spec.L)])

    parents = rng.normal(0.0, spec.parent_spread, size=(spec.n_parents, spec.d))
    centers = parents[parent_of] + rng.normal(0.0, spec.child_spread, size=(spec.L, spec.d))

    n = spec.samples
    lo, hi = spec.labels_per_sample
    y_true = np.zeros((n, spec.L), dtype=np.int8)
    x = np.empty((n, spec.d))
    for i in range(n):
        k = int(rng.integers(lo, hi + 1))
        chosen = rng.choice(spec.L, size=k, replace=False)
        y_true[i, chosen] = 1
        x[i] = centers[chosen].mean(axis=0)
    x += rng.normal(0.0, spec.cluster_spread, size=x.shape)

    tags = split(n, spec.split_ratios, spec.clean_fraction, spec.seed)
    y = y_true.copy()

    # background records: no true class, features from a wide unrelated cloud
    bg_rng = np.random.default_rng([spec.seed, 3])
    for tag in ("noisy-train", "dev", "test"):
        rows = np.flatnonzero(tags == tag)
        n_bg = math.floor(rows.size * spec.noise.background_fraction + 1e-9)
        if n_bg == 0:
            continue
        bg = np.sort(bg_rng.choice(rows, size=n_bg, replace=False))
        x[bg] = bg_rng.normal(0.0, spec.background_spread, size=(n_bg, spec.d))
        y_true[bg] = 0
        y[bg] = 0
        if tag == "noisy-train":
            y[bg, bg_rng.integers(spec.L, size=n_bg)] = 1

    sibs = sibling_table(graph, labels)
    for i in np.flatnonzero(tags == "noisy-train"):
        if y_true[i].any():
            y[i] = corrupt(y_true[i], spec.noise, sibs, noise_rng)

    width = len(str(n - 1))
    ids = [f"s{i:0{width}d}" for i in range(n)]
    return Dataset(ids, x, y, tags, labels, y_true), graph


# -- persistence -----------------------------------------------------------

def dumps_records(ds: Dataset) -> list[str]:
    header = {"format": FORMAT, "L": ds.L, "d": ds.d, "labels": list(ds.label_names)}
    lines = [json.dumps(header)]
    for i in range(ds.n):
        rec = {"id": ds.ids[i], "x": [float(v) for v in ds.x[i]], "y": [int(v) for v in ds.y[i]]}
        if ds.y_true is not None:
            rec["y_true"] = [int(v) for v in ds.y_true[i]]
        rec["split"] = str(ds.split[i])
        lines.append(json.dumps(rec))
    return lines


def save(ds: Dataset, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for line in dumps_records(ds):
            fh.write(line + "\n")


def _binary(values, L, what, where):
    if not isinstance(values, list) or len(values) != L:
        raise DatasetParseError(f"{where}: {what} must be a list of length {L}")
    if any(v not in (0, 1) or isinstance(v, bool) for v in values):
        raise DatasetParseError(f"{where}: {what} entries must be 0 or 1")
    return values


def load(path) -> Dataset:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = [ln for ln in fh]
    if not lines:
        raise DatasetParseError(f"{path}:1: missing header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"{path}:1: header is not JSON ({exc})") from None
    if header.get("format") != FORMAT:
        raise DatasetParseError(f"{path}:1: expected format {FORMAT!r}")
    L, d, labels = header.get("L"), header.get("d"), header.get("labels")
    if not isinstance(labels, list) or len(labels) != L or not isinstance(d, int):
        raise DatasetParseError(f"{path}:1: header fields L, d, labels are inconsistent")

    ids, xs, ys, trues, tags = [], [], [], [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DatasetParseError(f"{where}: invalid JSON ({exc})") from None
        missing = {"id", "x", "y", "split"} - set(rec)
        if missing:
            raise DatasetParseError(f"{where}: missing fields {sorted(missing)}")
        if not isinstance(rec["x"], list) or len(rec["x"]) != d:
            raise DatasetParseError(f"{where}: x must be a list of length {d}")
        if rec["split"] not in SPLITS:
            raise DatasetParseError(f"{where}: unknown split {rec['split']!r}")
        ids.append(str(rec["id"]))
        xs.append([float(v) for v in rec["x"]])
        ys.append(_binary(rec["y"], L, "y", where))
        if "y_true" in rec:
            trues.append(_binary(rec["y_true"], L, "y_true", where))
        tags.append(rec["split"])
    if trues and len(trues) != len(ids):
        raise DatasetParseError(f"{path}: y_true must be present on every record or on none")
    return Dataset(
        ids,
        np.array(xs, dtype=np.float64).reshape(len(ids), d),
        np.array(ys, dtype=np.int8).reshape(len(ids), L),
        np.array(tags, dtype=object),
        list(labels),
        np.array(trues, dtype=np.int8).reshape(len(ids), L) if trues else None,
    )
