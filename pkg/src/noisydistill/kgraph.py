"""Knowledge-graph triples and the row-stochastic label relation matrix.

A triple ``(u, v, r)`` reads "u is the r of v", e.g. ``("Mammal", "Rabbit",
"class")``. Two entities are siblings when they share a parent ``u`` under the
same relation type ``r``.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GraphParseError(ValueError):
    pass


@dataclass(frozen=True)
class KnowledgeGraph:
    triples: tuple[tuple[str, str, str], ...] = ()
    extra_entities: frozenset[str] = frozenset()
    _children: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        seen = dict.fromkeys(tuple(t) for t in self.triples)
        object.__setattr__(self, "triples", tuple(seen))
        children = defaultdict(set)
        for u, v, r in self.triples:
            children[(u, r)].add(v)
        object.__setattr__(self, "_children", dict(children))

    @property
    def entities(self) -> frozenset[str]:
        ents = set(self.extra_entities)
        for u, v, _ in self.triples:
            ents.add(u)
            ents.add(v)
        return frozenset(ents)

    def siblings(self, n: str) -> set[str]:
        if n not in self.entities:
            raise KeyError(f"unknown entity: {n!r}")
        out = set()
        for (u, r), kids in self._children.items():
            if n in kids:
                out |= kids
        out.discard(n)
        return out


def siblings(graph: KnowledgeGraph, n: str) -> set[str]:
    return graph.siblings(n)


def parse_triples(lines, source="<triples>") -> KnowledgeGraph:
    triples = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not all(p.strip() for p in parts):
            raise GraphParseError(f"{source}:{lineno}: expected 'u<TAB>v<TAB>r', got {line!r}")
        triples.append(tuple(p.strip() for p in parts))
    return KnowledgeGraph(tuple(triples))


def load_triples(path) -> KnowledgeGraph:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return parse_triples(fh, source=str(path))


def save_triples(graph: KnowledgeGraph, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for u, v, r in graph.triples:
            fh.write(f"{u}\t{v}\t{r}\n")


def load_label_order(path) -> list[str]:
    with Path(path).open(encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]


@dataclass(frozen=True)
class RelationMatrix:
    labels: tuple[str, ...]
    g: np.ndarray
    beta: float = 0.4

    @property
    def L(self) -> int:
        return len(self.labels)

    @classmethod
    def identity(cls, labels) -> "RelationMatrix":
        labels = tuple(labels)
        return cls(labels, np.eye(len(labels)), 0.0)


def build_relation_matrix(graph: KnowledgeGraph, labels, beta: float = 0.4,
                          transpose: bool = False) -> RelationMatrix:
    """Self weight 1, weight beta/|N(n)| at (m, n) for each sibling m of n,
    then every row divided by its sum.

    Only label entities take part in the matrix; ``|N(n)|`` counts the
    siblings of ``n`` that are labels. ``transpose`` swaps the sibling weights
    to (n, m) before normalising, for sensitivity checks on the index
    convention.
    """
    labels = tuple(labels)
    L = len(labels)
    if L == 0:
        raise ValueError("relation matrix needs at least one label")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    index = {name: i for i, name in enumerate(labels)}
    if len(index) != L:
        raise ValueError("label list contains duplicates")
    known = graph.entities
    raw = np.eye(L)
    for n_name, n in index.items():
        if n_name not in known:
            continue
        nbrs = [index[m] for m in graph.siblings(n_name) if m in index]
        if not nbrs:
            continue
        w = beta / len(nbrs)
        for m in nbrs:
            if transpose:
                raw[n, m] += w
            else:
                raw[m, n] += w
    g = raw / raw.sum(axis=1, keepdims=True)
    return RelationMatrix(labels, g, float(beta))
