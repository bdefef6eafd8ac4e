"""Training targets: noisy labels, distillation pseudo-labels (plain and
graph-guided), label smoothing and bootstrapping.

Because the cross entropy is linear in its target, a two-term loss
``lam * l(y, f) + (1 - lam) * l(s, f)`` equals ``l(lam * y + (1 - lam) * s, f)``,
so every method here reduces to "train on a different target matrix".
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import Dataset
from .kgraph import RelationMatrix
from .model import soft_predict
from .numerics import DimensionError

STRATEGIES = ("noisy", "distill", "guided-distill", "smooth", "bootstrap", "clean-truth")


class ConfigurationError(ValueError):
    pass


def _check_lambda(lam):
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")


def pseudo_distill(y, s, lam: float) -> np.ndarray:
    _check_lambda(lam)
    y = np.asarray(y, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if y.shape != s.shape:
        raise DimensionError(f"label shape {y.shape} != soft label shape {s.shape}")
    return lam * y + (1.0 - lam) * s


def pseudo_smooth(y, lam: float) -> np.ndarray:
    _check_lambda(lam)
    y = np.asarray(y, dtype=np.float64)
    L = y.shape[-1] if y.ndim else 0
    if L == 0:
        raise ValueError("label vector is empty")
    return lam * y + (1.0 - lam) / L


def pseudo_bootstrap(y, s_prev, lam: float) -> np.ndarray:
    """Blend with the model's own previous-epoch prediction."""
    return pseudo_distill(y, s_prev, lam)


def guided_soft(G, s) -> np.ndarray:
    """Propagate soft labels through the relation matrix: ``G @ s`` (also
    row-wise for an n x L batch)."""
    g = G.g if isinstance(G, RelationMatrix) else np.asarray(G, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[1] != s.shape[-1]:
        raise DimensionError(f"relation matrix {g.shape} incompatible with soft labels {s.shape}")
    return s @ g.T if s.ndim == 2 else g @ s


def lambda_heuristic(map_clean: float, map_noisy: float) -> float:
    """Trust in the noisy labels from the dev mAPs of the clean-trained and
    the noisy-trained baselines: ``map_clean / (map_noisy + map_clean)``."""
    if map_clean < 0 or map_noisy < 0:
        raise ValueError("mAP values must be non-negative")
    if map_clean + map_noisy <= 0:
        raise ValueError("lambda is undefined when both mAPs are zero")
    return map_clean / (map_noisy + map_clean)


@dataclass(frozen=True)
class PseudoLabelSpec:
    strategy: str = "noisy"
    lam: float = 1.0
    temperature: float = 1.0
    relation_matrix: RelationMatrix | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        _check_lambda(self.lam)
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.strategy == "guided-distill" and self.relation_matrix is None:
            raise ConfigurationError("guided-distill needs a relation matrix")


class TargetProvider:
    """Fixed n x L target matrix aligned with a dataset's rows."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise DimensionError("target matrix must be n x L")
        if np.any(self.matrix < 0) or np.any(self.matrix > 1):
            raise ValueError("targets must lie in [0, 1]")

    @property
    def L(self) -> int:
        return self.matrix.shape[1]

    def targets(self, rows) -> np.ndarray:
        return self.matrix[rows]


class BootstrapProvider(TargetProvider):
    """Targets ``lam * y + (1 - lam) * s'`` where ``s'`` is the trained model's
    own prediction, refreshed at every epoch boundary by the training loop."""

    def __init__(self, dataset: Dataset, lam: float, temperature: float = 1.0):
        _check_lambda(lam)
        self.dataset = dataset
        self.lam = lam
        self.temperature = temperature
        self.epochs_seen = 0
        super().__init__(dataset.y.astype(np.float64))

    def refresh(self, model) -> None:
        s_prev = soft_predict(model, self.dataset.x, self.temperature)
        self.matrix = pseudo_bootstrap(self.dataset.y, s_prev, self.lam)
        self.epochs_seen += 1


def soft_labels(aux_model, dataset: Dataset, temperature: float = 1.0) -> np.ndarray:
    return soft_predict(aux_model, dataset.x, temperature)


def build_target_provider(spec: PseudoLabelSpec, dataset: Dataset, aux_model=None) -> TargetProvider:
    """Targets for every record of ``dataset``, clean and noisy alike.

    Auxiliary soft labels are computed once, up front; the auxiliary model
    stays frozen.
    """
    y = dataset.y.astype(np.float64)
    if spec.strategy == "noisy":
        return TargetProvider(y)
    if spec.strategy == "clean-truth":
        if dataset.y_true is None:
            raise ConfigurationError("clean-truth targets need y_true on every record")
        return TargetProvider(dataset.y_true.astype(np.float64))
    if spec.strategy == "smooth":
        return TargetProvider(pseudo_smooth(y, spec.lam))
    if spec.strategy == "bootstrap":
        return BootstrapProvider(dataset, spec.lam, spec.temperature)

    if aux_model is None:
        raise ConfigurationError(f"strategy {spec.strategy!r} needs an auxiliary model")
    s = soft_labels(aux_model, dataset, spec.temperature)
    if spec.strategy == "guided-distill":
        if spec.relation_matrix is None:
            raise ConfigurationError("guided-distill needs a relation matrix")
        if spec.relation_matrix.L != dataset.L:
            raise DimensionError("relation matrix size differs from the label count")
        s = guided_soft(spec.relation_matrix, s)
    return TargetProvider(pseudo_distill(y, s, spec.lam))
