"""Squared-error risk of candidate label vectors against the truth, and the
checks built on it: the risk curve of blended labels, the closed-form optimal
blend, the noise/prediction cross-term and a bias-variance split.

Risk is the mean over samples of ``||candidate - truth||^2``. For blends
``lam * y + (1 - lam) * s`` it expands exactly to

    lam^2 R_y + (1 - lam)^2 R_s + 2 lam (1 - lam) C,

with ``C`` the mean of ``(y - y*) . (s - y*)``; when the two error sources are
independent ``C`` vanishes in expectation and the optimum is
``lam* = R_s / (R_s + R_y)`` with risk ``R_y R_s / (R_s + R_y)``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .numerics import DimensionError


def default_grid(points: int = 101) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


@dataclass(frozen=True)
class LabeledCollection:
    truth: np.ndarray
    candidate: np.ndarray

    def __post_init__(self):
        truth = np.asarray(self.truth, dtype=np.float64)
        cand = np.asarray(self.candidate, dtype=np.float64)
        if truth.ndim == 1:
            truth, cand = truth[None, :], cand[None, :]
        if truth.shape != cand.shape:
            raise DimensionError(f"truth {truth.shape} and candidate {cand.shape} differ in shape")
        if not np.all((truth == 0) | (truth == 1)):
            raise ValueError("truth must be binary")
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "candidate", cand)

    @property
    def n(self) -> int:
        return self.truth.shape[0]


def _sq_dist(candidate, truth) -> np.ndarray:
    return np.sum((candidate - truth) ** 2, axis=1)


def per_sample_risk(coll: LabeledCollection) -> np.ndarray:
    return _sq_dist(coll.candidate, coll.truth)


def risk(coll: LabeledCollection) -> float:
    if coll.n == 0:
        raise ValueError("risk of an empty collection is undefined")
    return float(np.mean(per_sample_risk(coll)))


def _aligned(y, s, truth):
    y, s, truth = (np.asarray(a, dtype=np.float64) for a in (y, s, truth))
    if not (y.shape == s.shape == truth.shape) or y.ndim != 2:
        raise DimensionError(f"misaligned collections: {y.shape}, {s.shape}, {truth.shape}")
    if y.shape[0] == 0:
        raise ValueError("collections are empty")
    return y, s, truth


def optimal_lambda(R_y: float, R_s: float) -> tuple[float, float]:
    if R_y < 0 or R_s < 0:
        raise ValueError("risks must be non-negative")
    if R_y + R_s <= 0:
        raise ValueError("both risks are zero; every lambda is optimal")
    return R_s / (R_s + R_y), R_y * R_s / (R_s + R_y)


def smoothing_risk(R_y: float, R_u: float) -> tuple[float, float]:
    """Optimal blend with the constant uniform vector; same closed form with
    the uniform risk in place of the soft-label risk."""
    return optimal_lambda(R_y, R_u)


def uniform_risk(truth) -> float:
    truth = np.asarray(truth, dtype=np.float64)
    L = truth.shape[-1]
    return risk(LabeledCollection(truth, np.full_like(truth, 1.0 / L)))


def cross_term_samples(y, s, truth) -> np.ndarray:
    y, s, truth = _aligned(y, s, truth)
    return np.sum((y - truth) * (s - truth), axis=1)


def cross_term(y, s, truth) -> float:
    return float(np.mean(cross_term_samples(y, s, truth)))


def standard_error(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return float("inf")
    return float(np.std(values, ddof=1) / np.sqrt(values.size))


@dataclass
class RiskCurve:
    lambdas: np.ndarray
    risks: np.ndarray
    fit_coef: tuple[float, float]
    relative_residual: float

    def pairs(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.lambdas, self.risks)]

    @property
    def argmin(self) -> int:
        return int(np.argmin(self.risks))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "risk"])
            for lam, r in self.pairs():
                w.writerow([repr(lam), repr(r)])


def blend_risk_samples(y, s, truth, lam: float) -> np.ndarray:
    return _sq_dist(lam * y + (1.0 - lam) * s, truth)


def risk_curve(y, s, truth, lambda_grid=None) -> RiskCurve:
    """Empirical risk of ``lam * y + (1 - lam) * s`` on a grid of lambdas,
    plus a least-squares fit of ``a lam^2 + b (1 - lam)^2`` to it.

    ``relative_residual`` is ``||fit - curve|| / ||curve||``; it is zero
    exactly when the cross-term vanishes.
    """
    y, s, truth = _aligned(y, s, truth)
    grid = default_grid() if lambda_grid is None else np.asarray(lambda_grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    if np.any((grid < 0) | (grid > 1)):
        raise ValueError("lambda values must lie in [0, 1]")
    risks = np.array([np.mean(blend_risk_samples(y, s, truth, lam)) for lam in grid])
    basis = np.column_stack([grid ** 2, (1.0 - grid) ** 2])
    coef, *_ = np.linalg.lstsq(basis, risks, rcond=None)
    fitted = basis @ coef
    norm = np.linalg.norm(risks)
    resid = float(np.linalg.norm(fitted - risks) / norm) if norm > 0 else 0.0
    return RiskCurve(grid, risks, (float(coef[0]), float(coef[1])), resid)


def bias_variance(predictions, truth) -> tuple[float, float]:
    """Squared-loss split for an ensemble of ``M >= 2`` predictors.

    The main prediction is the per-element mean over models; bias is its
    risk, variance the mean squared distance of each model to it.
    """
    preds = [np.asarray(p, dtype=np.float64) for p in predictions]
    if len(preds) < 2:
        raise ValueError("bias/variance needs at least two predictors")
    truth = np.asarray(truth, dtype=np.float64)
    stack = np.stack(preds)
    if stack.shape[1:] != truth.shape:
        raise DimensionError("predictions are not aligned with the truth")
    # offsets from the first model keep identical ensembles exactly at zero variance
    main = stack[0] + (stack - stack[0]).mean(axis=0)
    bias = float(np.mean(_sq_dist(main, truth)))
    variance = float(np.mean([np.mean(_sq_dist(p, main)) for p in stack]))
    return bias, variance


# -- verification ------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool | None
    detail: str

    @property
    def status(self) -> str:
        return {True: "pass", False: "FAIL", None: "not applicable"}[self.passed]


@dataclass
class RiskReport:
    R_y: float
    R_s: float
    R_u: float
    cross_term: float
    cross_term_se: float
    lambda_grid: list[tuple[float, float]]
    lambda_star_predicted: float
    R_min_predicted: float
    lambda_star_empirical: float
    R_min_empirical: float
    fit_residual: float
    bias: float | None = None
    variance: float | None = None
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checks"] = [{"name": c.name, "status": c.status, "detail": c.detail} for c in self.checks]
        return d

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def verify_prop1(y, s, truth, lambda_grid=None, n_se: float = 3.0,
                 lambda_tol: float = 0.05, min_rel_tol: float = 0.02,
                 correlated: bool = False, predictions=None) -> tuple[RiskReport, RiskCurve]:
    """Measure every quantity of the blended-label analysis and run the
    tolerance checks.

    With ``correlated=True`` (soft labels derived from the noisy labels
    themselves) the strict-improvement checks are reported as not
    applicable.
    """
    y, s, truth = _aligned(y, s, truth)
    n = y.shape[0]
    ry_i = _sq_dist(y, truth)
    rs_i = _sq_dist(s, truth)
    R_y, R_s = float(np.mean(ry_i)), float(np.mean(rs_i))
    R_u = uniform_risk(truth)
    c_i = cross_term_samples(y, s, truth)
    C, C_se = float(np.mean(c_i)), standard_error(c_i)
    curve = risk_curve(y, s, truth, lambda_grid)
    k = curve.argmin
    lam_emp, r_emp = float(curve.lambdas[k]), float(curve.risks[k])
    if R_y + R_s > 0:
        lam_pred, r_pred = optimal_lambda(R_y, R_s)
    else:
        lam_pred, r_pred = 1.0, 0.0
    bias = variance = None
    if predictions is not None:
        bias, variance = bias_variance(predictions, truth)

    checks = []
    best_i = blend_risk_samples(y, s, truth, lam_emp)
    if correlated or R_y == 0 or R_s == 0:
        reason = "correlated" if correlated else "a zero-risk endpoint"
        for name in ("min_below_both", "argmin_near_predicted", "min_near_predicted"):
            checks.append(Check(name, None, f"not applicable ({reason})"))
    else:
        endpoint_i = ry_i if R_y <= R_s else rs_i
        diff = best_i - endpoint_i
        margin = n_se * standard_error(diff)
        checks.append(Check(
            "min_below_both", bool(np.mean(diff) < -margin),
            f"min_grid R = {r_emp:.6g} < min(R_y, R_s) = {min(R_y, R_s):.6g} - {margin:.3g}"))
        checks.append(Check(
            "argmin_near_predicted", bool(abs(lam_emp - lam_pred) <= lambda_tol),
            f"|{lam_emp:.4f} - {lam_pred:.4f}| <= {lambda_tol}"))
        rel = abs(r_emp - r_pred) / r_pred
        checks.append(Check(
            "min_near_predicted", bool(rel < min_rel_tol),
            f"|{r_emp:.6g} - {r_pred:.6g}| / {r_pred:.6g} = {rel:.4g} < {min_rel_tol}"))
    if correlated:
        checks.append(Check("min_not_above_prediction", None, "not applicable (correlated)"))
        if np.array_equal(y, s):
            spread = float(np.ptp(curve.risks))
            checks.append(Check("curve_flat", bool(spread <= 1e-12 * max(1.0, R_y)),
                                f"max - min of the curve = {spread:.3g} (flat at R_y = {R_y:.6g})"))
    else:
        checks.append(Check(
            "min_not_above_prediction", bool(r_emp <= r_pred + n_se * standard_error(best_i)),
            f"min_grid R = {r_emp:.6g} <= {r_pred:.6g} + {n_se} SE"))
        checks.append(Check(
            "cross_term_small", bool(abs(C) < n_se * C_se),
            f"|C| = {abs(C):.4g} < {n_se} * {C_se:.4g}"))

    report = RiskReport(R_y, R_s, R_u, C, C_se, curve.pairs(), lam_pred, r_pred,
                        lam_emp, r_emp, curve.relative_residual, bias, variance, checks)
    return report, curve


def independent_corruption(n: int, L: int, flip_rate: float = 0.3, sigma: float = 0.5,
                           positive_rate: float = 0.2, seed: int = 0):
    """Truth, labels with independent per-element flips, and soft labels equal
    to the truth plus independent zero-mean Gaussian noise."""
    if n < 1 or L < 1:
        raise ValueError("n and L must be positive")
    rng = np.random.default_rng([seed, 11])
    truth = (rng.random((n, L)) < positive_rate).astype(np.float64)
    flips = rng.random((n, L)) < flip_rate
    y = np.where(flips, 1.0 - truth, truth)
    s = truth + rng.normal(0.0, sigma, size=(n, L))
    return truth, y, s
