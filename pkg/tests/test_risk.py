import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisydistill.risk import (LabeledCollection, bias_variance, cross_term, default_grid,
                               independent_corruption, optimal_lambda, per_sample_risk, risk, risk_curve,
                               smoothing_risk, uniform_risk, verify_prop1)
from noisydistill.numerics import DimensionError


def test_risk_examples():
    t = np.array([[1, 0], [0, 1]])
    assert risk(LabeledCollection(t, t)) == 0.0
    assert risk(LabeledCollection([1, 0], [0, 0])) == 1.0
    assert risk(LabeledCollection([[1, 0]], [[0.5, 0.5]])) == 0.5


def test_collection_validation():
    with pytest.raises(ValueError):
        LabeledCollection([[0.5, 0]], [[0, 0]])
    with pytest.raises(DimensionError):
        LabeledCollection([[1, 0]], [[0, 0, 0]])
    with pytest.raises(ValueError):
        risk(LabeledCollection(np.zeros((0, 2)), np.zeros((0, 2))))


def test_optimal_lambda_examples():
    assert optimal_lambda(0.8, 0.8) == pytest.approx((0.5, 0.4), abs=1e-15)
    lam, r = optimal_lambda(2.0, 1.0)
    assert lam == pytest.approx(1 / 3) and r == pytest.approx(2 / 3)
    assert optimal_lambda(1.5, 0.0) == (0.0, 0.0)
    with pytest.raises(ValueError):
        optimal_lambda(0.0, 0.0)


def test_smoothing_examples():
    assert smoothing_risk(0.9, 0.9)[1] == pytest.approx(0.45)
    truth = np.eye(10)
    assert uniform_risk(truth) == pytest.approx(0.9)
    assert uniform_risk(np.eye(10)[:1]) == pytest.approx((1 - 0.1) ** 2 + 9 / 100)


@settings(max_examples=200)
@given(st.floats(1e-6, 10), st.floats(1e-6, 10), st.floats(1e-6, 10))
def test_distill_beats_smoothing_when_soft_labels_beat_uniform(R_y, R_s, R_u):
    if R_s < R_u:
        assert optimal_lambda(R_y, R_s)[1] < smoothing_risk(R_y, R_u)[1]


@settings(max_examples=200)
@given(st.floats(0, 10), st.floats(1e-6, 10))
def test_optimum_below_both_and_minimises_quadratic(R_y, R_s):
    lam, r = optimal_lambda(R_y, R_s)
    assert r <= min(R_y, R_s) + 1e-12
    grid = np.linspace(0, 1, 201)
    quad = grid ** 2 * R_y + (1 - grid) ** 2 * R_s
    assert r <= quad.min() + 1e-12
    assert lam ** 2 * R_y + (1 - lam) ** 2 * R_s == pytest.approx(r, rel=1e-9, abs=1e-12)


def test_curve_endpoints(rng):
    truth, y, s = independent_corruption(200, 4, seed=3)
    curve = risk_curve(y, s, truth, [0.0, 1.0])
    assert curve.risks[0] == pytest.approx(risk(LabeledCollection(truth, s)), rel=1e-14)
    assert curve.risks[1] == pytest.approx(risk(LabeledCollection(truth, y)), rel=1e-14)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_three_term_identity(seed):
    truth, y, s = independent_corruption(50, 5, seed=seed % 100000)
    R_y, R_s = risk(LabeledCollection(truth, y)), risk(LabeledCollection(truth, s))
    C = cross_term(y, s, truth)
    curve = risk_curve(y, s, truth, default_grid(11))
    lam = curve.lambdas
    np.testing.assert_allclose(curve.risks, lam ** 2 * R_y + (1 - lam) ** 2 * R_s + 2 * lam * (1 - lam) * C,
                               rtol=1e-12, atol=1e-12)


def test_fully_correlated_curve_is_flat():
    truth, y, _ = independent_corruption(500, 5, seed=1)
    curve = risk_curve(y, y, truth)
    np.testing.assert_array_equal(curve.risks, np.full(101, curve.risks[0]))
    assert cross_term(y, y, truth) == pytest.approx(risk(LabeledCollection(truth, y)), abs=1e-12)


def test_cross_term_zero_for_perfect_soft_labels():
    truth, y, _ = independent_corruption(300, 4, seed=2)
    assert cross_term(y, truth, truth) == 0.0


def test_antithetic_soft_noise_cancels_cross_term():
    # s = truth + e and truth - e on duplicated records: the cross-term sums to zero exactly
    truth, y, s = independent_corruption(400, 4, seed=9)
    e = s - truth
    T2, Y2, S2 = np.vstack([truth, truth]), np.vstack([y, y]), np.vstack([truth + e, truth - e])
    assert abs(cross_term(Y2, S2, T2)) < 1e-12
    assert risk_curve(Y2, S2, T2).relative_residual < 1e-12


def test_curve_rejects_bad_grid():
    truth, y, s = independent_corruption(10, 3)
    with pytest.raises(ValueError):
        risk_curve(y, s, truth, [1.5])
    with pytest.raises(ValueError):
        risk_curve(y, s, truth, [])


def test_bias_variance_identical_models():
    truth, _, s = independent_corruption(100, 4, seed=4)
    bias, var = bias_variance([s, s, s], truth)
    assert var == 0.0 and bias == pytest.approx(risk(LabeledCollection(truth, s)))
    u = np.full_like(truth, 0.25)
    bias, var = bias_variance([u, u], truth)
    assert var == 0.0 and bias == pytest.approx(uniform_risk(truth))


def test_bias_variance_monte_carlo():
    rng = np.random.default_rng(0)
    n, L, M, sigma = 4000, 5, 4, 0.3
    truth = (rng.random((n, L)) < 0.3).astype(float)
    preds = [truth + rng.normal(0, sigma, (n, L)) for _ in range(M)]
    bias, var = bias_variance(preds, truth)
    assert bias == pytest.approx(sigma ** 2 * L / M, rel=0.05)
    assert var == pytest.approx(sigma ** 2 * L * (1 - 1 / M), rel=0.05)


def test_bias_variance_needs_two_models():
    with pytest.raises(ValueError):
        bias_variance([np.zeros((2, 2))], np.zeros((2, 2)))


def test_verify_independent_passes(tmp_path):
    truth, y, s = independent_corruption(10_000, 10, seed=0)
    report, curve = verify_prop1(y, s, truth)
    assert report.ok
    assert abs(report.lambda_star_empirical - report.lambda_star_predicted) <= 0.05
    report.to_json(tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert {c["name"] for c in doc["checks"]} >= {"min_below_both", "cross_term_small"}
    assert len(doc["lambda_grid"]) == 101
    curve.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "lambda,risk"


def test_verify_correlated_marks_not_applicable():
    truth, y, _ = independent_corruption(1000, 5, seed=0)
    report, _ = verify_prop1(y, y, truth, correlated=True)
    status = {c.name: c.status for c in report.checks}
    assert status["min_below_both"] == "not applicable"
    assert status["curve_flat"] == "pass"
    assert report.ok


def test_verify_detects_correlated_noise_when_not_flagged():
    truth, y, _ = independent_corruption(5000, 5, seed=0)
    report, _ = verify_prop1(y, 0.9 * y + 0.05, truth)
    assert not report.ok


def test_per_sample_risk_shape():
    assert per_sample_risk(LabeledCollection(np.eye(3), np.zeros((3, 3)))).tolist() == [1.0, 1.0, 1.0]
