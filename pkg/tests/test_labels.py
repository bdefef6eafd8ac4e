import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from noisydistill.kgraph import KnowledgeGraph, RelationMatrix, build_relation_matrix
from noisydistill.labels import (BootstrapProvider, ConfigurationError, PseudoLabelSpec, TargetProvider,
                                 build_target_provider, guided_soft, lambda_heuristic, pseudo_bootstrap,
                                 pseudo_distill, pseudo_smooth)
from noisydistill.model import MLPClassifier, TrainConfig, soft_predict, train
from noisydistill.numerics import DimensionError

unit = st.floats(0, 1)


def test_distill_examples():
    y, s = np.array([1.0, 0.0]), np.array([0.6, 0.2])
    np.testing.assert_array_equal(pseudo_distill(y, s, 1.0), y)
    np.testing.assert_array_equal(pseudo_distill(y, s, 0.0), s)
    np.testing.assert_allclose(pseudo_distill(y, s, 0.5), [0.8, 0.1])


def test_smooth_examples():
    np.testing.assert_array_equal(pseudo_smooth([1, 0], 1.0), [1, 0])
    np.testing.assert_allclose(pseudo_smooth([1, 0], 0.8), [0.9, 0.1])
    np.testing.assert_allclose(pseudo_smooth([1, 0, 1, 1], 0.0), [0.25] * 4)


def test_bootstrap_examples():
    np.testing.assert_allclose(pseudo_bootstrap([0, 1], [0.4, 0.9], 0.5), [0.2, 0.95])
    y = np.array([1.0, 0.0, 1.0])
    for lam in (0.0, 0.3, 1.0):
        np.testing.assert_array_equal(pseudo_bootstrap(y, y, lam), y)


def test_lambda_range_and_shape_errors():
    with pytest.raises(ValueError):
        pseudo_distill([1], [0.5], 1.2)
    with pytest.raises(DimensionError):
        pseudo_distill([1, 0], [0.5], 0.5)


@given(arrays(np.float64, 5, elements=st.sampled_from([0.0, 1.0])), arrays(np.float64, 5, elements=unit), unit)
def test_distill_stays_between_sources(y, s, lam):
    out = pseudo_distill(y, s, lam)
    assert np.all(out >= np.minimum(y, s) - 1e-15) and np.all(out <= np.maximum(y, s) + 1e-15)


def test_guided_soft_examples():
    s = np.array([1.0, 0.0, 0.0])
    np.testing.assert_array_equal(guided_soft(np.eye(3), s), s)
    g = KnowledgeGraph((("p", "a", "class"), ("p", "b", "class"), ("p", "c", "class")))
    G = build_relation_matrix(g, ["a", "b", "c"], 0.4)
    np.testing.assert_allclose(guided_soft(G, s), [0.7143, 0.1429, 0.1429], atol=1e-4)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_guided_soft_uniform_fixed_point_and_batch(seed, L):
    rng = np.random.default_rng(seed)
    raw = rng.random((L, L)) + np.eye(L)
    G = raw / raw.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(guided_soft(G, np.full(L, 1 / L)), 1 / L, atol=1e-15)
    batch = rng.random((4, L))
    np.testing.assert_allclose(guided_soft(G, batch), np.stack([G @ b for b in batch]), atol=1e-14)


def test_guided_soft_shape_error():
    with pytest.raises(DimensionError):
        guided_soft(np.eye(3), np.ones(2))


def test_lambda_heuristic():
    assert lambda_heuristic(0.440, 0.507) == pytest.approx(0.4646, abs=1e-4)
    assert lambda_heuristic(0.3, 0.3) == 0.5
    assert lambda_heuristic(0.0, 0.6) == 0.0
    with pytest.raises(ValueError):
        lambda_heuristic(0.0, 0.0)


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        PseudoLabelSpec("mixup")
    with pytest.raises(ConfigurationError):
        PseudoLabelSpec("guided-distill", 0.5)
    with pytest.raises(ValueError):
        PseudoLabelSpec("distill", 0.5, temperature=0.0)


def test_provider_strategies(small_data):
    ds, graph = small_data
    aux = MLPClassifier.initialize((ds.d, 4, ds.L), 1)
    rows = np.arange(10)
    noisy = build_target_provider(PseudoLabelSpec("noisy"), ds)
    np.testing.assert_array_equal(noisy.targets(rows), ds.y[rows])
    truth = build_target_provider(PseudoLabelSpec("clean-truth"), ds)
    np.testing.assert_array_equal(truth.targets(rows), ds.y_true[rows])
    sm = build_target_provider(PseudoLabelSpec("smooth", 0.8), ds)
    np.testing.assert_allclose(sm.targets(rows), 0.8 * ds.y[rows] + 0.2 / ds.L)
    dist = build_target_provider(PseudoLabelSpec("distill", 0.3, 2.0), ds, aux)
    s = soft_predict(aux, ds.x[rows], 2.0)
    np.testing.assert_allclose(dist.targets(rows), 0.3 * ds.y[rows] + 0.7 * s)
    rel = build_relation_matrix(graph, ds.label_names, 0.4)
    gd = build_target_provider(PseudoLabelSpec("guided-distill", 0.3, 2.0, rel), ds, aux)
    np.testing.assert_allclose(gd.targets(rows), 0.3 * ds.y[rows] + 0.7 * s @ rel.g.T)


def test_provider_prerequisites(small_data):
    ds, _ = small_data
    with pytest.raises(ConfigurationError):
        build_target_provider(PseudoLabelSpec("distill", 0.5), ds)
    from noisydistill.datagen import Dataset
    real = Dataset(ds.ids, ds.x, ds.y, ds.split, ds.label_names)
    with pytest.raises(ConfigurationError):
        build_target_provider(PseudoLabelSpec("clean-truth"), real)
    with pytest.raises(DimensionError):
        build_target_provider(PseudoLabelSpec("guided-distill", 0.5, 1.0, RelationMatrix.identity(["a"])),
                              ds, MLPClassifier.initialize((ds.d, ds.L), 0))


def test_target_provider_rejects_out_of_range():
    with pytest.raises(ValueError):
        TargetProvider(np.array([[1.2, 0.0]]))


def test_bootstrap_provider_refreshes_from_model(small_data):
    ds, _ = small_data
    model = MLPClassifier.initialize((ds.d, 4, ds.L), 2)
    bp = BootstrapProvider(ds, 0.6)
    np.testing.assert_array_equal(bp.targets([0, 1]), ds.y[[0, 1]])
    bp.refresh(model)
    s = soft_predict(model, ds.x)
    np.testing.assert_allclose(bp.matrix, 0.6 * ds.y + 0.4 * s)
    assert bp.epochs_seen == 1


def test_bootstrap_refreshed_every_epoch(small_data):
    ds, _ = small_data
    bp = BootstrapProvider(ds, 0.6)
    train(MLPClassifier.initialize((ds.d, 4, ds.L), 0), ds, bp, TrainConfig(epochs=3, seed=0))
    assert bp.epochs_seen == 3


def test_guided_with_identity_equals_distill(small_data):
    ds, _ = small_data
    cfg = TrainConfig(epochs=4, seed=3)
    arch = MLPClassifier.initialize((ds.d, 6, ds.L), 0)
    aux = MLPClassifier.initialize((ds.d, 6, ds.L), 9)
    a, _ = train(arch, ds, build_target_provider(PseudoLabelSpec("distill", 0.4), ds, aux), cfg)
    ident = RelationMatrix.identity(ds.label_names)
    b, _ = train(arch, ds, build_target_provider(
        PseudoLabelSpec("guided-distill", 0.4, 1.0, ident), ds, aux), cfg)
    np.testing.assert_array_equal(a.params, b.params)
