import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisydistill.metrics import NoPositivesError, average_precision, mean_average_precision, per_class_ap


def permutation_ap(scores, truth):
    """Reference AP: enumerate the ranking explicitly, then walk it."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits, total = 0, 0.0
    for k, i in enumerate(order, start=1):
        if truth[i]:
            hits += 1
            total += hits / k
    return total / hits


def test_worked_example():
    assert average_precision([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx(0.8333, abs=1e-4)
    assert average_precision([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx((1 + 2 / 3) / 2, abs=1e-15)


def test_perfect_and_worst_single_positive():
    assert average_precision([0.9, 0.8, 0.1, 0.0], [1, 1, 0, 0]) == 1.0
    assert average_precision([0.9, 0.8, 0.7, 0.1], [0, 0, 0, 1]) == 0.25


def test_ties_resolve_by_index():
    # all tied: ranking is the index order
    assert average_precision([0.5, 0.5, 0.5], [0, 1, 0]) == 0.5
    assert average_precision([0.5, 0.5, 0.5], [1, 0, 0]) == 1.0


def test_no_positive_raises():
    with pytest.raises(NoPositivesError):
        average_precision([0.1, 0.2], [0, 0])
    with pytest.raises(NoPositivesError):
        mean_average_precision(np.ones((3, 2)), np.zeros((3, 2)))


def test_all_negative_class_is_excluded():
    scores = np.array([[0.9, 0.2], [0.1, 0.8]])
    truth = np.array([[1, 0], [0, 0]])
    aps = per_class_ap(scores, truth)
    assert aps[0] == 1.0 and np.isnan(aps[1])
    assert mean_average_precision(scores, truth) == 1.0


def test_perfect_scores_give_one(rng):
    truth = (rng.random((30, 5)) < 0.4).astype(int)
    truth[0] = 1
    assert mean_average_precision(truth.astype(float), truth) == 1.0


def test_shape_errors():
    with pytest.raises(ValueError):
        per_class_ap(np.ones((3, 2)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        average_precision([1, 2], [1])


def test_random_small_against_permutation_oracle(rng):
    scores = rng.random((5, 3))
    truth = np.array([[1, 0, 1], [0, 1, 0], [1, 1, 0], [0, 0, 0], [0, 0, 1]])
    ref = np.mean([permutation_ap(list(scores[:, c]), list(truth[:, c])) for c in range(3)])
    assert abs(mean_average_precision(scores, truth) - ref) < 1e-12


def test_exhaustive_rankings_of_four():
    # every ordering of 4 distinct scores against every non-empty truth
    for perm in itertools.permutations(range(4)):
        scores = np.array(perm, dtype=float)
        for bits in range(1, 16):
            truth = [(bits >> k) & 1 for k in range(4)]
            assert average_precision(scores, truth) == pytest.approx(
                permutation_ap(list(scores), truth), abs=1e-15)


@settings(max_examples=200)
@given(st.integers(1, 30).flatmap(lambda n: st.tuples(
    st.lists(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n))))
def test_ap_matches_oracle_with_ties(case):
    scores, truth = case
    if not any(truth):
        truth[0] = 1
    assert abs(average_precision(scores, truth) - permutation_ap(scores, truth)) < 1e-12


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_map_is_bounded_and_invariant_to_monotone_maps(seed):
    rng = np.random.default_rng(seed)
    scores = rng.random((20, 4))
    truth = (rng.random((20, 4)) < 0.3).astype(int)
    truth[0, 0] = 1
    m = mean_average_precision(scores, truth)
    assert 0 < m <= 1
    assert mean_average_precision(np.exp(3 * scores), truth) == pytest.approx(m, abs=1e-15)
