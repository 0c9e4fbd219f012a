import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from beliefsum.exceptions import InvalidParameterError
from beliefsum.learner import (
    REFERENCE_LADDERS,
    LearnerConfig,
    RateLearner,
    TrainingSet,
    default_transition,
    kmeans_1d,
    learn_ladder,
    reference_ladder,
)


def test_single_normal_state_ladder():
    ladder, km = learn_ladder([4, 6, 5, 5], LearnerConfig(n_normal=1))
    assert ladder.rates[1] == 5.0
    assert ladder.rates[0] == 1e-3  # 5 - 3*sqrt(5) < 0, floored
    assert ladder.rates[2] == pytest.approx(5 + 3 * math.sqrt(5), abs=1e-12)
    assert km.converged


def test_constant_stream_collapses_clusters(caplog):
    with caplog.at_level(logging.WARNING, logger="beliefsum.learner"):
        ladder, _ = learn_ladder(np.full(100, 10), LearnerConfig(n_normal=3))
    assert ladder.normal_count == 1
    assert ladder.rates[1] == 10.0
    assert "effective N reduced" in caplog.text


def test_well_separated_clusters_recovered(rng):
    truth = np.array([2.0, 20.0, 60.0])
    x = rng.poisson(rng.choice(truth, size=3000))
    ladder, km = learn_ladder(x, LearnerConfig(n_normal=3))
    np.testing.assert_allclose(ladder.rates[1:-1], truth, rtol=0.1)
    assert ladder.rates[-1] == pytest.approx(ladder.rates[-2] + 3 * math.sqrt(ladder.rates[-2]))


def test_zero_heavy_data_respects_floor():
    ladder, _ = learn_ladder([0] * 50 + [1] * 5, LearnerConfig(n_normal=2, rate_floor=1e-3))
    assert ladder.rates[0] >= 1e-3
    assert all(b > a for a, b in zip(ladder.rates, ladder.rates[1:]))


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        LearnerConfig(n_normal=0)
    with pytest.raises(InvalidParameterError):
        LearnerConfig(rate_floor=0.0)
    with pytest.raises(ValueError):
        TrainingSet([1, -1, 2])


def test_digest_is_content_based():
    assert TrainingSet([1, 2, 3]).digest() == TrainingSet(np.array([1, 2, 3])).digest()
    assert TrainingSet([1, 2, 3]).digest() != TrainingSet([1, 2, 4]).digest()


def test_shipped_ladders_are_valid():
    for name, rates in REFERENCE_LADDERS.items():
        ladder = reference_ladder(name)
        assert ladder.rates == rates
        assert all(b > a for a, b in zip(rates, rates[1:]))
    assert reference_ladder("person").normal_count == 5
    with pytest.raises(InvalidParameterError):
        reference_ladder("nope")


def test_default_transition_rows():
    m = default_transition(5)
    np.testing.assert_array_equal(m.pbar, np.full((5, 7), 1 / 7))
    np.testing.assert_array_equal(default_transition(1).pbar, [[1 / 3, 1 / 3, 1 / 3]])
    assert m.identical_rows


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 200), min_size=1, max_size=300), st.integers(1, 6))
def test_learner_properties(xs, n):
    cfg = LearnerConfig(n_normal=n)
    ladder, km = learn_ladder(xs, cfg)
    rates = ladder.rates
    assert all(b > a for a, b in zip(rates, rates[1:]))
    assert 1 <= ladder.normal_count <= min(n, len(set(xs)))
    if min(xs) >= 1:
        assert min(xs) <= rates[1] and rates[-2] <= max(xs)
    assert km.converged
    path = np.array(km.inertia_path)
    assert np.all(np.diff(path) <= 1e-9 * max(1.0, path[0]))
    again, _ = learn_ladder(list(xs), cfg)
    assert again.rates == rates


def test_kmeans_exact_partition():
    km = kmeans_1d([1, 1, 2, 10, 11, 12], 2)
    np.testing.assert_allclose(km.centroids, [4 / 3, 11.0])
    np.testing.assert_array_equal(km.labels, [0, 0, 0, 1, 1, 1])


def test_estimator_api(rng):
    x = rng.poisson(rng.choice([3.0, 30.0], size=400))
    est = RateLearner(n_normal=2).fit(x)
    assert est.effective_n_ == 2
    assert list(est.predict([0, 3, 29, 100])) == [1, 1, 2, 2]
    assert clone(est).get_params() == {"n_normal": 2, "boundary_multiplier": 3.0,
                                        "rate_floor": 1e-3}
