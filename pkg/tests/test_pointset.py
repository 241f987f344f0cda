"""Tests for pointset module."""
import math

import numpy as np
import pytest

from pairconf.pointset import (
    DistributionSet,
    class_pair_confusion_oracle,
    energy_distance,
    energy_distance_sq,
    sampled_set_confusion,
    set_euclidean_confusion,
)
from pairconf.simplex import euclidean_confusion, sample_simplex


def test_distribution_set_validation():
    """Empty, 1-D and non-simplex member arrays are rejected."""
    with pytest.raises(ValueError):
        DistributionSet(np.empty((0, 3)))
    with pytest.raises(ValueError):
        DistributionSet(np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        DistributionSet(np.array([[0.5, 0.6]]))


def test_from_vectors_checks_dimensions():
    """Members must share one dimension."""
    s = DistributionSet.from_vectors([[0.5, 0.5], [1.0, 0.0]], class_id=3)
    assert s.size == 2
    assert s.dim == 2
    assert s.class_id == 3
    with pytest.raises(ValueError):
        DistributionSet.from_vectors([[0.5, 0.5], [0.2, 0.3, 0.5]])
    with pytest.raises(ValueError):
        DistributionSet.from_vectors([])


def test_set_confusion_matches_brute_force(rng):
    """The set EC is the mean over every cross pair."""
    a = DistributionSet(sample_simplex(rng, 4, 3))
    b = DistributionSet(sample_simplex(rng, 5, 3))
    brute = np.mean([euclidean_confusion(x, y) for x in a.members for y in b.members])
    assert set_euclidean_confusion(a, b) == pytest.approx(brute, rel=1e-12)


def test_singleton_sets_reduce_to_pointwise():
    """One member per set gives the pointwise Euclidean Confusion."""
    a = DistributionSet(np.array([[0.2, 0.8]]))
    b = DistributionSet(np.array([[0.7, 0.3]]))
    assert set_euclidean_confusion(a, b) == pytest.approx(0.5)


def test_within_set_confusion_includes_self_pairs():
    """{e1, e2} with itself averages 0, 2, 2, 0."""
    s = DistributionSet(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert set_euclidean_confusion(s, s) == pytest.approx(1.0)


def test_energy_distance_is_twice_the_mean_gap(rng):
    """ED² = 2·‖mean(a) − mean(b)‖²."""
    a = DistributionSet(sample_simplex(rng, 6, 4))
    b = DistributionSet(sample_simplex(rng, 3, 4))
    gap = a.members.mean(axis=0) - b.members.mean(axis=0)
    assert energy_distance_sq(a, b) == pytest.approx(2.0 * float(gap @ gap), rel=1e-9)


def test_energy_distance_zero_for_equal_means():
    """Different sets with the same mean are at energy distance zero."""
    a = DistributionSet(np.array([[1.0, 0.0], [0.0, 1.0]]))
    b = DistributionSet(np.array([[0.5, 0.5]]))
    assert energy_distance_sq(a, b) == pytest.approx(0.0, abs=1e-15)
    assert energy_distance_sq(a, a) == 0.0


def test_set_inequalities_hold(rng):
    """½·ED² ≤ EC(a, b) and EC(a, a) + EC(b, b) ≤ 2·EC(a, b)."""
    for _ in range(50):
        a = DistributionSet(sample_simplex(rng, int(rng.integers(1, 8)), 5))
        b = DistributionSet(sample_simplex(rng, int(rng.integers(1, 8)), 5))
        cross = set_euclidean_confusion(a, b)
        assert 0.5 * energy_distance_sq(a, b) <= cross + 1e-12
        within = set_euclidean_confusion(a, a) + set_euclidean_confusion(b, b)
        assert within <= 2.0 * cross + 1e-12


def test_unsquared_energy_distance():
    """Opposite vertices: 2·√2 − 0 − 0 under the plain norm."""
    a = DistributionSet(np.array([[1.0, 0.0]]))
    b = DistributionSet(np.array([[0.0, 1.0]]))
    assert energy_distance(a, b) == pytest.approx(math.sqrt(2.0 * math.sqrt(2.0)))


def test_dimension_mismatch_between_sets():
    """Sets over different simplices cannot be compared."""
    a = DistributionSet(np.array([[0.5, 0.5]]))
    b = DistributionSet(np.array([[0.2, 0.3, 0.5]]))
    with pytest.raises(ValueError):
        set_euclidean_confusion(a, b)


def test_sampled_confusion_tracks_oracle(rng):
    """The Monte-Carlo estimate lands within four standard errors."""
    a = DistributionSet(sample_simplex(rng, 30, 5))
    b = DistributionSet(sample_simplex(rng, 40, 5))
    mean, stderr = sampled_set_confusion(a, b, 20_000, np.random.default_rng(1))
    assert stderr > 0
    assert abs(mean - set_euclidean_confusion(a, b)) <= 4.0 * stderr


def test_sampled_confusion_needs_two_pairs(rng):
    """A single draw has no standard error."""
    a = DistributionSet(sample_simplex(rng, 3, 2))
    with pytest.raises(ValueError):
        sampled_set_confusion(a, a, 1, rng)


def test_oracle_weights_by_class_size():
    """Class pairs are weighted by m_i·m_j."""
    s0 = DistributionSet(np.array([[1.0, 0.0], [1.0, 0.0]]), 0)
    s1 = DistributionSet(np.array([[0.0, 1.0]]), 1)
    s2 = DistributionSet(np.array([[1.0, 0.0]]), 2)
    # ordered pairs: (0,1)w2 ec2, (0,2)w2 ec0, (1,2)w1 ec2, each counted twice
    expected = (2 * 2.0 + 2 * 0.0 + 1 * 2.0) / (2 + 2 + 1)
    assert class_pair_confusion_oracle([s0, s1, s2]) == pytest.approx(expected)


def test_oracle_needs_two_classes():
    """One class has no cross-class pairs."""
    with pytest.raises(ValueError):
        class_pair_confusion_oracle([DistributionSet(np.array([[0.5, 0.5]]))])
