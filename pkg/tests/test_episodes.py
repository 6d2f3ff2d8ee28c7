import numpy as np
import pytest

from plastiformer.episodes import (Episode, SyntheticFewShotDataset,
                                   episode_stream, episode_tokens,
                                   sample_episode)


@pytest.fixture
def dataset():
    return SyntheticFewShotDataset(num_classes=32, pixels=16, seed=0)


def test_token_counts(dataset):
    rng = np.random.default_rng(0)
    ep = sample_episode(dataset, 5, 1, rng)
    assert len(ep.support) == 5
    toks = episode_tokens(ep)
    assert toks.shape == (6, 16 + 5 + 1)


def test_each_class_k_times(dataset):
    rng = np.random.default_rng(1)
    ep = sample_episode(dataset, 4, 3, rng)
    labels = [label for _, label in ep.support]
    for lbl in range(4):
        assert labels.count(lbl) == 3


def test_same_seed_identical(dataset):
    e1 = sample_episode(dataset, 5, 2, np.random.default_rng(7))
    e2 = sample_episode(dataset, 5, 2, np.random.default_rng(7))
    assert e1.query_label == e2.query_label
    np.testing.assert_array_equal(e1.query_image, e2.query_image)
    for (i1, l1), (i2, l2) in zip(e1.support, e2.support):
        assert l1 == l2
        np.testing.assert_array_equal(i1, i2)


def test_insufficient_classes(dataset):
    with pytest.raises(ValueError):
        sample_episode(dataset, 100, 1, np.random.default_rng(0))


def test_token_marker_exclusive(dataset):
    ep = sample_episode(dataset, 3, 1, np.random.default_rng(2))
    toks = episode_tokens(ep)
    label_part = toks[:, 16:]
    # supports: one-hot label, no marker; query: marker only
    assert np.all(label_part[:-1, -1] == 0)
    assert np.all(label_part[:-1, :-1].sum(axis=1) == 1)
    assert label_part[-1, -1] == 1
    assert np.all(label_part[-1, :-1] == 0)


def test_label_assignment_uniform(dataset):
    """Each episode-local label is assigned to the query's class ~1/N."""
    n = 5
    counts = np.zeros(n)
    stream = episode_stream(dataset, n, 1, seed=3)
    trials = 10_000
    for _ in range(trials):
        counts[next(stream).query_label] += 1
    freqs = counts / trials
    np.testing.assert_allclose(freqs, 1 / n, atol=0.02)


def test_stream_reproducible(dataset):
    s1 = episode_stream(dataset, 3, 1, seed=11)
    s2 = episode_stream(dataset, 3, 1, seed=11)
    for _ in range(5):
        e1, e2 = next(s1), next(s2)
        np.testing.assert_array_equal(e1.query_image, e2.query_image)
        assert e1.query_label == e2.query_label


def test_images_in_unit_interval(dataset):
    rng = np.random.default_rng(4)
    ep = sample_episode(dataset, 5, 2, rng)
    for img, _ in ep.support:
        assert img.min() >= 0 and img.max() <= 1
