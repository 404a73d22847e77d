import warnings

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from rtriseg.clustering import (ClusterConfig, SimilarityGraph, group_bfifs, local_covariance,
                                markov_cluster, pairwise_mahalanobis, similarity_graph)
from rtriseg.errors import NonConvergenceWarning
from rtriseg.geometry import Twist


def test_config_validation():
    with pytest.raises(ValueError):
        ClusterConfig(expansion=1)
    with pytest.raises(ValueError):
        ClusterConfig(inflation=1.0)
    with pytest.raises(ValueError):
        ClusterConfig(bandwidth_mode="max")
    with pytest.raises(ValueError):
        ClusterConfig(covariance_mode="none")


def test_sample_mahalanobis_matches_scipy(rng):
    X = rng.normal(size=(15, 6)) * [1, 2, 3, 0.1, 0.2, 5]
    cov = np.cov(X, rowvar=False) + 1e-6 * np.eye(6)
    ref = cdist(X, X, "mahalanobis", VI=np.linalg.inv(cov))
    D = pairwise_mahalanobis([Twist.from_vector(x) for x in X], covariance_mode="sample")
    assert np.allclose(D, ref, atol=1e-9)
    assert np.array_equal(D, D.T) and not np.diag(D).any()


def test_local_covariance_tracks_within_cluster_noise(rng):
    noise = 0.01
    a = rng.normal(size=(40, 6)) * noise
    b = rng.normal(size=(40, 6)) * noise + [0, 0, 1, 0.5, 0, 0]
    cov = local_covariance(np.vstack([a, b]), k=5)
    # nearest neighbours stay in one cloud: variance is close to noise**2, not the separation
    assert np.all(np.diag(cov) < 3 * noise ** 2)
    assert np.all(np.diag(cov) > 0.2 * noise ** 2)
    assert np.array_equal(local_covariance(np.ones((1, 6))), np.zeros((6, 6)))


def test_similarity_graph_median_rule():
    D = np.array([[0, 1, 2], [1, 0, 4], [2, 4, 0]], float)
    W = similarity_graph(D, ClusterConfig(bandwidth_mode="median")).weights
    sigma = 2.0
    assert np.allclose(W, np.exp(-D ** 2 / (2 * sigma ** 2)))
    W = similarity_graph(D, ClusterConfig(bandwidth_mode="fixed", bandwidth=1.0)).weights
    assert np.isclose(W[0, 2], np.exp(-2.0))
    assert np.allclose(np.diag(W), 1.0)


def test_mcl_disconnected_blocks():
    W = np.zeros((5, 5))
    W[:2, :2] = 1
    W[2:, 2:] = 1
    assert markov_cluster(SimilarityGraph(W)) == [[0, 1], [2, 3, 4]]


def test_mcl_edge_cases():
    assert markov_cluster(SimilarityGraph(np.zeros((0, 0)))) == []
    assert markov_cluster(SimilarityGraph(np.ones((1, 1)))) == [[0]]
    assert group_bfifs([]) == []


def test_mcl_nonconvergence_warns(rng):
    W = rng.uniform(0.2, 1, size=(12, 12))
    W = 0.5 * (W + W.T)
    with pytest.warns(NonConvergenceWarning):
        parts = markov_cluster(SimilarityGraph(W), ClusterConfig(max_iters=1))
    assert sorted(i for p in parts for i in p) == list(range(12))


def test_group_two_twist_clouds(rng):
    a = [Twist.from_vector(rng.normal(size=6) * 1e-4 + [0, 0, 0, 0.002, 0, 0]) for _ in range(12)]
    b = [Twist.from_vector(rng.normal(size=6) * 1e-4 + [0, 0, 0.05, 0.001, -0.002, 0]) for _ in range(9)]
    with warnings.catch_warnings():
        warnings.simplefilter("error", NonConvergenceWarning)
        groups = group_bfifs(a + b)
    assert sorted(map(sorted, groups)) == [list(range(12)), list(range(12, 21))]


def test_single_cloud_is_one_group(rng):
    a = [Twist.from_vector(rng.normal(size=6) * 1e-4 + [0, 0, 0.01, 0, 0.002, 0]) for _ in range(15)]
    assert len(group_bfifs(a)) == 1
