"""Grouping of BFIFs: Mahalanobis distances, Gaussian kernel, Markov clustering."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import NonConvergenceWarning

SIGMA_FLOOR = 1e-9


@dataclass(frozen=True)
class ClusterConfig:
    expansion: int = 2
    inflation: float = 2.0
    prune_threshold: float = 1e-5
    max_iters: int = 100
    convergence_tol: float = 1e-6
    cov_regularizer: float = 1e-6
    covariance_mode: str = "local"
    local_k: int = 5
    bandwidth_mode: str = "fixed"
    bandwidth: float = 3.5

    def __post_init__(self):
        if self.expansion < 2 or not self.inflation > 1:
            raise ValueError("need expansion >= 2 and inflation > 1")
        if not 0 < self.prune_threshold <= 1e-2:
            raise ValueError("prune_threshold must lie in (0, 1e-2]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.bandwidth_mode not in ("median", "mean", "fixed"):
            raise ValueError(f"unknown bandwidth_mode {self.bandwidth_mode!r}")
        if self.covariance_mode not in ("sample", "local"):
            raise ValueError(f"unknown covariance_mode {self.covariance_mode!r}")
        if self.local_k < 1 or not self.bandwidth > 0:
            raise ValueError("local_k must be >= 1 and bandwidth positive")


@dataclass(frozen=True, eq=False)
class SimilarityGraph:
    weights: np.ndarray

    @property
    def node_count(self) -> int:
        return self.weights.shape[0]


def _as_matrix(bfifs) -> np.ndarray:
    rows = [b.vector() if hasattr(b, "vector") else np.asarray(b, dtype=float) for b in bfifs]
    return np.array(rows, dtype=float).reshape(len(rows), -1)


def _mahalanobis(X, cov) -> np.ndarray:
    prec = np.linalg.inv(cov)
    diff = X[:, None, :] - X[None, :, :]
    d2 = np.einsum("ijk,kl,ijl->ij", diff, prec, diff)
    D = np.sqrt(np.maximum(d2, 0.0))
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


def local_covariance(X, k: int = 5, cov_regularizer: float = 1e-6, passes: int = 2) -> np.ndarray:
    """Covariance of differences between each twist and its k nearest
    neighbours.

    The sample covariance of a multi-body twist set is dominated by the
    spread between bodies; whitening with it squeezes the bodies together
    and inflates noise-only directions. Neighbour differences mostly stay
    within a body, so this estimates the per-body noise instead. Each
    difference carries twice the noise variance, hence the factor 1/2.
    Neighbours are first searched under the sample covariance, then again
    under the previous estimate (under the sample metric alone they can
    still cross bodies when the noise is isotropic).
    """
    n, d = X.shape
    if n < 2:
        return np.zeros((d, d))
    k = min(k, n - 1)
    cov = np.cov(X, rowvar=False)
    for _ in range(max(passes, 1)):
        D = _mahalanobis(X, cov + cov_regularizer * np.eye(d))
        np.fill_diagonal(D, np.inf)
        nn = np.argsort(D, axis=1, kind="stable")[:, :k]
        diffs = (X[:, None, :] - X[nn]).reshape(-1, d)
        cov = diffs.T @ diffs / (2 * len(diffs))
    return cov


def pairwise_mahalanobis(bfifs, cov_regularizer: float = 1e-6, covariance_mode: str = "sample",
                         local_k: int = 5) -> np.ndarray:
    X = _as_matrix(bfifs)
    n, d = X.shape
    if covariance_mode == "local":
        cov = local_covariance(X, local_k, cov_regularizer)
    else:
        cov = np.cov(X, rowvar=False) if n > 1 else np.zeros((d, d))
    return _mahalanobis(X, cov + cov_regularizer * np.eye(d))


def similarity_graph(distances, cfg: ClusterConfig = ClusterConfig()) -> SimilarityGraph:
    D = np.asarray(distances, dtype=float)
    n = D.shape[0]
    off = D[~np.eye(n, dtype=bool)]
    if cfg.bandwidth_mode == "fixed":
        sigma = cfg.bandwidth
    elif off.size == 0:
        sigma = SIGMA_FLOOR
    elif cfg.bandwidth_mode == "median":
        sigma = float(np.median(off))
    else:
        sigma = float(np.mean(off))
    sigma = max(sigma, SIGMA_FLOOR)
    W = np.exp(-(D ** 2) / (2 * sigma ** 2))
    W = 0.5 * (W + W.T)
    np.fill_diagonal(W, 1.0)
    return SimilarityGraph(W)


def _normalize_columns(M):
    s = M.sum(axis=0)
    s[s == 0] = 1.0
    return M / s


def markov_cluster(g: SimilarityGraph, cfg: ClusterConfig = ClusterConfig()) -> list[list[int]]:
    """Partition graph nodes by MCL; clusters are connected components of the
    final flow matrix. Emits NonConvergenceWarning if max_iters is reached."""
    n = g.node_count
    if n == 0:
        return []
    M = _normalize_columns(np.array(g.weights, dtype=float))
    converged = False
    for _ in range(cfg.max_iters):
        prev = M
        M = np.linalg.matrix_power(M, cfg.expansion)
        M = _normalize_columns(M ** cfg.inflation)
        M[M < cfg.prune_threshold] = 0.0
        M = _normalize_columns(M)
        if np.abs(M - prev).max() < cfg.convergence_tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"MCL did not converge in {cfg.max_iters} iterations",
                      NonConvergenceWarning, stacklevel=2)
    _, labels = connected_components(M > 0, directed=True, connection="weak")
    clusters: dict[int, list[int]] = {}
    for node, lab in enumerate(labels):
        clusters.setdefault(int(lab), []).append(node)
    return sorted(clusters.values(), key=lambda c: c[0])


def group_bfifs(bfifs, cfg: ClusterConfig = ClusterConfig()) -> list[list[int]]:
    if len(bfifs) == 0:
        return []
    D = pairwise_mahalanobis(bfifs, cfg.cov_regularizer, cfg.covariance_mode, cfg.local_k)
    return markov_cluster(similarity_graph(D, cfg), cfg)
