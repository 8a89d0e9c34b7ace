"""k-means over standardized samples and the function -> cluster mapping."""
import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.errors import ClusteringError, DataError
from src.learning.autoencoder import fit_scaler
from src.models.schemas import ClusterModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: Tuple[float, ...]
    converged: bool


def _squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centroids[None, :, :]
    return np.sum(diff * diff, axis=2)


def _kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            raise ClusteringError("k-means++ ran out of distinct points")
        idx = int(rng.choice(n, p=closest / total))
        chosen.append(idx)
        closest = np.minimum(closest, np.sum((x - x[idx]) ** 2, axis=1))
    return x[chosen].copy()


def _reseed_empty(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray, k: int) -> np.ndarray:
    labels = labels.copy()
    for cluster in range(k):
        if np.any(labels == cluster):
            continue
        sizes = np.bincount(labels, minlength=k)
        dist = np.sum((x - centroids[labels]) ** 2, axis=1)
        # never strip the last member of another cluster
        dist[sizes[labels] <= 1] = -1.0
        far = int(np.argmax(dist))
        logger.debug(f"Re-seeding empty cluster {cluster} at sample {far}")
        labels[far] = cluster
        centroids[cluster] = x[far]
    return labels


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iters: int) -> KMeansResult:
    k = centroids.shape[0]
    centroids = centroids.astype(np.float64, copy=True)
    labels = np.argmin(_squared_distances(x, centroids), axis=1)
    history = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        labels = _reseed_empty(x, labels, centroids, k)
        for cluster in range(k):
            centroids[cluster] = x[labels == cluster].mean(axis=0)
        inertia = float(np.sum((x - centroids[labels]) ** 2))
        history.append(inertia)
        new_labels = np.argmin(_squared_distances(x, centroids), axis=1)
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
    if not history:
        history.append(float(np.sum((x - centroids[labels]) ** 2)))
    return KMeansResult(
        centroids=centroids,
        labels=labels,
        inertia=history[-1],
        n_iter=iterations,
        inertia_history=tuple(history),
        converged=converged,
    )


def kmeans(
    samples: Sequence[Sequence[float]],
    k: int,
    seed: int = 0,
    max_iters: int = 300,
    n_init: int = 10,
    initial_centroids: Optional[np.ndarray] = None,
) -> KMeansResult:
    """
    Lloyd's algorithm with k-means++ seeding.

    ``n_init`` restarts draw from one ``default_rng(seed)`` stream; the lowest
    inertia wins, ties go to the earliest restart. Passing
    ``initial_centroids`` runs a single Lloyd pass from those centroids.

    Args:
        samples: (n, D) standardized vectors
        k: Number of clusters
        seed: Seed for k-means++
        max_iters: Iteration cap; stops earlier at an assignment fixpoint
        n_init: Independent restarts

    Returns:
        KMeansResult
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ClusteringError("kmeans needs a non-empty (n, D) sample array")
    if k < 1:
        raise ClusteringError(f"k must be >= 1, got {k}")
    distinct = np.unique(x, axis=0).shape[0]
    if k > distinct:
        raise ClusteringError(f"k={k} exceeds the number of distinct samples ({distinct})")

    if initial_centroids is not None:
        initial = np.asarray(initial_centroids, dtype=np.float64)
        if initial.shape != (k, x.shape[1]):
            raise ClusteringError(f"initial centroids must have shape ({k}, {x.shape[1]})")
        return _lloyd(x, initial, max_iters)

    rng = np.random.default_rng(seed)
    best: Optional[KMeansResult] = None
    for restart in range(max(1, n_init)):
        result = _lloyd(x, _kmeans_plus_plus(x, k, rng), max_iters)
        logger.debug(f"k-means restart {restart}: inertia {result.inertia:.6g} after {result.n_iter} iterations")
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def assign_functions(per_function_clusters: Mapping[str, Sequence[int]], k: Optional[int] = None) -> Dict[str, int]:
    """
    Map each function to the cluster holding the plurality of its samples.

    Ties go to the lowest cluster index.

    Args:
        per_function_clusters: function -> cluster label of each of its samples
        k: Number of clusters (inferred from the labels when omitted)

    Returns:
        function -> cluster index, one entry per input function
    """
    assignment: Dict[str, int] = {}
    for function, labels in per_function_clusters.items():
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size == 0:
            raise ClusteringError(f"function {function} has no samples")
        counts = np.bincount(labels, minlength=k or 0)
        assignment[function] = int(np.argmax(counts))
    return assignment


def fit_cluster_model(
    per_function_samples: Mapping[str, np.ndarray],
    k: int,
    seed: int = 0,
    max_iters: int = 300,
    n_init: int = 10,
) -> ClusterModel:
    """
    Standardize all samples with one scaler, run k-means and assign functions.

    Args:
        per_function_samples: function -> (n_f, D) normalized samples, in a stable order
        k: 1 <= k <= number of functions

    Returns:
        ClusterModel whose clusters each own at least one function
    """
    functions = list(per_function_samples)
    if not 1 <= k <= len(functions):
        raise ClusteringError(f"k must be between 1 and the number of functions ({len(functions)}), got {k}")
    stacked = np.vstack([np.asarray(per_function_samples[f], dtype=np.float64) for f in functions])
    scaler = fit_scaler(stacked)
    standardized = scaler.transform(stacked)
    result = kmeans(standardized, k, seed=seed, max_iters=max_iters, n_init=n_init)

    per_function_labels: Dict[str, np.ndarray] = {}
    offset = 0
    for function in functions:
        count = len(per_function_samples[function])
        per_function_labels[function] = result.labels[offset:offset + count]
        offset += count
    assignment = assign_functions(per_function_labels, k)

    empty = sorted(set(range(k)) - set(assignment.values()))
    if empty:
        raise ClusteringError(
            f"cluster {empty[0]} left empty after function assignment (k={k}); try a smaller k"
        )
    logger.info(f"Clustered {len(functions)} functions into k={k} clusters, inertia {result.inertia:.6g}")
    return ClusterModel(
        k=k,
        centroids=result.centroids.tolist(),
        function_assignment=assignment,
        inertia=result.inertia,
        seed=seed,
        scaler_mean=scaler.mean.tolist(),
        scaler_std=scaler.std.tolist(),
    )


def route(
    function: str,
    cluster_model: ClusterModel,
    function_samples: Optional[np.ndarray] = None,
    fallback: bool = True,
) -> int:
    """
    Cluster whose autoencoder should score ``function``.

    Unseen functions go to the centroid nearest their standardized mean sample
    when ``fallback`` is enabled.
    """
    if function in cluster_model.function_assignment:
        return cluster_model.function_assignment[function]
    if not fallback:
        raise DataError(f"unseen function {function} and nearest-centroid fallback is disabled")
    if function_samples is None or len(function_samples) == 0:
        raise DataError(f"unseen function {function} has no samples to route by")
    mean = np.asarray(function_samples, dtype=np.float64).mean(axis=0)
    standardized = (mean - np.asarray(cluster_model.scaler_mean)) / np.asarray(cluster_model.scaler_std)
    distances = np.sum((np.asarray(cluster_model.centroids) - standardized) ** 2, axis=1)
    cluster = int(np.argmin(distances))
    logger.warning(f"Function {function} was not seen in training; routed to nearest centroid {cluster}")
    return cluster
