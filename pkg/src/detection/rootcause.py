"""Per-counter reconstruction error ranking and defect mapping."""
import logging
import re
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.errors import DataError
from src.learning.autoencoder import AutoencoderModel, reconstruct_scaled
from src.models.schemas import CounterRanking, DefectMapping, DefectType

logger = logging.getLogger(__name__)


def per_counter_errors(model: AutoencoderModel, z: np.ndarray) -> np.ndarray:
    """|scaled(z) - scaled(forward(z))| per counter; works on a vector or an (n, D) batch."""
    s, r = reconstruct_scaled(model, z)
    return np.abs(s - r)


def map_defect(counter: str, mapping: Optional[DefectMapping] = None) -> DefectType:
    """First rule whose pattern matches the counter name (case-insensitive), else Unknown."""
    mapping = mapping or DefectMapping.default()
    for rule in mapping.rules:
        if re.search(rule.pattern, counter, flags=re.IGNORECASE):
            return rule.defect
    return DefectType.UNKNOWN


def rank_error_vectors(
    errors: np.ndarray, counter_names: Sequence[str], mapping: Optional[DefectMapping] = None
) -> CounterRanking:
    """
    Rank counters for each row of per-counter errors and take the plurality of rank-1 counters.

    Ties (within a row and between vote counts) go to the lower counter index.

    Args:
        errors: (n, D) non-negative per-counter errors of anomalous samples
        counter_names: Names in feature order
        mapping: Defect rules for the winner

    Returns:
        CounterRanking
    """
    errors = np.atleast_2d(np.asarray(errors, dtype=np.float64))
    if errors.shape[0] == 0 or errors.size == 0:
        raise DataError("root-cause ranking needs at least one anomalous sample")
    if errors.shape[1] != len(counter_names):
        raise DataError(f"{errors.shape[1]} error components but {len(counter_names)} counters")

    orders = np.argsort(-errors, axis=1, kind="stable")
    per_sample = [[counter_names[j] for j in row] for row in orders]
    votes = np.bincount(orders[:, 0], minlength=len(counter_names))
    winner_index = int(np.argmax(votes))
    ranked = sorted((j for j in range(len(counter_names)) if votes[j] > 0), key=lambda j: (-votes[j], j))
    vote_counts: Dict[str, int] = {counter_names[j]: int(votes[j]) for j in ranked}
    mean_errors = {name: float(v) for name, v in zip(counter_names, errors.mean(axis=0))}
    winner = counter_names[winner_index]
    return CounterRanking(
        per_sample_rankings=per_sample,
        vote_counts=vote_counts,
        mean_errors=mean_errors,
        winner=winner,
        winner_index=winner_index,
        defect=map_defect(winner, mapping),
    )


def rank_counters(
    anomalous_samples: Sequence[Sequence[float]],
    model: AutoencoderModel,
    counter_names: Optional[List[str]] = None,
    mapping: Optional[DefectMapping] = None,
) -> CounterRanking:
    """Rank counters of anomalous samples scored by ``model``."""
    samples = np.asarray(anomalous_samples, dtype=np.float64)
    if samples.size == 0:
        raise DataError("root-cause ranking needs at least one anomalous sample")
    names = counter_names or [f"c{j}" for j in range(model.dimension)]
    ranking = rank_error_vectors(per_counter_errors(model, np.atleast_2d(samples)), names, mapping)
    logger.debug(f"Root cause winner {ranking.winner} ({ranking.defect.value}) over {samples.shape[0] if samples.ndim == 2 else 1} samples")
    return ranking
