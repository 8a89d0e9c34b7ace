"""Thresholds, sample/run classification and evaluation metrics."""
import logging
import math
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import ConfigError, DataError
from src.learning.autoencoder import AutoencoderModel, reconstruct_scaled
from src.models.schemas import EvalMetrics, RocPoint, RunVerdict, Threshold, Verdict

logger = logging.getLogger(__name__)

DEFAULT_ROC_T_VALUES: Tuple[float, ...] = tuple(i * 0.25 for i in range(13))
DEFAULT_RELATIVE_X_VALUES: Tuple[float, ...] = (1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 50.0, 75.0, 100.0, 150.0, 200.0)

ErrorGroup = Tuple[Sequence[float], Sequence[float], Sequence[bool]]


def compute_threshold(training_errors: Sequence[float], t: float) -> Threshold:
    """
    gamma = mu + t * sigma with the population standard deviation.

    Args:
        training_errors: Reconstruction errors of the training samples
        t: Non-negative multiplier

    Returns:
        Threshold
    """
    errors = np.asarray(training_errors, dtype=np.float64)
    if errors.ndim != 1 or errors.size < 2:
        raise DataError(f"threshold needs at least 2 training errors, got {errors.size}")
    bad = np.flatnonzero(~np.isfinite(errors) | (errors < 0))
    if bad.size:
        raise DataError(f"training error {int(bad[0])} is {errors[bad[0]]!r}; errors must be finite and >= 0")
    if not (math.isfinite(t) and t >= 0):
        raise ConfigError(f"t must be a finite non-negative number, got {t}")
    return Threshold.from_stats(float(np.mean(errors)), float(np.std(errors)), float(t))


def classify_sample(epsilon: float, threshold: Threshold) -> Verdict:
    return Verdict.ANOMALOUS if epsilon > threshold.gamma else Verdict.NORMAL


def classify_run(
    sample_verdicts: Sequence[Union[Verdict, bool]],
    rho: float,
    run_id: str = "",
    function: Optional[str] = None,
    errors: Optional[Sequence[float]] = None,
) -> RunVerdict:
    """
    Aggregate sample verdicts: Anomalous iff the anomalous fraction >= rho.

    Args:
        sample_verdicts: Verdicts (or anomalous flags) of the run's samples
        rho: Run ratio in (0, 1]
        run_id: Run identifier
        function: Function the run is scoped to, if any
        errors: Per-sample reconstruction errors to keep in the verdict

    Returns:
        RunVerdict
    """
    if not sample_verdicts:
        raise DataError(f"run {run_id or '?'} has no sample verdicts")
    if not 0.0 < rho <= 1.0:
        raise ConfigError(f"rho must lie in (0, 1], got {rho}")
    flags = [v == Verdict.ANOMALOUS if isinstance(v, Verdict) else bool(v) for v in sample_verdicts]
    fraction = sum(flags) / len(flags)
    return RunVerdict(
        run_id=run_id or "run",
        function=function,
        errors=[float(e) for e in errors] if errors is not None else [],
        flags=flags,
        anomalous_fraction=fraction,
        rho=rho,
        verdict=Verdict.ANOMALOUS if fraction >= rho else Verdict.NORMAL,
    )


def confusion_metrics(predicted: Sequence[bool], actual: Sequence[bool]) -> EvalMetrics:
    """Rates over aligned predicted/actual anomalous flags; undefined rates are None."""
    if len(predicted) != len(actual):
        raise DataError(f"{len(predicted)} predictions but {len(actual)} labels")
    tp = sum(1 for p, a in zip(predicted, actual) if p and a)
    fp = sum(1 for p, a in zip(predicted, actual) if p and not a)
    tn = sum(1 for p, a in zip(predicted, actual) if not p and not a)
    fn = sum(1 for p, a in zip(predicted, actual) if not p and a)
    n_normal = tn + fp
    n_anomalous = tp + fn

    fpr = fp / n_normal if n_normal else None
    fnr = fn / n_anomalous if n_anomalous else None
    tpr = tp / n_anomalous if n_anomalous else None
    precision = tp / (tp + fp) if tp + fp else None
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else None
    return EvalMetrics(
        false_positive_rate=fpr,
        false_negative_rate=fnr,
        true_positive_rate=tpr,
        precision=precision,
        recall=tpr,
        f1=f1,
        n_normal=n_normal,
        n_anomalous=n_anomalous,
        true_positives=tp,
        false_positives=fp,
        true_negatives=tn,
        false_negatives=fn,
    )


def evaluate(run_verdicts: Sequence[RunVerdict], ground_truth_labels: Mapping[str, bool]) -> EvalMetrics:
    """
    FPR = flagged normal runs / n, FNR = missed anomalous runs / m.

    Args:
        run_verdicts: Verdicts, keyed by ``RunVerdict.key``
        ground_truth_labels: key -> truly anomalous

    Returns:
        EvalMetrics (rates with a zero denominator are None)
    """
    keys = [v.key for v in run_verdicts]
    if len(set(keys)) != len(keys):
        raise DataError("duplicate run ids in verdicts")
    missing = sorted(set(keys) - set(ground_truth_labels))
    extra = sorted(set(ground_truth_labels) - set(keys))
    if missing or extra:
        raise DataError(f"run_id mismatch between verdicts and labels: {(missing or extra)[0]}")
    predicted = [v.verdict == Verdict.ANOMALOUS for v in run_verdicts]
    actual = [bool(ground_truth_labels[k]) for k in keys]
    return confusion_metrics(predicted, actual)


def _check_ascending(values: Sequence[float], name: str) -> None:
    if any(b < a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{name} values must be sorted ascending")


def grouped_roc_sweep(groups: Sequence[ErrorGroup], t_values: Sequence[float]) -> List[RocPoint]:
    """
    Sample-level ROC where each group (cluster) derives gamma from its own training errors.

    Args:
        groups: (training errors, test errors, test labels) per group
        t_values: Ascending multipliers

    Returns:
        One RocPoint per t, in t order
    """
    _check_ascending(list(t_values), "t")
    prepared = []
    for training_errors, test_errors, labels in groups:
        if len(test_errors) != len(labels):
            raise DataError(f"{len(test_errors)} test errors but {len(labels)} labels")
        prepared.append((
            compute_threshold(training_errors, 0.0),
            np.asarray(test_errors, dtype=np.float64),
            np.asarray(labels, dtype=bool),
        ))
    points = []
    for t in t_values:
        predicted: List[bool] = []
        actual: List[bool] = []
        for base, errors, labels in prepared:
            gamma = base.with_t(float(t)).gamma
            predicted.extend((errors > gamma).tolist())
            actual.extend(labels.tolist())
        metrics = confusion_metrics(predicted, actual)
        points.append(RocPoint(parameter=float(t), fpr=metrics.false_positive_rate, tpr=metrics.true_positive_rate))
    return points


def roc_sweep(
    training_errors: Sequence[float],
    test_errors: Sequence[float],
    labels: Sequence[bool],
    t_values: Iterable[float] = DEFAULT_ROC_T_VALUES,
) -> List[RocPoint]:
    """One (fpr, tpr) per t for a single threshold population."""
    return grouped_roc_sweep([(training_errors, test_errors, labels)], list(t_values))


def relative_length_scores(model: AutoencoderModel, samples: np.ndarray) -> np.ndarray:
    """
    Length of (input - reconstruction) as a percentage of the input's length.

    Both vectors are taken in the model's standardized space. A zero-length input
    scores 0 when reconstructed exactly and infinity otherwise.
    """
    s, r = reconstruct_scaled(model, np.atleast_2d(np.asarray(samples, dtype=np.float64)))
    residual = np.linalg.norm(s - r, axis=1)
    length = np.linalg.norm(s, axis=1)
    scores = np.zeros_like(residual)
    nonzero = length > 0
    scores[nonzero] = 100.0 * residual[nonzero] / length[nonzero]
    scores[~nonzero & (residual > 0)] = np.inf
    return scores


def classify_relative_length(score: float, x: float) -> Verdict:
    """Anomalous when the residual exceeds x percent of the input length."""
    return Verdict.ANOMALOUS if score > x else Verdict.NORMAL


def relative_length_sweep(
    scores: Sequence[float],
    labels: Sequence[bool],
    x_values: Iterable[float] = DEFAULT_RELATIVE_X_VALUES,
) -> List[RocPoint]:
    x_values = list(x_values)
    _check_ascending(x_values, "x")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[0] != len(labels):
        raise DataError(f"{scores.shape[0]} scores but {len(labels)} labels")
    points = []
    for x in x_values:
        metrics = confusion_metrics((scores > x).tolist(), list(labels))
        points.append(RocPoint(parameter=float(x), fpr=metrics.false_positive_rate, tpr=metrics.true_positive_rate))
    return points
