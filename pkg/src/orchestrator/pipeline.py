"""End-to-end training and detection over profile sets."""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import Settings, get_settings
from src.detection.detector import (
    DEFAULT_ROC_T_VALUES,
    classify_run,
    compute_threshold,
    confusion_metrics,
    evaluate,
    grouped_roc_sweep,
)
from src.detection.rootcause import per_counter_errors, rank_error_vectors
from src.errors import DataError
from src.ingest.normalization import normalize
from src.learning.autoencoder import AutoencoderModel, reconstruction_errors, train
from src.learning.clustering import fit_cluster_model, route
from src.models.schemas import (
    DefectMapping,
    DiagnosisReport,
    FunctionReport,
    GroundTruth,
    ProfileSet,
    RunSummary,
    RunVerdict,
    Threshold,
    TrainConfig,
    Verdict,
)
from src.models.validation import validate_profile_set
from src.orchestrator.bundle_store import ModelBundle, bundle_checksum

logger = logging.getLogger(__name__)


def prepare_profiles(profile_set: ProfileSet) -> ProfileSet:
    """Normalized, validated copy of ``profile_set`` (normalizes raw input)."""
    if not profile_set.samples:
        raise DataError("no samples")
    prepared = profile_set if profile_set.is_normalized else normalize(profile_set)
    issues = validate_profile_set(prepared)
    if issues:
        first = issues[0]
        where = f" (sample {first.sample_index})" if first.sample_index is not None else ""
        raise DataError(f"invalid profile set: {first.reason}{where}")
    return prepared


def _mean_counter(profile_set: ProfileSet, indices: List[int], counter: str) -> Optional[float]:
    if counter not in profile_set.counter_spec.names:
        return None
    j = profile_set.counter_spec.index_of(counter)
    return float(np.mean([profile_set.samples[i].values[j] for i in indices]))


def train_pipeline(
    old_profiles: ProfileSet,
    functions: Optional[Sequence[str]] = None,
    k: Optional[int] = None,
    train_cfg: Optional[TrainConfig] = None,
    t: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> ModelBundle:
    """
    Normalize, cluster functions, and train one autoencoder per cluster.

    Cluster ``c`` trains on its functions' samples in profile order with seed
    ``train_cfg.seed + c``; its threshold comes from the errors of those same
    samples.

    Args:
        old_profiles: Profiles of the old version (raw or normalized)
        functions: Changed functions (every function in the set when omitted)
        k: Clusters (settings, then min(4, #functions))
        train_cfg: Optimisation settings (derived from settings when omitted)
        t: Threshold multiplier (settings when omitted)
        settings: Effective configuration

    Returns:
        ModelBundle
    """
    settings = settings or get_settings()
    profiles = prepare_profiles(old_profiles)
    function_index = profiles.function_index()
    functions = list(dict.fromkeys(functions or settings.functions or profiles.functions()))
    for function in functions:
        count = len(function_index.get(function, []))
        if count < settings.min_samples_per_function:
            raise DataError(
                f"function {function} has {count} training samples; at least "
                f"{settings.min_samples_per_function} are required"
            )
    k = k if k is not None else settings.effective_k(len(functions))
    cfg = train_cfg or settings.train_config()
    t = settings.t if t is None else t

    per_function = {f: profiles.matrix(function_index[f]) for f in functions}
    cluster_model = fit_cluster_model(
        per_function, k, seed=cfg.seed, max_iters=settings.kmeans_max_iters, n_init=settings.kmeans_n_init
    )
    topology = settings.topology(profiles.counter_spec.dimension)

    cluster_rows: List[List[int]] = []
    for cluster in range(k):
        members = set(cluster_model.members(cluster))
        cluster_rows.append(sorted(i for f in members for i in function_index[f]))

    def fit(cluster: int) -> AutoencoderModel:
        rows = cluster_rows[cluster]
        logger.info(
            f"Training cluster {cluster}: {len(cluster_model.members(cluster))} functions, {len(rows)} samples"
        )
        seeded = cfg.model_copy(update={"seed": cfg.seed + cluster})
        return train(profiles.matrix(rows), topology, seeded)

    if settings.max_workers > 1 and k > 1:
        with ThreadPoolExecutor(max_workers=settings.max_workers) as pool:
            models = list(pool.map(fit, range(k)))
    else:
        models = [fit(cluster) for cluster in range(k)]

    training_errors = []
    thresholds = []
    for cluster, model in enumerate(models):
        errors = reconstruction_errors(model, profiles.matrix(cluster_rows[cluster]))
        threshold = compute_threshold(errors, t)
        logger.info(
            f"Cluster {cluster} threshold: mu={threshold.mu:.6g} sigma={threshold.sigma:.6g} "
            f"t={threshold.t} gamma={threshold.gamma:.6g}"
        )
        training_errors.append(errors)
        thresholds.append(threshold)

    baseline_cycles = {}
    for function in functions:
        mean = _mean_counter(profiles, function_index[function], settings.cycle_counter)
        if mean is not None:
            baseline_cycles[function] = mean

    config = settings.echo()
    config.update({"k": k, "t": t, "train": cfg.model_dump(mode="json")})
    return ModelBundle(
        program=profiles.program,
        counter_spec=profiles.counter_spec,
        cluster_model=cluster_model,
        models=tuple(models),
        thresholds=tuple(thresholds),
        training_errors=tuple(training_errors),
        functions=tuple(functions),
        baseline_cycles=baseline_cycles,
        config=config,
    )


def _run_groups(profile_set: ProfileSet, indices: List[int]) -> Dict[str, List[int]]:
    groups: Dict[str, List[int]] = {}
    for i in indices:
        groups.setdefault(profile_set.samples[i].run_id, []).append(i)
    return groups


def detect_pipeline(
    bundle: ModelBundle,
    new_profiles: ProfileSet,
    rho: Optional[float] = None,
    settings: Optional[Settings] = None,
    ground_truth: Optional[GroundTruth] = None,
    functions: Optional[Sequence[str]] = None,
    t: Optional[float] = None,
    mapping: Optional[DefectMapping] = None,
) -> DiagnosisReport:
    """
    Score new-version profiles against a trained bundle.

    Each function is scored by its cluster's autoencoder; a (function, run) is
    anomalous when at least ``rho`` of its samples exceed the cluster's gamma,
    and a program run is anomalous when any of its functions is. Rankings
    cover the anomalous samples of anomalous runs.

    Args:
        bundle: Trained state
        new_profiles: Profiles of the new version (raw or normalized)
        rho: Run ratio (settings when omitted)
        settings: Effective configuration
        ground_truth: Labels; adds metrics and a sample-level ROC to the report
        functions: Functions to analyze (those present in both versions when omitted)
        t: Replaces the bundle's threshold multiplier when given
        mapping: Defect rules (settings when omitted)

    Returns:
        DiagnosisReport
    """
    settings = settings or get_settings()
    if not new_profiles.samples:
        raise DataError("no samples")
    if new_profiles.counter_spec.names != bundle.counter_spec.names:
        raise DataError(
            f"counter-spec mismatch: bundle has {bundle.counter_spec.dimension} counters "
            f"({', '.join(bundle.counter_spec.names[:3])}...), profiles have "
            f"{new_profiles.counter_spec.dimension} ({', '.join(new_profiles.counter_spec.names[:3])}...)"
        )
    rho = settings.rho if rho is None else rho
    mapping = mapping or settings.defect_mapping()
    profiles = prepare_profiles(new_profiles)
    names = profiles.counter_spec.names
    function_index = profiles.function_index()

    requested = functions if functions is not None else settings.functions
    if requested is not None:
        analyzed = list(dict.fromkeys(requested))
        absent = [f for f in analyzed if f not in function_index]
        if absent:
            raise DataError(f"function {absent[0]} has no samples in the new profiles")
    else:
        analyzed = [f for f in function_index if f in bundle.functions]
        skipped = [f for f in function_index if f not in bundle.functions]
        if skipped:
            logger.warning(
                f"Not analyzing functions absent from training: {', '.join(skipped)} "
                f"(list them explicitly to route by nearest centroid)"
            )
        if not analyzed:
            raise DataError("no function of the new profiles was seen in training")

    thresholds: List[Threshold] = [th if t is None else th.with_t(t) for th in bundle.thresholds]
    warnings: List[str] = []
    function_reports: List[FunctionReport] = []
    sample_errors: Dict[int, float] = {}
    sample_cluster: Dict[int, int] = {}

    for function in analyzed:
        rows = function_index[function]
        x = profiles.matrix(rows)
        routed_by = "assignment" if function in bundle.cluster_model.function_assignment else "nearest_centroid"
        if routed_by == "nearest_centroid":
            warnings.append(f"function {function} was not seen in training; routed by nearest centroid")
        cluster = route(function, bundle.cluster_model, x, fallback=settings.route_fallback)
        model = bundle.model_for(cluster)
        threshold = thresholds[cluster]
        errors = reconstruction_errors(model, x)
        flags = errors > threshold.gamma
        position = {row: p for p, row in enumerate(rows)}
        for p, row in enumerate(rows):
            sample_errors[row] = float(errors[p])
            sample_cluster[row] = cluster

        run_verdicts: List[RunVerdict] = []
        ranked_rows: List[int] = []
        for run_id, run_rows in _run_groups(profiles, rows).items():
            positions = [position[r] for r in run_rows]
            verdict = classify_run(
                [bool(flags[p]) for p in positions],
                rho,
                run_id=run_id,
                function=function,
                errors=[float(errors[p]) for p in positions],
            )
            if verdict.verdict == Verdict.ANOMALOUS:
                anomalous_rows = [r for r, p in zip(run_rows, positions) if flags[p]]
                ranked_rows.extend(anomalous_rows)
                verdict = verdict.model_copy(update={
                    "root_cause": rank_error_vectors(
                        per_counter_errors(model, profiles.matrix(anomalous_rows)), names, mapping
                    ),
                })
            run_verdicts.append(verdict)

        regressed = bool(ranked_rows)
        ranking = None
        if regressed:
            ranking = rank_error_vectors(per_counter_errors(model, profiles.matrix(sorted(ranked_rows))), names, mapping)
            logger.info(
                f"Function {function} regressed in {sum(v.verdict == Verdict.ANOMALOUS for v in run_verdicts)} "
                f"runs; root cause {ranking.winner} ({ranking.defect.value})"
            )
        function_reports.append(FunctionReport(
            function=function,
            cluster=cluster,
            routed_by=routed_by,
            sample_count=len(rows),
            runs=run_verdicts,
            regressed=regressed,
            ranking=ranking,
            defect=ranking.defect if ranking else None,
        ))

        warning = _degradation_warning(bundle, profiles, function, rows, settings)
        if warning:
            warnings.append(warning)

    run_summaries = _summarize_runs(profiles, function_reports)
    overall = Verdict.ANOMALOUS if any(r.verdict == Verdict.ANOMALOUS for r in run_summaries) else Verdict.NORMAL

    metrics = function_metrics = None
    sample_roc = []
    if ground_truth is not None:
        metrics, function_metrics, sample_roc = _evaluate_against(
            bundle, ground_truth, run_summaries, function_reports, sample_errors, sample_cluster
        )

    config = dict(bundle.config)
    config.update({"rho": rho, "t": thresholds[0].t, "route_fallback": settings.route_fallback})
    report = DiagnosisReport(
        program=profiles.program,
        version_label=profiles.version_label,
        overall_verdict=overall,
        functions=function_reports,
        runs=run_summaries,
        thresholds={str(c): th for c, th in enumerate(thresholds)},
        metrics=metrics,
        function_metrics=function_metrics,
        sample_roc=sample_roc,
        warnings=warnings,
        bundle_checksum=bundle_checksum(bundle),
        config=config,
        seeds={"train": int(bundle.config.get("train", {}).get("seed", 0)), "kmeans": bundle.cluster_model.seed},
    )
    logger.info(
        f"Diagnosis for {report.program}: {overall.value}, "
        f"{sum(r.verdict == Verdict.ANOMALOUS for r in run_summaries)}/{len(run_summaries)} runs anomalous"
    )
    return report


def _degradation_warning(
    bundle: ModelBundle, profiles: ProfileSet, function: str, rows: List[int], settings: Settings
) -> Optional[str]:
    baseline = bundle.baseline_cycles.get(function)
    current = _mean_counter(profiles, rows, settings.cycle_counter)
    if baseline is None or current is None or baseline <= 0:
        return None
    change = (current - baseline) / baseline
    if change < settings.min_degradation_fraction:
        message = (
            f"no performance degradation observed for {function}: mean {settings.cycle_counter} "
            f"per instruction changed by {change:+.1%} (< {settings.min_degradation_fraction:.0%})"
        )
        logger.warning(message)
        return message
    return None


def _summarize_runs(profiles: ProfileSet, function_reports: List[FunctionReport]) -> List[RunSummary]:
    anomalous: Dict[str, List[str]] = {}
    analyzed = set()
    for report in function_reports:
        for verdict in report.runs:
            analyzed.add(verdict.run_id)
            if verdict.verdict == Verdict.ANOMALOUS:
                anomalous.setdefault(verdict.run_id, []).append(report.function)
    return [
        RunSummary(
            run_id=run_id,
            verdict=Verdict.ANOMALOUS if run_id in anomalous else Verdict.NORMAL,
            anomalous_functions=anomalous.get(run_id, []),
        )
        for run_id in profiles.run_index
        if run_id in analyzed
    ]


def _evaluate_against(
    bundle: ModelBundle,
    truth: GroundTruth,
    run_summaries: List[RunSummary],
    function_reports: List[FunctionReport],
    sample_errors: Dict[int, float],
    sample_cluster: Dict[int, int],
):
    bad_runs = set(truth.anomalous_runs)
    metrics = confusion_metrics(
        [r.verdict == Verdict.ANOMALOUS for r in run_summaries],
        [r.run_id in bad_runs for r in run_summaries],
    )
    bad_pairs = {p.key for p in truth.anomalous_function_runs}
    verdicts = [v for report in function_reports for v in report.runs]
    function_metrics = evaluate(verdicts, {v.key: v.key in bad_pairs for v in verdicts})

    bad_samples = set(truth.anomalous_samples)
    groups: List[Tuple[np.ndarray, List[float], List[bool]]] = []
    for cluster in range(bundle.cluster_model.k):
        rows = sorted(r for r, c in sample_cluster.items() if c == cluster)
        if rows:
            groups.append((
                bundle.training_errors[cluster],
                [sample_errors[r] for r in rows],
                [r in bad_samples for r in rows],
            ))
    sample_roc = grouped_roc_sweep(groups, DEFAULT_ROC_T_VALUES)
    return metrics, function_metrics, sample_roc


def diagnose(
    old_profiles: ProfileSet,
    new_profiles: ProfileSet,
    settings: Optional[Settings] = None,
    ground_truth: Optional[GroundTruth] = None,
) -> Tuple[ModelBundle, DiagnosisReport]:
    """Train on the old version and detect on the new one in one call."""
    settings = settings or get_settings()
    if old_profiles.counter_spec.names != new_profiles.counter_spec.names:
        raise DataError("counter-spec mismatch between old and new profiles")
    bundle = train_pipeline(old_profiles, settings=settings)
    return bundle, detect_pipeline(bundle, new_profiles, settings=settings, ground_truth=ground_truth)
