"""Synthetic experiments: defect scenarios, clustering sweeps and threshold studies."""
import logging
import time
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from src.config import Settings, get_settings
from src.detection.detector import (
    DEFAULT_RELATIVE_X_VALUES,
    DEFAULT_ROC_T_VALUES,
    grouped_roc_sweep,
    relative_length_scores,
    relative_length_sweep,
)
from src.detection.rootcause import map_defect
from src.learning.autoencoder import reconstruction_errors
from src.learning.clustering import route
from src.models.schemas import (
    DefectSpec,
    DefectType,
    GroundTruth,
    InjectionManifest,
    ProfileSet,
    RocPoint,
    VersionTag,
    WorkloadSpec,
)
from src.orchestrator.pipeline import detect_pipeline, prepare_profiles, train_pipeline
from src.synth.generator import generate, inject
from src.synth.presets import (
    PAIRED_QUIET_FUNCTIONS,
    SCENARIOS,
    get_defect,
    paired_workload,
    reference_workload,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scenario:
    """Old profiles plus a new version whose injected runs are known."""
    name: str
    old: ProfileSet
    new: ProfileSet
    manifest: InjectionManifest

    @property
    def ground_truth(self) -> GroundTruth:
        return self.manifest.to_ground_truth()


class ScenarioResult(BaseModel):
    """One row of the defect-scenario table."""
    scenario: str
    injected_defect: DefectType
    target_counters: List[str]
    run_fpr: Optional[float] = None
    run_fnr: Optional[float] = None
    injected_runs: int = 0
    runs_with_target_winner: int = 0
    winner: Optional[str] = None
    inferred_defect: Optional[DefectType] = None


class ClusteringPoint(BaseModel):
    """Accuracy and cost of one k in a clustering sweep."""
    k: int
    autoencoders: int
    f1: Optional[float] = None
    run_fpr: Optional[float] = None
    run_fnr: Optional[float] = None
    train_seconds: float = Field(..., ge=0.0)


class ThresholdStudy(BaseModel):
    """Sample-level ROC of the gamma_t rule next to the input-relative alpha_x rule."""
    gamma_t: List[RocPoint]
    alpha_x: List[RocPoint]


def build_scenario(
    workload: WorkloadSpec,
    defect: DefectSpec,
    seed: int = 0,
    normal_runs: int = 20,
    injected_runs: int = 20,
    name: str = "scenario",
) -> Scenario:
    """
    Old-version profiles and a new version with ``injected_runs`` perturbed runs.

    The new version is drawn with the same factor structure but fresh samples,
    then the defect is injected into ``injected_runs`` of its runs (offsets in
    units of the old version's per-function std).
    """
    old = generate(workload.model_copy(update={"seed": seed}))
    total = normal_runs + injected_runs
    fresh = generate(
        workload.model_copy(update={"seed": seed, "runs": total}),
        version=VersionTag.NEW,
        sample_seed=seed + 1,
    )
    spec = defect.model_copy(update={"affected_run_fraction": injected_runs / total})
    new, manifest = inject(fresh, spec, seed=seed + 2, reference=old)
    return Scenario(name=name, old=old, new=new, manifest=manifest)


def build_clustering_scenario(seed: int = 0, runs: int = 30) -> Scenario:
    """
    Snoop-counter shift in the quiet function of each look-alike pair.

    Half of the new version's runs are injected. The shift is two of the quiet
    function's own std, small next to the gap between a quiet function and its
    twin, so it only stands out once the pair is split across clusters.
    """
    defect = get_defect("snoop_shift").model_copy(update={"affected_functions": list(PAIRED_QUIET_FUNCTIONS)})
    injected = runs // 2
    return build_scenario(
        paired_workload(seed=seed, runs=runs), defect, seed=seed,
        normal_runs=runs - injected, injected_runs=injected, name="snoop_shift",
    )


def _winner_of_run(report, run_id: str) -> Optional[str]:
    winners = []
    for function in report.functions:
        for verdict in function.runs:
            if verdict.run_id == run_id and verdict.root_cause is not None:
                winners.append((verdict.anomalous_fraction, verdict.root_cause.winner))
    if not winners:
        return None
    return max(winners, key=lambda w: w[0])[1]


def run_scenario(scenario: Scenario, settings: Optional[Settings] = None) -> ScenarioResult:
    settings = settings or get_settings()
    bundle = train_pipeline(scenario.old, settings=settings)
    report = detect_pipeline(bundle, scenario.new, settings=settings, ground_truth=scenario.ground_truth)
    defect = scenario.manifest.defect
    winners = [_winner_of_run(report, r) for r in scenario.manifest.run_ids]
    named = [w for w in winners if w is not None]
    winner = Counter(named).most_common(1)[0][0] if named else None
    return ScenarioResult(
        scenario=scenario.name,
        injected_defect=defect.defect,
        target_counters=list(defect.target_counters),
        run_fpr=report.metrics.false_positive_rate if report.metrics else None,
        run_fnr=report.metrics.false_negative_rate if report.metrics else None,
        injected_runs=len(scenario.manifest.run_ids),
        runs_with_target_winner=sum(1 for w in winners if w in defect.target_counters),
        winner=winner,
        inferred_defect=map_defect(winner, settings.defect_mapping()) if winner else None,
    )


def scenario_table(
    scenarios: Sequence[str] = tuple(SCENARIOS),
    settings: Optional[Settings] = None,
    seed: int = 0,
    normal_runs: int = 20,
    injected_runs: int = 20,
) -> List[ScenarioResult]:
    """Run-level FPR/FNR and root cause for each preset defect scenario."""
    rows = []
    for name in scenarios:
        scenario = build_scenario(
            reference_workload(seed=seed), get_defect(name), seed=seed,
            normal_runs=normal_runs, injected_runs=injected_runs, name=name,
        )
        rows.append(run_scenario(scenario, settings))
        logger.info(f"Scenario {name}: FPR={rows[-1].run_fpr} FNR={rows[-1].run_fnr} winner={rows[-1].winner}")
    return rows


def clustering_sweep(
    old: ProfileSet,
    new: ProfileSet,
    truth: GroundTruth,
    k_values: Sequence[int],
    settings: Optional[Settings] = None,
) -> List[ClusteringPoint]:
    """F1 over (function, run) pairs, run-level rates and training time per k."""
    settings = settings or get_settings()
    points = []
    for k in k_values:
        started = time.perf_counter()
        bundle = train_pipeline(old, k=k, settings=settings)
        elapsed = time.perf_counter() - started
        report = detect_pipeline(bundle, new, settings=settings, ground_truth=truth)
        points.append(ClusteringPoint(
            k=k,
            autoencoders=len(bundle.models),
            f1=report.function_metrics.f1 if report.function_metrics else None,
            run_fpr=report.metrics.false_positive_rate if report.metrics else None,
            run_fnr=report.metrics.false_negative_rate if report.metrics else None,
            train_seconds=elapsed,
        ))
        logger.info(f"k={k}: F1={points[-1].f1} in {elapsed:.1f}s")
    return points


def threshold_study(
    scenario: Scenario,
    settings: Optional[Settings] = None,
    t_values: Sequence[float] = DEFAULT_ROC_T_VALUES,
    x_values: Sequence[float] = DEFAULT_RELATIVE_X_VALUES,
) -> ThresholdStudy:
    """gamma_t ROC next to the alpha_x ROC on the same trained models and samples."""
    settings = settings or get_settings()
    bundle = train_pipeline(scenario.old, settings=settings)
    profiles = prepare_profiles(scenario.new)
    bad = set(scenario.ground_truth.anomalous_samples)

    groups = []
    scores: List[float] = []
    labels: List[bool] = []
    for function, rows in profiles.function_index().items():
        if function not in bundle.functions:
            continue
        x = profiles.matrix(rows)
        cluster = route(function, bundle.cluster_model, x, fallback=settings.route_fallback)
        model = bundle.model_for(cluster)
        truth = [r in bad for r in rows]
        groups.append((bundle.training_errors[cluster], reconstruction_errors(model, x).tolist(), truth))
        scores.extend(relative_length_scores(model, x).tolist())
        labels.extend(truth)
    return ThresholdStudy(
        gamma_t=grouped_roc_sweep(groups, list(t_values)),
        alpha_x=relative_length_sweep(np.asarray(scores), labels, x_values),
    )
