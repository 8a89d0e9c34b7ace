"""Report documents, plain-text tables and diagnostic plots."""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from pydantic import ValidationError  # noqa: E402

from src.errors import DataError  # noqa: E402
from src.models.schemas import CounterRanking, DiagnosisReport, EvalMetrics  # noqa: E402
from src.storage import write_text_atomic  # noqa: E402

logger = logging.getLogger(__name__)

RULE = "=" * 78


def write_report(report: DiagnosisReport, path: Union[str, Path]) -> Path:
    written = write_text_atomic(path, report.model_dump_json(indent=2) + "\n")
    logger.info(f"Wrote report to {written}")
    return written


def load_report(path: Union[str, Path]) -> DiagnosisReport:
    try:
        return DiagnosisReport.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise DataError(f"cannot read report {path}: {e}") from e
    except ValidationError as e:
        raise DataError(f"invalid report document {path}: {e}") from e


def _rate(value: Optional[float]) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def _metrics_lines(title: str, metrics: EvalMetrics) -> List[str]:
    return [
        f"{title}:",
        f"  FPR={_rate(metrics.false_positive_rate)}  FNR={_rate(metrics.false_negative_rate)}  "
        f"TPR={_rate(metrics.true_positive_rate)}",
        f"  precision={_rate(metrics.precision)}  recall={_rate(metrics.recall)}  F1={_rate(metrics.f1)}",
        f"  TP={metrics.true_positives} FP={metrics.false_positives} "
        f"TN={metrics.true_negatives} FN={metrics.false_negatives}",
    ]


def _vote_lines(ranking: CounterRanking, top: int = 5) -> List[str]:
    lines = [f"  {'counter':<22}{'votes':>7}{'mean error':>14}"]
    for counter, votes in list(ranking.vote_counts.items())[:top]:
        mean = ranking.mean_errors.get(counter)
        lines.append(f"  {counter:<22}{votes:>7}{_rate(mean):>14}")
    return lines


def render_table(report: DiagnosisReport) -> str:
    """Plain-text rendering of a diagnosis report."""
    config = report.config
    k = config.get("k", len(report.thresholds))
    lines = [
        RULE,
        f"Program: {report.program}" + (f" ({report.version_label})" if report.version_label else ""),
        f"Verdict: {report.overall_verdict.value}",
        f"t={config.get('t')}  rho={config.get('rho')}  k={k}  seeds={report.seeds}",
        RULE,
        "Thresholds:",
        f"  {'cluster':<9}{'mu':>14}{'sigma':>14}{'t':>7}{'gamma':>14}",
    ]
    for cluster, th in sorted(report.thresholds.items(), key=lambda item: int(item[0])):
        lines.append(f"  {cluster:<9}{th.mu:>14.6g}{th.sigma:>14.6g}{th.t:>7.2f}{th.gamma:>14.6g}")

    lines += ["", f"  {'function':<24}{'run':<12}{'samples':>8}{'anomalous':>11}  verdict"]
    for function in report.functions:
        for verdict in function.runs:
            lines.append(
                f"  {function.function:<24}{verdict.run_id:<12}{len(verdict.flags):>8}"
                f"{verdict.anomalous_fraction:>11.3f}  {verdict.verdict.value}"
            )

    for function in report.functions:
        if function.ranking is None:
            continue
        lines += [
            "",
            f"Root cause for {function.function} (cluster {function.cluster}): "
            f"{function.ranking.winner} -> {function.ranking.defect.value}",
        ]
        lines += _vote_lines(function.ranking)

    if report.metrics is not None:
        lines += [""] + _metrics_lines("Run-level metrics", report.metrics)
    if report.function_metrics is not None:
        lines += [""] + _metrics_lines("Function-run metrics", report.function_metrics)
    if report.warnings:
        lines += ["", "Warnings:"] + [f"  - {w}" for w in report.warnings]
    lines.append(RULE)
    return "\n".join(lines) + "\n"


def _errors_by_cluster(report: DiagnosisReport) -> Dict[int, List[float]]:
    errors: Dict[int, List[float]] = {}
    for function in report.functions:
        for verdict in function.runs:
            errors.setdefault(function.cluster, []).extend(verdict.errors)
    return errors


def plot_report(report: DiagnosisReport, path: Union[str, Path]) -> Path:
    """
    PNG with one reconstruction-error histogram per cluster (gamma marked)
    and, when the report carries one, the sample-level ROC curve.
    """
    errors = _errors_by_cluster(report)
    clusters = sorted(errors)
    panels = len(clusters) + (1 if report.sample_roc else 0)
    if panels == 0:
        raise DataError("report has no reconstruction errors to plot")

    fig, axes = plt.subplots(1, panels, figsize=(4 * panels, 3.2), squeeze=False)
    for ax, cluster in zip(axes[0], clusters):
        ax.hist(errors[cluster], bins=30, color="#4c72b0", alpha=0.8)
        threshold = report.thresholds.get(str(cluster))
        if threshold is not None:
            ax.axvline(threshold.gamma, color="#c44e52", linestyle="--", label=f"gamma (t={threshold.t:g})")
            ax.legend(fontsize=8)
        ax.set_title(f"Cluster {cluster}", fontsize=10)
        ax.set_xlabel("reconstruction error")
        ax.set_ylabel("samples")

    if report.sample_roc:
        ax = axes[0][-1]
        points = [p for p in report.sample_roc if p.fpr is not None and p.tpr is not None]
        ax.plot([p.fpr for p in points], [p.tpr for p in points], marker="o", markersize=3)
        ax.plot([0, 1], [0, 1], color="grey", linewidth=0.8, linestyle=":")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.set_title("ROC over t", fontsize=10)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")

    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    logger.info(f"Wrote plot to {path}")
    return path
