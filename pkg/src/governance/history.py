"""Diagnosis history: a SQLite ledger of detect and diagnose runs."""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from sqlalchemy.orm import Session

from src.models.database import DiagnosisRecord, MetricsSnapshot, get_session_factory
from src.models.schemas import DiagnosisReport, Verdict

logger = logging.getLogger(__name__)


class DiagnosisHistory:
    """Logs diagnosis reports and summarizes them over time."""

    def __init__(self, db_path: Union[str, Path]):
        """
        Open (or create) the ledger.

        Args:
            db_path: SQLite file path
        """
        self.db_path = str(db_path)
        self.db: Session = get_session_factory(db_path)()

    def close(self) -> None:
        self.db.close()

    def __enter__(self) -> "DiagnosisHistory":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def log_report(self, report: DiagnosisReport) -> int:
        """
        Store a report, plus a metrics snapshot when it was evaluated.

        Args:
            report: Diagnosis report

        Returns:
            Diagnosis record ID
        """
        record = DiagnosisRecord(
            program=report.program,
            version_label=report.version_label or None,
            overall_verdict=report.overall_verdict.value,
            runs_total=len(report.runs),
            runs_anomalous=sum(1 for r in report.runs if r.verdict == Verdict.ANOMALOUS),
            regressed_functions=report.regressed_functions,
            winners={f.function: f.ranking.winner for f in report.functions if f.ranking is not None},
            bundle_checksum=report.bundle_checksum,
            report_json=report.model_dump_json(),
            config_json=report.config,
        )
        self.db.add(record)
        self.db.commit()
        self.db.refresh(record)

        if report.metrics is not None or report.function_metrics is not None:
            snapshot = MetricsSnapshot(
                diagnosis_id=record.id,
                run_fpr=report.metrics.false_positive_rate if report.metrics else None,
                run_fnr=report.metrics.false_negative_rate if report.metrics else None,
                function_f1=report.function_metrics.f1 if report.function_metrics else None,
                additional_metrics={
                    "run": report.metrics.model_dump(mode="json") if report.metrics else None,
                    "function_run": report.function_metrics.model_dump(mode="json") if report.function_metrics else None,
                },
            )
            self.db.add(snapshot)
            self.db.commit()

        logger.info(f"Logged diagnosis {record.id} for {report.program} to {self.db_path}")
        return record.id

    def list_recent(self, limit: int = 20) -> List[DiagnosisRecord]:
        return (
            self.db.query(DiagnosisRecord)
            .order_by(DiagnosisRecord.created_at.desc(), DiagnosisRecord.id.desc())
            .limit(limit)
            .all()
        )

    def get(self, record_id: int) -> Optional[DiagnosisReport]:
        """Stored report by ID, None when absent."""
        record = self.db.query(DiagnosisRecord).filter(DiagnosisRecord.id == record_id).first()
        if record is None:
            return None
        return DiagnosisReport.model_validate_json(record.report_json)

    def summary(self) -> Dict[str, Any]:
        """
        Totals over the whole ledger.

        Returns:
            count, regressions, regression_rate, evaluated, mean_run_fpr,
            mean_run_fnr, mean_function_f1 (None when nothing to average)
        """
        records = self.db.query(DiagnosisRecord).all()
        snapshots = self.db.query(MetricsSnapshot).all()
        regressions = sum(1 for r in records if r.overall_verdict == Verdict.ANOMALOUS.value)

        def mean(values: List[Optional[float]]) -> Optional[float]:
            present = [v for v in values if v is not None]
            return sum(present) / len(present) if present else None

        return {
            "count": len(records),
            "regressions": regressions,
            "regression_rate": regressions / len(records) if records else None,
            "evaluated": len(snapshots),
            "mean_run_fpr": mean([s.run_fpr for s in snapshots]),
            "mean_run_fnr": mean([s.run_fnr for s in snapshots]),
            "mean_function_f1": mean([s.function_f1 for s in snapshots]),
        }
