"""Tests for the diagnosis history ledger."""
import pytest

from src.governance.history import DiagnosisHistory
from src.models.database import DiagnosisRecord, MetricsSnapshot


@pytest.fixture
def history(tmp_path):
    with DiagnosisHistory(tmp_path / "ledger" / "history.db") as ledger:
        yield ledger


class TestDiagnosisHistory:
    """Tests for DiagnosisHistory."""

    def test_log_and_get(self, history, tiny_report):
        """A logged report can be read back unchanged."""
        record_id = history.log_report(tiny_report)
        assert history.get(record_id) == tiny_report
        assert history.get(record_id + 100) is None

    def test_record_fields(self, history, tiny_report):
        """Records summarize verdicts and winners; evaluated reports get a snapshot."""
        record_id = history.log_report(tiny_report)
        record = history.db.query(DiagnosisRecord).filter(DiagnosisRecord.id == record_id).one()
        assert record.program == "tiny"
        assert record.overall_verdict == "Anomalous"
        assert record.winners == {"alpha": "HITM", "beta": "HITM"}
        assert record.runs_total == 8
        assert record.metrics is not None
        assert record.metrics.run_fnr == 0.0

    def test_unevaluated_report_has_no_snapshot(self, history, tiny_report):
        """Reports without ground truth are logged without metrics."""
        history.log_report(tiny_report.model_copy(update={"metrics": None, "function_metrics": None}))
        assert history.db.query(MetricsSnapshot).count() == 0

    def test_list_recent(self, history, tiny_report):
        """Newest records come first and the limit is honoured."""
        ids = [history.log_report(tiny_report) for _ in range(3)]
        assert [r.id for r in history.list_recent(2)] == [ids[2], ids[1]]

    def test_summary(self, history, tiny_report):
        """Summary counts regressions and averages snapshot metrics."""
        history.log_report(tiny_report)
        history.log_report(tiny_report.model_copy(update={"metrics": None, "function_metrics": None}))
        summary = history.summary()
        assert summary["count"] == 2
        assert summary["regressions"] == 2
        assert summary["regression_rate"] == 1.0
        assert summary["evaluated"] == 1
        assert summary["mean_run_fnr"] == 0.0

    def test_empty_summary(self, history):
        """An empty ledger has undefined rates."""
        summary = history.summary()
        assert summary["count"] == 0
        assert summary["regression_rate"] is None
        assert summary["mean_function_f1"] is None
