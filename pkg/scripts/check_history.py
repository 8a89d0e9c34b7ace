#!/usr/bin/env python3
"""Check diagnosis records in the history ledger."""
import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.config import get_settings
from src.governance.history import DiagnosisHistory
from src.models.database import DiagnosisRecord


def main():
    db_path = sys.argv[1] if len(sys.argv) > 1 else get_settings().history_db_path
    if not db_path:
        print("Usage: check_history.py <history.db> (or set PERFSENTINEL_HISTORY_DB_PATH)")
        return 3

    with DiagnosisHistory(db_path) as history:
        records = history.db.query(DiagnosisRecord).order_by(DiagnosisRecord.id).all()
        print(f"\nTotal diagnoses in ledger: {len(records)}\n")

        by_verdict = {}
        for record in records:
            by_verdict.setdefault(record.overall_verdict, []).append(record)

        print("Diagnoses by verdict:")
        for verdict, group in by_verdict.items():
            print(f"  {verdict}: {len(group)}")

        print("\n" + "=" * 80)
        print("Detailed Diagnosis Information:")
        print("=" * 80)

        for record in records:
            print(f"\nDiagnosis ID: {record.id}")
            print(f"  Program: {record.program} {record.version_label or ''}")
            print(f"  Created at: {record.created_at}")
            print(f"  Verdict: {record.overall_verdict} ({record.runs_anomalous}/{record.runs_total} runs)")
            print(f"  Regressed functions: {', '.join(record.regressed_functions or []) or 'none'}")
            for function, winner in (record.winners or {}).items():
                print(f"    {function}: {winner}")
            print(f"  Bundle checksum: {record.bundle_checksum}")
            snapshot = record.metrics
            if snapshot:
                print(f"  Run FPR: {snapshot.run_fpr}  Run FNR: {snapshot.run_fnr}  Function F1: {snapshot.function_f1}")
            print("-" * 80)

        # regressions logged without ground truth cannot be scored
        unscored = [r for r in records if r.overall_verdict == "Anomalous" and r.metrics is None]
        print(f"\n\nRegressions without ground truth: {len(unscored)}")
        for record in unscored:
            print(f"  Diagnosis ID {record.id}: {record.program}")

        print("\nSummary:")
        for key, value in history.summary().items():
            print(f"  {key}: {value if value is not None else 'undefined'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
