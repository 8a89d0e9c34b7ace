#!/usr/bin/env python3
"""Run-level FPR/FNR and root cause for each preset defect scenario."""
import argparse
import json
import logging
import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.config import load_settings
from src.orchestrator.experiments import scenario_table
from src.synth.presets import SCENARIOS


def _rate(value):
    return "undefined" if value is None else f"{value:.3f}"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--normal-runs", type=int, default=20)
    parser.add_argument("--injected-runs", type=int, default=20)
    parser.add_argument("--scenarios", nargs="+", default=SCENARIOS)
    parser.add_argument("--json", action="store_true", help="Print rows as JSON")
    args = parser.parse_args()

    settings = load_settings(args.config)
    logging.basicConfig(level=getattr(logging, settings.log_level.upper(), logging.INFO))
    rows = scenario_table(
        args.scenarios, settings=settings, seed=args.seed,
        normal_runs=args.normal_runs, injected_runs=args.injected_runs,
    )

    if args.json:
        print(json.dumps([row.model_dump(mode="json") for row in rows], indent=2))
        return 0

    print(f"\n{'scenario':<16}{'injected':<18}{'FPR':>8}{'FNR':>8}  {'winner':<30}{'inferred':<18}runs")
    print("=" * 110)
    for row in rows:
        print(
            f"{row.scenario:<16}{row.injected_defect.value:<18}{_rate(row.run_fpr):>8}{_rate(row.run_fnr):>8}  "
            f"{row.winner or '-':<30}{row.inferred_defect.value if row.inferred_defect else '-':<18}"
            f"{row.runs_with_target_winner}/{row.injected_runs}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
