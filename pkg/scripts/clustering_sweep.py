#!/usr/bin/env python3
"""F1 and training cost of the paired-function program as k goes from 1 to 7."""
import argparse
import json
import logging
import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.config import load_settings
from src.orchestrator.experiments import build_clustering_scenario, clustering_sweep


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--runs", type=int, default=30, help="Runs per version; half of the new ones are injected")
    parser.add_argument("--k", type=int, nargs="+", default=[1, 2, 3, 4, 5, 6, 7])
    parser.add_argument("--json", action="store_true", help="Print points as JSON")
    args = parser.parse_args()

    settings = load_settings(args.config)
    logging.basicConfig(level=getattr(logging, settings.log_level.upper(), logging.INFO))
    scenario = build_clustering_scenario(seed=args.seed, runs=args.runs)
    points = clustering_sweep(scenario.old, scenario.new, scenario.ground_truth, args.k, settings=settings)

    if args.json:
        print(json.dumps([p.model_dump(mode="json") for p in points], indent=2))
        return 0

    print(f"\n{'k':>3}{'AEs':>6}{'F1':>9}{'run FPR':>10}{'run FNR':>10}{'train s':>10}")
    print("=" * 48)
    for p in points:
        f1 = "undefined" if p.f1 is None else f"{p.f1:.3f}"
        fpr = "undefined" if p.run_fpr is None else f"{p.run_fpr:.3f}"
        fnr = "undefined" if p.run_fnr is None else f"{p.run_fnr:.3f}"
        print(f"{p.k:>3}{p.autoencoders:>6}{f1:>9}{fpr:>10}{fnr:>10}{p.train_seconds:>10.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
