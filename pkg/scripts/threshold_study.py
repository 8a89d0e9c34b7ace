#!/usr/bin/env python3
"""Sample-level ROC of gamma_t next to the input-relative alpha_x rule, optionally plotted."""
import argparse
import logging
import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from src.config import load_settings  # noqa: E402
from src.orchestrator.experiments import build_scenario, threshold_study  # noqa: E402
from src.synth.presets import DEFECT_PRESETS, get_defect, reference_workload  # noqa: E402


def _rate(value):
    return "undefined" if value is None else f"{value:.3f}"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--defect", default="hitm_offset", choices=sorted(DEFECT_PRESETS))
    parser.add_argument("--training-runs", type=int, default=100, help="Runs of the old version to train on")
    parser.add_argument("--plot", default=None, help="Write both ROC curves to this PNG")
    args = parser.parse_args()

    settings = load_settings(args.config)
    logging.basicConfig(level=getattr(logging, settings.log_level.upper(), logging.INFO))
    workload = reference_workload(seed=args.seed, runs=args.training_runs)
    scenario = build_scenario(workload, get_defect(args.defect), seed=args.seed, name=args.defect)
    study = threshold_study(scenario, settings=settings)

    print(f"\ngamma_t ({args.defect})")
    print(f"{'t':>6}{'FPR':>10}{'TPR':>10}")
    for p in study.gamma_t:
        print(f"{p.parameter:>6.2f}{_rate(p.fpr):>10}{_rate(p.tpr):>10}")
    print(f"\nalpha_x ({args.defect})")
    print(f"{'x %':>6}{'FPR':>10}{'TPR':>10}")
    for p in study.alpha_x:
        print(f"{p.parameter:>6.0f}{_rate(p.fpr):>10}{_rate(p.tpr):>10}")

    if args.plot:
        fig, ax = plt.subplots(figsize=(4.5, 4))
        for label, points in (("gamma_t", study.gamma_t), ("alpha_x", study.alpha_x)):
            shown = [p for p in points if p.fpr is not None and p.tpr is not None]
            ax.plot([p.fpr for p in shown], [p.tpr for p in shown], marker="o", markersize=3, label=label)
        ax.plot([0, 1], [0, 1], color="grey", linewidth=0.8, linestyle=":")
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        plt.close(fig)
        print(f"\nWrote {args.plot}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
