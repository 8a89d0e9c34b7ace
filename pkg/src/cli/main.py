"""Command-line entry point: simulate, train, detect, diagnose, report.

Exit codes: 0 clean, 1 regression detected, 2 data error, 3 configuration
error, 4 internal error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import ValidationError

from src.cli.reporting import load_report, plot_report, render_table, write_report
from src.config import Settings, load_settings
from src.errors import ConfigError, DataError
from src.governance.history import DiagnosisHistory
from src.ingest.parsers import load_profiles
from src.ingest.writers import write_profiles
from src.models.schemas import (
    DefectSpec,
    DiagnosisReport,
    GroundTruth,
    InjectionManifest,
    ProfileFormat,
    ProfileSet,
    Verdict,
    VersionTag,
    WorkloadSpec,
)
from src.orchestrator.bundle_store import ModelBundle, load_bundle, save_bundle
from src.orchestrator.pipeline import detect_pipeline, diagnose, train_pipeline
from src.storage import load_json_model, write_text_atomic
from src.synth.generator import generate, inject
from src.synth.presets import DEFECT_PRESETS, WORKLOAD_PRESETS, get_defect, get_workload

logger = logging.getLogger(__name__)

EXIT_CLEAN = 0
EXIT_REGRESSION = 1
EXIT_DATA_ERROR = 2
EXIT_CONFIG_ERROR = 3
EXIT_INTERNAL_ERROR = 4


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors, not argparse's exit status 2."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def _add_global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="Flat KEY=value config file (PERFSENTINEL_ keys)")
    parser.add_argument("--seed", type=int, default=default, help="Base seed for training, clustering and synthesis")
    parser.add_argument("--t", type=float, default=default, help="Threshold multiplier in gamma = mu + t * sigma")
    parser.add_argument("--rho", type=float, default=default, help="Anomalous-sample fraction that flags a run")
    parser.add_argument("--k", type=int, default=default, help="Number of function clusters")
    parser.add_argument("--out", default=default, help="Output directory")
    parser.add_argument("--format", choices=[f.value for f in ProfileFormat], default=default,
                        help="Profile format written by simulate")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="perfsentinel", description="Zero-positive performance regression diagnosis from HPC profiles")
    _add_global_flags(parser, suppress=False)
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    simulate = commands.add_parser("simulate", help="Write synthetic old/new profiles and an injection manifest")
    simulate.add_argument("--workload", default="reference",
                          help=f"Preset ({', '.join(WORKLOAD_PRESETS)}) or WorkloadSpec JSON path")
    simulate.add_argument("--defect", default=None,
                          help=f"Preset ({', '.join(DEFECT_PRESETS)}) or DefectSpec JSON path")
    simulate.add_argument("--new-runs", type=int, default=None, help="Runs in the new version (workload runs by default)")

    train = commands.add_parser("train", help="Train a model bundle on old-version profiles")
    train.add_argument("old", help="Old-version profiles (CSV or JSONL)")
    train.add_argument("--bundle", default=None, help="Bundle path (<out>/bundle.json by default)")
    train.add_argument("--functions", nargs="+", default=None, help="Changed functions to model")

    detect = commands.add_parser("detect", help="Score new-version profiles against a bundle")
    detect.add_argument("bundle", help="Model bundle")
    detect.add_argument("new", help="New-version profiles (CSV or JSONL)")
    detect.add_argument("--labels", default=None, help="Injection manifest or ground-truth JSON")
    detect.add_argument("--report", default=None, help="Report path (<out>/report.json by default)")
    detect.add_argument("--functions", nargs="+", default=None, help="Functions to analyze")

    diagnose_cmd = commands.add_parser("diagnose", help="Train on old and detect on new in one shot")
    diagnose_cmd.add_argument("old", help="Old-version profiles")
    diagnose_cmd.add_argument("new", help="New-version profiles")
    diagnose_cmd.add_argument("--labels", default=None, help="Injection manifest or ground-truth JSON")
    diagnose_cmd.add_argument("--report", default=None, help="Report path (<out>/report.json by default)")
    diagnose_cmd.add_argument("--bundle", default=None, help="Also keep the trained bundle here")

    report = commands.add_parser("report", help="Render a saved report, plot it, or show the history ledger")
    report.add_argument("path", nargs="?", default=None, help="Report JSON")
    report.add_argument("--plot", default=None, help="Write a PNG of error histograms and the ROC curve")
    report.add_argument("--history", action="store_true", help="Show recent diagnoses from the history ledger")
    report.add_argument("--db", default=None, help="History ledger (history_db_path by default)")
    report.add_argument("--limit", type=int, default=20)

    for sub in (simulate, train, detect, diagnose_cmd, report):
        _add_global_flags(sub, suppress=True)
    return parser


def _settings_from_args(args: argparse.Namespace) -> Settings:
    overrides = {
        "seed": getattr(args, "seed", None),
        "t": getattr(args, "t", None),
        "rho": getattr(args, "rho", None),
        "k": getattr(args, "k", None),
        "out": getattr(args, "out", None),
        "format": getattr(args, "format", None),
    }
    return load_settings(getattr(args, "config", None), overrides)


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _write(path: Path, text: str) -> Path:
    try:
        return write_text_atomic(path, text)
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from e


def _load_workload(value: str) -> WorkloadSpec:
    if value in WORKLOAD_PRESETS or Path(value).suffix.lower() != ".json":
        return get_workload(value)
    return load_json_model(value, WorkloadSpec, "workload spec")


def _load_defect(value: str) -> DefectSpec:
    if value in DEFECT_PRESETS or Path(value).suffix.lower() != ".json":
        return get_defect(value)
    return load_json_model(value, DefectSpec, "defect spec")


def load_ground_truth(path: str) -> GroundTruth:
    """Ground truth from an injection manifest or a GroundTruth document."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read labels {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"labels {path} are not valid JSON: {e}") from e
    try:
        if isinstance(raw, dict) and "sample_indices" in raw:
            return InjectionManifest.model_validate(raw).to_ground_truth()
        return GroundTruth.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid labels {path}: {e}") from e


def _load(path: str, settings: Settings) -> ProfileSet:
    return load_profiles(path, settings.counter_spec())


def _log_history(report: DiagnosisReport, settings: Settings) -> None:
    if not settings.history_db_path:
        return
    with DiagnosisHistory(settings.history_db_path) as history:
        history.log_report(report)


def _finish(report: DiagnosisReport, report_path: Optional[str], settings: Settings) -> int:
    path = Path(report_path) if report_path else Path(settings.out) / "report.json"
    try:
        write_report(report, path)
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from e
    _log_history(report, settings)
    print(render_table(report), end="")
    return EXIT_REGRESSION if report.overall_verdict == Verdict.ANOMALOUS else EXIT_CLEAN


def cmd_simulate(args: argparse.Namespace, settings: Settings) -> int:
    workload = _load_workload(args.workload)
    if getattr(args, "seed", None) is not None:
        workload = workload.model_copy(update={"seed": args.seed})
    fmt = ProfileFormat(settings.format)
    suffix = fmt.value
    out = Path(settings.out)

    old = generate(workload)
    written = [_write(out / f"old_profiles.{suffix}", write_profiles(old, fmt))]
    if args.defect is not None:
        defect = _load_defect(args.defect)
        runs = args.new_runs or workload.runs
        fresh = generate(
            workload.model_copy(update={"runs": runs}),
            version=VersionTag.NEW,
            sample_seed=workload.seed + 1,
        )
        new, manifest = inject(fresh, defect, seed=workload.seed + 2, reference=old)
        written.append(_write(out / f"new_profiles.{suffix}", write_profiles(new, fmt)))
        written.append(_write(out / "manifest.json", manifest.model_dump_json(indent=2) + "\n"))
    for path in written:
        print(path)
    return EXIT_CLEAN


def _save(bundle: ModelBundle, path: Path) -> Path:
    try:
        return save_bundle(bundle, path)
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from e


def _explicit_t(settings: Settings) -> Optional[float]:
    """t from a flag, the environment or the config file; None leaves the bundle's."""
    return settings.t if "t" in settings.model_fields_set else None


def cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    old = _load(args.old, settings)
    bundle = train_pipeline(old, functions=args.functions, settings=settings)
    path = Path(args.bundle) if args.bundle else Path(settings.out) / "bundle.json"
    _save(bundle, path)
    print(path)
    return EXIT_CLEAN


def cmd_detect(args: argparse.Namespace, settings: Settings) -> int:
    bundle = load_bundle(args.bundle)
    new = _load(args.new, settings)
    truth = load_ground_truth(args.labels) if args.labels else None
    report = detect_pipeline(
        bundle,
        new,
        settings=settings,
        ground_truth=truth,
        functions=args.functions,
        t=_explicit_t(settings),
    )
    return _finish(report, args.report, settings)


def cmd_diagnose(args: argparse.Namespace, settings: Settings) -> int:
    old = _load(args.old, settings)
    new = _load(args.new, settings)
    truth = load_ground_truth(args.labels) if args.labels else None
    bundle, report = diagnose(old, new, settings=settings, ground_truth=truth)
    if args.bundle:
        _save(bundle, Path(args.bundle))
    return _finish(report, args.report, settings)


def _history_lines(history: DiagnosisHistory, limit: int) -> List[str]:
    lines = [f"{'id':>4}  {'created':<20}{'program':<16}{'verdict':<11}{'runs':>9}  winners"]
    for record in history.list_recent(limit):
        winners = ", ".join(f"{f}={c}" for f, c in (record.winners or {}).items()) or "-"
        created = record.created_at.strftime("%Y-%m-%d %H:%M:%S") if record.created_at else ""
        lines.append(
            f"{record.id:>4}  {created:<20}{record.program:<16}{record.overall_verdict:<11}"
            f"{record.runs_anomalous:>4}/{record.runs_total:<4}  {winners}"
        )
    summary = history.summary()
    lines.append("")
    lines.append(", ".join(f"{key}={value if value is not None else 'undefined'}" for key, value in summary.items()))
    return lines


def cmd_report(args: argparse.Namespace, settings: Settings) -> int:
    if args.path is None and not args.history:
        raise ConfigError("report needs a report path, --history, or both")
    if args.path is not None:
        report = load_report(args.path)
        print(render_table(report), end="")
        if args.plot:
            plot_report(report, args.plot)
            print(args.plot)
    elif args.plot:
        raise ConfigError("--plot needs a report path")
    if args.history:
        db = args.db or settings.history_db_path
        if not db:
            raise ConfigError("--history needs --db or PERFSENTINEL_HISTORY_DB_PATH")
        with DiagnosisHistory(db) as history:
            print("\n".join(_history_lines(history, args.limit)))
    return EXIT_CLEAN


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "detect": cmd_detect,
    "diagnose": cmd_diagnose,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        settings = _settings_from_args(args)
        _configure_logging(settings.log_level)
        return COMMANDS[args.command](args, settings)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA_ERROR
    except (ConfigError, ValidationError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except Exception as e:
        logger.exception(f"Internal error: {e}")
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
