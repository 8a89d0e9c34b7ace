"""Emit raw profile sets in the formats the parsers consume."""
import csv
import io
import json

from src.errors import DataError
from src.ingest.parsers import METADATA_COLUMNS
from src.models.schemas import ProfileFormat, ProfileSet


def _version_field(profile_set: ProfileSet) -> str:
    if profile_set.version_label:
        return f"{profile_set.version.value}:{profile_set.version_label}"
    return profile_set.version.value


def write_profiles(profile_set: ProfileSet, fmt: ProfileFormat) -> str:
    """
    Serialize a raw ProfileSet as CSV (header row mandatory) or JSONL.

    Args:
        profile_set: Raw profile set
        fmt: Target format

    Returns:
        Document text
    """
    if any(s.normalized for s in profile_set.samples):
        raise DataError("only raw profile sets can be written as CSV/JSONL; use save_profile_set for normalized data")
    names = profile_set.counter_spec.names
    version = _version_field(profile_set)

    if ProfileFormat(fmt) == ProfileFormat.CSV:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(METADATA_COLUMNS + names)
        for s in profile_set.samples:
            writer.writerow(
                [profile_set.program, version, s.function, s.run_id, s.thread_count, s.instruction_count]
                + [int(v) for v in s.values]
            )
        return buffer.getvalue()

    lines = []
    for s in profile_set.samples:
        lines.append(json.dumps({
            "program": profile_set.program,
            "version": version,
            "function": s.function,
            "run_id": s.run_id,
            "threads": s.thread_count,
            "instructions": s.instruction_count,
            "counters": {name: int(v) for name, v in zip(names, s.values)},
        }))
    return "\n".join(lines) + "\n"
