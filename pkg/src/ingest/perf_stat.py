"""Adapter for `perf stat -x,` machine-readable output.

Each non-comment line is ``value,unit,event,run_time,percentage[,metric,metric_unit]``.
Only ``value`` (field 0) and ``event`` (field 2) are used. ``value`` may be the
markers ``<not counted>`` or ``<not supported>``; both are errors for events the
counter spec requires. Event names are matched exactly, then case-insensitively,
then with the PMU wrapper (``cpu_core/instructions/``) and privilege modifiers
(``:u``, ``:k``, ``:ku``...) removed.
"""
import logging
import re
from typing import Dict, Optional

from pydantic import BaseModel, Field

from src.errors import DataError
from src.ingest.parsers import Source, decode_source
from src.models.schemas import CounterSpec, HpcSample, ProfileSet, VersionTag

logger = logging.getLogger(__name__)

UNCOUNTED_MARKERS = ("<not counted>", "<not supported>")
_MODIFIER = re.compile(r":[ukhpPGHSID]+$")
_PMU_WRAPPED = re.compile(r"^[\w.-]+/([^/]+)/[\w]*$")


class PerfRunMetadata(BaseModel):
    """What perf output does not carry about the measured invocation."""
    program: str
    version: VersionTag = VersionTag.NEW
    version_label: str = ""
    function: str
    run_id: str
    thread_count: int = Field(1, ge=1)
    instruction_count: Optional[int] = Field(None, gt=0, description="Taken from the instructions event when omitted")
    instructions_event: str = "instructions"


def canonical_event(name: str) -> str:
    """Strip the PMU wrapper and privilege modifiers from a perf event name."""
    name = name.strip()
    match = _PMU_WRAPPED.match(name)
    if match:
        name = match.group(1)
    return _MODIFIER.sub("", name)


def parse_perf_stat(source: Source, spec: CounterSpec, metadata: PerfRunMetadata) -> ProfileSet:
    """
    Turn one `perf stat -x,` invocation into a single raw sample.

    Args:
        source: perf's CSV output (usually captured from stderr)
        spec: Counters to extract
        metadata: Function, run and thread information for the sample

    Returns:
        ProfileSet with exactly one raw sample
    """
    text = decode_source(source)
    counts: Dict[str, int] = {}
    recognized = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split(",")
        if len(fields) < 3 or not fields[2].strip():
            logger.debug(f"perf line {line_no} has no event field, skipped")
            continue
        event = fields[2].strip()
        value = fields[0].strip()
        if value in UNCOUNTED_MARKERS:
            needs_instructions = metadata.instruction_count is None and _is_instructions(event, metadata)
            if _match_counter(event, spec) is not None or needs_instructions:
                raise DataError(f"line {line_no}: event {event} is {value}")
            logger.warning(f"line {line_no}: event {event} is {value} (not in counter spec, ignored)")
            continue
        try:
            count = _parse_perf_value(value)
        except ValueError:
            logger.debug(f"perf line {line_no} value {value!r} is not a count, skipped")
            continue
        recognized += 1
        key = _match_counter(event, spec)
        if key is None and _is_instructions(event, metadata):
            key = "__instructions__"
        if key is None:
            continue
        if key in counts:
            logger.warning(f"Event {event} reported more than once; summing counts")
            counts[key] += count
        else:
            counts[key] = count

    if recognized == 0:
        raise DataError("no samples")

    missing = [name for name in spec.names if name not in counts]
    if missing:
        raise DataError(f"perf output lacks required counter {missing[0]}")

    instructions = metadata.instruction_count
    if instructions is None:
        instructions = counts.get("__instructions__")
        if not instructions:
            raise DataError(
                f"no instruction count: pass it in the run metadata or record the "
                f"{metadata.instructions_event} event"
            )

    sample = HpcSample(
        function=metadata.function,
        run_id=metadata.run_id,
        thread_count=metadata.thread_count,
        instruction_count=instructions,
        values=tuple(counts[name] for name in spec.names),
        normalized=False,
    )
    return ProfileSet.from_samples(
        metadata.program, metadata.version, spec, [sample], version_label=metadata.version_label
    )


def _parse_perf_value(value: str) -> int:
    number = float(value) if any(c in value for c in ".eE") else int(value)
    if isinstance(number, float):
        if not number.is_integer():
            raise ValueError(value)
        number = int(number)
    if number < 0:
        raise ValueError(value)
    return number


def _match_counter(event: str, spec: CounterSpec) -> Optional[str]:
    names = spec.names
    if event in names:
        return event
    lowered = {n.lower(): n for n in names}
    if event.lower() in lowered:
        return lowered[event.lower()]
    canonical = canonical_event(event)
    if canonical in names:
        return canonical
    return lowered.get(canonical.lower())


def _is_instructions(event: str, metadata: PerfRunMetadata) -> bool:
    return canonical_event(event).lower() == metadata.instructions_event.lower()
