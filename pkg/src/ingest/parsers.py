"""CSV and JSONL profile parsers."""
import csv
import json
import logging
from pathlib import Path
from typing import Any, BinaryIO, Dict, Iterator, List, Optional, Tuple, Union

from src.errors import DataError
from src.models.schemas import CounterSpec, HpcSample, ProfileFormat, ProfileSet, VersionTag

logger = logging.getLogger(__name__)

METADATA_COLUMNS = ["program", "version", "function", "run_id", "threads", "instructions"]
UINT64_MAX = 2**64 - 1

Source = Union[bytes, BinaryIO]


def parse_profiles(source: Source, fmt: ProfileFormat, spec: CounterSpec) -> ProfileSet:
    """
    Parse a CSV or JSONL profile document into a raw ProfileSet.

    Args:
        source: UTF-8 encoded bytes or a binary stream
        fmt: Document format
        spec: Counters that must be present, in feature order

    Returns:
        ProfileSet with raw samples in input order
    """
    text = decode_source(source)
    if ProfileFormat(fmt) == ProfileFormat.CSV:
        records = list(_csv_records(text, spec))
    else:
        records = list(_jsonl_records(text, spec))
    return _assemble(records, spec)


def load_profiles(path: Union[str, Path], spec: CounterSpec, fmt: Optional[ProfileFormat] = None) -> ProfileSet:
    """Read a profile file, inferring the format from its suffix when not given."""
    path = Path(path)
    fmt = fmt or infer_format(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read profiles {path}: {e}") from e
    return parse_profiles(data, fmt, spec)


def infer_format(path: Path) -> ProfileFormat:
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".ndjson"):
        return ProfileFormat.JSONL
    return ProfileFormat.CSV


def parse_version(text: str, line_no: int) -> Tuple[VersionTag, str]:
    """'old', 'new' or 'tag:label'."""
    tag, _, label = text.strip().partition(":")
    try:
        return VersionTag(tag.strip().lower()), label.strip()
    except ValueError:
        raise DataError(f"line {line_no}: field 'version' must be old or new (optionally ':label'), got {text!r}")


def decode_source(source: Source) -> str:
    data = source if isinstance(source, (bytes, bytearray)) else source.read()
    try:
        return bytes(data).decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataError(f"profile source is not valid UTF-8: {e}") from e


def _content_lines(text: str) -> Iterator[Tuple[int, str]]:
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield line_no, line


def _parse_count(value: Any, line_no: int, field: str, minimum: int = 0) -> int:
    if isinstance(value, bool):
        raise DataError(f"line {line_no}: field '{field}' must be an integer, got {value!r}")
    if isinstance(value, int):
        number = value
    elif isinstance(value, float) and value.is_integer():
        number = int(value)
    else:
        try:
            number = int(str(value).strip())
        except ValueError:
            raise DataError(f"line {line_no}: field '{field}' must be an integer, got {value!r}")
    if number < minimum or number > UINT64_MAX:
        raise DataError(f"line {line_no}: field '{field}' out of range: {number}")
    return number


def _csv_records(text: str, spec: CounterSpec) -> Iterator[Dict[str, Any]]:
    lines = _content_lines(text)
    try:
        header_line_no, header_line = next(lines)
    except StopIteration:
        raise DataError("no samples")
    header = [h.strip() for h in next(csv.reader([header_line]))]
    if header[:len(METADATA_COLUMNS)] != METADATA_COLUMNS:
        raise DataError(
            f"line {header_line_no}: header must start with {','.join(METADATA_COLUMNS)}, "
            f"got {','.join(header[:len(METADATA_COLUMNS)])}"
        )
    counter_columns = header[len(METADATA_COLUMNS):]
    positions = {name: i for i, name in enumerate(header)}
    for name in spec.names:
        if name not in positions:
            raise DataError(f"missing required counter column {name}")
    extra = [c for c in counter_columns if c not in set(spec.names)]
    if extra:
        logger.warning(f"Ignoring counter columns not in the counter spec: {', '.join(extra)}")

    for line_no, line in lines:
        row = next(csv.reader([line]))
        if len(row) != len(header):
            raise DataError(f"line {line_no}: expected {len(header)} fields, got {len(row)}")
        yield {
            "line_no": line_no,
            "program": row[positions["program"]].strip(),
            "version": row[positions["version"]],
            "function": row[positions["function"]].strip(),
            "run_id": row[positions["run_id"]].strip(),
            "threads": row[positions["threads"]],
            "instructions": row[positions["instructions"]],
            "counters": {name: row[positions[name]] for name in spec.names},
        }


def _jsonl_records(text: str, spec: CounterSpec) -> Iterator[Dict[str, Any]]:
    for line_no, line in _content_lines(text):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"line {line_no}: invalid JSON: {e.msg}")
        if not isinstance(obj, dict):
            raise DataError(f"line {line_no}: expected a JSON object")
        for key in METADATA_COLUMNS:
            if key not in obj:
                raise DataError(f"line {line_no}: missing field '{key}'")
        counters = obj.get("counters")
        if not isinstance(counters, dict):
            raise DataError(f"line {line_no}: field 'counters' must be an object")
        for name in spec.names:
            if name not in counters:
                raise DataError(f"line {line_no}: missing required counter {name}")
        extra = sorted(set(counters) - set(spec.names))
        if extra:
            logger.warning(f"line {line_no}: ignoring counters not in the counter spec: {', '.join(extra)}")
        yield {
            "line_no": line_no,
            "program": str(obj["program"]).strip(),
            "version": str(obj["version"]),
            "function": str(obj["function"]).strip(),
            "run_id": str(obj["run_id"]).strip(),
            "threads": obj["threads"],
            "instructions": obj["instructions"],
            "counters": {name: counters[name] for name in spec.names},
        }


def _assemble(records: List[Dict[str, Any]], spec: CounterSpec) -> ProfileSet:
    if not records:
        raise DataError("no samples")
    first = records[0]
    program = first["program"]
    version, label = parse_version(first["version"], first["line_no"])
    samples: List[HpcSample] = []
    for record in records:
        line_no = record["line_no"]
        if record["program"] != program:
            raise DataError(f"line {line_no}: field 'program' is {record['program']!r}, file started with {program!r}")
        if parse_version(record["version"], line_no) != (version, label):
            raise DataError(f"line {line_no}: field 'version' differs from the first record")
        for field in ("function", "run_id"):
            if not record[field]:
                raise DataError(f"line {line_no}: field '{field}' is empty")
        values = tuple(
            _parse_count(record["counters"][name], line_no, name) for name in spec.names
        )
        samples.append(HpcSample(
            function=record["function"],
            run_id=record["run_id"],
            thread_count=_parse_count(record["threads"], line_no, "threads"),
            instruction_count=_parse_count(record["instructions"], line_no, "instructions"),
            values=values,
            normalized=False,
        ))
    logger.debug(f"Parsed {len(samples)} samples for {program} ({version.value})")
    return ProfileSet.from_samples(program, version, spec, samples, version_label=label)
