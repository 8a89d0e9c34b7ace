"""Filesystem helpers: atomic writes and JSON documents for pydantic models."""
import json
import os
import tempfile
from pathlib import Path
from typing import Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from src.errors import ConfigError, DataError
from src.models.schemas import ProfileSet

T = TypeVar("T", bound=BaseModel)


def write_text_atomic(path: Union[str, Path], text: str) -> Path:
    """Write via a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def save_profile_set(profile_set: ProfileSet, path: Union[str, Path]) -> Path:
    """Lossless JSON form of a ProfileSet (raw or normalized)."""
    return write_text_atomic(path, profile_set.model_dump_json(indent=None))


def load_profile_set(path: Union[str, Path]) -> ProfileSet:
    try:
        return ProfileSet.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise DataError(f"cannot read profile set {path}: {e}") from e
    except ValidationError as e:
        raise DataError(f"invalid profile set document {path}: {e}") from e


def load_json_model(path: Union[str, Path], model: Type[T], what: str = "document") -> T:
    """Read a JSON document into ``model``; problems are configuration errors."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read {what} {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} {path} is not valid JSON: {e}") from e
    try:
        return model.model_validate(raw)
    except ValidationError as e:
        fields = ", ".join(".".join(str(p) for p in err["loc"]) or "<root>" for err in e.errors())
        raise ConfigError(f"invalid {what} {path} (fields: {fields}): {e}") from e


def encode_floats(values) -> list:
    """Nested lists of floats as ``float.hex`` strings (exact)."""
    if isinstance(values, (list, tuple)) or getattr(values, "ndim", 0) > 0:
        return [encode_floats(v) for v in values]
    return float(values).hex()


def decode_floats(values):
    if isinstance(values, list):
        return [decode_floats(v) for v in values]
    if isinstance(values, str):
        return float.fromhex(values)
    return float(values)
