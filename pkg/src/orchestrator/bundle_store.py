"""Trained-state container and its versioned, checksummed document form."""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from src.errors import BundleChecksumError, BundleError, UnsupportedBundleVersion
from src.learning.autoencoder import AutoencoderModel, model_from_dict, model_to_dict
from src.models.schemas import ClusterModel, CounterSpec, Threshold
from src.storage import decode_floats, encode_floats, write_text_atomic

logger = logging.getLogger(__name__)

BUNDLE_FORMAT = "perfsentinel-bundle"
BUNDLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelBundle:
    """Everything the detection phase needs from training."""
    program: str
    counter_spec: CounterSpec
    cluster_model: ClusterModel
    models: Tuple[AutoencoderModel, ...]
    thresholds: Tuple[Threshold, ...]
    training_errors: Tuple[np.ndarray, ...]
    functions: Tuple[str, ...]
    baseline_cycles: Dict[str, float] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)
    format_version: int = BUNDLE_FORMAT_VERSION

    def __post_init__(self):
        k = self.cluster_model.k
        if len(self.models) != k or len(self.thresholds) != k or len(self.training_errors) != k:
            raise BundleError(
                f"bundle needs one model, threshold and error set per cluster (k={k}), got "
                f"{len(self.models)}/{len(self.thresholds)}/{len(self.training_errors)}"
            )

    def model_for(self, cluster: int) -> AutoencoderModel:
        return self.models[cluster]


def _cluster_model_to_dict(cm: ClusterModel) -> Dict[str, Any]:
    return {
        "k": cm.k,
        "centroids": encode_floats(cm.centroids),
        "function_assignment": dict(cm.function_assignment),
        "inertia": encode_floats(cm.inertia),
        "seed": cm.seed,
        "scaler_mean": encode_floats(cm.scaler_mean),
        "scaler_std": encode_floats(cm.scaler_std),
    }


def _cluster_model_from_dict(doc: Dict[str, Any]) -> ClusterModel:
    return ClusterModel(
        k=doc["k"],
        centroids=decode_floats(doc["centroids"]),
        function_assignment=doc["function_assignment"],
        inertia=decode_floats(doc["inertia"]),
        seed=doc["seed"],
        scaler_mean=decode_floats(doc["scaler_mean"]),
        scaler_std=decode_floats(doc["scaler_std"]),
    )


def bundle_payload(bundle: ModelBundle) -> Dict[str, Any]:
    return {
        "program": bundle.program,
        "counter_spec": bundle.counter_spec.model_dump(mode="json"),
        "cluster_model": _cluster_model_to_dict(bundle.cluster_model),
        "models": [model_to_dict(m) for m in bundle.models],
        "thresholds": [
            {"mu": encode_floats(th.mu), "sigma": encode_floats(th.sigma), "t": encode_floats(th.t), "gamma": encode_floats(th.gamma)}
            for th in bundle.thresholds
        ],
        "training_errors": [encode_floats(e) for e in bundle.training_errors],
        "functions": list(bundle.functions),
        "baseline_cycles": {f: encode_floats(v) for f, v in bundle.baseline_cycles.items()},
        "config": bundle.config,
    }


def _canonical(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def bundle_checksum(bundle: ModelBundle) -> str:
    return hashlib.sha256(_canonical(bundle_payload(bundle)).encode("utf-8")).hexdigest()


def dump_bundle(bundle: ModelBundle) -> str:
    """Bundle as document text (deterministic for a given bundle)."""
    payload = bundle_payload(bundle)
    document = {
        "format": BUNDLE_FORMAT,
        "format_version": bundle.format_version,
        "checksum": hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest(),
        "payload": payload,
    }
    return json.dumps(document, sort_keys=True, indent=1) + "\n"


def parse_bundle(text: str) -> ModelBundle:
    """
    Rebuild a bundle from document text.

    Raises:
        BundleChecksumError: Document does not parse or its payload checksum differs
        UnsupportedBundleVersion: format_version is not one this code reads
        BundleError: Wrong document kind or inconsistent content
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise BundleChecksumError(f"bundle document is truncated or corrupted: {e}") from e
    if not isinstance(document, dict) or document.get("format") != BUNDLE_FORMAT:
        raise BundleError(f"not a {BUNDLE_FORMAT} document")
    version = document.get("format_version")
    if not isinstance(version, int) or version < 1 or version > BUNDLE_FORMAT_VERSION:
        raise UnsupportedBundleVersion(
            f"bundle format_version {version!r} is not supported (this build reads up to {BUNDLE_FORMAT_VERSION})"
        )
    payload = document.get("payload")
    if not isinstance(payload, dict):
        raise BundleChecksumError("bundle document has no payload")
    actual = hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()
    if actual != document.get("checksum"):
        raise BundleChecksumError(f"bundle checksum mismatch: stored {document.get('checksum')}, computed {actual}")

    try:
        thresholds = tuple(
            Threshold(
                mu=decode_floats(th["mu"]),
                sigma=decode_floats(th["sigma"]),
                t=decode_floats(th["t"]),
                gamma=decode_floats(th["gamma"]),
            )
            for th in payload["thresholds"]
        )
        return ModelBundle(
            program=payload["program"],
            counter_spec=CounterSpec.model_validate(payload["counter_spec"]),
            cluster_model=_cluster_model_from_dict(payload["cluster_model"]),
            models=tuple(model_from_dict(m) for m in payload["models"]),
            thresholds=thresholds,
            training_errors=tuple(np.array(decode_floats(e), dtype=np.float64) for e in payload["training_errors"]),
            functions=tuple(payload["functions"]),
            baseline_cycles={f: decode_floats(v) for f, v in payload.get("baseline_cycles", {}).items()},
            config=payload.get("config", {}),
            format_version=version,
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, BundleError):
            raise
        raise BundleError(f"bundle payload is inconsistent: {e}") from e


def save_bundle(bundle: ModelBundle, path: Union[str, Path]) -> Path:
    written = write_text_atomic(path, dump_bundle(bundle))
    logger.info(f"Saved model bundle ({bundle.cluster_model.k} clusters) to {written}")
    return written


def load_bundle(path: Union[str, Path]) -> ModelBundle:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise BundleError(f"cannot read bundle {path}: {e}") from e
    bundle = parse_bundle(text)
    logger.info(f"Loaded model bundle for {bundle.program} from {path}")
    return bundle
