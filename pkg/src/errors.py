"""Exception types shared across the diagnosis pipeline.

Every error is a ``ValueError`` so callers that only care about "bad input"
can keep catching that; the CLI maps the subclasses to exit codes.
"""
from typing import Optional


class DiagnosisError(ValueError):
    """Base class for all errors raised by this package."""


class DataError(DiagnosisError):
    """Profiles, samples or bundles that cannot be used as given."""


class ConfigError(DiagnosisError):
    """Invalid configuration, spec file or command-line value."""


class TrainingError(DataError):
    """Autoencoder training could not complete."""

    def __init__(self, message: str, epoch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch


class ClusteringError(DataError):
    """k-means or function assignment could not produce a valid model."""


class BundleError(DataError):
    """A model bundle document could not be loaded."""


class BundleChecksumError(BundleError):
    """The bundle document is truncated, corrupted or was edited."""


class UnsupportedBundleVersion(BundleError):
    """The bundle was written by a newer format version."""
