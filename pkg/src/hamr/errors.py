"""Exception hierarchy. Each leaf carries the CLI exit code it maps to."""

from __future__ import annotations


class HamrError(Exception):
    exit_code = 1


class ConfigError(HamrError, ValueError):
    """Invalid hyperparameter, precondition or option."""

    exit_code = 2


class DataError(HamrError, ValueError):
    """Malformed input data (files, labels, tags, embeddings)."""

    exit_code = 3


class ShapeError(DataError):
    """Array dimensions do not match the model or each other."""


class DivergenceError(HamrError, RuntimeError):
    """Training produced a non-finite loss.

    ``artifact`` holds the diagnostic run record collected up to the failure.
    """

    exit_code = 4

    def __init__(self, message: str, artifact: dict | None = None):
        super().__init__(message)
        self.artifact = artifact
