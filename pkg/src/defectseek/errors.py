"""Exception taxonomy for the engine.

Every error raised by this package derives from :class:`EngineError` so
callers (including the CLI) can map failures onto a small set of exit
codes without string matching.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(EngineError):
    """A binary or text artifact does not conform to its documented layout."""


class DataError(EngineError):
    """Payload values are unusable (non-finite entries, zero vectors, ...)."""


class ManifestError(EngineError):
    """A knowledge manifest is malformed or inconsistent with its embeddings."""


class DimensionError(EngineError):
    """Operands have incompatible shapes or dimensionalities."""


class EmptyStoreError(EngineError):
    """An operation needs at least one stored vector and found none."""


class ArgumentError(EngineError):
    """A caller-supplied argument is out of range or otherwise invalid."""


class ConfigError(EngineError):
    """A configuration key is unknown or its value is out of bounds."""


class DegenerateDataError(EngineError):
    """Input carries too little variation for the requested fit."""


class DegenerateError(EngineError):
    """A computation hit a degenerate case it cannot define a result for."""


class ConvergenceError(EngineError):
    """An iterative solver exhausted its iteration budget."""


class SpecError(EngineError):
    """A synthetic-fixture plan is internally inconsistent."""


# CLI exit codes. 1 is left to unexpected crashes so scripted callers can
# distinguish "engine rejected the job" from "engine blew up".
EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SHAPE = 3
EXIT_NUMERIC = 4


def exit_code_for(err: EngineError) -> int:
    """Map an engine error to the documented CLI exit code."""
    if isinstance(err, (FormatError, DataError, ManifestError, SpecError)):
        return EXIT_INPUT
    if isinstance(err, (DimensionError, ArgumentError, ConfigError, EmptyStoreError)):
        return EXIT_SHAPE
    if isinstance(err, (ConvergenceError, DegenerateDataError, DegenerateError)):
        return EXIT_NUMERIC
    return EXIT_NUMERIC
