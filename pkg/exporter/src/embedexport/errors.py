"""Exception taxonomy for the exporter.

Everything raised here derives from :class:`ExporterError` so the CLI
can map failures onto exit codes without string matching.
"""

from __future__ import annotations


class ExporterError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ExporterError):
    """An input is missing, unreadable, or cannot be encoded."""


class TagError(ExporterError):
    """The tag list does not describe the inputs."""


class EncoderError(ExporterError):
    """The encoder id is unknown or its backend is not available locally."""


class FormatError(ExporterError):
    """A binary artifact does not conform to the documented layout."""


class SpecError(ExporterError):
    """A centroid request is inconsistent with the tagged keys."""


# CLI exit codes. 1 is left to unexpected crashes.
EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ENCODER = 3


def exit_code_for(err: ExporterError) -> int:
    """Map an exporter error to the documented CLI exit code."""
    if isinstance(err, EncoderError):
        return EXIT_ENCODER
    return EXIT_INPUT
