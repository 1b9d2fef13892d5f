"""Exception hierarchy shared across the package.

Each class carries the exit code the CLI maps it to, so commands can fail
with a categorized message instead of a traceback.
"""

from __future__ import annotations


class CfStoryError(Exception):
    """Base class for all package errors."""

    exit_code = 1
    category = "error"


class DatasetError(CfStoryError):
    """Raised for missing files, malformed JSONL lines, or bad fields."""

    exit_code = 3
    category = "dataset"


class ConfigError(CfStoryError):
    """Raised for invalid or inconsistent pipeline configuration."""

    exit_code = 4
    category = "config"


class CheckpointError(CfStoryError):
    """Raised for unreadable, incomplete, or mismatched checkpoints."""

    exit_code = 5
    category = "checkpoint"


class VocabMismatchError(CheckpointError):
    """Raised when two artifacts were built against different vocabularies."""

    exit_code = 6
    category = "vocab"


class SheetError(CfStoryError):
    """Raised for invalid annotation sheets or incomplete score sets."""

    exit_code = 7
    category = "sheets"
