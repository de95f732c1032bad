"""Shared exception hierarchy.

Every domain error raised by this package derives from SlidecastError so the
CLI can map failures onto exit codes in one place.
"""


class SlidecastError(Exception):
    """Base class for all domain errors."""


class ConfigError(SlidecastError):
    """Invalid or incomplete configuration; CLI exit code 2."""
