"""Exceptions raised by the extractor."""

from __future__ import annotations


class ExtractError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(ExtractError):
    """Caller passed data that violates an operation's preconditions."""
