"""Shared exception types.

Every error the library raises deliberately derives from UedError so CLI and
orchestrator code can catch one base and report a structured message.
"""

from __future__ import annotations


class UedError(Exception):
    """Base class for all deliberate library errors."""


class DomainError(UedError, ValueError):
    """An argument lies outside a function's mathematical domain."""


class ShapeError(UedError, ValueError):
    """Array arguments have inconsistent lengths or shapes."""


class InvalidLevel(UedError, ValueError):
    """A level violates a structural invariant (border, counts, start cell)."""


class ParseError(UedError, ValueError):
    """Level text could not be parsed; message carries line/column context."""


class ConfigError(UedError, ValueError):
    """A config value or key is unknown, ill-typed, or out of range."""


class NoGoal(UedError, ValueError):
    """Solvability was queried on a level without a goal cell."""


class EmptyBuffer(UedError, RuntimeError):
    """A replay operation needed entries but the buffer is empty."""


class EmptyMask(UedError, RuntimeError):
    """A policy was asked to act with no legal action available."""


class PolicyError(UedError, RuntimeError):
    """A policy emitted an action that violates its legality mask."""


class NonFiniteLoss(UedError, RuntimeError):
    """An optimisation step produced a non-finite loss; params were left unchanged."""


class CheckpointError(UedError, ValueError):
    """A checkpoint file is malformed or inconsistent with the config."""
