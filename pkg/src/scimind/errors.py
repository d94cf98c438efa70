"""Exception taxonomy shared across the package."""

from __future__ import annotations


class ScimindError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(ScimindError):
    """A caller-supplied value violates an operation's preconditions."""


class DegenerateVectorError(ScimindError):
    """A vector operation received an all-zero vector."""


class InvalidRubricError(ScimindError):
    """A utility rubric is malformed (weights, names, or emptiness)."""


class InvalidStateError(ScimindError):
    """An operation was invoked on an object in an unusable state."""


class AgentError(ScimindError):
    """A completion provider failed after exhausting its retry budget."""


class FixtureMissError(ScimindError):
    """The scripted mock provider had no response for a requested key.

    This is a test-suite bug, not a runtime condition, so it is never
    swallowed or retried.
    """


class MalformedOutputError(ScimindError):
    """A provider response could not be parsed into the expected format."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class SandboxUnavailableError(ScimindError):
    """The sandbox runner is missing or failed to produce a report.

    Distinct from a candidate-program failure: a crashing candidate still
    yields a well-formed execution report.
    """
