"""Retrieval-grounded modeling engine.

Solves modeling problems by retrieving executable historical solutions,
running a theorist/pragmatist debate with formal convergence criteria, and
executing blueprint-verified, self-correcting candidate code — all agent
behavior sitting behind a pluggable completion provider.
"""

from .errors import (
    AgentError,
    DegenerateVectorError,
    FixtureMissError,
    InvalidInputError,
    InvalidRubricError,
    InvalidStateError,
    MalformedOutputError,
    SandboxUnavailableError,
    ScimindError,
)

__version__ = "0.1.0"

__all__ = [
    "AgentError",
    "DegenerateVectorError",
    "FixtureMissError",
    "InvalidInputError",
    "InvalidRubricError",
    "InvalidStateError",
    "MalformedOutputError",
    "SandboxUnavailableError",
    "ScimindError",
    "__version__",
]
