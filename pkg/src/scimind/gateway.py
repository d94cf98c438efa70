"""Uniform completion/embedding provider behind every agent role.

Two backends share one contract: an HTTP chat-completions client and a
deterministic scripted mock. The mock keys responses by (role, call ordinal
within that role) so whole pipeline runs replay byte-identically, and its
embedding is a hashed bag-of-tokens vector so identical texts always map to
identical unit vectors.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import time
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping, Sequence

import requests

from .errors import (
    AgentError,
    FixtureMissError,
    InvalidInputError,
    MalformedOutputError,
)
from .knowledge import EmbeddingVector

logger = logging.getLogger(__name__)

MOCK_EMBEDDING_DIM = 16
HTTP_TIMEOUT_SECONDS = 60.0
RETRY_BASE_DELAY_SECONDS = 0.2

REPROMPT_INSTRUCTION = (
    "Your previous reply could not be parsed. Respond again with exactly one "
    "JSON object in the required format and no surrounding prose."
)


class Role(str, Enum):
    THEORIST = "theorist"
    PRAGMATIST = "pragmatist"
    MODERATOR = "moderator"
    ARCHITECT = "architect"
    VERIFIER = "verifier"
    BUILDER = "builder"
    REFINER = "refiner"


@dataclass(frozen=True)
class RolePrompt:
    """One request to a provider: a role binding plus the prompt texts."""

    role: Role
    system_text: str
    user_text: str
    response_schema: str | None = None

    def __post_init__(self):
        if not isinstance(self.role, Role):
            raise InvalidInputError(f"unknown role: {self.role!r}")
        if not self.user_text:
            raise InvalidInputError("prompt user_text must be non-empty")


@dataclass(frozen=True)
class ProviderConfig:
    """Backend selection plus the knobs each backend needs.

    ``auth_env`` names an environment variable; the token is read at call
    time and never persisted.
    """

    backend: str = "mock"
    endpoint: str | None = None
    model_name: str = "mock-model"
    auth_env: str = "SCIMIND_API_KEY"
    max_retries: int = 2
    fixture_path: Path | None = None
    embedding_endpoint: str | None = None
    embedding_model: str | None = None
    mock_dim: int = MOCK_EMBEDDING_DIM

    def __post_init__(self):
        if self.backend not in ("mock", "http"):
            raise InvalidInputError(f"unknown provider backend: {self.backend!r}")
        if self.max_retries < 0:
            raise InvalidInputError("max_retries must be >= 0")
        if self.backend == "http" and not self.endpoint:
            raise InvalidInputError("http backend requires an endpoint")


# ---------------------------------------------------------------------------
# Structured-output parsing
# ---------------------------------------------------------------------------


class _SchemaMismatch(Exception):
    """Internal: a candidate JSON document does not fit the schema."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise _SchemaMismatch(message)


def _as_nonempty_str(value: Any, what: str) -> str:
    _require(isinstance(value, str) and value.strip() != "", f"{what} must be a non-empty string")
    return value


def _validate_hypothesis(doc: Any) -> dict:
    _require(isinstance(doc, dict), "hypothesis must be an object")
    formulation = _as_nonempty_str(doc.get("formulation"), "hypothesis formulation")
    return {"formulation": formulation}


def _validate_critique(doc: Any) -> dict:
    _require(isinstance(doc, dict), "critique must be an object")
    raw = doc.get("violations")
    _require(isinstance(raw, list), "critique must carry a violations list")
    violations = []
    for item in raw:
        _require(isinstance(item, dict), "violation must be an object")
        violations.append(
            {
                "violated_criterion": _as_nonempty_str(item.get("violated_criterion"), "violated_criterion"),
                "conflicting_evidence": _as_nonempty_str(item.get("conflicting_evidence"), "conflicting_evidence"),
                "remediation": _as_nonempty_str(item.get("remediation"), "remediation"),
            }
        )
    return {"violations": violations}


def _validate_score_sheet(doc: Any) -> dict:
    _require(isinstance(doc, dict), "score sheet must be an object")
    raw = doc.get("scores")
    _require(isinstance(raw, list) and raw, "score sheet must carry a non-empty scores list")
    scores = []
    for item in raw:
        _require(isinstance(item, dict), "score must be an object")
        name = _as_nonempty_str(item.get("criterion"), "score criterion")
        try:
            value = float(item.get("value"))
        except (TypeError, ValueError):
            raise _SchemaMismatch("score value must be numeric")
        _require(math.isfinite(value), "score value must be finite")
        clamped = min(1.0, max(0.0, value))
        if clamped != value:
            logger.warning("score for %r out of range (%s); clamped to %s", name, value, clamped)
        justification = item.get("justification", "")
        _require(isinstance(justification, str), "justification must be a string")
        scores.append({"criterion": name, "value": clamped, "justification": justification})
    return {"scores": scores}


def _validate_dims(raw: Any) -> list:
    _require(isinstance(raw, list), "dims must be a list")
    dims: list = []
    for d in raw:
        if isinstance(d, bool):
            raise _SchemaMismatch("dims entries must be positive integers or names")
        if isinstance(d, int):
            _require(d >= 1, "integer dims must be positive")
            dims.append(d)
        elif isinstance(d, str):
            _require(d.strip() != "", "symbolic dims must be non-empty")
            dims.append(d)
        else:
            raise _SchemaMismatch("dims entries must be positive integers or names")
    return dims


def _validate_blueprint(doc: Any) -> dict:
    _require(isinstance(doc, dict), "blueprint must be an object")
    variables = []
    _require(isinstance(doc.get("variables"), list), "blueprint must carry a variables list")
    for item in doc["variables"]:
        _require(isinstance(item, dict), "variable must be an object")
        variables.append(
            {
                "name": _as_nonempty_str(item.get("name"), "variable name"),
                "type_tag": _as_nonempty_str(item.get("type_tag"), "variable type_tag"),
                "dims": _validate_dims(item.get("dims", [])),
            }
        )
    functions = []
    _require(isinstance(doc.get("functions"), list), "blueprint must carry a functions list")
    for item in doc["functions"]:
        _require(isinstance(item, dict), "function must be an object")
        deps = item.get("dependencies", [])
        _require(isinstance(deps, list), "dependencies must be a list")
        functions.append(
            {
                "name": _as_nonempty_str(item.get("name"), "function name"),
                "signature": _as_nonempty_str(item.get("signature"), "function signature"),
                "dependencies": [_as_nonempty_str(d, "dependency name") for d in deps],
            }
        )
    ingestion = doc.get("ingestion", {})
    _require(isinstance(ingestion, dict), "ingestion must be an object")
    sources = []
    for item in ingestion.get("sources", []):
        _require(isinstance(item, dict), "ingestion source must be an object")
        fields = item.get("fields", [])
        _require(isinstance(fields, list), "source fields must be a list")
        sources.append(
            {
                "name": _as_nonempty_str(item.get("name"), "source name"),
                "format": _as_nonempty_str(item.get("format"), "source format"),
                "fields": [_as_nonempty_str(f, "field name") for f in fields],
            }
        )
    output = doc.get("output", {})
    _require(isinstance(output, dict), "output must be an object")
    files = []
    for item in output.get("files", []):
        _require(isinstance(item, dict), "output file must be an object")
        files.append(
            {
                "name": _as_nonempty_str(item.get("name"), "output file name"),
                "format": _as_nonempty_str(item.get("format"), "output file format"),
            }
        )
    revision = doc.get("revision", 0)
    _require(isinstance(revision, int) and not isinstance(revision, bool) and revision >= 0,
             "revision must be a non-negative integer")
    return {
        "variables": variables,
        "functions": functions,
        "ingestion": {"sources": sources},
        "output": {"files": files},
        "revision": revision,
    }


def _validate_verdicts(doc: Any) -> dict:
    _require(isinstance(doc, dict), "verdicts must be an object")
    raw = doc.get("predicates")
    _require(isinstance(raw, list), "verdicts must carry a predicates list")
    predicates = []
    for item in raw:
        _require(isinstance(item, dict), "predicate must be an object")
        name = _as_nonempty_str(item.get("name"), "predicate name")
        passed_raw = item.get("passed")
        if isinstance(passed_raw, bool):
            passed = passed_raw
        elif passed_raw in (0, 1):
            passed = bool(passed_raw)
        else:
            raise _SchemaMismatch("predicate verdict must be boolean")
        diagnostic = item.get("diagnostic", "")
        _require(isinstance(diagnostic, str), "diagnostic must be a string")
        if passed:
            diagnostic = ""
        elif not diagnostic.strip():
            diagnostic = "(no diagnostic provided)"
        predicates.append({"name": name, "passed": passed, "diagnostic": diagnostic})
    return {"predicates": predicates}


SCHEMA_VALIDATORS: dict[str, Callable[[Any], dict]] = {
    "hypothesis": _validate_hypothesis,
    "critique": _validate_critique,
    "score-sheet": _validate_score_sheet,
    "blueprint": _validate_blueprint,
    "verdicts": _validate_verdicts,
}


def _candidate_documents(raw: str) -> Iterator[Any]:
    # Fenced blocks take priority, then any top-level JSON object in the text.
    for match in re.finditer(r"```(?:json)?\s*(.*?)```", raw, re.DOTALL):
        try:
            yield json.loads(match.group(1))
        except ValueError:
            continue
    decoder = json.JSONDecoder()
    pos = raw.find("{")
    while pos != -1:
        try:
            doc, _ = decoder.raw_decode(raw, pos)
        except ValueError:
            pass
        else:
            yield doc
        pos = raw.find("{", pos + 1)


def parse_structured_output(raw: str, schema: str) -> dict:
    """Parse the first well-formed structured block in ``raw``.

    Trailing and surrounding prose is ignored; candidate JSON documents are
    tried in order of appearance and the first one that satisfies ``schema``
    wins. Raises MalformedOutputError (carrying the raw text) when nothing
    fits.
    """
    if schema not in SCHEMA_VALIDATORS:
        raise InvalidInputError(f"unknown response schema: {schema!r}")
    validator = SCHEMA_VALIDATORS[schema]
    last_mismatch: str | None = None
    for doc in _candidate_documents(raw):
        try:
            return validator(doc)
        except _SchemaMismatch as exc:
            last_mismatch = str(exc)
    detail = f" (last mismatch: {last_mismatch})" if last_mismatch else ""
    raise MalformedOutputError(f"no well-formed {schema} block found in response{detail}", raw=raw)


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------


class Provider:
    """Completion and embedding backend shared by every agent role."""

    def complete(self, prompt: RolePrompt) -> str:
        raise NotImplementedError

    def embed(self, text: str) -> EmbeddingVector:
        raise NotImplementedError

    def complete_structured(self, prompt: RolePrompt) -> dict:
        """Complete, then parse; on a parse failure reprompt exactly once."""
        if prompt.response_schema is None:
            raise InvalidInputError("complete_structured requires a response schema")
        raw = self.complete(prompt)
        try:
            return parse_structured_output(raw, prompt.response_schema)
        except MalformedOutputError:
            logger.warning("unparseable %s response from %s; reprompting once",
                           prompt.response_schema, prompt.role.value)
        correction = replace(prompt, user_text=f"{prompt.user_text}\n\n{REPROMPT_INSTRUCTION}")
        return parse_structured_output(self.complete(correction), prompt.response_schema)


@dataclass(frozen=True)
class MockCall:
    """One recorded mock completion, kept for prompt/count assertions."""

    role: Role
    ordinal: int
    system_text: str
    user_text: str
    response: str


def _token_bucket(token: str, dim: int) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") % dim


class MockProvider(Provider):
    """Deterministic scripted provider for offline runs and tests.

    Completions are looked up by (role, ordinal within that role); a missing
    key raises FixtureMissError. Embeddings hash each token into one of
    ``dim`` buckets, count occurrences, and normalize to unit length, so they
    are pure functions of the text. The ordinal counters are scoped to this
    instance: concurrent runs need separate instances.
    """

    def __init__(self, fixtures: Mapping[str, Sequence[str]] | None = None, dim: int = MOCK_EMBEDDING_DIM):
        if dim < 1:
            raise InvalidInputError("embedding dimension must be positive")
        self._fixtures = {str(k): list(v) for k, v in (fixtures or {}).items()}
        self._dim = dim
        self._cursors: dict[str, int] = {}
        self.calls: list[MockCall] = []

    @property
    def embedding_dim(self) -> int:
        return self._dim

    def complete(self, prompt: RolePrompt) -> str:
        key = prompt.role.value
        ordinal = self._cursors.get(key, 0)
        responses = self._fixtures.get(key)
        if responses is None or ordinal >= len(responses):
            raise FixtureMissError(f"no fixture response for role {key!r} call #{ordinal + 1}")
        self._cursors[key] = ordinal + 1
        response = responses[ordinal]
        self.calls.append(MockCall(prompt.role, ordinal, prompt.system_text, prompt.user_text, response))
        return response

    def embed(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise InvalidInputError("cannot embed empty text")
        tokens = re.findall(r"[a-z0-9]+", text.lower())
        if not tokens:
            tokens = [text]  # no word characters at all: hash the raw text
        counts = [0.0] * self._dim
        for token in tokens:
            counts[_token_bucket(token, self._dim)] += 1.0
        norm = math.sqrt(math.fsum(c * c for c in counts))
        return EmbeddingVector(tuple(c / norm for c in counts))

    def calls_for(self, role: Role) -> list[MockCall]:
        return [c for c in self.calls if c.role is role]


class HttpProvider(Provider):
    """Chat-completions-style HTTP backend with a bounded retry budget."""

    def __init__(self, cfg: ProviderConfig):
        if cfg.backend != "http":
            raise InvalidInputError("HttpProvider requires an http provider config")
        self._cfg = cfg

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self._cfg.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post_with_retries(self, url: str, payload: dict) -> dict:
        attempts = self._cfg.max_retries + 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                time.sleep(RETRY_BASE_DELAY_SECONDS * attempt)
            try:
                response = requests.post(url, json=payload, headers=self._headers(),
                                         timeout=HTTP_TIMEOUT_SECONDS)
                response.raise_for_status()
                return response.json()
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
                logger.warning("provider call failed (attempt %d/%d): %s", attempt + 1, attempts, exc)
        raise AgentError(f"provider unreachable after {attempts} attempts: {last_error}") from last_error

    def complete(self, prompt: RolePrompt) -> str:
        payload = {
            "model": self._cfg.model_name,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
        }
        body = self._post_with_retries(self._cfg.endpoint, payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise AgentError(f"provider returned an unexpected payload shape: {exc}") from exc
        if not isinstance(content, str):
            raise AgentError("provider message content is not text")
        return content

    def embed(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise InvalidInputError("cannot embed empty text")
        if not self._cfg.embedding_endpoint:
            raise AgentError("http backend has no embedding endpoint configured")
        payload = {"model": self._cfg.embedding_model or self._cfg.model_name, "input": text}
        body = self._post_with_retries(self._cfg.embedding_endpoint, payload)
        try:
            values = body["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise AgentError(f"embedding response has an unexpected shape: {exc}") from exc
        return EmbeddingVector(tuple(float(v) for v in values))


def load_fixtures(path: Path | str) -> dict[str, list[str]]:
    """Load a fixture file: a JSON object mapping role name to response list."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidInputError(f"cannot read fixture file {path}: {exc}") from exc
    except ValueError as exc:
        raise InvalidInputError(f"fixture file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidInputError("fixture file must be a JSON object keyed by role")
    fixtures: dict[str, list[str]] = {}
    valid_roles = {r.value for r in Role}
    for key, value in doc.items():
        if key not in valid_roles:
            raise InvalidInputError(f"fixture file names unknown role {key!r}")
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise InvalidInputError(f"fixture responses for {key!r} must be a list of strings")
        fixtures[key] = value
    return fixtures


def make_provider(cfg: ProviderConfig) -> Provider:
    if cfg.backend == "mock":
        fixtures = load_fixtures(cfg.fixture_path) if cfg.fixture_path else {}
        return MockProvider(fixtures, dim=cfg.mock_dim)
    return HttpProvider(cfg)


# ---------------------------------------------------------------------------
# Role bindings
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def role_system_text(role: Role) -> str:
    """The versioned system prompt asset for a role."""
    return (
        resources.files("scimind")
        .joinpath("prompts", f"{role.value}.txt")
        .read_text(encoding="utf-8")
        .strip()
    )


@dataclass(frozen=True)
class Agent:
    """A provider bound to one role; the unit the pipeline stages talk to."""

    provider: Provider
    role: Role

    def ask_text(self, user_text: str) -> str:
        prompt = RolePrompt(self.role, role_system_text(self.role), user_text)
        return self.provider.complete(prompt)

    def ask_structured(self, user_text: str, schema: str) -> dict:
        prompt = RolePrompt(self.role, role_system_text(self.role), user_text, response_schema=schema)
        return self.provider.complete_structured(prompt)


@dataclass(frozen=True)
class AgentTeam:
    """All seven role bindings over a single provider."""

    provider: Provider
    theorist: Agent
    pragmatist: Agent
    moderator: Agent
    architect: Agent
    verifier: Agent
    builder: Agent
    refiner: Agent

    @classmethod
    def from_provider(cls, provider: Provider) -> "AgentTeam":
        return cls(
            provider=provider,
            theorist=Agent(provider, Role.THEORIST),
            pragmatist=Agent(provider, Role.PRAGMATIST),
            moderator=Agent(provider, Role.MODERATOR),
            architect=Agent(provider, Role.ARCHITECT),
            verifier=Agent(provider, Role.VERIFIER),
            builder=Agent(provider, Role.BUILDER),
            refiner=Agent(provider, Role.REFINER),
        )
