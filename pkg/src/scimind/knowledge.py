"""Knowledge base of executable solution triplets.

Each entry pairs a problem embedding with a verified code snippet and a
paradigm descriptor. The base answers exact top-k cosine queries, assembles
the grounded input for downstream reasoning, and gates new entries behind a
novelty threshold so near-duplicates never accumulate.

Concurrency contract: any number of concurrent readers; mutation (admission,
loading) requires exclusive access. Entries are immutable once admitted.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import DegenerateVectorError, InvalidInputError

logger = logging.getLogger(__name__)

QUERY_PREFIX_TEMPLATE = "Retrieve the formal mathematical structure for {domain}"
DEFAULT_DOMAIN = "general"
DEFAULT_TOP_K = 3
DEFAULT_NOVELTY_TAU = 0.95
MANIFEST_SCHEMA_VERSION = 1

_ID_PATTERN = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]*")


@dataclass(frozen=True)
class EmbeddingVector:
    """A fixed-dimension vector of finite reals."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise InvalidInputError("embedding must have at least one component")
        if not all(math.isfinite(v) for v in self.values):
            raise InvalidInputError("embedding components must be finite")

    @property
    def dim(self) -> int:
        return len(self.values)

    def sum_squares(self) -> float:
        return math.fsum(v * v for v in self.values)

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)


def relevance(query_vec: EmbeddingVector, entry_vec: EmbeddingVector) -> float:
    """Cosine similarity between two equal-dimension, non-zero vectors.

    Computed as dot / sqrt(|a|^2 * |b|^2) so that relevance(v, v) is exactly
    1.0, then clamped to [-1, 1] against rounding spill. A vector whose
    squared norm underflows to zero is treated as degenerate.
    """
    if query_vec.dim != entry_vec.dim:
        raise InvalidInputError(
            f"dimension mismatch: {query_vec.dim} vs {entry_vec.dim}"
        )
    ss_q = query_vec.sum_squares()
    ss_e = entry_vec.sum_squares()
    if ss_q == 0.0 or ss_e == 0.0:
        raise DegenerateVectorError("cosine similarity undefined for a zero vector")
    dot = math.fsum(a * b for a, b in zip(query_vec.values, entry_vec.values))
    return min(1.0, max(-1.0, dot / math.sqrt(ss_q * ss_e)))


@dataclass(frozen=True)
class KnowledgeEntry:
    """One stored triplet: problem embedding, code snippet, paradigm descriptor."""

    entry_id: str
    embedding: EmbeddingVector
    code_snippet: str
    paradigm_descriptor: str
    domain_tag: str = DEFAULT_DOMAIN
    provenance: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not _ID_PATTERN.fullmatch(self.entry_id or ""):
            raise InvalidInputError(f"entry id {self.entry_id!r} is not a valid identifier")
        if not self.code_snippet.strip():
            raise InvalidInputError("code_snippet must be non-empty")
        if not self.paradigm_descriptor.strip():
            raise InvalidInputError("paradigm_descriptor must be non-empty")
        object.__setattr__(self, "provenance", dict(self.provenance))


class KnowledgeBase:
    """In-memory store of entries sharing one embedding dimension."""

    def __init__(self, dim: int, tau: float = DEFAULT_NOVELTY_TAU,
                 entries: Iterable[KnowledgeEntry] = ()):
        if dim < 1:
            raise InvalidInputError("knowledge base dimension must be positive")
        if not 0.0 < tau <= 1.0:
            raise InvalidInputError("novelty threshold tau must be in (0, 1]")
        self.dim = dim
        self.tau = tau
        self._entries: dict[str, KnowledgeEntry] = {}
        for entry in entries:
            self._insert(entry)

    def _insert(self, entry: KnowledgeEntry) -> None:
        if entry.embedding.dim != self.dim:
            raise InvalidInputError(
                f"entry {entry.entry_id!r} has dimension {entry.embedding.dim}, expected {self.dim}"
            )
        if entry.entry_id in self._entries:
            raise InvalidInputError(f"duplicate entry id {entry.entry_id!r}")
        self._entries[entry.entry_id] = entry

    @property
    def entries(self) -> tuple[KnowledgeEntry, ...]:
        return tuple(self._entries.values())

    def get(self, entry_id: str) -> KnowledgeEntry | None:
        return self._entries.get(entry_id)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._entries


@dataclass(frozen=True)
class AugmentedQuery:
    """A retrieval query with its domain-aware instruction prefix."""

    prefix: str
    query: str
    domain: str

    def rendered(self) -> str:
        return f"{self.prefix}\n{self.query}"


def augment_query(query: str, domain: str) -> AugmentedQuery:
    """Prepend the domain-aware retrieval instruction to the query.

    An empty domain falls back to the literal token "general".
    """
    if not query.strip():
        raise InvalidInputError("query must be non-empty")
    domain = domain.strip() or DEFAULT_DOMAIN
    return AugmentedQuery(
        prefix=QUERY_PREFIX_TEMPLATE.format(domain=domain),
        query=query,
        domain=domain,
    )


@dataclass(frozen=True)
class RetrievedBlock:
    code_snippet: str
    paradigm_descriptor: str
    entry_id: str
    relevance_score: float


@dataclass(frozen=True)
class GroundedInput:
    """The problem statement plus the retrieved code/paradigm blocks, in score order."""

    query: str
    retrieved_blocks: tuple[RetrievedBlock, ...]

    def rendered(self) -> str:
        if not self.retrieved_blocks:
            return self.query
        parts = [self.query]
        for block in self.retrieved_blocks:
            parts.append(
                f"--- retrieved case {block.entry_id} "
                f"(relevance {block.relevance_score:.6f}) ---\n"
                f"[code]\n{block.code_snippet}\n"
                f"[paradigm]\n{block.paradigm_descriptor}"
            )
        return "\n\n".join(parts)


def retrieve_top_k(kb: KnowledgeBase, query_vec: EmbeddingVector,
                   k: int) -> list[tuple[KnowledgeEntry, float]]:
    """The k entries most similar to the query, ties broken by ascending id.

    Zero-norm stored embeddings are skipped with a warning rather than
    failing the whole query. An empty base yields an empty result.
    """
    if k < 1:
        raise InvalidInputError("k must be a positive integer")
    if query_vec.dim != kb.dim:
        raise InvalidInputError(f"query dimension {query_vec.dim} != base dimension {kb.dim}")
    if query_vec.is_zero():
        raise DegenerateVectorError("query vector is all-zero")
    scored = []
    for entry in kb.entries:
        if entry.embedding.is_zero():
            logger.warning("skipping zero-norm embedding for entry %r", entry.entry_id)
            continue
        scored.append((entry, relevance(query_vec, entry.embedding)))
    best = heapq.nsmallest(k, scored, key=lambda pair: (-pair[1], pair[0].entry_id))
    return best


def assemble_grounded_input(query: str,
                            retrieved: Sequence[tuple[KnowledgeEntry, float]]) -> GroundedInput:
    """Concatenate the query with code-then-paradigm blocks in the given order.

    ``retrieved`` must already be in retrieval score order; block order is
    preserved exactly.
    """
    blocks = tuple(
        RetrievedBlock(
            code_snippet=entry.code_snippet,
            paradigm_descriptor=entry.paradigm_descriptor,
            entry_id=entry.entry_id,
            relevance_score=score,
        )
        for entry, score in retrieved
    )
    return GroundedInput(query=query, retrieved_blocks=blocks)


def distill_entry(problem: str, validated_code: str, paradigm: str,
                  embedding: EmbeddingVector, run_id: str | None = None) -> KnowledgeEntry:
    """Consolidate a successful run into a fresh knowledge entry.

    The caller guarantees the code came from a run whose execution succeeded
    and that the embedding was computed from the problem text.
    """
    if not validated_code.strip():
        raise InvalidInputError("validated code must be non-empty")
    if not paradigm.strip():
        raise InvalidInputError("paradigm descriptor must be non-empty")
    if not problem.strip():
        raise InvalidInputError("problem text must be non-empty")
    provenance = {
        "source_run": run_id or "unknown",
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    return KnowledgeEntry(
        entry_id=f"kb-{uuid.uuid4().hex[:12]}",
        embedding=embedding,
        code_snippet=validated_code,
        paradigm_descriptor=paradigm,
        provenance=provenance,
    )


def novelty_delta(kb: KnowledgeBase, new_vec: EmbeddingVector) -> float | None:
    """Maximum similarity between the candidate and any stored embedding.

    Returns None when the base holds nothing comparable (the empty marker).
    """
    if new_vec.dim != kb.dim:
        raise InvalidInputError(f"vector dimension {new_vec.dim} != base dimension {kb.dim}")
    if new_vec.is_zero():
        raise DegenerateVectorError("candidate vector is all-zero")
    best: float | None = None
    for entry in kb.entries:
        if entry.embedding.is_zero():
            logger.warning("skipping zero-norm embedding for entry %r", entry.entry_id)
            continue
        score = relevance(new_vec, entry.embedding)
        if best is None or score > best:
            best = score
    return best


def admit_entry(kb: KnowledgeBase, entry: KnowledgeEntry) -> bool:
    """Admit the entry iff it is sufficiently novel (delta strictly below tau).

    Mutates the base in place and returns whether the entry was admitted;
    rejection leaves the base untouched.
    """
    delta = novelty_delta(kb, entry.embedding)
    if delta is not None and delta >= kb.tau:
        logger.info("rejected entry %r: novelty delta %.6f >= tau %.6f",
                    entry.entry_id, delta, kb.tau)
        return False
    kb._insert(entry)
    return True


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------
#
# Directory layout:
#   manifest.json                 schema_version, dim, tau, entry list
#   entries/<id>/code.txt
#   entries/<id>/paradigm.txt
#   entries/<id>/embedding.txt    one decimal per line, exactly dim lines


def save_knowledge_base(kb: KnowledgeBase, directory: Path | str) -> None:
    directory = Path(directory)
    entries_dir = directory / "entries"
    entries_dir.mkdir(parents=True, exist_ok=True)
    manifest_entries = []
    for entry in kb.entries:
        entry_dir = entries_dir / entry.entry_id
        entry_dir.mkdir(parents=True, exist_ok=True)
        (entry_dir / "code.txt").write_text(entry.code_snippet, encoding="utf-8")
        (entry_dir / "paradigm.txt").write_text(entry.paradigm_descriptor, encoding="utf-8")
        (entry_dir / "embedding.txt").write_text(
            "\n".join(repr(v) for v in entry.embedding.values) + "\n", encoding="utf-8"
        )
        manifest_entries.append(
            {
                "id": entry.entry_id,
                "path": f"entries/{entry.entry_id}",
                "domain_tag": entry.domain_tag,
                "provenance": entry.provenance,
            }
        )
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "dim": kb.dim,
        "tau": kb.tau,
        "entries": manifest_entries,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )


def load_knowledge_base(directory: Path | str) -> KnowledgeBase:
    """Load a base from disk, rejecting any embedding that conflicts with the declared dim."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidInputError(f"cannot read knowledge base manifest {manifest_path}: {exc}") from exc
    except ValueError as exc:
        raise InvalidInputError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc
    if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise InvalidInputError(
            f"unsupported manifest schema_version: {manifest.get('schema_version')!r}"
        )
    try:
        dim = int(manifest["dim"])
        tau = float(manifest["tau"])
        declared = manifest["entries"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"manifest {manifest_path} is missing required fields: {exc}") from exc
    kb = KnowledgeBase(dim=dim, tau=tau)
    for meta in declared:
        entry_id = meta.get("id")
        entry_dir = directory / meta.get("path", f"entries/{entry_id}")
        try:
            code = (entry_dir / "code.txt").read_text(encoding="utf-8")
            paradigm = (entry_dir / "paradigm.txt").read_text(encoding="utf-8")
            raw_embedding = (entry_dir / "embedding.txt").read_text(encoding="utf-8")
        except OSError as exc:
            raise InvalidInputError(f"entry {entry_id!r} is missing files: {exc}") from exc
        lines = [line for line in raw_embedding.splitlines() if line.strip()]
        if len(lines) != dim:
            raise InvalidInputError(
                f"entry {entry_id!r} embedding has {len(lines)} components, manifest declares dim {dim}"
            )
        try:
            values = tuple(float(line) for line in lines)
        except ValueError as exc:
            raise InvalidInputError(f"entry {entry_id!r} embedding is not decimal text: {exc}") from exc
        entry = KnowledgeEntry(
            entry_id=entry_id,
            embedding=EmbeddingVector(values),
            code_snippet=code,
            paradigm_descriptor=paradigm,
            domain_tag=meta.get("domain_tag", DEFAULT_DOMAIN),
            provenance=meta.get("provenance", {}),
        )
        kb._insert(entry)
    return kb
