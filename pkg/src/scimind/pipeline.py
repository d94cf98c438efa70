"""End-to-end problem solving: retrieve, debate, execute, consolidate.

A run always produces a report; stage failures are captured with their stage
label instead of aborting. On a successful execution the solved problem is
distilled into a knowledge entry and offered to the base under the novelty
gate, so later problems in a batch can retrieve it.
"""

from __future__ import annotations

import json
import logging
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from . import blueprint as bp_mod
from . import debate as debate_mod
from . import knowledge as kb_mod
from .blueprint import SveConfig, SveResult
from .debate import DataConstraints, DebateConfig, DebateTranscript, RubricKind, UtilityRubric
from .errors import InvalidInputError, ScimindError
from .gateway import AgentTeam, Provider, ProviderConfig
from .knowledge import KnowledgeBase

logger = logging.getLogger(__name__)

DEFAULT_RUNNER_COMMAND = ("scimind-runner",)

STAGE_RETRIEVAL = "retrieval"
STAGE_DEBATE = "debate"
STAGE_EXECUTION = "execution"
STAGE_ADMISSION = "admission"


@dataclass(frozen=True)
class PipelineConfig:
    """All tunables for one run; file values lose to CLI flags."""

    k: int = kb_mod.DEFAULT_TOP_K
    tau: float = kb_mod.DEFAULT_NOVELTY_TAU
    debate: DebateConfig = field(default_factory=DebateConfig)
    sve: SveConfig = field(default_factory=SveConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    runner_command: tuple[str, ...] = DEFAULT_RUNNER_COMMAND
    stdout_tail_chars: int = bp_mod.DEFAULT_STDOUT_TAIL_CHARS

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError("k must be a positive integer")
        if not 0.0 < self.tau <= 1.0:
            raise InvalidInputError("tau must lie in (0, 1]")
        if not self.runner_command:
            raise InvalidInputError("runner command must be non-empty")


def _rubric_from_config(doc: Mapping[str, Any], kind: RubricKind, fallback: UtilityRubric) -> UtilityRubric:
    raw = doc.get("criteria")
    if raw is None:
        return fallback
    return UtilityRubric(tuple((c["name"], float(c["weight"])) for c in raw), kind)


def load_config(path: Path | str | None = None,
                overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """Build a config from an optional JSON file plus flag overrides."""
    doc: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise InvalidInputError(f"cannot read config file {path}: {exc}") from exc
        except ValueError as exc:
            raise InvalidInputError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise InvalidInputError("config file must hold a JSON object")
    overrides = dict(overrides or {})

    try:
        debate_doc = doc.get("debate", {})
        defaults = DebateConfig()
        debate_cfg = DebateConfig(
            lambda_=float(debate_doc.get("lambda", defaults.lambda_)),
            epsilon=float(debate_doc.get("epsilon", defaults.epsilon)),
            gamma=float(debate_doc.get("gamma", defaults.gamma)),
            r_max=int(debate_doc.get("r_max", defaults.r_max)),
            theorist_rubric=_rubric_from_config(
                debate_doc.get("theorist_rubric", {}), RubricKind.THEORETICAL, defaults.theorist_rubric
            ),
            pragmatist_rubric=_rubric_from_config(
                debate_doc.get("pragmatist_rubric", {}), RubricKind.PRAGMATIC, defaults.pragmatist_rubric
            ),
        )
        sve_doc = doc.get("sve", {})
        sve_defaults = SveConfig()
        sve_cfg = SveConfig(
            t_max=int(sve_doc.get("t_max", sve_defaults.t_max)),
            j_max=int(sve_doc.get("j_max", sve_defaults.j_max)),
            sandbox_timeout=float(sve_doc.get("sandbox_timeout", sve_defaults.sandbox_timeout)),
            trace_truncation=int(sve_doc.get("trace_truncation", sve_defaults.trace_truncation)),
        )
        provider_doc = dict(doc.get("provider", {}))
        if "backend" in overrides:
            provider_doc["backend"] = overrides["backend"]
        if "fixture_path" in overrides:
            provider_doc["fixture_path"] = overrides["fixture_path"]
        provider_defaults = ProviderConfig()
        fixture_path = provider_doc.get("fixture_path")
        provider_cfg = ProviderConfig(
            backend=provider_doc.get("backend", provider_defaults.backend),
            endpoint=provider_doc.get("endpoint"),
            model_name=provider_doc.get("model_name", provider_defaults.model_name),
            auth_env=provider_doc.get("auth_env", provider_defaults.auth_env),
            max_retries=int(provider_doc.get("max_retries", provider_defaults.max_retries)),
            fixture_path=Path(fixture_path) if fixture_path else None,
            embedding_endpoint=provider_doc.get("embedding_endpoint"),
            embedding_model=provider_doc.get("embedding_model"),
            mock_dim=int(provider_doc.get("mock_dim", provider_defaults.mock_dim)),
        )
        sandbox_doc = doc.get("sandbox", {})
        return PipelineConfig(
            k=int(doc.get("k", kb_mod.DEFAULT_TOP_K)),
            tau=float(doc.get("tau", kb_mod.DEFAULT_NOVELTY_TAU)),
            debate=debate_cfg,
            sve=sve_cfg,
            provider=provider_cfg,
            runner_command=tuple(sandbox_doc.get("runner_command", DEFAULT_RUNNER_COMMAND)),
            stdout_tail_chars=int(sandbox_doc.get("stdout_tail_chars", bp_mod.DEFAULT_STDOUT_TAIL_CHARS)),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise InvalidInputError(f"malformed configuration: {exc}") from exc


# ---------------------------------------------------------------------------
# Problem bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemBundle:
    problem_id: str
    statement: str
    domain_tag: str
    data_files: tuple[Path, ...]
    constraints: DataConstraints

    def __post_init__(self):
        if not self.statement.strip():
            raise InvalidInputError("problem statement must be non-empty")


def load_problem_bundle(directory: Path | str) -> ProblemBundle:
    """Load a problem directory: ``problem.json`` plus an optional ``data/`` dir."""
    directory = Path(directory)
    spec_path = directory / "problem.json"
    try:
        doc = json.loads(spec_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidInputError(f"cannot read problem file {spec_path}: {exc}") from exc
    except ValueError as exc:
        raise InvalidInputError(f"problem file {spec_path} is not valid JSON: {exc}") from exc
    try:
        constraints_doc = doc["constraints"]
        constraints = DataConstraints(
            description=constraints_doc["description"],
            schema_notes=constraints_doc.get("schema_notes", ""),
            size_notes=constraints_doc.get("size_notes", ""),
        )
        bundle = ProblemBundle(
            problem_id=str(doc["id"]),
            statement=doc["statement"],
            domain_tag=doc.get("domain_tag", ""),
            data_files=tuple(sorted((directory / "data").glob("*")) if (directory / "data").is_dir() else ()),
            constraints=constraints,
        )
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"problem file {spec_path} is missing required fields: {exc}") from exc
    for data_file in bundle.data_files:
        if not data_file.is_file():
            raise InvalidInputError(f"problem data file {data_file} does not exist")
    return bundle


# ---------------------------------------------------------------------------
# Run reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageError:
    stage: str
    kind: str
    message: str


@dataclass(frozen=True)
class RunReport:
    problem_id: str
    retrieved: tuple[tuple[str, float], ...]
    transcript: DebateTranscript | None
    sve: SveResult | None
    executed: bool
    admitted_to_kb: bool
    timings: Mapping[str, float]
    errors: tuple[StageError, ...]

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "retrieved": [{"entry_id": eid, "score": score} for eid, score in self.retrieved],
            "transcript": debate_mod.transcript_to_dict(self.transcript) if self.transcript else None,
            "sve": self.sve.to_dict() if self.sve else None,
            "executed": self.executed,
            "admitted_to_kb": self.admitted_to_kb,
            "timings": dict(self.timings),
            "errors": [{"stage": e.stage, "kind": e.kind, "message": e.message} for e in self.errors],
        }


def _persist_report(report: RunReport, out_dir: Path) -> None:
    (out_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    if report.transcript is not None:
        debate_mod.write_transcript_json(report.transcript, out_dir / "transcript.json")
        debate_mod.write_trajectory_csv(report.transcript, out_dir / "trajectory.csv")


def solve_problem(bundle: ProblemBundle, kb: KnowledgeBase, cfg: PipelineConfig,
                  provider: Provider, sandbox, out_dir: Path | str) -> RunReport:
    """Run retrieval, debate, and verified execution for one problem.

    Every stage failure is recorded under its stage label and downstream
    stages are skipped; the report (plus transcript and trajectory, when the
    debate ran) is always written to ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    team = AgentTeam.from_provider(provider)
    timings: dict[str, float] = {}
    errors: list[StageError] = []

    retrieved: tuple[tuple[str, float], ...] = ()
    grounded = None
    transcript = None
    m_star = None
    sve_result = None
    admitted = False

    start = time.perf_counter()
    try:
        augmented = kb_mod.augment_query(bundle.statement, bundle.domain_tag)
        query_vec = provider.embed(augmented.rendered())
        pairs = kb_mod.retrieve_top_k(kb, query_vec, cfg.k)
        grounded = kb_mod.assemble_grounded_input(bundle.statement, pairs)
        retrieved = tuple((entry.entry_id, score) for entry, score in pairs)
    except ScimindError as exc:
        errors.append(StageError(STAGE_RETRIEVAL, type(exc).__name__, str(exc)))
    timings[STAGE_RETRIEVAL] = time.perf_counter() - start

    if grounded is not None:
        start = time.perf_counter()
        try:
            m_star, transcript = debate_mod.run_debate(cfg.debate, grounded, bundle.constraints, team)
        except ScimindError as exc:
            errors.append(StageError(STAGE_DEBATE, type(exc).__name__, str(exc)))
        timings[STAGE_DEBATE] = time.perf_counter() - start

    if m_star is not None:
        start = time.perf_counter()
        try:
            workdir = out_dir / "work"
            workdir.mkdir(parents=True, exist_ok=True)
            for data_file in bundle.data_files:
                shutil.copy2(data_file, workdir / data_file.name)
            sve_result = bp_mod.run_sve(m_star, bundle.constraints, team, sandbox, cfg.sve, workdir)
        except ScimindError as exc:
            errors.append(StageError(STAGE_EXECUTION, type(exc).__name__, str(exc)))
        timings[STAGE_EXECUTION] = time.perf_counter() - start

    executed = sve_result.executed if sve_result is not None else False

    if executed:
        start = time.perf_counter()
        try:
            embedding = provider.embed(bundle.statement)
            entry = kb_mod.distill_entry(
                problem=bundle.statement,
                validated_code=sve_result.final.source,
                paradigm=m_star.formulation,
                embedding=embedding,
                run_id=bundle.problem_id,
            )
            admitted = kb_mod.admit_entry(kb, entry)
        except ScimindError as exc:
            errors.append(StageError(STAGE_ADMISSION, type(exc).__name__, str(exc)))
        timings[STAGE_ADMISSION] = time.perf_counter() - start

    report = RunReport(
        problem_id=bundle.problem_id,
        retrieved=retrieved,
        transcript=transcript,
        sve=sve_result,
        executed=executed,
        admitted_to_kb=admitted,
        timings=timings,
        errors=tuple(errors),
    )
    _persist_report(report, out_dir)
    return report


# ---------------------------------------------------------------------------
# Batch evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BatchReport:
    outcomes: tuple[RunReport, ...]
    ce: float

    def to_dict(self) -> dict:
        return {
            "problems": [
                {
                    "problem_id": r.problem_id,
                    "executed": r.executed,
                    "admitted_to_kb": r.admitted_to_kb,
                    "errors": [{"stage": e.stage, "kind": e.kind, "message": e.message} for e in r.errors],
                }
                for r in self.outcomes
            ],
            "ce": self.ce,
        }


def evaluate_batch(bundles: Sequence[ProblemBundle], kb: KnowledgeBase, cfg: PipelineConfig,
                   provider_factory: Callable[[], Provider], sandbox,
                   out_dir: Path | str) -> BatchReport:
    """Solve each bundle in order, sharing the knowledge base sequentially.

    Admissions from earlier problems are visible to later retrievals. Each
    problem gets a fresh provider so scripted mock ordinals stay scoped to a
    single run. Per-problem failures are recorded and the batch continues.
    """
    if not bundles:
        raise InvalidInputError("batch evaluation needs at least one problem")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports: list[RunReport] = []
    for bundle in bundles:
        provider = provider_factory()
        report = solve_problem(bundle, kb, cfg, provider, sandbox, out_dir / bundle.problem_id)
        reports.append(report)
    ce = bp_mod.code_executability([r.executed for r in reports])
    batch = BatchReport(tuple(reports), ce)
    (out_dir / "batch_report.json").write_text(
        json.dumps(batch.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return batch
