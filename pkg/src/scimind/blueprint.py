"""Blueprint construction, verification, and self-correcting execution.

The selected hypothesis is first translated into a blueprint (variables,
functions, ingestion, outputs), verified by formal predicates with a bounded
revision budget, then built into a candidate script that runs in a sandbox.
Runtime failures feed a bounded refine/re-execute loop that always keeps the
blueprint in context so corrections cannot drift from the validated model.
"""

from __future__ import annotations

import json
import logging
import re
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .debate import DataConstraints, Hypothesis
from .errors import (
    FixtureMissError,
    InvalidInputError,
    MalformedOutputError,
    SandboxUnavailableError,
)
from .gateway import Agent, AgentTeam

logger = logging.getLogger(__name__)

DEFAULT_T_MAX = 3
DEFAULT_J_MAX = 3
DEFAULT_SANDBOX_TIMEOUT = 120.0
DEFAULT_TRACE_TRUNCATION = 8000
DEFAULT_STDOUT_TAIL_CHARS = 4000

SOLUTION_FILENAME = "solution.py"
RUN_SUBDIR = "run"

_CODE_FENCE_RE = re.compile(r"```(?:python)?\s*\n(.*?)```", re.DOTALL)
_SHAPE_ANNOTATION_RE = re.compile(r"\b([A-Za-z_]\w*)\s*\[([^\[\]]*)\]")
_VARIABLES_LINE_RE = re.compile(r"^\s*variables\s*:\s*(.+)$", re.IGNORECASE | re.MULTILINE)
_IDENTIFIER_RE = re.compile(r"[A-Za-z_]\w*")


# ---------------------------------------------------------------------------
# Blueprint model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlueprintVariable:
    name: str
    type_tag: str
    dims: tuple[int | str, ...] = ()


@dataclass(frozen=True)
class BlueprintFunction:
    name: str
    signature: str
    dependencies: tuple[str, ...] = ()


@dataclass(frozen=True)
class IngestionSource:
    name: str
    format: str
    fields: tuple[str, ...] = ()


@dataclass(frozen=True)
class OutputFile:
    name: str
    format: str


@dataclass(frozen=True)
class Blueprint:
    """Intermediate spec between hypothesis and code.

    Construction enforces unique, resolvable names; dependency acyclicity is
    deliberately left to verification so a cyclic blueprint can be diagnosed
    and revised rather than rejected outright.
    """

    variables: tuple[BlueprintVariable, ...]
    functions: tuple[BlueprintFunction, ...]
    ingestion: tuple[IngestionSource, ...]
    output: tuple[OutputFile, ...]
    revision: int = 0

    def __post_init__(self):
        if self.revision < 0:
            raise InvalidInputError("blueprint revision must be non-negative")
        names = [v.name for v in self.variables] + [f.name for f in self.functions]
        if any(not n.strip() for n in names):
            raise InvalidInputError("blueprint names must be non-empty")
        if len(set(names)) != len(names):
            raise InvalidInputError("blueprint variable/function names must be unique")
        declared = set(names)
        for func in self.functions:
            for dep in func.dependencies:
                if dep not in declared:
                    raise InvalidInputError(
                        f"function {func.name!r} depends on undeclared name {dep!r}"
                    )

    def variable_names(self) -> set[str]:
        return {v.name for v in self.variables}

    def output_file_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.output)

    def to_dict(self) -> dict:
        return {
            "variables": [
                {"name": v.name, "type_tag": v.type_tag, "dims": list(v.dims)}
                for v in self.variables
            ],
            "functions": [
                {"name": f.name, "signature": f.signature, "dependencies": list(f.dependencies)}
                for f in self.functions
            ],
            "ingestion": {
                "sources": [
                    {"name": s.name, "format": s.format, "fields": list(s.fields)}
                    for s in self.ingestion
                ]
            },
            "output": {"files": [{"name": f.name, "format": f.format} for f in self.output]},
            "revision": self.revision,
        }


def blueprint_from_dict(doc: Mapping[str, Any], revision: int | None = None) -> Blueprint:
    return Blueprint(
        variables=tuple(
            BlueprintVariable(v["name"], v["type_tag"], tuple(v.get("dims", ())))
            for v in doc.get("variables", ())
        ),
        functions=tuple(
            BlueprintFunction(f["name"], f["signature"], tuple(f.get("dependencies", ())))
            for f in doc.get("functions", ())
        ),
        ingestion=tuple(
            IngestionSource(s["name"], s["format"], tuple(s.get("fields", ())))
            for s in doc.get("ingestion", {}).get("sources", ())
        ),
        output=tuple(
            OutputFile(f["name"], f["format"]) for f in doc.get("output", {}).get("files", ())
        ),
        revision=doc.get("revision", 0) if revision is None else revision,
    )


def blueprint_to_json(bp: Blueprint) -> str:
    return json.dumps(bp.to_dict(), indent=2)


# ---------------------------------------------------------------------------
# Verification predicates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredicateResult:
    name: str
    passed: bool
    diagnostic: str = ""

    def __post_init__(self):
        if self.passed and self.diagnostic:
            raise InvalidInputError("passing predicates carry no diagnostic")
        if not self.passed and not self.diagnostic.strip():
            raise InvalidInputError("failing predicates require a diagnostic")


def _schema_tokens(text: str) -> set[str]:
    return {tok.lower() for tok in re.findall(r"[A-Za-z0-9_]+", text)}


def predicate_data_availability(bp: Blueprint, d_obs: DataConstraints) -> PredicateResult:
    """Every ingestion field must be referenced by the dataset schema notes."""
    available = _schema_tokens(d_obs.schema_notes)
    missing = [
        f"{source.name}.{field_name}"
        for source in bp.ingestion
        for field_name in source.fields
        if field_name.lower() not in available
    ]
    if missing:
        return PredicateResult(
            "data_availability", False,
            f"ingestion fields not present in the dataset schema: {', '.join(missing)}",
        )
    return PredicateResult("data_availability", True)


def predicate_dimensional_consistency(bp: Blueprint) -> PredicateResult:
    """Declared dims must agree wherever a symbolic size is shared.

    Two checkable rules: (1) a symbolic size that is itself a declared
    variable must be scalar (you cannot use an array as a size), and (2) any
    shape annotation ``name[d1,d2,...]`` appearing in a function signature
    for a declared variable must match that variable's declared dims
    elementwise.
    """
    problems: list[str] = []
    declared = {v.name: v.dims for v in bp.variables}
    symbolic = {d for v in bp.variables for d in v.dims if isinstance(d, str)}
    for symbol in sorted(symbolic):
        if symbol in declared and declared[symbol] not in ((), (1,)):
            problems.append(
                f"size symbol {symbol!r} is declared as a non-scalar variable with dims {list(declared[symbol])}"
            )
    for func in bp.functions:
        for match in _SHAPE_ANNOTATION_RE.finditer(func.signature):
            name, inner = match.group(1), match.group(2)
            if name not in declared:
                continue
            tokens = [t.strip() for t in inner.split(",") if t.strip()]
            annotated: list[int | str] = []
            for token in tokens:
                if re.fullmatch(r"\d+", token):
                    annotated.append(int(token))
                elif _IDENTIFIER_RE.fullmatch(token):
                    annotated.append(token)
                else:
                    annotated = []
                    break
            if not annotated:
                continue  # not a shape annotation (an expression, a slice, ...)
            if tuple(annotated) != declared[name]:
                problems.append(
                    f"function {func.name!r} annotates {name}[{inner}] but {name!r} "
                    f"is declared with dims {list(declared[name])}"
                )
    if problems:
        return PredicateResult("dimensional_consistency", False, "; ".join(problems))
    return PredicateResult("dimensional_consistency", True)


def predicate_variable_coverage(bp: Blueprint, m_star: Hypothesis) -> PredicateResult:
    """Every symbol on the hypothesis's ``Variables:`` line must be declared."""
    match = _VARIABLES_LINE_RE.search(m_star.formulation)
    if match is None:
        return PredicateResult("variable_coverage", True)
    symbols = []
    for chunk in match.group(1).split(","):
        ident = _IDENTIFIER_RE.search(chunk)
        if ident:
            symbols.append(ident.group(0))
    declared = bp.variable_names()
    missing = [s for s in symbols if s not in declared]
    if missing:
        return PredicateResult(
            "variable_coverage", False,
            f"hypothesis variables not declared in the blueprint: {', '.join(missing)}",
        )
    return PredicateResult("variable_coverage", True)


def predicate_dependency_acyclicity(bp: Blueprint) -> PredicateResult:
    """The function dependency graph must contain no cycle."""
    function_names = {f.name for f in bp.functions}
    edges = {
        f.name: [d for d in f.dependencies if d in function_names] for f in bp.functions
    }
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {name: WHITE for name in function_names}
    cycle: list[str] | None = None

    for start in edges:
        if color[start] != WHITE or cycle is not None:
            continue
        stack: list[tuple[str, int]] = [(start, 0)]
        color[start] = GRAY
        path = [start]
        while stack and cycle is None:
            node, idx = stack[-1]
            if idx < len(edges[node]):
                stack[-1] = (node, idx + 1)
                child = edges[node][idx]
                if color[child] == GRAY:
                    cycle = path[path.index(child):] + [child]
                elif color[child] == WHITE:
                    color[child] = GRAY
                    stack.append((child, 0))
                    path.append(child)
            else:
                color[node] = BLACK
                stack.pop()
                path.pop()
    if cycle:
        return PredicateResult(
            "dependency_acyclicity", False,
            f"function dependency cycle: {' -> '.join(cycle)}",
        )
    return PredicateResult("dependency_acyclicity", True)


# ---------------------------------------------------------------------------
# Agent-driven blueprint operations
# ---------------------------------------------------------------------------


def construct_blueprint(architect: Agent, m_star: Hypothesis) -> Blueprint:
    """Translate the selected hypothesis into a revision-0 blueprint.

    A response that parses but violates structural invariants (duplicate or
    unresolvable names) is a format failure, not a verification failure.
    """
    payload = architect.ask_structured(
        f"Translate this model hypothesis into a blueprint.\n\n{m_star.formulation}",
        "blueprint",
    )
    try:
        return blueprint_from_dict(payload, revision=0)
    except InvalidInputError as exc:
        raise MalformedOutputError(f"blueprint violates structural invariants: {exc}",
                                   raw=json.dumps(payload)) from exc


def verify_blueprint(verifier: Agent, bp: Blueprint, m_star: Hypothesis,
                     d_obs: DataConstraints) -> tuple[int, list[PredicateResult]]:
    """Evaluate all consistency predicates; the verdict is their product.

    Four built-in structural predicates run without the provider; the
    verifier agent then contributes semantic predicates, each forced to a
    binary verdict.
    """
    results = [
        predicate_data_availability(bp, d_obs),
        predicate_dimensional_consistency(bp),
        predicate_variable_coverage(bp, m_star),
        predicate_dependency_acyclicity(bp),
    ]
    user_text = (
        f"Blueprint:\n{blueprint_to_json(bp)}\n\n"
        f"Hypothesis:\n{m_star.formulation}\n\n{d_obs.rendered()}"
    )
    payload = verifier.ask_structured(user_text, "verdicts")
    for item in payload["predicates"]:
        results.append(PredicateResult(item["name"], item["passed"], item["diagnostic"]))
    verdict = 1 if all(r.passed for r in results) else 0
    return verdict, results


def revise_blueprint(architect: Agent, bp: Blueprint,
                     xi: Sequence[PredicateResult]) -> Blueprint:
    """Ask the architect to fix the cited violations, preserving what passed."""
    if not xi:
        raise InvalidInputError("revision requires at least one violated predicate")
    if any(r.passed for r in xi):
        raise InvalidInputError("revision takes only failed predicates")
    violations = "\n".join(f"- {r.name}: {r.diagnostic}" for r in xi)
    user_text = (
        f"This blueprint failed verification.\n\nBlueprint:\n{blueprint_to_json(bp)}\n\n"
        f"Violated predicates:\n{violations}\n\n"
        "Produce a corrected blueprint that resolves every violation while "
        "preserving the components that passed verification."
    )
    payload = architect.ask_structured(user_text, "blueprint")
    try:
        return blueprint_from_dict(payload, revision=bp.revision + 1)
    except InvalidInputError as exc:
        raise MalformedOutputError(f"revised blueprint violates structural invariants: {exc}",
                                   raw=json.dumps(payload)) from exc


# ---------------------------------------------------------------------------
# Code artifacts and execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CodeArtifact:
    source: str
    blueprint_revision: int
    attempt: int = 0

    def __post_init__(self):
        if not self.source.strip():
            raise InvalidInputError("code artifact source must be non-empty")
        if self.attempt < 0:
            raise InvalidInputError("attempt index must be non-negative")


@dataclass(frozen=True)
class ExecutionReport:
    success: bool
    exit_status: int
    error_trace: str = ""
    stdout_tail: str = ""
    wall_time: float = 0.0
    timed_out: bool = False

    def __post_init__(self):
        if self.success and (self.exit_status != 0 or self.error_trace or self.timed_out):
            raise InvalidInputError(
                "a successful report requires exit 0, no error trace, and no timeout"
            )

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "exit_status": self.exit_status,
            "error_trace": self.error_trace,
            "stdout_tail": self.stdout_tail,
            "wall_time": self.wall_time,
            "timed_out": self.timed_out,
        }


@dataclass(frozen=True)
class SveConfig:
    t_max: int = DEFAULT_T_MAX
    j_max: int = DEFAULT_J_MAX
    sandbox_timeout: float = DEFAULT_SANDBOX_TIMEOUT
    trace_truncation: int = DEFAULT_TRACE_TRUNCATION

    def __post_init__(self):
        if self.t_max < 1 or self.j_max < 1:
            raise InvalidInputError("verification and refinement budgets must be positive")
        if self.sandbox_timeout <= 0 or self.trace_truncation <= 0:
            raise InvalidInputError("timeout and trace truncation must be positive")


_RUNNER_REPORT_KEYS = {"success", "exit_status", "stdout_tail", "wall_time_seconds", "timed_out"}


class SubprocessRunnerSandbox:
    """Invokes the external runner command on a candidate script.

    Contract: ``runner <script> --workdir <dir> --timeout <sec>
    --stdout-tail <n>`` printing exactly one JSON report on stdout. A missing
    or crashing runner (no report) is a sandbox failure, distinct from a
    failing candidate.
    """

    def __init__(self, command: Sequence[str], stdout_tail_chars: int = DEFAULT_STDOUT_TAIL_CHARS):
        if not command:
            raise InvalidInputError("runner command must be non-empty")
        self.command = list(command)
        self.stdout_tail_chars = stdout_tail_chars

    def run(self, script: Path, workdir: Path, timeout: float) -> dict:
        argv = self.command + [
            str(script),
            "--workdir", str(workdir),
            "--timeout", str(timeout),
            "--stdout-tail", str(self.stdout_tail_chars),
        ]
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True,
                timeout=timeout + 60.0,  # the runner enforces the real timeout
            )
        except FileNotFoundError as exc:
            raise SandboxUnavailableError(
                f"sandbox runner not found: {shlex.join(self.command)}"
            ) from exc
        except subprocess.TimeoutExpired as exc:
            raise SandboxUnavailableError("sandbox runner hung past its own timeout") from exc
        if proc.returncode != 0:
            raise SandboxUnavailableError(
                f"sandbox runner exited with status {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        try:
            report = json.loads(proc.stdout)
        except ValueError as exc:
            raise SandboxUnavailableError(
                f"sandbox runner produced no parseable report: {exc}"
            ) from exc
        if not isinstance(report, dict) or not _RUNNER_REPORT_KEYS.issubset(report):
            raise SandboxUnavailableError("sandbox runner report is missing required fields")
        return report


class StubSandbox:
    """Scripted sandbox for offline tests: replays canned runner reports.

    A scripted report may carry a ``touch_files`` key; those files are
    created in the workdir when the report is served, simulating a candidate
    that produced its declared outputs.
    """

    def __init__(self, reports: Sequence[Mapping[str, Any]]):
        self._reports = list(reports)
        self.calls: list[tuple[Path, Path]] = []

    def run(self, script: Path, workdir: Path, timeout: float) -> dict:
        self.calls.append((Path(script), Path(workdir)))
        if not self._reports:
            raise FixtureMissError("stub sandbox has no scripted report left")
        report = dict(self._reports.pop(0))
        for name in report.pop("touch_files", ()):
            (Path(workdir) / name).touch()
        return report


def make_runner_report(success: bool = True, exit_status: int | None = None,
                       exception_type: str = "", exception_message: str = "",
                       traceback_frames: Sequence[Mapping[str, Any]] = (),
                       stdout_tail: str = "", wall_time_seconds: float = 0.01,
                       timed_out: bool = False,
                       touch_files: Sequence[str] = ()) -> dict:
    """A well-formed runner report dict, mainly for stubs and tests."""
    if exit_status is None:
        exit_status = 0 if success else 1
    report = {
        "success": success,
        "exit_status": exit_status,
        "exception_type": exception_type,
        "exception_message": exception_message,
        "traceback_frames": [dict(f) for f in traceback_frames],
        "stdout_tail": stdout_tail,
        "wall_time_seconds": wall_time_seconds,
        "timed_out": timed_out,
    }
    if touch_files:
        report["touch_files"] = list(touch_files)
    return report


def _compose_error_trace(report: Mapping[str, Any]) -> str:
    if report.get("timed_out"):
        return "execution timed out"
    exception_type = report.get("exception_type") or ""
    if not exception_type:
        return f"process exited with status {report.get('exit_status')}"
    lines = []
    for frame in report.get("traceback_frames", ()):
        lines.append(
            f"  File \"{frame.get('file')}\", line {frame.get('line')}, in {frame.get('function')}"
        )
    lines.append(f"{exception_type}: {report.get('exception_message', '')}")
    return "\n".join(lines)


def execute_code(sandbox, code: CodeArtifact, workdir: Path,
                 expected_files: Sequence[str] = (),
                 timeout: float = DEFAULT_SANDBOX_TIMEOUT) -> ExecutionReport:
    """Write the candidate into the workdir, run it, and judge validity.

    Valid output means the process exited 0 *and* every declared output file
    now exists in the workdir; a clean exit that fails to produce them is
    reported as a failure with an actionable trace.
    """
    workdir = Path(workdir)
    if not workdir.is_dir():
        raise InvalidInputError(f"workdir {workdir} does not exist")
    script = workdir / SOLUTION_FILENAME
    script.write_text(code.source, encoding="utf-8")
    report = sandbox.run(script, workdir, timeout)

    missing = [name for name in expected_files if not (workdir / name).exists()]
    ran_ok = bool(report["success"])
    success = ran_ok and not missing
    if success:
        error_trace = ""
    elif ran_ok:
        error_trace = f"declared output files were not produced: {', '.join(missing)}"
    else:
        error_trace = _compose_error_trace(report)
    return ExecutionReport(
        success=success,
        exit_status=int(report["exit_status"]),
        error_trace=error_trace,
        stdout_tail=str(report.get("stdout_tail", "")),
        wall_time=float(report["wall_time_seconds"]),
        timed_out=bool(report["timed_out"]),
    )


def _extract_code(raw: str) -> str:
    match = _CODE_FENCE_RE.search(raw)
    source = match.group(1) if match else raw
    return source.strip()


def build_code(builder: Agent, bp: Blueprint) -> CodeArtifact:
    """Ask the builder for a complete candidate script implementing the blueprint."""
    raw = builder.ask_text(
        f"Implement this blueprint as one runnable Python script.\n\n{blueprint_to_json(bp)}"
    )
    source = _extract_code(raw)
    if not source:
        raise MalformedOutputError("builder produced an empty script", raw=raw)
    return CodeArtifact(source=source, blueprint_revision=bp.revision, attempt=0)


def refine_code(refiner: Agent, code: CodeArtifact, report: ExecutionReport,
                bp: Blueprint, trace_truncation: int = DEFAULT_TRACE_TRUNCATION) -> CodeArtifact:
    """Produce the next attempt from the failure trace, blueprint in context.

    Only the final ``trace_truncation`` characters of the trace are fed back;
    traceback tails carry the proximate error.
    """
    if report.success:
        raise InvalidInputError("refinement requires a failing execution report")
    trace = report.error_trace[-trace_truncation:]
    user_text = (
        f"The script below failed.\n\nSource:\n```python\n{code.source}\n```\n\n"
        f"Error trace:\n{trace}\n\n"
        f"Blueprint (stay faithful to it):\n{blueprint_to_json(bp)}"
    )
    raw = refiner.ask_text(user_text)
    source = _extract_code(raw)
    if not source:
        raise MalformedOutputError("refiner produced an empty script", raw=raw)
    return CodeArtifact(source=source, blueprint_revision=bp.revision, attempt=code.attempt + 1)


# ---------------------------------------------------------------------------
# End-to-end loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerificationCycle:
    revision: int
    verdict: int
    results: tuple[PredicateResult, ...]

    def to_dict(self) -> dict:
        return {
            "revision": self.revision,
            "verdict": self.verdict,
            "results": [
                {"name": r.name, "passed": r.passed, "diagnostic": r.diagnostic}
                for r in self.results
            ],
        }


@dataclass(frozen=True)
class SveResult:
    final: CodeArtifact
    reports: tuple[ExecutionReport, ...]
    verification_log: tuple[VerificationCycle, ...]
    blueprint: Blueprint
    override_used: bool

    @property
    def executed(self) -> bool:
        return self.reports[-1].success if self.reports else False

    def to_dict(self) -> dict:
        return {
            "blueprint_revision": self.blueprint.revision,
            "override_used": self.override_used,
            "verification": [c.to_dict() for c in self.verification_log],
            "reports": [r.to_dict() for r in self.reports],
            "final_attempt": self.final.attempt,
            "executed": self.executed,
        }


def run_sve(m_star: Hypothesis, d_obs: DataConstraints, team: AgentTeam, sandbox,
            cfg: SveConfig, workdir: Path) -> SveResult:
    """Blueprint -> verify/revise -> build -> execute/refine, budget-bounded.

    If the verification budget exhausts without a clean verdict, the build
    proceeds on the latest blueprint with the override flagged. A candidate
    that still fails after the final refinement leaves the result marked
    unexecutable; that is an outcome, not an error.
    """
    workdir = Path(workdir)
    if not workdir.is_dir():
        raise InvalidInputError(f"workdir {workdir} does not exist")
    run_dir = workdir / RUN_SUBDIR
    run_dir.mkdir(parents=True, exist_ok=True)

    bp = construct_blueprint(team.architect, m_star)
    (run_dir / f"blueprint_rev{bp.revision}.json").write_text(
        blueprint_to_json(bp) + "\n", encoding="utf-8"
    )
    verification_log: list[VerificationCycle] = []
    verified = False
    for cycle in range(cfg.t_max):
        verdict, results = verify_blueprint(team.verifier, bp, m_star, d_obs)
        record = VerificationCycle(bp.revision, verdict, tuple(results))
        verification_log.append(record)
        (run_dir / f"verification_cycle{cycle}.json").write_text(
            json.dumps(record.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        if verdict == 1:
            verified = True
            break
        if cycle == cfg.t_max - 1:
            break
        bp = revise_blueprint(team.architect, bp, [r for r in results if not r.passed])
        (run_dir / f"blueprint_rev{bp.revision}.json").write_text(
            blueprint_to_json(bp) + "\n", encoding="utf-8"
        )
    override_used = not verified
    if override_used:
        logger.warning("verification budget exhausted; building from the latest blueprint")

    artifact = build_code(team.builder, bp)
    (run_dir / f"attempt_{artifact.attempt}.py").write_text(artifact.source, encoding="utf-8")

    expected = bp.output_file_names()
    reports: list[ExecutionReport] = []
    report = execute_code(sandbox, artifact, workdir, expected, cfg.sandbox_timeout)
    reports.append(report)
    (run_dir / f"report_attempt_{artifact.attempt}.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    while not report.success and artifact.attempt < cfg.j_max:
        artifact = refine_code(team.refiner, artifact, report, bp, cfg.trace_truncation)
        (run_dir / f"attempt_{artifact.attempt}.py").write_text(artifact.source, encoding="utf-8")
        report = execute_code(sandbox, artifact, workdir, expected, cfg.sandbox_timeout)
        reports.append(report)
        (run_dir / f"report_attempt_{artifact.attempt}.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
    return SveResult(
        final=artifact,
        reports=tuple(reports),
        verification_log=tuple(verification_log),
        blueprint=bp,
        override_used=override_used,
    )


def code_executability(outcomes: Sequence[bool]) -> float:
    """Fraction of successful outcomes over a problem set."""
    if not outcomes:
        raise InvalidInputError("executability is undefined for an empty outcome set")
    return sum(1 for o in outcomes if o) / len(outcomes)
