"""Blueprint parsing, verification predicates, and the execution loop."""

from __future__ import annotations

import itertools
import json
import random
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scimind.blueprint import (
    Blueprint,
    BlueprintFunction,
    BlueprintVariable,
    CodeArtifact,
    ExecutionReport,
    PredicateResult,
    StubSandbox,
    SubprocessRunnerSandbox,
    SveConfig,
    blueprint_from_dict,
    blueprint_to_json,
    build_code,
    code_executability,
    construct_blueprint,
    execute_code,
    make_runner_report,
    predicate_data_availability,
    predicate_dependency_acyclicity,
    predicate_dimensional_consistency,
    predicate_variable_coverage,
    refine_code,
    revise_blueprint,
    run_sve,
    verify_blueprint,
)
from scimind.debate import DataConstraints, Hypothesis
from scimind.errors import (
    InvalidInputError,
    MalformedOutputError,
    SandboxUnavailableError,
)
from scimind.gateway import Agent, AgentTeam, MockProvider, Role

from .conftest import (
    BUILDER_SCRIPT,
    builder_response,
    cyclic_blueprint_dict,
    sve_fixtures,
    valid_blueprint_dict,
    verdicts_response,
)

HYPOTHESIS = Hypothesis(
    "hyp-r4", 4,
    "Population spreads along the county adjacency graph.\n"
    "Variables: pop, adjacency, growth_rate, n_counties",
)


@pytest.fixture
def d_obs(constraints) -> DataConstraints:
    return constraints


def agent(provider: MockProvider, role: Role) -> Agent:
    return Agent(provider, role)


# ---------------------------------------------------------------------------
# Blueprint structure
# ---------------------------------------------------------------------------


def test_blueprint_from_dict_roundtrip():
    bp = blueprint_from_dict(valid_blueprint_dict())
    assert bp.revision == 0
    assert bp.variable_names() == {"n_counties", "pop", "adjacency", "growth_rate"}
    assert bp.output_file_names() == ("forecast.csv",)
    assert json.loads(blueprint_to_json(bp))["functions"][1]["dependencies"][0] == "load_inputs"


def test_blueprint_rejects_duplicate_names():
    doc = valid_blueprint_dict()
    doc["variables"].append({"name": "pop", "type_tag": "int", "dims": []})
    with pytest.raises(InvalidInputError):
        blueprint_from_dict(doc)


def test_blueprint_rejects_undeclared_dependency():
    doc = valid_blueprint_dict()
    doc["functions"][0]["dependencies"] = ["ghost"]
    with pytest.raises(InvalidInputError):
        blueprint_from_dict(doc)


def test_blueprint_allows_cycles_at_parse_time():
    # cycles are a verification concern, not a parse failure
    bp = blueprint_from_dict(cyclic_blueprint_dict())
    assert not predicate_dependency_acyclicity(bp).passed


# ---------------------------------------------------------------------------
# Built-in predicates
# ---------------------------------------------------------------------------


def test_data_availability_passes_when_fields_are_in_schema(d_obs):
    bp = blueprint_from_dict(valid_blueprint_dict())
    assert predicate_data_availability(bp, d_obs).passed


def test_data_availability_reports_missing_fields(d_obs):
    doc = valid_blueprint_dict()
    doc["ingestion"]["sources"][0]["fields"].append("wind_speed")
    result = predicate_data_availability(blueprint_from_dict(doc), d_obs)
    assert not result.passed
    assert "wind_speed" in result.diagnostic


def test_dimensional_consistency_accepts_shared_symbols():
    assert predicate_dimensional_consistency(blueprint_from_dict(valid_blueprint_dict())).passed


def test_dimensional_consistency_rejects_nonscalar_size_symbol():
    doc = valid_blueprint_dict()
    doc["variables"][0]["dims"] = ["n_counties"]  # n_counties sized by itself, non-scalar
    result = predicate_dimensional_consistency(blueprint_from_dict(doc))
    assert not result.passed
    assert "n_counties" in result.diagnostic


def test_dimensional_consistency_rejects_signature_shape_mismatch():
    doc = valid_blueprint_dict()
    doc["functions"][1]["signature"] = "step_population(pop[n_counties, n_counties]) -> pop"
    result = predicate_dimensional_consistency(blueprint_from_dict(doc))
    assert not result.passed
    assert "step_population" in result.diagnostic


def test_variable_coverage_passes_when_all_symbols_declared():
    bp = blueprint_from_dict(valid_blueprint_dict())
    assert predicate_variable_coverage(bp, HYPOTHESIS).passed


def test_variable_coverage_reports_missing_symbols():
    hypothesis = Hypothesis("h", 1, "model text\nVariables: pop, mystery_term")
    result = predicate_variable_coverage(blueprint_from_dict(valid_blueprint_dict()), hypothesis)
    assert not result.passed
    assert "mystery_term" in result.diagnostic


def test_variable_coverage_without_variables_line_is_vacuous():
    hypothesis = Hypothesis("h", 1, "model text with no symbol list")
    assert predicate_variable_coverage(blueprint_from_dict(valid_blueprint_dict()), hypothesis).passed


def test_acyclicity_detects_two_cycle():
    result = predicate_dependency_acyclicity(blueprint_from_dict(cyclic_blueprint_dict()))
    assert not result.passed
    assert "f1" in result.diagnostic and "f2" in result.diagnostic


def _has_cycle_oracle(edges: dict[str, list[str]]) -> bool:
    # independent recursive three-state DFS
    visited: set[str] = set()
    in_stack: set[str] = set()

    def visit(node: str) -> bool:
        if node in in_stack:
            return True
        if node in visited:
            return False
        visited.add(node)
        in_stack.add(node)
        if any(visit(child) for child in edges[node]):
            return True
        in_stack.discard(node)
        return False

    return any(visit(node) for node in edges)


def test_acyclicity_agrees_with_dfs_oracle_on_random_graphs():
    rng = random.Random(20240811)
    sys.setrecursionlimit(10000)
    for _ in range(200):
        n = rng.randint(1, 50)
        names = [f"f{i}" for i in range(n)]
        edges = {
            name: rng.sample(names, k=rng.randint(0, min(4, n))) for name in names
        }
        functions = tuple(
            BlueprintFunction(name, f"{name}()", tuple(edges[name])) for name in names
        )
        bp = Blueprint(variables=(), functions=functions, ingestion=(), output=())
        assert predicate_dependency_acyclicity(bp).passed == (not _has_cycle_oracle(edges))


def test_predicate_result_diagnostic_invariant():
    with pytest.raises(InvalidInputError):
        PredicateResult("p", False, "")
    with pytest.raises(InvalidInputError):
        PredicateResult("p", True, "should not be here")


# ---------------------------------------------------------------------------
# Agent-driven blueprint ops
# ---------------------------------------------------------------------------


def test_construct_blueprint_from_fixture():
    provider = MockProvider({"architect": [json.dumps(valid_blueprint_dict())]})
    bp = construct_blueprint(agent(provider, Role.ARCHITECT), HYPOTHESIS)
    assert bp.revision == 0
    assert len(bp.variables) == 4


def test_construct_blueprint_duplicate_name_is_malformed():
    doc = valid_blueprint_dict()
    doc["functions"].append({"name": "pop", "signature": "pop()", "dependencies": []})
    response = json.dumps(doc)
    provider = MockProvider({"architect": [response, response]})
    with pytest.raises(MalformedOutputError):
        construct_blueprint(agent(provider, Role.ARCHITECT), HYPOTHESIS)


def test_construct_blueprint_undeclared_dependency_is_malformed():
    doc = valid_blueprint_dict()
    doc["functions"][0]["dependencies"] = ["missing_name"]
    response = json.dumps(doc)
    provider = MockProvider({"architect": [response, response]})
    with pytest.raises(MalformedOutputError):
        construct_blueprint(agent(provider, Role.ARCHITECT), HYPOTHESIS)


def test_verify_blueprint_all_pass(d_obs):
    provider = MockProvider({"verifier": [verdicts_response(True)]})
    bp = blueprint_from_dict(valid_blueprint_dict())
    verdict, results = verify_blueprint(agent(provider, Role.VERIFIER), bp, HYPOTHESIS, d_obs)
    assert verdict == 1
    assert all(r.passed for r in results)
    builtin_names = [r.name for r in results[:4]]
    assert builtin_names == [
        "data_availability", "dimensional_consistency", "variable_coverage", "dependency_acyclicity",
    ]


def test_verify_blueprint_single_semantic_failure(d_obs):
    provider = MockProvider({"verifier": [verdicts_response(False)]})
    bp = blueprint_from_dict(valid_blueprint_dict())
    verdict, results = verify_blueprint(agent(provider, Role.VERIFIER), bp, HYPOTHESIS, d_obs)
    assert verdict == 0
    failed = [r.name for r in results if not r.passed]
    assert failed == ["adjacency_matrix_integrity"]


def test_verify_blueprint_flags_cycle(d_obs):
    provider = MockProvider({"verifier": [verdicts_response(True)]})
    bp = blueprint_from_dict(cyclic_blueprint_dict())
    verdict, results = verify_blueprint(agent(provider, Role.VERIFIER), bp, HYPOTHESIS, d_obs)
    assert verdict == 0
    assert "dependency_acyclicity" in [r.name for r in results if not r.passed]


@settings(max_examples=60)
@given(verdicts=st.lists(st.booleans(), min_size=0, max_size=6))
def test_verify_verdict_equals_brute_force_conjunction(verdicts):
    predicates = [
        {"name": f"semantic_{i}", "passed": passed, "diagnostic": "" if passed else "bad"}
        for i, passed in enumerate(verdicts)
    ]
    provider = MockProvider({"verifier": [json.dumps({"predicates": predicates})]})
    bp = blueprint_from_dict(valid_blueprint_dict())
    d_obs = DataConstraints(
        "desc", "county_id, population_count, adjacency_matrix, temperature, precipitation", ""
    )
    verdict, results = verify_blueprint(agent(provider, Role.VERIFIER), bp, HYPOTHESIS, d_obs)
    brute_force = 1
    for result in results:
        brute_force *= int(result.passed)
    assert verdict == brute_force == int(all(r.passed for r in results))


def test_revise_blueprint_increments_revision(d_obs):
    provider = MockProvider({"architect": [json.dumps(valid_blueprint_dict())]})
    bp = blueprint_from_dict(cyclic_blueprint_dict())
    xi = [PredicateResult("dependency_acyclicity", False, "cycle f1 -> f2 -> f1")]
    revised = revise_blueprint(agent(provider, Role.ARCHITECT), bp, xi)
    assert revised.revision == 1
    assert predicate_dependency_acyclicity(revised).passed
    prompt = provider.calls[0].user_text
    assert "cycle f1 -> f2 -> f1" in prompt
    assert "preserving the components that passed" in prompt


def test_revise_blueprint_rejects_empty_or_passing_xi():
    provider = MockProvider({})
    bp = blueprint_from_dict(valid_blueprint_dict())
    with pytest.raises(InvalidInputError):
        revise_blueprint(agent(provider, Role.ARCHITECT), bp, [])
    with pytest.raises(InvalidInputError):
        revise_blueprint(agent(provider, Role.ARCHITECT), bp, [PredicateResult("ok", True, "")])


def test_build_code_tags_blueprint_revision():
    provider = MockProvider({"builder": [builder_response()]})
    doc = valid_blueprint_dict()
    doc["revision"] = 2
    artifact = build_code(agent(provider, Role.BUILDER), blueprint_from_dict(doc))
    assert artifact.attempt == 0
    assert artifact.blueprint_revision == 2
    assert artifact.source == BUILDER_SCRIPT.strip()


def test_build_code_empty_response_is_malformed():
    provider = MockProvider({"builder": ["   \n"]})
    with pytest.raises(MalformedOutputError):
        build_code(agent(provider, Role.BUILDER), blueprint_from_dict(valid_blueprint_dict()))


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def artifact(source: str = "print('hi')", attempt: int = 0) -> CodeArtifact:
    return CodeArtifact(source=source, blueprint_revision=0, attempt=attempt)


def test_execute_code_success(tmp_path):
    sandbox = StubSandbox([make_runner_report(success=True, touch_files=("out.csv",))])
    report = execute_code(sandbox, artifact(), tmp_path, expected_files=("out.csv",))
    assert report.success
    assert report.exit_status == 0
    assert report.error_trace == ""
    assert (tmp_path / "solution.py").read_text() == "print('hi')"


def test_execute_code_candidate_exception(tmp_path):
    sandbox = StubSandbox([
        make_runner_report(
            success=False, exit_status=1, exception_type="ZeroDivisionError",
            exception_message="division by zero",
            traceback_frames=[{"file": "solution.py", "line": 3, "function": "<module>"}],
        )
    ])
    report = execute_code(sandbox, artifact(), tmp_path)
    assert not report.success
    assert "ZeroDivisionError: division by zero" in report.error_trace
    assert 'line 3' in report.error_trace


def test_execute_code_timeout(tmp_path):
    sandbox = StubSandbox([make_runner_report(success=False, exit_status=-9, timed_out=True,
                                              wall_time_seconds=2.1)])
    report = execute_code(sandbox, artifact(), tmp_path)
    assert not report.success
    assert report.timed_out
    assert "timed out" in report.error_trace


def test_execute_code_missing_declared_output_fails(tmp_path):
    sandbox = StubSandbox([make_runner_report(success=True)])
    report = execute_code(sandbox, artifact(), tmp_path, expected_files=("forecast.csv",))
    assert not report.success
    assert "forecast.csv" in report.error_trace
    assert report.exit_status == 0


def test_execute_code_requires_existing_workdir(tmp_path):
    with pytest.raises(InvalidInputError):
        execute_code(StubSandbox([]), artifact(), tmp_path / "missing")


def test_execution_report_success_invariant():
    with pytest.raises(InvalidInputError):
        ExecutionReport(success=True, exit_status=1)
    with pytest.raises(InvalidInputError):
        ExecutionReport(success=True, exit_status=0, error_trace="boom")
    with pytest.raises(InvalidInputError):
        ExecutionReport(success=True, exit_status=0, timed_out=True)


def test_subprocess_sandbox_missing_runner(tmp_path):
    sandbox = SubprocessRunnerSandbox(["definitely-not-a-real-runner-binary"])
    with pytest.raises(SandboxUnavailableError):
        execute_code(sandbox, artifact(), tmp_path)


def test_subprocess_sandbox_runner_crash_is_unavailable(tmp_path):
    sandbox = SubprocessRunnerSandbox([sys.executable, "-c", "import sys; sys.exit(3)"])
    with pytest.raises(SandboxUnavailableError):
        execute_code(sandbox, artifact(), tmp_path)


def test_subprocess_sandbox_garbage_output_is_unavailable(tmp_path):
    sandbox = SubprocessRunnerSandbox([sys.executable, "-c", "print('not a report')"])
    with pytest.raises(SandboxUnavailableError):
        execute_code(sandbox, artifact(), tmp_path)


def test_subprocess_sandbox_with_fake_runner(tmp_path, fake_runner_command):
    sandbox = SubprocessRunnerSandbox(fake_runner_command)
    report = execute_code(sandbox, artifact("open('made.txt', 'w').write('x')"), tmp_path,
                          expected_files=("made.txt",))
    assert report.success
    failing = execute_code(sandbox, artifact("raise ValueError('nope')"), tmp_path)
    assert not failing.success
    assert "ValueError" in failing.error_trace


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------


def failing_report(trace: str = "Boom: it broke") -> ExecutionReport:
    return ExecutionReport(success=False, exit_status=1, error_trace=trace)


def test_refine_code_increments_attempt():
    provider = MockProvider({"refiner": [builder_response()]})
    bp = blueprint_from_dict(valid_blueprint_dict())
    refined = refine_code(agent(provider, Role.REFINER), artifact(attempt=0), failing_report(), bp)
    assert refined.attempt == 1
    assert refined.blueprint_revision == bp.revision


def test_refine_code_rejects_successful_report():
    provider = MockProvider({})
    bp = blueprint_from_dict(valid_blueprint_dict())
    ok = ExecutionReport(success=True, exit_status=0)
    with pytest.raises(InvalidInputError):
        refine_code(agent(provider, Role.REFINER), artifact(), ok, bp)


def test_refine_code_truncates_trace_to_tail():
    provider = MockProvider({"refiner": [builder_response()]})
    bp = blueprint_from_dict(valid_blueprint_dict())
    trace = ("x" * 999_000) + "THE_PROXIMATE_ERROR"
    refine_code(agent(provider, Role.REFINER), artifact(), failing_report(trace), bp,
                trace_truncation=8000)
    prompt = provider.calls[0].user_text
    assert "THE_PROXIMATE_ERROR" in prompt
    assert "x" * 8000 not in prompt  # head of the trace was dropped


def test_refine_prompt_always_contains_blueprint():
    provider = MockProvider({"refiner": [builder_response()]})
    bp = blueprint_from_dict(valid_blueprint_dict())
    refine_code(agent(provider, Role.REFINER), artifact(), failing_report(), bp)
    assert blueprint_to_json(bp) in provider.calls[0].user_text


# ---------------------------------------------------------------------------
# run_sve
# ---------------------------------------------------------------------------


def sve_team(fixtures) -> tuple[AgentTeam, MockProvider]:
    provider = MockProvider(fixtures)
    return AgentTeam.from_provider(provider), provider


def test_run_sve_happy_path(tmp_path, d_obs):
    team, provider = sve_team(sve_fixtures())
    sandbox = StubSandbox([make_runner_report(success=True, touch_files=("forecast.csv",))])
    result = run_sve(HYPOTHESIS, d_obs, team, sandbox, SveConfig(), tmp_path)
    assert result.executed
    assert not result.override_used
    assert len(result.reports) == 1
    assert len(result.verification_log) == 1
    assert result.verification_log[0].verdict == 1
    run_dir = tmp_path / "run"
    assert (run_dir / "blueprint_rev0.json").is_file()
    assert (run_dir / "attempt_0.py").is_file()
    assert (run_dir / "report_attempt_0.json").is_file()


def test_run_sve_fail_twice_then_succeed(tmp_path, d_obs):
    team, provider = sve_team(sve_fixtures(n_refines=2))
    sandbox = StubSandbox([
        make_runner_report(success=False, exception_type="KeyError", exception_message="'col'"),
        make_runner_report(success=False, exception_type="KeyError", exception_message="'col'"),
        make_runner_report(success=True, touch_files=("forecast.csv",)),
    ])
    result = run_sve(HYPOTHESIS, d_obs, team, sandbox, SveConfig(j_max=3), tmp_path)
    assert result.executed
    assert len(result.reports) == 3
    assert [r.success for r in result.reports] == [False, False, True]
    assert result.final.attempt == 2
    bp_json = blueprint_to_json(result.blueprint)
    refine_calls = provider.calls_for(Role.REFINER)
    assert len(refine_calls) == 2
    assert all(bp_json in call.user_text for call in refine_calls)


def test_run_sve_budget_exhaustion_is_not_an_error(tmp_path, d_obs):
    team, _ = sve_team(sve_fixtures(n_refines=3))
    sandbox = StubSandbox([make_runner_report(success=False, exception_type="RuntimeError",
                                              exception_message="still broken")] * 4)
    result = run_sve(HYPOTHESIS, d_obs, team, sandbox, SveConfig(j_max=3), tmp_path)
    assert not result.executed
    assert len(result.reports) == 4  # 1 + j_max
    assert not result.reports[-1].success


def test_run_sve_cycle_revise_then_verify_passes(tmp_path, d_obs):
    fixtures = {
        "architect": [json.dumps(cyclic_blueprint_dict()), json.dumps(valid_blueprint_dict())],
        "verifier": [verdicts_response(True), verdicts_response(True)],
        "builder": [builder_response()],
        "refiner": [],
    }
    team, provider = sve_team(fixtures)
    sandbox = StubSandbox([make_runner_report(success=True, touch_files=("forecast.csv",))])
    cfg = SveConfig(t_max=3)
    result = run_sve(HYPOTHESIS, d_obs, team, sandbox, cfg, tmp_path)
    assert result.executed
    assert not result.override_used
    assert len(result.verification_log) == 2
    first, second = result.verification_log
    assert first.verdict == 0
    assert "dependency_acyclicity" in [r.name for r in first.results if not r.passed]
    assert second.verdict == 1
    assert second.revision == 1
    assert len(provider.calls_for(Role.VERIFIER)) <= cfg.t_max


def test_run_sve_verification_budget_override(tmp_path, d_obs):
    cyclic = json.dumps(cyclic_blueprint_dict())
    fixtures = {
        "architect": [cyclic, cyclic, cyclic],  # construct + 2 revisions, never fixed
        "verifier": [verdicts_response(True)] * 3,
        "builder": [builder_response()],
        "refiner": [],
    }
    team, provider = sve_team(fixtures)
    sandbox = StubSandbox([make_runner_report(success=True, touch_files=("forecast.csv",))])
    result = run_sve(HYPOTHESIS, d_obs, team, sandbox, SveConfig(t_max=3), tmp_path)
    assert result.override_used
    assert len(result.verification_log) == 3
    assert len(provider.calls_for(Role.VERIFIER)) == 3
    assert result.executed  # build proceeded despite the failed verification


# ---------------------------------------------------------------------------
# Code executability
# ---------------------------------------------------------------------------


def test_code_executability_examples():
    assert abs(code_executability([True, True, False]) - 2 / 3) < 1e-4
    assert code_executability([True] * 5) == 1.0
    assert abs(code_executability([True] * 107 + [False] * 4) - 0.9640) < 5e-4


def test_code_executability_empty_is_invalid():
    with pytest.raises(InvalidInputError):
        code_executability([])


def test_code_executability_exhaustive_up_to_length_10():
    for length in range(1, 11):
        for bits in itertools.product([False, True], repeat=length):
            assert code_executability(bits) == sum(bits) / length
