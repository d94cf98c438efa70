"""Shared builders for scripted providers, blueprints, and problem bundles."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

from scimind.debate import (
    DEFAULT_PRAGMATIST_CRITERIA,
    DEFAULT_THEORIST_CRITERIA,
    DataConstraints,
)
from scimind.gateway import MockProvider
from scimind.knowledge import EmbeddingVector, KnowledgeBase, KnowledgeEntry


# ---------------------------------------------------------------------------
# Vectors and knowledge entries
# ---------------------------------------------------------------------------


def vec(*values: float) -> EmbeddingVector:
    return EmbeddingVector(tuple(float(v) for v in values))


def basis_vec(dim: int, axis: int) -> EmbeddingVector:
    return EmbeddingVector(tuple(1.0 if i == axis else 0.0 for i in range(dim)))


def make_entry(entry_id: str, embedding: EmbeddingVector, code: str = "print('x')",
               paradigm: str = "a modeling pattern", domain: str = "general") -> KnowledgeEntry:
    return KnowledgeEntry(
        entry_id=entry_id,
        embedding=embedding,
        code_snippet=code,
        paradigm_descriptor=paradigm,
        domain_tag=domain,
    )


@pytest.fixture
def small_kb() -> KnowledgeBase:
    kb = KnowledgeBase(dim=2)
    for entry_id, values in (("a", (1.0, 0.0)), ("b", (0.0, 1.0)), ("c", (1.0, 1.0))):
        kb._insert(make_entry(entry_id, vec(*values)))
    return kb


# ---------------------------------------------------------------------------
# Scripted provider responses
# ---------------------------------------------------------------------------


HYPOTHESIS_VARIABLES_LINE = "Variables: pop, adjacency, growth_rate, n_counties"


def hypothesis_response(round_number: int, variables_line: str = HYPOTHESIS_VARIABLES_LINE) -> str:
    formulation = (
        f"Round {round_number} model: population spreads along the county adjacency "
        f"graph with locally modulated logistic growth.\n"
        f"Assumptions: closed system; annual steps.\n"
        f"Equations: pop[t+1] = clip((I + alpha * adjacency) @ (growth_rate * pop[t]))\n"
        f"{variables_line}"
    )
    return json.dumps({"formulation": formulation})


def critique_response(n_violations: int = 1) -> str:
    violations = [
        {
            "violated_criterion": "data_availability",
            "conflicting_evidence": f"the dataset lacks field f{i}",
            "remediation": f"replace f{i} with an observable proxy",
        }
        for i in range(n_violations)
    ]
    return json.dumps({"violations": violations})


def score_sheet_response(value: float, criteria=DEFAULT_THEORIST_CRITERIA) -> str:
    return json.dumps(
        {
            "scores": [
                {"criterion": name, "value": value, "justification": "scripted"}
                for name, _ in criteria
            ]
        }
    )


def debate_fixtures(u_t_values, u_p_values, with_variables: bool = True) -> dict[str, list[str]]:
    """Role fixtures driving the debate to the given per-round utilities.

    Each moderator sheet assigns the same value to all four criteria of a
    rubric, so the weighted utility equals that value.
    """
    assert len(u_t_values) == len(u_p_values)
    rounds = len(u_t_values)
    variables_line = HYPOTHESIS_VARIABLES_LINE if with_variables else "Variables: pop"
    moderator: list[str] = []
    for u_t, u_p in zip(u_t_values, u_p_values):
        moderator.append(score_sheet_response(u_t, DEFAULT_THEORIST_CRITERIA))
        moderator.append(score_sheet_response(u_p, DEFAULT_PRAGMATIST_CRITERIA))
    return {
        "theorist": [hypothesis_response(r, variables_line) for r in range(1, rounds + 1)],
        "pragmatist": [critique_response(1) for _ in range(rounds)],
        "moderator": moderator,
    }


# Utilities for the happy-path regression: rounds 1-2 match the observed
# trajectory (0.82/0.41 then 0.74/0.68); rounds 3-4 are a synthetic
# co-ascending tail that first satisfies the convergence test at round 4.
CONVERGING_U_T = [0.82, 0.74, 0.78, 0.79]
CONVERGING_U_P = [0.41, 0.68, 0.72, 0.73]


# ---------------------------------------------------------------------------
# Blueprints and constraints
# ---------------------------------------------------------------------------


def valid_blueprint_dict() -> dict:
    return {
        "variables": [
            {"name": "n_counties", "type_tag": "int", "dims": []},
            {"name": "pop", "type_tag": "float", "dims": ["n_counties"]},
            {"name": "adjacency", "type_tag": "float", "dims": ["n_counties", "n_counties"]},
            {"name": "growth_rate", "type_tag": "float", "dims": ["n_counties"]},
        ],
        "functions": [
            {"name": "load_inputs", "signature": "load_inputs() -> (pop, adjacency)", "dependencies": []},
            {
                "name": "step_population",
                "signature": "step_population(pop[n_counties], adjacency[n_counties,n_counties]) -> pop[n_counties]",
                "dependencies": ["load_inputs", "pop", "adjacency", "growth_rate"],
            },
            {"name": "write_forecast", "signature": "write_forecast(pop) -> None", "dependencies": ["step_population"]},
        ],
        "ingestion": {
            "sources": [
                {"name": "counties", "format": "csv", "fields": ["county_id", "population_count", "adjacency_matrix"]}
            ]
        },
        "output": {"files": [{"name": "forecast.csv", "format": "csv"}]},
    }


def cyclic_blueprint_dict() -> dict:
    doc = valid_blueprint_dict()
    doc["functions"] = [
        {"name": "f1", "signature": "f1() -> x", "dependencies": ["f2"]},
        {"name": "f2", "signature": "f2() -> y", "dependencies": ["f1"]},
        {"name": "write_forecast", "signature": "write_forecast() -> None", "dependencies": ["f1"]},
    ]
    return doc


def verdicts_response(passed: bool = True) -> str:
    predicates = [
        {"name": "covariate_dependence", "passed": True, "diagnostic": ""},
        {
            "name": "adjacency_matrix_integrity",
            "passed": passed,
            "diagnostic": "" if passed else "the dispersal operator ignores the adjacency matrix",
        },
    ]
    return json.dumps({"predicates": predicates})


BUILDER_SCRIPT = """\
import csv

with open("counties.csv") as fh:
    rows = list(csv.reader(fh))
with open("forecast.csv", "w", newline="") as out:
    writer = csv.writer(out)
    writer.writerow(["county_id", "year", "predicted_population"])
    for row in rows[1:]:
        pop = float(row[1])
        for year in range(1, 6):
            pop *= 1.08
            writer.writerow([row[0], year, round(pop, 2)])
print("forecast written")
"""


def builder_response(script: str = BUILDER_SCRIPT) -> str:
    return f"```python\n{script}```"


def sve_fixtures(blueprint: dict | None = None, n_refines: int = 0,
                 verifier_responses: list[str] | None = None) -> dict[str, list[str]]:
    doc = blueprint if blueprint is not None else valid_blueprint_dict()
    return {
        "architect": [json.dumps(doc)],
        "verifier": verifier_responses if verifier_responses is not None else [verdicts_response(True)],
        "builder": [builder_response()],
        "refiner": [builder_response() for _ in range(n_refines)],
    }


def full_pipeline_fixtures(n_refines: int = 3) -> dict[str, list[str]]:
    fixtures = debate_fixtures(CONVERGING_U_T, CONVERGING_U_P)
    fixtures.update(sve_fixtures(n_refines=n_refines))
    return fixtures


@pytest.fixture
def constraints() -> DataConstraints:
    return DataConstraints(
        description="county-level invasion counts with environmental covariates",
        schema_notes="columns: county_id, population_count, adjacency_matrix, temperature, precipitation",
        size_notes="48 counties, 10 annual observations",
    )


@pytest.fixture
def mock_provider_factory():
    def factory(fixtures: dict[str, list[str]]) -> MockProvider:
        return MockProvider(fixtures)

    return factory


FAKE_RUNNER = Path(__file__).parent / "helpers" / "fake_runner.py"


@pytest.fixture
def fake_runner_command() -> list[str]:
    """A runner-contract-compliant command usable without the runner package."""
    return [sys.executable, str(FAKE_RUNNER)]


# ---------------------------------------------------------------------------
# Problem bundles on disk
# ---------------------------------------------------------------------------


COUNTIES_CSV = "county_id,population_count\nc01,120\nc02,45\nc03,300\n"


def write_problem_bundle(directory: Path, problem_id: str = "invasive-spread",
                         statement: str | None = None) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    doc = {
        "id": problem_id,
        "statement": statement
        or "Predict invasive species spread across 48 counties under three climate scenarios.",
        "domain_tag": "ecology",
        "constraints": {
            "description": "county-level invasion counts with environmental covariates",
            "schema_notes": "columns: county_id, population_count, adjacency_matrix, temperature, precipitation",
            "size_notes": "48 counties, 10 annual observations",
        },
    }
    (directory / "problem.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")
    data_dir = directory / "data"
    data_dir.mkdir(exist_ok=True)
    (data_dir / "counties.csv").write_text(COUNTIES_CSV, encoding="utf-8")
    return directory
