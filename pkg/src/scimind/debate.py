"""Theorist-Pragmatist-Moderator debate loop.

Each round the theorist proposes (or refines) a hypothesis, the pragmatist
files a structured critique against the dataset constraints, and the
moderator scores both rubrics. The round's consensus is the lambda-weighted
combination of the two utilities; the debate stops when consecutive
consensus scores stabilize within epsilon while both utilities clear the
quality floor gamma, or when the round budget runs out (in which case the
best-consensus round wins, earliest round on ties).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .errors import (
    AgentError,
    InvalidInputError,
    InvalidRubricError,
    InvalidStateError,
    MalformedOutputError,
)
from .gateway import Agent, AgentTeam
from .knowledge import GroundedInput

WEIGHT_SUM_TOLERANCE = 1e-9

DEFAULT_LAMBDA = 0.5
DEFAULT_EPSILON = 0.02
DEFAULT_GAMMA = 0.6
DEFAULT_R_MAX = 6

DEFAULT_THEORIST_CRITERIA = (
    ("assumption_soundness", 0.25),
    ("derivation_correctness", 0.25),
    ("structural_completeness", 0.25),
    ("parsimony", 0.25),
)
DEFAULT_PRAGMATIST_CRITERIA = (
    ("data_availability", 0.25),
    ("dimensional_consistency", 0.25),
    ("computational_tractability", 0.25),
    ("parameter_identifiability", 0.25),
)


class RubricKind(str, Enum):
    THEORETICAL = "theoretical"
    PRAGMATIC = "pragmatic"


class Termination(str, Enum):
    CONVERGED = "converged"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class Hypothesis:
    """A candidate model formulation produced in one debate round."""

    hypothesis_id: str
    round: int
    formulation: str
    responds_to: str | None = None

    def __post_init__(self):
        if self.round < 1:
            raise InvalidInputError("hypothesis round must be >= 1")
        if not self.formulation.strip():
            raise InvalidInputError("hypothesis formulation must be non-empty")


@dataclass(frozen=True)
class Violation:
    violated_criterion: str
    conflicting_evidence: str
    remediation: str

    def __post_init__(self):
        for name in ("violated_criterion", "conflicting_evidence", "remediation"):
            if not getattr(self, name).strip():
                raise InvalidInputError(f"violation field {name} must be non-empty")


@dataclass(frozen=True)
class Critique:
    """The pragmatist's structured feasibility report; no violations is legal."""

    critique_id: str
    round: int
    violations: tuple[Violation, ...]


@dataclass(frozen=True)
class DataConstraints:
    """What the observable dataset actually provides."""

    description: str
    schema_notes: str = ""
    size_notes: str = ""

    def __post_init__(self):
        if not self.description.strip():
            raise InvalidInputError("data constraints description must be non-empty")

    def rendered(self) -> str:
        return (
            f"Data description: {self.description}\n"
            f"Schema: {self.schema_notes}\n"
            f"Size: {self.size_notes}"
        )


@dataclass(frozen=True)
class UtilityRubric:
    """Named criteria with weights summing to one."""

    criteria: tuple[tuple[str, float], ...]
    kind: RubricKind

    def __post_init__(self):
        if not self.criteria:
            raise InvalidRubricError("rubric needs at least one criterion")
        names = [name for name, _ in self.criteria]
        if len(set(names)) != len(names):
            raise InvalidRubricError("rubric criterion names must be unique")
        if any(not name.strip() for name in names):
            raise InvalidRubricError("rubric criterion names must be non-empty")
        weights = [w for _, w in self.criteria]
        if any(w < 0.0 or w > 1.0 for w in weights):
            raise InvalidRubricError("rubric weights must lie in [0, 1]")
        if abs(math.fsum(weights) - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise InvalidRubricError(f"rubric weights must sum to 1, got {math.fsum(weights)!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.criteria)


@dataclass(frozen=True)
class CriterionScore:
    criterion_name: str
    value: float
    justification: str = ""

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise InvalidInputError(f"criterion score must be in [0, 1], got {self.value}")


@dataclass(frozen=True)
class DebateConfig:
    lambda_: float = DEFAULT_LAMBDA
    epsilon: float = DEFAULT_EPSILON
    gamma: float = DEFAULT_GAMMA
    r_max: int = DEFAULT_R_MAX
    theorist_rubric: UtilityRubric = UtilityRubric(DEFAULT_THEORIST_CRITERIA, RubricKind.THEORETICAL)
    pragmatist_rubric: UtilityRubric = UtilityRubric(DEFAULT_PRAGMATIST_CRITERIA, RubricKind.PRAGMATIC)

    def __post_init__(self):
        if not 0.0 < self.lambda_ < 1.0:
            raise InvalidInputError("lambda must lie strictly inside (0, 1)")
        if self.epsilon <= 0.0:
            raise InvalidInputError("epsilon must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise InvalidInputError("gamma must lie strictly inside (0, 1)")
        if self.r_max < 1:
            raise InvalidInputError("r_max must be a positive integer")


@dataclass(frozen=True)
class RoundRecord:
    hypothesis: Hypothesis
    critique: Critique
    theorist_scores: tuple[CriterionScore, ...]
    pragmatist_scores: tuple[CriterionScore, ...]
    u_t: float
    u_p: float
    gamma_score: float

    @property
    def round(self) -> int:
        return self.hypothesis.round


@dataclass(frozen=True)
class DebateTranscript:
    rounds: tuple[RoundRecord, ...]
    termination: Termination
    selected: str

    def __post_init__(self):
        if not self.rounds:
            raise InvalidInputError("transcript needs at least one round")
        if self.selected not in {r.hypothesis.hypothesis_id for r in self.rounds}:
            raise InvalidInputError("selected hypothesis is not in the transcript")

    def selected_hypothesis(self) -> Hypothesis:
        for record in self.rounds:
            if record.hypothesis.hypothesis_id == self.selected:
                return record.hypothesis
        raise InvalidStateError("selected hypothesis missing")  # unreachable


# ---------------------------------------------------------------------------
# Scoring primitives
# ---------------------------------------------------------------------------


def weighted_utility(scores: Sequence[CriterionScore], rubric: UtilityRubric) -> float:
    """Weighted sum of criterion scores; scores must cover the rubric exactly."""
    by_name = {s.criterion_name: s.value for s in scores}
    if len(by_name) != len(scores):
        raise InvalidInputError("duplicate criterion in score set")
    if set(by_name) != set(rubric.names):
        missing = set(rubric.names) - set(by_name)
        extra = set(by_name) - set(rubric.names)
        raise InvalidInputError(
            f"scores do not match rubric (missing={sorted(missing)}, extra={sorted(extra)})"
        )
    return sum(weight * by_name[name] for name, weight in rubric.criteria)


def consensus_score(u_t: float, u_p: float, lambda_: float) -> float:
    """Convex combination of the two utilities."""
    if not 0.0 <= u_t <= 1.0 or not 0.0 <= u_p <= 1.0:
        raise InvalidInputError("utilities must lie in [0, 1]")
    if not 0.0 < lambda_ < 1.0:
        raise InvalidInputError("lambda must lie strictly inside (0, 1)")
    return lambda_ * u_t + (1.0 - lambda_) * u_p


def check_convergence(gamma_r: float, gamma_prev: float | None,
                      u_t: float, u_p: float, cfg: DebateConfig) -> bool:
    """True iff the consensus has stabilized and both utilities clear the floor.

    Both inequalities are strict; the first round (no previous consensus)
    never converges.
    """
    if gamma_prev is None:
        return False
    return abs(gamma_r - gamma_prev) < cfg.epsilon and min(u_t, u_p) > cfg.gamma


def fallback_select(transcript: DebateTranscript) -> Hypothesis:
    """The hypothesis with the highest consensus score; earliest round on ties."""
    if not transcript.rounds:
        raise InvalidStateError("cannot select from an empty transcript")
    best = transcript.rounds[0]
    for record in transcript.rounds[1:]:
        if record.gamma_score > best.gamma_score:
            best = record
    return best.hypothesis


def _best_round(rounds: Sequence[RoundRecord]) -> RoundRecord:
    best = rounds[0]
    for record in rounds[1:]:
        if record.gamma_score > best.gamma_score:
            best = record
    return best


# ---------------------------------------------------------------------------
# Agent interactions
# ---------------------------------------------------------------------------


def render_critique(critique: Critique) -> str:
    if not critique.violations:
        return f"Critique {critique.critique_id} (round {critique.round}): no feasibility objections."
    lines = [f"Critique {critique.critique_id} (round {critique.round}):"]
    for i, v in enumerate(critique.violations, start=1):
        lines.append(
            f"{i}. violated criterion: {v.violated_criterion}\n"
            f"   conflicting evidence: {v.conflicting_evidence}\n"
            f"   remediation: {v.remediation}"
        )
    return "\n".join(lines)


def propose_hypothesis(theorist: Agent, grounded: GroundedInput,
                       prior: Critique | None, round_number: int) -> Hypothesis:
    """Ask the theorist for a hypothesis, refining against the prior critique.

    The first round carries no critique; later rounds must carry one.
    """
    if round_number < 1:
        raise InvalidInputError("round number must be >= 1")
    if (round_number == 1) != (prior is None):
        raise InvalidInputError("the first round takes no prior critique; later rounds require one")
    parts = [grounded.rendered()]
    if prior is not None:
        parts.append(
            "Refine your previous hypothesis to resolve this critique:\n" + render_critique(prior)
        )
    payload = theorist.ask_structured("\n\n".join(parts), "hypothesis")
    return Hypothesis(
        hypothesis_id=f"hyp-r{round_number}",
        round=round_number,
        formulation=payload["formulation"],
        responds_to=prior.critique_id if prior else None,
    )


def elicit_critique(pragmatist: Agent, hypothesis: Hypothesis,
                    d_obs: DataConstraints) -> Critique:
    """Ask the pragmatist for a structured critique of the hypothesis."""
    user_text = (
        f"Hypothesis (round {hypothesis.round}):\n{hypothesis.formulation}\n\n{d_obs.rendered()}"
    )
    payload = pragmatist.ask_structured(user_text, "critique")
    violations = tuple(
        Violation(
            violated_criterion=v["violated_criterion"],
            conflicting_evidence=v["conflicting_evidence"],
            remediation=v["remediation"],
        )
        for v in payload["violations"]
    )
    return Critique(
        critique_id=f"crit-r{hypothesis.round}",
        round=hypothesis.round,
        violations=violations,
    )


def _score_rubric(moderator: Agent, hypothesis: Hypothesis, rubric: UtilityRubric,
                  d_obs: DataConstraints) -> tuple[CriterionScore, ...]:
    # One moderator call per rubric per round; the sheet must cover the rubric
    # exactly (out-of-range values were already clamped at parse time).
    criteria_list = "\n".join(f"- {name}" for name in rubric.names)
    parts = [
        f"Score this hypothesis on every {rubric.kind.value} criterion below.",
        f"Criteria:\n{criteria_list}",
        f"Hypothesis (round {hypothesis.round}):\n{hypothesis.formulation}",
    ]
    if rubric.kind is RubricKind.PRAGMATIC:
        parts.append(d_obs.rendered())
    payload = moderator.ask_structured("\n\n".join(parts), "score-sheet")
    by_name = {s["criterion"]: s for s in payload["scores"]}
    if set(by_name) != set(rubric.names) or len(by_name) != len(payload["scores"]):
        raise MalformedOutputError(
            f"score sheet does not cover the rubric exactly: got {sorted(by_name)}",
            raw=json.dumps(payload),
        )
    return tuple(
        CriterionScore(name, by_name[name]["value"], by_name[name]["justification"])
        for name in rubric.names
    )


def run_debate(cfg: DebateConfig, grounded: GroundedInput, d_obs: DataConstraints,
               team: AgentTeam) -> tuple[Hypothesis, DebateTranscript]:
    """Run the full debate and return the selected hypothesis with its transcript."""
    rounds: list[RoundRecord] = []
    gamma_prev: float | None = None
    prior_critique: Critique | None = None
    converged_on: Hypothesis | None = None

    for round_number in range(1, cfg.r_max + 1):
        try:
            hypothesis = propose_hypothesis(team.theorist, grounded, prior_critique, round_number)
            critique = elicit_critique(team.pragmatist, hypothesis, d_obs)
            theorist_scores = _score_rubric(team.moderator, hypothesis, cfg.theorist_rubric, d_obs)
            pragmatist_scores = _score_rubric(team.moderator, hypothesis, cfg.pragmatist_rubric, d_obs)
        except AgentError as exc:
            raise AgentError(f"debate round {round_number}: {exc}") from exc
        u_t = weighted_utility(theorist_scores, cfg.theorist_rubric)
        u_p = weighted_utility(pragmatist_scores, cfg.pragmatist_rubric)
        gamma_score = consensus_score(u_t, u_p, cfg.lambda_)
        rounds.append(
            RoundRecord(hypothesis, critique, theorist_scores, pragmatist_scores, u_t, u_p, gamma_score)
        )
        if check_convergence(gamma_score, gamma_prev, u_t, u_p, cfg):
            converged_on = hypothesis
            break
        gamma_prev = gamma_score
        prior_critique = critique

    if converged_on is not None:
        termination = Termination.CONVERGED
        selected = converged_on
    else:
        termination = Termination.BUDGET_EXHAUSTED
        selected = _best_round(rounds).hypothesis
    transcript = DebateTranscript(tuple(rounds), termination, selected.hypothesis_id)
    return selected, transcript


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def transcript_to_dict(transcript: DebateTranscript) -> dict:
    return {
        "rounds": [
            {
                "round": r.round,
                "hypothesis": {
                    "id": r.hypothesis.hypothesis_id,
                    "round": r.hypothesis.round,
                    "formulation": r.hypothesis.formulation,
                    "responds_to": r.hypothesis.responds_to,
                },
                "critique": {
                    "id": r.critique.critique_id,
                    "round": r.critique.round,
                    "violations": [
                        {
                            "violated_criterion": v.violated_criterion,
                            "conflicting_evidence": v.conflicting_evidence,
                            "remediation": v.remediation,
                        }
                        for v in r.critique.violations
                    ],
                },
                "theorist_scores": [
                    {"criterion": s.criterion_name, "value": s.value, "justification": s.justification}
                    for s in r.theorist_scores
                ],
                "pragmatist_scores": [
                    {"criterion": s.criterion_name, "value": s.value, "justification": s.justification}
                    for s in r.pragmatist_scores
                ],
                "u_t": r.u_t,
                "u_p": r.u_p,
                "gamma_score": r.gamma_score,
            }
            for r in transcript.rounds
        ],
        "termination": transcript.termination.value,
        "selected": transcript.selected,
    }


def write_transcript_json(transcript: DebateTranscript, path: Path | str) -> None:
    Path(path).write_text(json.dumps(transcript_to_dict(transcript), indent=2) + "\n", encoding="utf-8")


def trajectory_rows(transcript: DebateTranscript) -> list[tuple[int, float, float, float]]:
    return [(r.round, r.u_t, r.u_p, r.gamma_score) for r in transcript.rounds]


def write_trajectory_csv(transcript: DebateTranscript, path: Path | str) -> None:
    """Flat per-round table (round, u_t, u_p, gamma) at full float precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "u_t", "u_p", "gamma"])
        for round_number, u_t, u_p, gamma_score in trajectory_rows(transcript):
            writer.writerow([round_number, repr(u_t), repr(u_p), repr(gamma_score)])
