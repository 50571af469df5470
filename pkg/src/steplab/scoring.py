"""Turn solutions into step scores and response scores.

A step's score is the weighted sum of the renormalized probabilities the
critic backend assigns to the discrete quality tokens at that step's
response slot ('+'/'-' for the value scheme with weights 1/0, '+'/'='/'-'
for the advantage scheme with weights 1/0/-1). Step scores aggregate into
the response score by average (the default), min, or max.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .answers import extract_answer, normalize_answer
from .errors import CapabilityError, ContractError
from .gateway import Backend, CompletionRequest, Message
from .records import (
    ADVANTAGE_ALPHABET,
    EQUAL,
    MINUS,
    PLUS,
    VALUE_ALPHABET,
    CriticVerdict,
    ReasoningSample,
    StepSolution,
)

PLACEHOLDER = PLUS  # stands in for the critic's reply at every response slot

JUDGE_SYSTEM_PROMPT = (
    "You are given a question and a candidate solution, one step per turn. "
    "After each step, reply with a single token rating that step."
)


@dataclass(frozen=True)
class ScoringScheme:
    kind: str
    token_weights: Mapping[str, float]
    aggregation: str = "average"

    def __post_init__(self) -> None:
        expected = {
            "prm_value": set(VALUE_ALPHABET),
            "prm_advantage": set(ADVANTAGE_ALPHABET),
            "orm": set(VALUE_ALPHABET),
        }.get(self.kind)
        if expected is None:
            raise ContractError(f"bad scoring scheme kind {self.kind!r}")
        if set(self.token_weights) != expected:
            raise ContractError(
                f"token weights {sorted(self.token_weights)} do not match the "
                f"{self.kind} alphabet {sorted(expected)}"
            )

    @property
    def alphabet(self) -> tuple[str, ...]:
        return VALUE_ALPHABET if self.kind in ("prm_value", "orm") else ADVANTAGE_ALPHABET


def value_scheme(aggregation: str = "average") -> ScoringScheme:
    return ScoringScheme("prm_value", {PLUS: 1.0, MINUS: 0.0}, aggregation)


def advantage_scheme(aggregation: str = "average") -> ScoringScheme:
    return ScoringScheme("prm_advantage", {PLUS: 1.0, EQUAL: 0.0, MINUS: -1.0}, aggregation)


def orm_scheme() -> ScoringScheme:
    return ScoringScheme("orm", {PLUS: 1.0, MINUS: 0.0}, "average")


def step_score(token_probs: Mapping[str, float], scheme: ScoringScheme) -> float:
    """Weighted sum of the probabilities renormalized over the scheme alphabet."""
    for token in scheme.alphabet:
        if token not in token_probs:
            raise CapabilityError("token_probs", f"probability for token {token!r}")
    total = sum(token_probs[token] for token in scheme.alphabet)
    if total <= 0.0:
        # Degenerate readout: fall back to a uniform distribution.
        return sum(scheme.token_weights[t] for t in scheme.alphabet) / len(scheme.alphabet)
    return sum(
        scheme.token_weights[token] * (token_probs[token] / total) for token in scheme.alphabet
    )


def judge_context(
    sample: ReasoningSample, step_texts: Sequence[str], slots: int
) -> tuple[Message, ...]:
    """Multi-turn critic context with a placeholder at each response slot.

    The first user turn folds the question (and image) together with the
    first step; each later user turn presents exactly one subsequent step.
    ``slots`` placeholder assistant turns are interleaved after the steps
    they rate.
    """
    if not step_texts:
        raise ContractError("judge context needs at least one step")
    messages = [
        Message("system", JUDGE_SYSTEM_PROMPT),
        Message("user", f"{sample.question}\n\n{step_texts[0]}", image=sample.image),
    ]
    for text in step_texts[1:]:
        messages.append(Message("assistant", PLACEHOLDER))
        messages.append(Message("user", text))
    if slots >= len(step_texts):
        messages.append(Message("assistant", PLACEHOLDER))
    return tuple(messages)


def _slot_probs_per_step(
    backend: Backend, sample: ReasoningSample, step_texts: Sequence[str], alphabet: tuple[str, ...]
) -> list[dict[str, float]]:
    """Fallback path: one token-probability request per step prefix."""
    out = []
    for i in range(len(step_texts)):
        request = CompletionRequest(
            messages=judge_context(sample, step_texts[: i + 1], slots=i),
            temperature=0.0,
            max_new_tokens=1,
            n=1,
            want_token_probs=True,
            candidate_tokens=alphabet,
        )
        completion = backend.complete(request)[0]
        if completion.token_probs is None:
            raise CapabilityError(backend.name, "token probabilities")
        out.append(dict(completion.token_probs))
    return out


def solution_slot_probs(
    backend: Backend, sample: ReasoningSample, step_texts: Sequence[str], alphabet: tuple[str, ...]
) -> list[dict[str, float]]:
    """Token probabilities at every step slot, single-pass when supported."""
    if not backend.supports_token_probs:
        raise CapabilityError(backend.name, "token probabilities")
    if backend.supports_slot_probs:
        request = CompletionRequest(
            messages=judge_context(sample, step_texts, slots=len(step_texts)),
            temperature=0.0,
            max_new_tokens=1,
            n=1,
            want_token_probs=True,
            candidate_tokens=alphabet,
        )
        return backend.slot_token_probs(request)
    return _slot_probs_per_step(backend, sample, step_texts, alphabet)


def score_solution(
    backend: Backend,
    sample: ReasoningSample,
    solution: StepSolution,
    scheme: ScoringScheme,
) -> CriticVerdict:
    """Score every step of a solution and aggregate the response score."""
    step_texts = [step.text for step in solution.steps]
    probs = solution_slot_probs(backend, sample, step_texts, scheme.alphabet)
    scores = [step_score(p, scheme) for p in probs]
    return CriticVerdict.from_steps(scores, critic_kind=scheme.kind, aggregation=scheme.aggregation)


def orm_score(backend: Backend, sample: ReasoningSample, solution: StepSolution) -> CriticVerdict:
    """Outcome-style scoring: the whole solution judged as a single step."""
    scheme = orm_scheme()
    probs = solution_slot_probs(backend, sample, [solution.text], scheme.alphabet)
    score = step_score(probs[0], scheme)
    return CriticVerdict.from_steps([score], critic_kind="orm", aggregation="average")


@dataclass(frozen=True)
class VoteResult:
    winner_index: int
    winner_answer: str
    counts: dict[str, int] = field(default_factory=dict)


def sc_select(answers: Sequence[str]) -> VoteResult:
    """Majority vote over normalized answers; ties break by lowest index.

    Returns the index of the first candidate carrying the winning answer.
    Candidates whose answer normalizes to the empty string vote together as
    an explicit "no answer" bloc.
    """
    if not answers:
        raise ContractError("cannot vote over zero answers")
    normalized = [normalize_answer(a) for a in answers]
    counts = Counter(normalized)
    best = max(counts.values())
    for index, key in enumerate(normalized):
        if counts[key] == best:
            return VoteResult(winner_index=index, winner_answer=key, counts=dict(counts))
    raise AssertionError("unreachable: some answer must carry the max count")


def candidate_answer(solution: StepSolution) -> str:
    if solution.final_answer is not None:
        return solution.final_answer
    return extract_answer(solution.text) or ""
