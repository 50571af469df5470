"""Deterministic scripted mock backend.

The mock makes every statistical property of the toolkit testable offline.
It derives an independent RNG from (script seed, request content), so any
output is bitwise reproducible and identical requests always produce
identical results, regardless of scheduling or worker count.

Conventions the mock relies on (they mirror the documented prompt templates):

* Policy requests put the bare question in the first user message and the
  partial solution, when present, in the final assistant message. The step
  index is the number of blank-line paragraphs in that prefix minus one
  (-1 for an empty prefix).
* Judge contexts fold the question and the first step into the first user
  turn separated by a blank line, present one step per later user turn, and
  mark response slots with placeholder assistant turns.
* Generated solutions end with a "Final answer: ..." line. Steps of
  candidates that end in a wrong answer are drawn from a distinct phrase
  bank, so a correctness-correlated judge has a signal to read.
"""

from __future__ import annotations

import hashlib
import random
import re
import time
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from .answers import parse_number
from .errors import ConfigError, ContractError
from .records import PLUS, MINUS, EQUAL, canonical_json
from .gateway import Completion, CompletionRequest, Message

_PARAGRAPH_BREAK = re.compile(r"\n[ \t]*\n+")

SOUND_PHRASES = (
    "restate the given quantities and what is asked",
    "apply the relevant definition to the knowns",
    "substitute the known values into the relation",
    "simplify the resulting expression",
    "check the intermediate result against the constraints",
    "combine the partial results into a single expression",
    "isolate the unknown on one side",
    "reduce the expression to lowest terms",
)

FLAWED_PHRASES = (
    "drop a term while rearranging the relation",
    "swap the operands in the subtraction",
    "misread one of the given quantities",
    "apply the relation outside its valid range",
    "carry a sign error into the next expression",
    "round an intermediate value too aggressively",
    "reuse a stale intermediate result",
    "skip the consistency check on the result",
)


@dataclass(frozen=True)
class JudgeScript:
    """How the mock answers token-probability (judge) requests.

    Exactly one mode applies: a fixed ``bias`` over tokens is echoed back
    verbatim; otherwise ``accuracy`` reads the true correctness signal of the
    judged step and reports p(+)=``high`` / p(+)=``low`` with probability
    ``accuracy`` of reading the signal right. Without either, probabilities
    hover around 0.5 with deterministic jitter.
    """

    bias: Mapping[str, float] | None = None
    accuracy: float | None = None
    high: float = 0.9
    low: float = 0.1

    def __post_init__(self) -> None:
        if self.bias is not None:
            for token, prob in self.bias.items():
                if not 0.0 <= prob <= 1.0:
                    raise ConfigError(f"judge bias for {token!r} out of [0, 1]")
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise ConfigError("judge accuracy must lie in [0, 1]")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> JudgeScript:
        return cls(
            bias=dict(data["bias"]) if data.get("bias") else None,
            accuracy=data.get("accuracy"),
            high=float(data.get("high", 0.9)),
            low=float(data.get("low", 0.1)),
        )


@dataclass(frozen=True)
class MockBackendScript:
    """Declarative behavior of the mock backend.

    ``per_step_success`` maps a step index to the probability that a
    completion sampled from that prefix reaches a verified-correct answer;
    index -1 is the empty prefix. ``default_success`` fills missing indices.
    """

    seed: int = 0
    per_step_success: Mapping[int, float] = field(default_factory=dict)
    default_success: float | None = None
    solution_steps: tuple[int, int] = (3, 6)
    judge: JudgeScript = field(default_factory=JudgeScript)
    latency: float = 0.0

    def __post_init__(self) -> None:
        for index, prob in self.per_step_success.items():
            if not 0.0 <= prob <= 1.0:
                raise ConfigError(f"success probability for step {index} out of [0, 1]")
        if self.default_success is not None and not 0.0 <= self.default_success <= 1.0:
            raise ConfigError("default success probability out of [0, 1]")
        lo, hi = self.solution_steps
        if lo < 1 or hi < lo:
            raise ConfigError("solution_steps must be a (min, max) pair with 1 <= min <= max")

    def success_probability(self, step_index: int) -> float:
        if step_index in self.per_step_success:
            return self.per_step_success[step_index]
        if self.default_success is not None:
            return self.default_success
        raise ConfigError(f"mock script has no success probability for step {step_index}")

    def with_seed(self, seed: int) -> MockBackendScript:
        return replace(self, seed=seed)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> MockBackendScript:
        steps = data.get("solution_steps", (3, 6))
        return cls(
            seed=int(data.get("seed", 0)),
            per_step_success={int(k): float(v) for k, v in data.get("per_step_success", {}).items()},
            default_success=data.get("default_success"),
            solution_steps=(int(steps[0]), int(steps[1])),
            judge=JudgeScript.from_dict(data.get("judge", {})),
            latency=float(data.get("latency", 0.0)),
        )


def mock_rollout_success(script: MockBackendScript, step_index: int, rng: random.Random) -> bool:
    """One Bernoulli draw from the script's success probability for a step."""
    return rng.random() < script.success_probability(step_index)


def derived_rng(*parts: Any) -> random.Random:
    digest = hashlib.sha256(canonical_json(list(parts)).encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest, "big"))


def _paragraphs(text: str) -> list[str]:
    return [chunk for chunk in _PARAGRAPH_BREAK.split(text) if chunk.strip()]


def _has_explicit_answer(text: str) -> bool:
    return bool(re.search(r"(?im)\bfinal\s+answer\b|\bthe\s+answer\s+is\b", text))


class MockBackend:
    """Scripted simulator of both a policy model and a step judge.

    ``answer_key`` maps question text to its ground truth so the mock can emit
    verifiably correct or incorrect final answers.
    """

    supports_token_probs = True
    supports_slot_probs = True

    def __init__(
        self,
        script: MockBackendScript,
        answer_key: Mapping[str, str] | None = None,
        name: str = "mock",
    ):
        self.script = script
        self.answer_key = dict(answer_key or {})
        self.name = name

    def complete(self, request: CompletionRequest) -> list[Completion]:
        if self.script.latency > 0:
            time.sleep(self.script.latency)
        if request.want_token_probs:
            return self._judge_complete(request)
        return self._policy_complete(request)

    def slot_token_probs(self, request: CompletionRequest) -> list[dict[str, float]]:
        if not request.want_token_probs:
            raise ContractError("slot probability requests must set want_token_probs")
        question, steps, slot_count = self._parse_judge_context(request.messages)
        return [
            self._slot_probs(question, steps[: slot + 1], request.candidate_tokens)
            for slot in range(slot_count)
        ]

    # -- policy path ---------------------------------------------------------

    def _policy_complete(self, request: CompletionRequest) -> list[Completion]:
        question = self._question_of(request.messages)
        prefix = self._assistant_prefix(request.messages)
        step_index = len(_paragraphs(prefix)) - 1 if prefix is not None else -1
        ground_truth = self.answer_key.get(question)
        if ground_truth is None:
            raise ConfigError(f"mock backend has no answer for question {question[:60]!r}")
        rng = derived_rng(self.script.seed, "policy", request.fingerprint())
        completions = []
        for _ in range(request.n):
            success = mock_rollout_success(self.script, step_index, rng)
            completions.append(
                Completion(text=self._solution_text(step_index, success, ground_truth, rng))
            )
        return completions

    def _solution_text(
        self, step_index: int, success: bool, ground_truth: str, rng: random.Random
    ) -> str:
        if step_index < 0:
            lo, hi = self.script.solution_steps
            count = rng.randint(lo, hi)
        else:
            count = rng.randint(1, 2)
        bank = SOUND_PHRASES if success else FLAWED_PHRASES
        paragraphs = [
            f"Step {k + 1}: {bank[rng.randrange(len(bank))]}." for k in range(count)
        ]
        answer = ground_truth if success else self._wrong_answer(ground_truth, rng)
        paragraphs.append(f"Final answer: {answer}")
        return "\n\n".join(paragraphs)

    def _wrong_answer(self, ground_truth: str, rng: random.Random) -> str:
        value = parse_number(ground_truth.strip())
        if value is not None:
            delta = rng.choice([1, 2, 3, 4, 5])
            wrong = value + delta
            return str(int(wrong)) if wrong == int(wrong) else repr(wrong)
        return f"{ground_truth}-wrong-{rng.randrange(5)}"

    # -- judge path ----------------------------------------------------------

    def _judge_complete(self, request: CompletionRequest) -> list[Completion]:
        if not request.candidate_tokens:
            raise ContractError("mock judge requests must name candidate tokens")
        question, steps, _ = self._parse_judge_context(request.messages)
        probs = self._slot_probs(question, steps, request.candidate_tokens)
        top = max(probs, key=probs.__getitem__) if probs else PLUS
        return [
            Completion(text=top, token_probs=dict(probs)) for _ in range(request.n)
        ]

    def _slot_probs(
        self, question: str, steps: list[str], candidates: tuple[str, ...] | None
    ) -> dict[str, float]:
        judge = self.script.judge
        if judge.bias is not None:
            probs = dict(judge.bias)
        else:
            rng = derived_rng(self.script.seed, "judge", question, steps)
            if judge.accuracy is not None:
                bit = self._true_step_bit(question, steps[-1] if steps else "")
                if rng.random() >= judge.accuracy:
                    bit = not bit
                p_plus = judge.high if bit else judge.low
            else:
                p_plus = 0.5
            p_plus = min(0.999, max(0.001, p_plus + (rng.random() - 0.5) * 0.05))
            probs = {PLUS: p_plus, MINUS: 1.0 - p_plus}
            if candidates and EQUAL in candidates:
                rest = 1.0 - p_plus
                probs = {PLUS: p_plus, EQUAL: rest / 2.0, MINUS: rest / 2.0}
        if candidates is not None:
            return {token: probs.get(token, 0.0) for token in candidates}
        return probs

    def _true_step_bit(self, question: str, step_text: str) -> bool:
        if _has_explicit_answer(step_text):
            ground_truth = self.answer_key.get(question)
            if ground_truth is not None:
                from .answers import verify_answer

                return verify_answer(step_text, ground_truth)
        return not any(phrase in step_text for phrase in FLAWED_PHRASES)

    # -- context parsing -----------------------------------------------------

    def _question_of(self, messages: tuple[Message, ...]) -> str:
        for message in messages:
            if message.role == "user":
                return message.text
        raise ContractError("request carries no user message")

    def _assistant_prefix(self, messages: tuple[Message, ...]) -> str | None:
        prefix = None
        for message in messages:
            if message.role == "assistant":
                prefix = message.text
        return prefix

    def _parse_judge_context(
        self, messages: tuple[Message, ...]
    ) -> tuple[str, list[str], int]:
        """Recover (question, step texts, slot count) from a judge context."""
        user_texts = [m.text for m in messages if m.role == "user"]
        if not user_texts:
            raise ContractError("judge context carries no user message")
        first = user_texts[0]
        question, step0 = self._split_first_turn(first)
        steps = ([step0] if step0 else []) + user_texts[1:]
        if not steps:
            steps = [first]
        slot_count = sum(1 for m in messages if m.role == "assistant")
        return question, steps, max(slot_count, 1)

    def _split_first_turn(self, text: str) -> tuple[str, str | None]:
        if text in self.answer_key:
            return text, None
        for key in self.answer_key:
            if text.startswith(key):
                remainder = text[len(key):]
                stripped = remainder.lstrip("\n \t")
                return key, stripped if stripped else None
        parts = _PARAGRAPH_BREAK.split(text, maxsplit=1)
        if len(parts) == 2:
            return parts[0], parts[1]
        return text, None
