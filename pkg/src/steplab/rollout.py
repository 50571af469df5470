"""Automatic process-supervision pipeline.

Splits solutions into steps, estimates the expected accuracy of every step
prefix by sampling continuations and verifying their final answers, and
labels steps under the value scheme (accuracy above a threshold) or the
advantage scheme (sign of the accuracy change against the previous step).
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Sequence

from .answers import extract_answer, verify_answer
from .errors import ContractError
from .gateway import Backend, CompletionRequest, Message
from .journal import Journal
from .records import (
    EQUAL,
    MINUS,
    PLUS,
    SUPERVISION_MODES,
    AccuracyEstimate,
    AnnotatedSolution,
    ProcessSupervisionRecord,
    ReasoningSample,
    Step,
    StepSolution,
    Turn,
    content_hash,
)

# Policy models are prompted to emit one step per paragraph, which is what
# makes the blank-line splitting rule auditable and reversible.
POLICY_SYSTEM_PROMPT = (
    "Solve the problem step by step. Write each step as its own paragraph, "
    "separated by a blank line. End with a final line of the form "
    "'Final answer: <answer>'."
)

_SEPARATOR = re.compile(r"\n[ \t]*\n(?:[ \t]*\n)*")


@dataclass(frozen=True)
class RolloutConfig:
    """Pipeline constants; the defaults are the standard operating point."""

    solutions_per_sample: int = 4
    max_steps: int = 12
    continuations_per_step: int = 16
    policy_temperature: float = 0.7
    value_threshold: float = 0.0
    max_new_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.solutions_per_sample < 1 or self.max_steps < 1 or self.continuations_per_step < 1:
            raise ContractError("rollout counts must be >= 1")
        if not 0.0 <= self.value_threshold < 1.0:
            raise ContractError("value threshold must lie in [0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> RolloutConfig:
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        return cls(**known)


def split_solution(text: str, producer: str = "unknown") -> StepSolution:
    """Split at blank-line boundaries, recording the exact separators.

    Boundaries that would create an empty step (leading or trailing blank
    lines) are absorbed into the neighbouring step, so reconstruction is
    byte-exact and every step is non-empty.
    """
    if not text:
        raise ContractError("cannot split empty text")
    stripped = text.rstrip()
    last_content = len(stripped)
    chunks: list[str] = []
    separators: list[str] = []
    start = 0
    for match in _SEPARATOR.finditer(text):
        left = text[start : match.start()]
        if not left.strip() or match.end() >= last_content:
            continue
        chunks.append(left)
        separators.append(match.group())
        start = match.end()
    chunks.append(text[start:])
    steps = tuple(Step(index=i, text=chunk) for i, chunk in enumerate(chunks))
    return StepSolution(
        steps=steps,
        separators=tuple(separators),
        producer=producer,
        final_answer=extract_answer(text),
    )


def merge_steps_evenly(solution: StepSolution, max_steps: int) -> StepSolution:
    """Merge contiguous steps so at most ``max_steps`` remain.

    Original step i lands in bucket floor(i * m / n) with m = min(n, max),
    so bucket sizes differ by at most one and the text round-trips exactly.
    Per-step annotations are not carried through a merge.
    """
    if max_steps < 1:
        raise ContractError("max_steps must be >= 1")
    n = len(solution.steps)
    m = min(n, max_steps)
    if m == n:
        return solution
    buckets: list[list[int]] = [[] for _ in range(m)]
    for i in range(n):
        buckets[i * m // n].append(i)
    steps: list[Step] = []
    separators: list[str] = []
    for b, indices in enumerate(buckets):
        text = solution.steps[indices[0]].text
        for i in indices[1:]:
            text += solution.separators[i - 1] + solution.steps[i].text
        steps.append(Step(index=b, text=text))
        if b + 1 < m:
            separators.append(solution.separators[buckets[b + 1][0] - 1])
    return replace(solution, steps=tuple(steps), separators=tuple(separators))


def continuation_request(
    sample: ReasoningSample,
    solution: StepSolution | None,
    step_index: int,
    config: RolloutConfig,
    n: int | None = None,
) -> CompletionRequest:
    """Request completions of the prefix up to ``step_index`` (-1 for empty)."""
    messages = [
        Message("system", POLICY_SYSTEM_PROMPT),
        Message("user", sample.question, image=sample.image),
    ]
    if step_index >= 0:
        if solution is None:
            raise ContractError("a prefix continuation needs the solution")
        messages.append(Message("assistant", solution.prefix_text(step_index)))
    return CompletionRequest(
        messages=tuple(messages),
        temperature=config.policy_temperature,
        max_new_tokens=config.max_new_tokens,
        n=n if n is not None else config.continuations_per_step,
    )


def estimate_step_accuracy(
    backend: Backend,
    sample: ReasoningSample,
    solution: StepSolution,
    step_index: int,
    config: RolloutConfig,
) -> AccuracyEstimate:
    """Fraction of sampled continuations of steps 0..step_index that verify."""
    if not 0 <= step_index < len(solution.steps):
        raise ContractError("step index out of range")
    request = continuation_request(sample, solution, step_index, config)
    completions = backend.complete(request)
    correct = sum(1 for c in completions if verify_answer(c.text, sample.ground_truth))
    return AccuracyEstimate(correct=correct, total=len(completions))


def estimate_baseline_accuracy(
    backend: Backend, sample: ReasoningSample, config: RolloutConfig
) -> AccuracyEstimate:
    """Expected accuracy of the empty prefix: the sample's prior difficulty."""
    request = continuation_request(sample, None, -1, config)
    completions = backend.complete(request)
    correct = sum(1 for c in completions if verify_answer(c.text, sample.ground_truth))
    return AccuracyEstimate(correct=correct, total=len(completions))


AccuracyLike = AccuracyEstimate | Fraction | float | int


def _as_fraction(value: AccuracyLike) -> Fraction:
    if isinstance(value, AccuracyEstimate):
        return value.as_fraction()
    fraction = Fraction(value)
    if not 0 <= fraction <= 1:
        raise ContractError("expected accuracy out of [0, 1]")
    return fraction


def label_value(accuracies: Sequence[AccuracyLike], threshold: AccuracyLike = 0.0) -> list[str]:
    """'+' iff the accuracy strictly exceeds the threshold, else '-'."""
    cutoff = Fraction(threshold) if not isinstance(threshold, AccuracyEstimate) else threshold.as_fraction()
    return [PLUS if _as_fraction(value) > cutoff else MINUS for value in accuracies]


def label_advantage(
    accuracies: Sequence[AccuracyLike], baseline: AccuracyLike
) -> list[str]:
    """Sign of each step's accuracy change; step 0 compares to the baseline."""
    previous = _as_fraction(baseline)
    labels: list[str] = []
    for value in accuracies:
        current = _as_fraction(value)
        diff = current - previous
        labels.append(PLUS if diff > 0 else MINUS if diff < 0 else EQUAL)
        previous = current
    return labels


def _step_accuracies(solution: StepSolution) -> list[AccuracyEstimate]:
    accuracies = []
    for step in solution.steps:
        if step.expected_accuracy is None:
            raise ContractError(f"step {step.index} has no accuracy estimate")
        accuracies.append(step.expected_accuracy)
    return accuracies


def apply_value_labels(solution: StepSolution, threshold: AccuracyLike = 0.0) -> StepSolution:
    labels = label_value(_step_accuracies(solution), threshold)
    return solution.with_steps(
        replace(step, value_label=label) for step, label in zip(solution.steps, labels)
    )


def apply_advantage_labels(solution: StepSolution, baseline: AccuracyLike) -> StepSolution:
    labels = label_advantage(_step_accuracies(solution), baseline)
    return solution.with_steps(
        replace(step, advantage_label=label) for step, label in zip(solution.steps, labels)
    )


def build_records(
    sample: ReasoningSample,
    solution: StepSolution,
    scheme: str,
    mode: str = "full",
) -> ProcessSupervisionRecord:
    """Training record with one turn per step.

    Full mode supervises every step; early-stop mode truncates right after
    the first '-' turn.
    """
    if mode not in SUPERVISION_MODES:
        raise ContractError(f"bad supervision mode {mode!r}")
    labels = []
    for step in solution.steps:
        label = step.value_label if scheme == "value" else step.advantage_label
        if label is None:
            raise ContractError(f"step {step.index} is not labeled under the {scheme} scheme")
        labels.append(label)
    image_part = f"<image>{sample.image}</image>\n" if sample.image else ""
    turns = [
        Turn(
            context=f"{image_part}{sample.question}\n\n{solution.steps[0].text}",
            step=solution.steps[0].text,
            target=labels[0],
        )
    ]
    for step, label in zip(solution.steps[1:], labels[1:]):
        turns.append(Turn(context=step.text, step=step.text, target=label))
    if mode == "early_stop":
        for i, label in enumerate(labels):
            if label == MINUS:
                turns = turns[: i + 1]
                break
    return ProcessSupervisionRecord(sample_id=sample.id, scheme=scheme, turns=tuple(turns))


class RolloutRunner:
    """Drives the full pipeline over a corpus with journaled resumability.

    Every (sample, solution, step) estimate is keyed by content hash, so a
    re-run against the same journal skips finished entries; aggregation is
    order-independent and the returned list is deterministically sorted.
    """

    def __init__(
        self,
        backend: Backend,
        config: RolloutConfig,
        journal: Journal | None = None,
        max_workers: int = 1,
    ):
        self.backend = backend
        self.config = config
        self.journal = journal
        self.max_workers = max_workers

    def run(self, samples: Iterable[ReasoningSample]) -> list[AnnotatedSolution]:
        samples = list(samples)
        if self.max_workers > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                nested = list(pool.map(self.annotate_sample, samples))
        else:
            nested = [self.annotate_sample(sample) for sample in samples]
        results = [annotated for group in nested for annotated in group]
        results.sort(key=lambda a: (a.sample_id, content_hash(a.solution.text)))
        return results

    def annotate_sample(self, sample: ReasoningSample) -> list[AnnotatedSolution]:
        texts = self._sampled_solutions(sample)
        baseline = self._baseline(sample)
        annotated = []
        for text in texts:
            solution = merge_steps_evenly(
                split_solution(text, producer=self.backend.name), self.config.max_steps
            )
            steps = []
            for step in solution.steps:
                estimate = self._step_estimate(sample, solution, step.index)
                steps.append(replace(step, expected_accuracy=estimate))
            annotated.append(
                AnnotatedSolution(
                    sample_id=sample.id,
                    solution=solution.with_steps(steps),
                    baseline=baseline,
                )
            )
        return annotated

    def _sampled_solutions(self, sample: ReasoningSample) -> list[str]:
        key = content_hash(
            {
                "kind": "solutions",
                "sample": sample.id,
                "n": self.config.solutions_per_sample,
                "temperature": self.config.policy_temperature,
            }
        )
        def sample_pool() -> list[str]:
            request = continuation_request(
                sample, None, -1, self.config, n=self.config.solutions_per_sample
            )
            return [c.text for c in self.backend.complete(request)]

        if self.journal is None:
            return sample_pool()
        return self.journal.get_or_compute(key, sample_pool)

    def _baseline(self, sample: ReasoningSample) -> AccuracyEstimate:
        key = content_hash(
            {
                "kind": "baseline",
                "sample": sample.id,
                "k": self.config.continuations_per_step,
                "temperature": self.config.policy_temperature,
            }
        )
        def estimate() -> dict:
            return estimate_baseline_accuracy(self.backend, sample, self.config).to_dict()

        if self.journal is None:
            return AccuracyEstimate.from_dict(estimate())
        return AccuracyEstimate.from_dict(self.journal.get_or_compute(key, estimate))

    def _step_estimate(
        self, sample: ReasoningSample, solution: StepSolution, step_index: int
    ) -> AccuracyEstimate:
        key = content_hash(
            {
                "kind": "step",
                "sample": sample.id,
                "solution": content_hash(solution.text),
                "step": step_index,
                "k": self.config.continuations_per_step,
                "temperature": self.config.policy_temperature,
            }
        )
        def estimate() -> dict:
            return estimate_step_accuracy(
                self.backend, sample, solution, step_index, self.config
            ).to_dict()

        if self.journal is None:
            return AccuracyEstimate.from_dict(estimate())
        return AccuracyEstimate.from_dict(self.journal.get_or_compute(key, estimate))


def label_solutions(
    annotated: Iterable[AnnotatedSolution], scheme: str, threshold: AccuracyLike = 0.0
) -> list[AnnotatedSolution]:
    """Apply one labeling scheme to rollout output."""
    labeled = []
    for item in annotated:
        if scheme == "value":
            solution = apply_value_labels(item.solution, threshold)
        elif scheme == "advantage":
            if item.baseline is None:
                raise ContractError(f"solution for {item.sample_id} has no baseline estimate")
            solution = apply_advantage_labels(item.solution, item.baseline)
        else:
            raise ContractError(f"bad scheme {scheme!r}")
        labeled.append(replace(item, solution=solution))
    return labeled
