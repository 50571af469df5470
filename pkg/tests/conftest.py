from __future__ import annotations

import random
import string

import pytest

from steplab.mock import MockBackend, MockBackendScript, JudgeScript
from steplab.records import AccuracyEstimate, ReasoningSample, Step, StepSolution


def make_sample(i: int = 0, source: str = "default", answer: str | None = None) -> ReasoningSample:
    return ReasoningSample(
        id=f"q{i:04d}",
        question=f"What is {i} plus {i}?",
        ground_truth=answer if answer is not None else str(2 * i),
        source=source,
    )


def make_corpus(n: int, source: str = "default") -> list[ReasoningSample]:
    return [make_sample(i, source=source) for i in range(n)]


def answer_key_for(samples) -> dict[str, str]:
    return {s.question: s.ground_truth for s in samples}


def make_solution(texts: list[str], sep: str = "\n\n", producer: str = "test") -> StepSolution:
    steps = tuple(Step(index=i, text=t) for i, t in enumerate(texts))
    return StepSolution(steps=steps, separators=(sep,) * (len(texts) - 1), producer=producer)


def with_accuracies(solution: StepSolution, counts: list[tuple[int, int]]) -> StepSolution:
    from dataclasses import replace

    return solution.with_steps(
        replace(step, expected_accuracy=AccuracyEstimate(c, t))
        for step, (c, t) in zip(solution.steps, counts)
    )


def random_text(rng: random.Random, max_len: int = 40) -> str:
    alphabet = string.ascii_letters + string.digits + " .,;:!?-_ü€λ"
    length = rng.randint(1, max_len)
    text = "".join(rng.choice(alphabet) for _ in range(length))
    return text or "x"


@pytest.fixture
def mock_policy():
    samples = make_corpus(4)
    script = MockBackendScript(seed=7, default_success=0.5)
    return MockBackend(script, answer_key=answer_key_for(samples)), samples


@pytest.fixture
def biased_judge():
    script = MockBackendScript(seed=3, judge=JudgeScript(bias={"+": 0.8, "-": 0.2}))
    return MockBackend(script, answer_key={})
