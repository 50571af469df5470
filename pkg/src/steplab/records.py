"""Canonical data types shared by every pipeline stage.

All types are immutable values: once constructed they can be shared freely
across concurrent tasks. Each type serializes to a flat JSON object with a
fixed field-name contract (see README "Record formats") and round-trips
byte-exactly through :func:`dumps_record` / :func:`loads_record`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import ContractError

PLUS = "+"
EQUAL = "="
MINUS = "-"

VALUE_ALPHABET = (PLUS, MINUS)
ADVANTAGE_ALPHABET = (PLUS, EQUAL, MINUS)

HUMAN_LABELS = ("positive", "negative", "neutral")
SCHEMES = ("value", "advantage")
SUPERVISION_MODES = ("full", "early_stop")
CRITIC_KINDS = ("self_consistency", "orm", "prm_value", "prm_advantage")
AGGREGATIONS = ("average", "min", "max")


def canonical_json(obj: Any) -> str:
    """Serialize to the canonical JSON form used for files and hashes."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def content_hash(obj: Any) -> str:
    """Hex sha256 of an object's canonical JSON (or of raw str/bytes)."""
    if isinstance(obj, bytes):
        data = obj
    elif isinstance(obj, str):
        data = obj.encode("utf-8")
    else:
        data = canonical_json(obj).encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ContractError(message)


@dataclass(frozen=True)
class AccuracyEstimate:
    """Expected accuracy of a step prefix, kept as exact counts.

    Storing (correct, total) instead of a float keeps threshold comparisons
    unambiguous at boundaries such as 0 or 1/16.
    """

    correct: int
    total: int

    def __post_init__(self) -> None:
        _require(self.total >= 1, "accuracy estimate needs total >= 1")
        _require(0 <= self.correct <= self.total, "accuracy counts out of range")

    @property
    def value(self) -> float:
        return self.correct / self.total

    def as_fraction(self) -> Fraction:
        return Fraction(self.correct, self.total)

    def to_dict(self) -> dict[str, int]:
        return {"correct": self.correct, "total": self.total}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AccuracyEstimate:
        return cls(correct=data["correct"], total=data["total"])


@dataclass(frozen=True)
class ReasoningSample:
    """One reasoning question: the unit every other record attaches to.

    Attributes:
        id:           Opaque identifier, unique within a corpus.
        question:     The question text (non-empty).
        ground_truth: Reference answer used for correctness verification.
        image:        Optional opaque attachment reference (path, URL, or
                      data URI). Never decoded by the toolkit.
        source:       Benchmark or dataset tag used for per-source reporting.
        group:        Optional worst-case group key: a group counts as
                      correct only if all its members are correct.
    """

    id: str
    question: str
    ground_truth: str
    image: str | None = None
    source: str = "default"
    group: str | None = None

    def __post_init__(self) -> None:
        _require(bool(self.id), "sample id must be non-empty")
        _require(bool(self.question.strip()), "sample question must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "question": self.question,
            "ground_truth": self.ground_truth,
            "image": self.image,
            "source": self.source,
            "group": self.group,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ReasoningSample:
        return cls(
            id=data["id"],
            question=data["question"],
            ground_truth=data["ground_truth"],
            image=data.get("image"),
            source=data.get("source", "default"),
            group=data.get("group"),
        )


@dataclass(frozen=True)
class Step:
    """One solution step with optional annotations.

    ``value_label`` requires an accuracy estimate; the cross-step requirement
    for ``advantage_label`` is enforced by :class:`StepSolution`.
    """

    index: int
    text: str
    expected_accuracy: AccuracyEstimate | None = None
    value_label: str | None = None
    advantage_label: str | None = None
    human_label: str | None = None

    def __post_init__(self) -> None:
        _require(self.index >= 0, "step index must be >= 0")
        _require(bool(self.text), "step text must be non-empty")
        if self.value_label is not None:
            _require(self.value_label in VALUE_ALPHABET, f"bad value label {self.value_label!r}")
            _require(self.expected_accuracy is not None, "value label requires an accuracy estimate")
        if self.advantage_label is not None:
            _require(
                self.advantage_label in ADVANTAGE_ALPHABET,
                f"bad advantage label {self.advantage_label!r}",
            )
        if self.human_label is not None:
            _require(self.human_label in HUMAN_LABELS, f"bad human label {self.human_label!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "text": self.text,
            "expected_accuracy": None
            if self.expected_accuracy is None
            else self.expected_accuracy.to_dict(),
            "value_label": self.value_label,
            "advantage_label": self.advantage_label,
            "human_label": self.human_label,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Step:
        acc = data.get("expected_accuracy")
        return cls(
            index=data["index"],
            text=data["text"],
            expected_accuracy=None if acc is None else AccuracyEstimate.from_dict(acc),
            value_label=data.get("value_label"),
            advantage_label=data.get("advantage_label"),
            human_label=data.get("human_label"),
        )


@dataclass(frozen=True)
class StepSolution:
    """An ordered step-by-step solution with recorded separators.

    Joining ``steps[i].text`` with ``separators[i]`` between neighbours
    reproduces the original solution text byte-exactly.
    """

    steps: tuple[Step, ...]
    separators: tuple[str, ...] = ()
    producer: str = "unknown"
    final_answer: str | None = None

    def __post_init__(self) -> None:
        _require(len(self.steps) >= 1, "solution must contain at least one step")
        _require(
            len(self.separators) == len(self.steps) - 1,
            "solution needs exactly len(steps)-1 separators",
        )
        for i, step in enumerate(self.steps):
            _require(step.index == i, f"step indices must be consecutive from 0, got {step.index} at {i}")
        for i, step in enumerate(self.steps):
            if step.advantage_label is not None:
                _require(step.expected_accuracy is not None, "advantage label requires accuracy at the step")
                if i > 0:
                    _require(
                        self.steps[i - 1].expected_accuracy is not None,
                        "advantage label requires accuracy at the previous step",
                    )

    @property
    def text(self) -> str:
        parts = [self.steps[0].text]
        for sep, step in zip(self.separators, self.steps[1:]):
            parts.append(sep)
            parts.append(step.text)
        return "".join(parts)

    def prefix_text(self, upto: int) -> str:
        """Original text of steps 0..upto inclusive."""
        _require(0 <= upto < len(self.steps), "prefix index out of range")
        parts = [self.steps[0].text]
        for i in range(1, upto + 1):
            parts.append(self.separators[i - 1])
            parts.append(self.steps[i].text)
        return "".join(parts)

    def with_steps(self, steps: Iterable[Step]) -> StepSolution:
        return replace(self, steps=tuple(steps))

    def to_dict(self) -> dict[str, Any]:
        return {
            "steps": [s.to_dict() for s in self.steps],
            "separators": list(self.separators),
            "producer": self.producer,
            "final_answer": self.final_answer,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> StepSolution:
        return cls(
            steps=tuple(Step.from_dict(s) for s in data["steps"]),
            separators=tuple(data.get("separators", [])),
            producer=data.get("producer", "unknown"),
            final_answer=data.get("final_answer"),
        )


@dataclass(frozen=True)
class AnnotatedSolution:
    """A solution plus the baseline accuracy of its sample's empty prefix.

    This is the line format between the rollout and labeling/export stages.
    The baseline is what advantage labeling compares the first step against.
    """

    sample_id: str
    solution: StepSolution
    baseline: AccuracyEstimate | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "solution": self.solution.to_dict(),
            "baseline": None if self.baseline is None else self.baseline.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AnnotatedSolution:
        baseline = data.get("baseline")
        return cls(
            sample_id=data["sample_id"],
            solution=StepSolution.from_dict(data["solution"]),
            baseline=None if baseline is None else AccuracyEstimate.from_dict(baseline),
        )


@dataclass(frozen=True)
class Turn:
    """One training turn: the context shown, the bare step, and its target."""

    context: str
    step: str
    target: str

    def to_dict(self) -> dict[str, str]:
        return {"context": self.context, "step": self.step, "target": self.target}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Turn:
        return cls(context=data["context"], step=data["step"], target=data["target"])


@dataclass(frozen=True)
class ProcessSupervisionRecord:
    """Multi-turn training record: one turn per supervised step.

    Turn 0's context carries the image reference, the question, and the first
    step; every later turn presents exactly one subsequent step.
    """

    sample_id: str
    scheme: str
    turns: tuple[Turn, ...]

    def __post_init__(self) -> None:
        _require(self.scheme in SCHEMES, f"bad scheme {self.scheme!r}")
        _require(len(self.turns) >= 1, "record must contain at least one turn")
        alphabet = VALUE_ALPHABET if self.scheme == "value" else ADVANTAGE_ALPHABET
        for turn in self.turns:
            _require(
                turn.target in alphabet,
                f"target {turn.target!r} not in the {self.scheme} alphabet",
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "scheme": self.scheme,
            "turns": [t.to_dict() for t in self.turns],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ProcessSupervisionRecord:
        return cls(
            sample_id=data["sample_id"],
            scheme=data["scheme"],
            turns=tuple(Turn.from_dict(t) for t in data["turns"]),
        )


@dataclass(frozen=True)
class CriticVerdict:
    """Per-step scores plus the aggregated response score from one critic."""

    step_scores: tuple[float, ...]
    response_score: float
    critic_kind: str
    aggregation: str = "average"

    def __post_init__(self) -> None:
        _require(self.critic_kind in CRITIC_KINDS, f"bad critic kind {self.critic_kind!r}")
        _require(self.aggregation in AGGREGATIONS, f"bad aggregation {self.aggregation!r}")
        _require(len(self.step_scores) >= 1, "verdict needs at least one step score")
        if self.critic_kind == "orm":
            _require(len(self.step_scores) == 1, "orm verdicts carry exactly one score")
        if self.critic_kind == "prm_value":
            _require(
                all(0.0 <= s <= 1.0 for s in self.step_scores),
                "value step scores must lie in [0, 1]",
            )
        if self.critic_kind == "prm_advantage":
            _require(
                all(-1.0 <= s <= 1.0 for s in self.step_scores),
                "advantage step scores must lie in [-1, 1]",
            )
        _require(
            self.response_score == aggregate_scores(self.step_scores, self.aggregation),
            "response score must equal the declared aggregation of step scores",
        )

    @classmethod
    def from_steps(
        cls, step_scores: Iterable[float], critic_kind: str, aggregation: str = "average"
    ) -> CriticVerdict:
        scores = tuple(float(s) for s in step_scores)
        return cls(
            step_scores=scores,
            response_score=aggregate_scores(scores, aggregation),
            critic_kind=critic_kind,
            aggregation=aggregation,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "step_scores": list(self.step_scores),
            "response_score": self.response_score,
            "critic_kind": self.critic_kind,
            "aggregation": self.aggregation,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CriticVerdict:
        return cls(
            step_scores=tuple(data["step_scores"]),
            response_score=data["response_score"],
            critic_kind=data["critic_kind"],
            aggregation=data.get("aggregation", "average"),
        )


def aggregate_scores(scores: tuple[float, ...] | list[float], aggregation: str) -> float:
    _require(len(scores) >= 1, "cannot aggregate zero scores")
    if aggregation == "average":
        return sum(scores) / len(scores)
    if aggregation == "min":
        return min(scores)
    if aggregation == "max":
        return max(scores)
    raise ContractError(f"bad aggregation {aggregation!r}")


@dataclass(frozen=True)
class BenchCandidate:
    """A benchmark sample plus an unlabeled solution, awaiting annotation."""

    sample: ReasoningSample
    solution: StepSolution
    solution_source: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample": self.sample.to_dict(),
            "solution": self.solution.to_dict(),
            "solution_source": self.solution_source,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> BenchCandidate:
        return cls(
            sample=ReasoningSample.from_dict(data["sample"]),
            solution=StepSolution.from_dict(data["solution"]),
            solution_source=data["solution_source"],
        )


@dataclass(frozen=True)
class BenchItem:
    """A benchmark sample whose solution carries a human label on every step."""

    sample: ReasoningSample
    solution: StepSolution
    solution_source: str
    split_id: int

    def __post_init__(self) -> None:
        _require(self.split_id >= 0, "split id must be >= 0")
        for step in self.solution.steps:
            _require(step.human_label is not None, f"step {step.index} is missing a human label")

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample": self.sample.to_dict(),
            "solution": self.solution.to_dict(),
            "solution_source": self.solution_source,
            "split_id": self.split_id,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> BenchItem:
        return cls(
            sample=ReasoningSample.from_dict(data["sample"]),
            solution=StepSolution.from_dict(data["solution"]),
            solution_source=data["solution_source"],
            split_id=data["split_id"],
        )


@dataclass(frozen=True)
class ValidationIssue:
    kind: str
    sample_id: str
    detail: str

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind, "sample_id": self.sample_id, "detail": self.detail}


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "issues": [i.to_dict() for i in self.issues]}


def validate_corpus(
    samples: Iterable[ReasoningSample], image_root: Path | str | None = None
) -> ValidationReport:
    """Report duplicate ids, empty fields, and dangling image references."""
    root = Path(image_root) if image_root is not None else Path.cwd()
    seen: set[str] = set()
    issues: list[ValidationIssue] = []
    for sample in samples:
        if sample.id in seen:
            issues.append(ValidationIssue("duplicate-id", sample.id, "id already used"))
        seen.add(sample.id)
        if not sample.question.strip():
            issues.append(ValidationIssue("empty-field", sample.id, "question is empty"))
        if not sample.ground_truth.strip():
            issues.append(ValidationIssue("empty-field", sample.id, "ground_truth is empty"))
        ref = sample.image
        if ref and "://" not in ref and not ref.startswith("data:"):
            path = Path(ref)
            if not path.is_absolute():
                path = root / path
            if not path.exists():
                issues.append(ValidationIssue("dangling-image", sample.id, f"missing file {ref}"))
    return ValidationReport(issues=tuple(issues))


def dumps_record(record: Any) -> str:
    """Canonical single-line JSON for any record type above."""
    return canonical_json(record.to_dict())


def loads_record(line: str, cls: type) -> Any:
    return cls.from_dict(json.loads(line))


def write_jsonl(path: Path | str, records: Iterable[Any]) -> int:
    """Write records one per line; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps_record(record))
            fh.write("\n")
            count += 1
    return count


def read_jsonl(path: Path | str, cls: type) -> Iterator[Any]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield loads_record(line, cls)
