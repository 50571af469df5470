"""Step-judgment benchmark evaluation.

A judge labels every step of a solution correct or incorrect. Judges are
scored with macro F1: the F1 of the correct class and the F1 of the
incorrect class, averaged, with neutral-gold steps excluded beforehand.
The overall score across data sources is the step-count-weighted (micro)
average of the per-source macro F1.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .errors import ContractError
from .gateway import Backend, CompletionRequest, Message
from .records import MINUS, PLUS, VALUE_ALPHABET, BenchItem
from .scoring import solution_slot_probs

CORRECT = "correct"
INCORRECT = "incorrect"
UNPARSED = "unparsed"

DEFAULT_MLLM_PROMPT = (
    "Review the candidate solution to the question below. For every step,"
    " decide whether it is correct. Answer with one line per step in the"
    " exact form 'Step <i>: correct' or 'Step <i>: incorrect'.\n\n"
    "Question:\n{question}\n\nSolution:\n{solution}"
)

_VERDICT_LINE = re.compile(r"(?im)^\s*step\s+(\d+)\s*[:.\-]\s*(correct|incorrect)\b")


@dataclass(frozen=True)
class JudgeConfig:
    """Exactly the fields of the active judge kind are set."""

    judge_kind: str
    prm_margin_threshold: float | None = None
    prompt_template: str | None = None

    def __post_init__(self) -> None:
        if self.judge_kind == "prm":
            if self.prm_margin_threshold is None or self.prm_margin_threshold < 0:
                raise ContractError("prm judge needs a margin threshold >= 0")
            if self.prompt_template is not None:
                raise ContractError("prm judge takes no prompt template")
        elif self.judge_kind == "mllm_prompted":
            if self.prompt_template is None:
                raise ContractError("mllm judge needs a prompt template")
            if self.prm_margin_threshold is not None:
                raise ContractError("mllm judge takes no margin threshold")
        else:
            raise ContractError(f"bad judge kind {self.judge_kind!r}")


def judge_steps_prm(
    step_token_probs: Sequence[Mapping[str, float]], margin: float = 0.0
) -> list[str]:
    """Correct iff p(+) - p(-) > margin after renormalizing over {+, -}."""
    verdicts = []
    for probs in step_token_probs:
        p_plus = probs.get(PLUS, 0.0)
        p_minus = probs.get(MINUS, 0.0)
        total = p_plus + p_minus
        if total > 0:
            p_plus, p_minus = p_plus / total, p_minus / total
        else:
            p_plus = p_minus = 0.5
        verdicts.append(CORRECT if p_plus - p_minus > margin else INCORRECT)
    return verdicts


def parse_mllm_judgment(text: str, n_steps: int) -> list[str]:
    """Extract per-step verdicts from a constrained 'Step i: ...' block.

    Missing or malformed entries come back as ``unparsed``; scoring treats
    those as incorrect predictions (the pessimistic rule) and reports them.
    """
    if n_steps < 1:
        raise ContractError("n_steps must be >= 1")
    verdicts = [UNPARSED] * n_steps
    for match in _VERDICT_LINE.finditer(text):
        index = int(match.group(1)) - 1
        if 0 <= index < n_steps:
            verdicts[index] = match.group(2).lower()
    return verdicts


def macro_f1(predictions: Sequence[str], gold_labels: Sequence[str]) -> float:
    """100 * mean of the correct-class and incorrect-class F1 scores.

    Neutral-gold steps are excluded before scoring; an undefined per-class
    F1 (no predictions and no gold instances of the class) counts as 0, so
    a judge that never predicts a class is penalized.
    """
    if len(predictions) != len(gold_labels):
        raise ContractError("predictions and gold labels differ in length")
    pairs = [
        (pred if pred != UNPARSED else INCORRECT, gold)
        for pred, gold in zip(predictions, gold_labels)
        if gold != "neutral"
    ]
    f1_pos = _class_f1(pairs, gold_class="positive", pred_class=CORRECT)
    f1_neg = _class_f1(pairs, gold_class="negative", pred_class=INCORRECT)
    return 100.0 * (f1_pos + f1_neg) / 2.0


def _class_f1(pairs: Sequence[tuple[str, str]], gold_class: str, pred_class: str) -> float:
    tp = sum(1 for pred, gold in pairs if gold == gold_class and pred == pred_class)
    fp = sum(1 for pred, gold in pairs if gold != gold_class and pred == pred_class)
    fn = sum(1 for pred, gold in pairs if gold == gold_class and pred != pred_class)
    denominator = 2 * tp + fp + fn
    if denominator == 0:
        return 0.0
    return 2 * tp / denominator


def overall_score(
    per_source_scores: Mapping[str, float], per_source_step_counts: Mapping[str, int]
) -> float:
    """Step-count-weighted average of per-source scores."""
    if not per_source_scores:
        raise ContractError("overall score needs at least one source")
    total = sum(per_source_step_counts[source] for source in per_source_scores)
    if total == 0:
        raise ContractError("overall score needs a non-zero step count")
    return (
        sum(
            score * per_source_step_counts[source]
            for source, score in per_source_scores.items()
        )
        / total
    )


# -- judges -------------------------------------------------------------------


def prm_judge(backend: Backend, margin: float = 0.0) -> Callable[[BenchItem], list[str]]:
    def judge(item: BenchItem) -> list[str]:
        texts = [step.text for step in item.solution.steps]
        probs = solution_slot_probs(backend, item.sample, texts, VALUE_ALPHABET)
        return judge_steps_prm(probs, margin)

    return judge


def mllm_judge(
    backend: Backend, prompt_template: str = DEFAULT_MLLM_PROMPT
) -> Callable[[BenchItem], list[str]]:
    def judge(item: BenchItem) -> list[str]:
        solution_block = "\n".join(
            f"Step {step.index + 1}: {step.text}" for step in item.solution.steps
        )
        prompt = prompt_template.format(question=item.sample.question, solution=solution_block)
        request = CompletionRequest(
            messages=(Message("user", prompt, image=item.sample.image),),
            temperature=0.0,
            max_new_tokens=2048,
        )
        completion = backend.complete(request)[0]
        return parse_mllm_judgment(completion.text, len(item.solution.steps))

    return judge


@dataclass
class BenchReport:
    per_source_f1: dict[str, float] = field(default_factory=dict)
    per_source_steps: dict[str, int] = field(default_factory=dict)
    unparsed_steps: int = 0
    judged_items: int = 0

    @property
    def overall(self) -> float:
        return overall_score(self.per_source_f1, self.per_source_steps)

    def to_dict(self) -> dict:
        return {
            "per_source_f1": dict(sorted(self.per_source_f1.items())),
            "per_source_steps": dict(sorted(self.per_source_steps.items())),
            "overall": self.overall,
            "unparsed_steps": self.unparsed_steps,
            "judged_items": self.judged_items,
        }


def evaluate_judge(
    items: Iterable[BenchItem], judge: Callable[[BenchItem], list[str]]
) -> BenchReport:
    """Run a judge over a benchmark and score it per source."""
    report = BenchReport()
    predictions: dict[str, list[str]] = {}
    gold: dict[str, list[str]] = {}
    for item in items:
        verdicts = judge(item)
        if len(verdicts) != len(item.solution.steps):
            raise ContractError("judge returned a mismatched number of verdicts")
        report.judged_items += 1
        report.unparsed_steps += sum(1 for v in verdicts if v == UNPARSED)
        source = item.sample.source
        labels = [step.human_label or "neutral" for step in item.solution.steps]
        predictions.setdefault(source, []).extend(verdicts)
        gold.setdefault(source, []).extend(labels)
    for source in gold:
        report.per_source_f1[source] = macro_f1(predictions[source], gold[source])
        report.per_source_steps[source] = sum(1 for g in gold[source] if g != "neutral")
    return report


def render_bench_table(report: BenchReport) -> str:
    sources = sorted(report.per_source_f1)
    header = ["source"] + sources + ["overall"]
    scores = ["macro F1"] + [f"{report.per_source_f1[s]:.1f}" for s in sources] + [
        f"{report.overall:.1f}"
    ]
    steps = ["scored steps"] + [str(report.per_source_steps[s]) for s in sources] + [
        str(sum(report.per_source_steps.values()))
    ]
    rows = [header, scores, steps]
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    if report.unparsed_steps:
        lines.append(f"unparsed step verdicts (scored as incorrect): {report.unparsed_steps}")
    return "\n".join(lines)


# -- statistics ---------------------------------------------------------------


def nearest_rank_quartiles(values: Sequence[int | float]) -> tuple[float, float, float] | None:
    """(25th, 50th, 75th) percentiles by the nearest-rank method."""
    if not values:
        return None
    ordered = sorted(values)
    n = len(ordered)
    def pick(p: float) -> float:
        rank = max(1, math.ceil(p * n))
        return ordered[rank - 1]
    return (pick(0.25), pick(0.50), pick(0.75))


def word_count(text: str) -> int:
    return len(text.split())


@dataclass
class BenchStats:
    total_items: int = 0
    items_by_source: dict[str, int] = field(default_factory=dict)
    items_by_producer: dict[str, int] = field(default_factory=dict)
    label_counts: dict[str, int] = field(default_factory=dict)
    total_steps: int = 0
    mean_steps_per_solution: float = 0.0
    query_word_quartiles: tuple[float, float, float] | None = None
    response_word_quartiles: tuple[float, float, float] | None = None
    step_word_quartiles: tuple[float, float, float] | None = None
    step_position_distribution: list[float] = field(default_factory=list)
    error_rate_by_index: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total_items": self.total_items,
            "items_by_source": dict(sorted(self.items_by_source.items())),
            "items_by_producer": dict(sorted(self.items_by_producer.items())),
            "label_counts": dict(sorted(self.label_counts.items())),
            "total_steps": self.total_steps,
            "mean_steps_per_solution": self.mean_steps_per_solution,
            "query_word_quartiles": self.query_word_quartiles,
            "response_word_quartiles": self.response_word_quartiles,
            "step_word_quartiles": self.step_word_quartiles,
            "step_position_distribution": self.step_position_distribution,
            "error_rate_by_index": self.error_rate_by_index,
        }


def bench_stats(items: Iterable[BenchItem]) -> BenchStats:
    """Corpus statistics: counts, word-length quartiles, step distributions."""
    items = list(items)
    stats = BenchStats(total_items=len(items))
    sources: Counter[str] = Counter()
    producers: Counter[str] = Counter()
    labels: Counter[str] = Counter()
    query_lengths: list[int] = []
    response_lengths: list[int] = []
    step_lengths: list[int] = []
    position_total: Counter[int] = Counter()
    position_negative: Counter[int] = Counter()
    position_scored: Counter[int] = Counter()
    for item in items:
        sources[item.sample.source] += 1
        producers[item.solution_source] += 1
        query_lengths.append(word_count(item.sample.question))
        response_lengths.append(sum(word_count(s.text) for s in item.solution.steps))
        for step in item.solution.steps:
            labels[step.human_label or "neutral"] += 1
            step_lengths.append(word_count(step.text))
            position_total[step.index] += 1
            if step.human_label in ("positive", "negative"):
                position_scored[step.index] += 1
                if step.human_label == "negative":
                    position_negative[step.index] += 1
    stats.items_by_source = dict(sources)
    stats.items_by_producer = dict(producers)
    stats.label_counts = dict(labels)
    stats.total_steps = len(step_lengths)
    stats.mean_steps_per_solution = (
        stats.total_steps / stats.total_items if stats.total_items else 0.0
    )
    stats.query_word_quartiles = nearest_rank_quartiles(query_lengths)
    stats.response_word_quartiles = nearest_rank_quartiles(response_lengths)
    stats.step_word_quartiles = nearest_rank_quartiles(step_lengths)
    if position_total:
        max_index = max(position_total)
        stats.step_position_distribution = [
            position_total[i] / stats.total_steps for i in range(max_index + 1)
        ]
        stats.error_rate_by_index = [
            {
                "index": i,
                "steps": position_total[i],
                "negative": position_negative[i],
                "error_rate": (
                    position_negative[i] / position_scored[i] if position_scored[i] else None
                ),
            }
            for i in range(max_index + 1)
        ]
    return stats
