from __future__ import annotations

import random

import pytest

from steplab.bench import (
    BenchReport,
    bench_stats,
    evaluate_judge,
    judge_steps_prm,
    macro_f1,
    mllm_judge,
    nearest_rank_quartiles,
    overall_score,
    parse_mllm_judgment,
    prm_judge,
    render_bench_table,
)
from steplab.errors import ContractError
from steplab.gateway import Completion
from steplab.mock import JudgeScript, MockBackend, MockBackendScript
from steplab.records import BenchItem, Step, StepSolution

from conftest import answer_key_for, make_corpus, make_sample, make_solution


def test_judge_steps_prm_margin_rule():
    probs = [{"+": 0.6, "-": 0.4}]
    assert judge_steps_prm(probs, 0.0) == ["correct"]
    assert judge_steps_prm(probs, 0.25) == ["incorrect"]
    assert judge_steps_prm([{"+": 0.5, "-": 0.5}], 0.0) == ["incorrect"]


def test_judge_steps_prm_renormalizes():
    # 0.3 vs 0.1 renormalizes to 0.75 vs 0.25, difference 0.5.
    assert judge_steps_prm([{"+": 0.3, "-": 0.1}], 0.45) == ["correct"]
    assert judge_steps_prm([{"+": 0.3, "-": 0.1}], 0.55) == ["incorrect"]


def test_parse_mllm_judgment_examples():
    assert parse_mllm_judgment("Step 1: correct\nStep 2: incorrect", 2) == [
        "correct",
        "incorrect",
    ]
    assert parse_mllm_judgment("Step 1: correct", 2) == ["correct", "unparsed"]
    assert parse_mllm_judgment("free-form prose with no block", 3) == ["unparsed"] * 3


def test_parse_mllm_judgment_is_case_insensitive_and_bounded():
    text = "step 1 - CORRECT\nStep 7: incorrect\nStep 2. incorrect"
    assert parse_mllm_judgment(text, 2) == ["correct", "incorrect"]


def test_macro_f1_perfect_agreement():
    gold = ["positive", "positive", "negative", "negative"]
    pred = ["correct", "correct", "incorrect", "incorrect"]
    assert macro_f1(pred, gold) == 100.0


def test_macro_f1_hand_computed_example():
    # gold=[pos,neg], pred=[correct,correct]: F1_pos=2/3, F1_neg=0.
    assert macro_f1(["correct", "correct"], ["positive", "negative"]) == pytest.approx(
        100.0 * (2 / 3 + 0.0) / 2
    )


def test_macro_f1_excludes_neutral():
    gold = ["positive", "neutral", "negative"]
    pred = ["correct", "incorrect", "incorrect"]
    assert macro_f1(pred, gold) == 100.0


def test_macro_f1_length_mismatch():
    with pytest.raises(ContractError):
        macro_f1(["correct"], ["positive", "negative"])


def _oracle_macro_f1(predictions, gold):
    kept = [(p, g) for p, g in zip(predictions, gold) if g != "neutral"]
    kept = [("incorrect" if p == "unparsed" else p, g) for p, g in kept]

    def f1(positive_gold, positive_pred):
        tp = fp = fn = 0
        for p, g in kept:
            if g == positive_gold and p == positive_pred:
                tp += 1
            elif g != positive_gold and p == positive_pred:
                fp += 1
            elif g == positive_gold and p != positive_pred:
                fn += 1
        return 0.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)

    return 100.0 * (f1("positive", "correct") + f1("negative", "incorrect")) / 2.0


def test_macro_f1_matches_brute_force_oracle():
    rng = random.Random(2024)
    for _ in range(1000):
        n = rng.randint(1, 20)
        gold = [
            rng.choices(["positive", "negative", "neutral"], weights=[0.5, 0.2, 0.3])[0]
            for _ in range(n)
        ]
        pred = [rng.choice(["correct", "incorrect", "unparsed"]) for _ in range(n)]
        assert macro_f1(pred, gold) == _oracle_macro_f1(pred, gold)


def test_macro_f1_symmetric_under_class_swap():
    rng = random.Random(8)
    swap_gold = {"positive": "negative", "negative": "positive", "neutral": "neutral"}
    swap_pred = {"correct": "incorrect", "incorrect": "correct"}
    for _ in range(200):
        n = rng.randint(1, 15)
        gold = [rng.choice(["positive", "negative", "neutral"]) for _ in range(n)]
        pred = [rng.choice(["correct", "incorrect"]) for _ in range(n)]
        swapped = macro_f1([swap_pred[p] for p in pred], [swap_gold[g] for g in gold])
        assert macro_f1(pred, gold) == pytest.approx(swapped)


def test_random_judge_scores_near_fifty():
    rng = random.Random(404)
    n = 10_000
    gold = [
        rng.choices(["positive", "negative", "neutral"], weights=[0.6, 0.3, 0.1])[0]
        for _ in range(n)
    ]
    pred = [rng.choice(["correct", "incorrect"]) for _ in range(n)]
    assert 46.0 <= macro_f1(pred, gold) <= 54.0


def test_overall_score_weighted():
    assert overall_score({"a": 60.0, "b": 40.0}, {"a": 100, "b": 100}) == 50.0
    assert overall_score({"a": 60.0, "b": 40.0}, {"a": 300, "b": 100}) == 55.0
    assert overall_score({"solo": 72.5}, {"solo": 10}) == 72.5


def test_overall_score_bounded_by_extremes():
    rng = random.Random(6)
    for _ in range(100):
        scores = {f"s{i}": rng.random() * 100 for i in range(rng.randint(1, 6))}
        counts = {k: rng.randint(1, 50) for k in scores}
        overall = overall_score(scores, counts)
        assert min(scores.values()) <= overall <= max(scores.values())


def _bench_item(labels, source="src", producer="model-a", index_offset=0):
    steps = tuple(
        Step(index=i, text=f"step text {i + index_offset}", human_label=label)
        for i, label in enumerate(labels)
    )
    solution = StepSolution(steps=steps, separators=("\n\n",) * (len(labels) - 1))
    return BenchItem(
        sample=make_sample(index_offset, source=source),
        solution=solution,
        solution_source=producer,
        split_id=0,
    )


def test_bench_stats_mean_steps():
    item = _bench_item(["positive"] * 9)
    stats = bench_stats([item])
    assert stats.mean_steps_per_solution == 9.0


def test_bench_stats_quartiles_nearest_rank():
    assert nearest_rank_quartiles([1, 2, 3, 4]) == (1, 2, 3)
    assert nearest_rank_quartiles([]) is None
    # Sorted-based oracle on random data.
    rng = random.Random(12)
    for _ in range(100):
        values = [rng.randint(0, 99) for _ in range(rng.randint(1, 40))]
        got = nearest_rank_quartiles(values)
        ordered = sorted(values)
        import math

        want = tuple(ordered[max(1, math.ceil(p * len(values))) - 1] for p in (0.25, 0.5, 0.75))
        assert got == want


def test_bench_stats_error_rate_by_index():
    items = [
        _bench_item(["positive", "positive", "positive", "negative"], index_offset=i)
        for i in range(3)
    ]
    stats = bench_stats(items)
    assert stats.error_rate_by_index[3]["error_rate"] == 1.0
    assert stats.error_rate_by_index[0]["error_rate"] == 0.0
    assert stats.label_counts == {"negative": 3, "positive": 9}
    assert sum(stats.step_position_distribution) == pytest.approx(1.0)


def test_prm_judge_with_biased_mock():
    items = [_bench_item(["positive", "negative"], index_offset=i) for i in range(4)]
    backend = MockBackend(
        MockBackendScript(seed=2, judge=JudgeScript(bias={"+": 0.9, "-": 0.1})),
        answer_key={},
    )
    report = evaluate_judge(items, prm_judge(backend, margin=0.0))
    # A judge that marks everything correct gets F1_neg = 0.
    assert report.per_source_f1["src"] == pytest.approx(100.0 * (2 / 3 + 0.0) / 2)
    assert report.per_source_steps["src"] == 8


def test_mllm_judge_parses_scripted_backend():
    items = [_bench_item(["positive", "negative", "neutral"])]

    class ScriptedJudge:
        name = "scripted"
        supports_token_probs = False
        supports_slot_probs = False

        def complete(self, request):
            return [Completion(text="Step 1: correct\nStep 2: incorrect")]

        def slot_token_probs(self, request):
            raise NotImplementedError

    report = evaluate_judge(items, mllm_judge(ScriptedJudge()))
    assert report.per_source_f1["src"] == 100.0
    assert report.unparsed_steps == 1  # the neutral step's missing verdict
    assert "unparsed" in render_bench_table(report)


def test_overall_uses_scored_step_counts():
    report = BenchReport(
        per_source_f1={"a": 80.0, "b": 20.0}, per_source_steps={"a": 30, "b": 10}
    )
    assert report.overall == pytest.approx((80.0 * 30 + 20.0 * 10) / 40)
