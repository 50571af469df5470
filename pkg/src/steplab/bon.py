"""Best-of-N evaluation.

Samples N candidate solutions per question from a policy backend, lets a
critic score them, keeps the argmax (ties break by lowest candidate index),
and judges the kept response against the ground truth. Reports per-source
accuracy, the average of per-source accuracies as the overall score, and a
pass@1 baseline (candidate 0 at the same temperature).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Protocol, Sequence

from .answers import verify_answer
from .errors import ContractError, TransportError
from .gateway import Backend, CompletionRequest, Message
from .journal import Journal
from .mock import derived_rng
from .records import ReasoningSample, StepSolution, content_hash
from .rollout import POLICY_SYSTEM_PROMPT, split_solution
from .scoring import (
    ScoringScheme,
    advantage_scheme,
    candidate_answer,
    orm_score,
    sc_select,
    score_solution,
    value_scheme,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BonConfig:
    n: int = 8
    temperature: float = 0.7
    critic_kind: str = "prm_value"
    aggregation: str = "average"
    seed: int = 0
    max_new_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ContractError("best-of-N needs n >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> BonConfig:
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        return cls(**known)


class Critic(Protocol):
    name: str

    def scores(self, sample: ReasoningSample, candidates: Sequence[StepSolution]) -> list[float]:
        ...


class PrmCritic:
    """Scores each candidate with a process-reward scheme over its steps."""

    def __init__(self, backend: Backend, scheme: ScoringScheme):
        self.backend = backend
        self.scheme = scheme
        self.name = f"{scheme.kind}:{scheme.aggregation}"

    def scores(self, sample: ReasoningSample, candidates: Sequence[StepSolution]) -> list[float]:
        return [
            score_solution(self.backend, sample, candidate, self.scheme).response_score
            for candidate in candidates
        ]


class OrmCritic:
    """Scores each candidate once, as a single concatenated step."""

    def __init__(self, backend: Backend):
        self.backend = backend
        self.name = "orm"

    def scores(self, sample: ReasoningSample, candidates: Sequence[StepSolution]) -> list[float]:
        return [
            orm_score(self.backend, sample, candidate).response_score for candidate in candidates
        ]


class SelfConsistencyCritic:
    """Scores each candidate by the vote count of its normalized answer."""

    name = "self_consistency"

    def scores(self, sample: ReasoningSample, candidates: Sequence[StepSolution]) -> list[float]:
        vote = sc_select([candidate_answer(c) for c in candidates])
        from .answers import normalize_answer

        return [
            float(vote.counts[normalize_answer(candidate_answer(c))]) for c in candidates
        ]


class OracleCritic:
    """Skyline critic: 1 for candidates whose answer verifies, else 0."""

    name = "oracle"

    def scores(self, sample: ReasoningSample, candidates: Sequence[StepSolution]) -> list[float]:
        return [
            1.0 if verify_answer(c.text, sample.ground_truth) else 0.0 for c in candidates
        ]


class ConstantCritic:
    """Assigns every candidate the same score; BoN degenerates to pass@1."""

    name = "constant"

    def __init__(self, value: float = 0.0):
        self.value = value

    def scores(self, sample: ReasoningSample, candidates: Sequence[StepSolution]) -> list[float]:
        return [self.value] * len(candidates)


class RandomCritic:
    """Seeded uniform scores, independent of candidate correctness."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def scores(self, sample: ReasoningSample, candidates: Sequence[StepSolution]) -> list[float]:
        rng = derived_rng(self.seed, "random-critic", sample.id)
        return [rng.random() for _ in candidates]


def make_critic(config: BonConfig, backend: Backend | None) -> Critic:
    kind = config.critic_kind
    if kind == "self_consistency":
        return SelfConsistencyCritic()
    if kind == "oracle":
        return OracleCritic()
    if kind == "constant":
        return ConstantCritic()
    if kind == "random":
        return RandomCritic(config.seed)
    if backend is None:
        raise ContractError(f"critic kind {kind!r} needs a critic backend")
    if kind == "orm":
        return OrmCritic(backend)
    if kind == "prm_value":
        return PrmCritic(backend, value_scheme(config.aggregation))
    if kind == "prm_advantage":
        return PrmCritic(backend, advantage_scheme(config.aggregation))
    raise ContractError(f"unknown critic kind {kind!r}")


class CandidatePool:
    """Content-addressed candidate pools shared across critics and sweeps.

    The pool for a sample is sampled once at ``pool_size``; smaller N reuse
    its prefix, so critics and sweep points are compared on identical
    candidates.
    """

    def __init__(
        self,
        policy: Backend,
        temperature: float,
        pool_size: int,
        journal: Journal | None = None,
        max_new_tokens: int = 1024,
    ):
        self.policy = policy
        self.temperature = temperature
        self.pool_size = pool_size
        self.journal = journal
        self.max_new_tokens = max_new_tokens
        self.candidate_failures = 0

    def _key(self, sample: ReasoningSample) -> str:
        return content_hash(
            {
                "kind": "pool",
                "sample": sample.id,
                "policy": self.policy.name,
                "temperature": self.temperature,
                "size": self.pool_size,
            }
        )

    def _request(self, sample: ReasoningSample, n: int) -> CompletionRequest:
        return CompletionRequest(
            messages=(
                Message("system", POLICY_SYSTEM_PROMPT),
                Message("user", sample.question, image=sample.image),
            ),
            temperature=self.temperature,
            max_new_tokens=self.max_new_tokens,
            n=n,
        )

    def candidates(self, sample: ReasoningSample) -> list[str]:
        key = self._key(sample)
        if self.journal is not None:
            cached = self.journal.get(key)
            if cached is not None:
                return list(cached)
        texts = self._sample(sample)
        if self.journal is not None and texts:
            self.journal.put(key, texts)
        return texts

    def _sample(self, sample: ReasoningSample) -> list[str]:
        try:
            return [c.text for c in self.policy.complete(self._request(sample, self.pool_size))]
        except TransportError:
            log.warning("batched pool sampling failed for %s, retrying singly", sample.id)
        texts = []
        for _ in range(self.pool_size):
            try:
                texts.extend(c.text for c in self.policy.complete(self._request(sample, 1)))
            except TransportError:
                self.candidate_failures += 1
        return texts


@dataclass
class SourceReport:
    samples: int = 0
    groups: int = 0
    correct_groups: int = 0
    pass1_correct_groups: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct_groups / self.groups if self.groups else 0.0

    @property
    def pass1_accuracy(self) -> float:
        return self.pass1_correct_groups / self.groups if self.groups else 0.0

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "groups": self.groups,
            "correct_groups": self.correct_groups,
            "pass1_correct_groups": self.pass1_correct_groups,
            "accuracy": self.accuracy,
            "pass1_accuracy": self.pass1_accuracy,
        }


@dataclass
class BonReport:
    n: int
    critic: str
    per_source: dict[str, SourceReport] = field(default_factory=dict)
    dropped: int = 0
    candidate_failures: int = 0

    @property
    def overall_accuracy(self) -> float:
        if not self.per_source:
            return 0.0
        return sum(s.accuracy for s in self.per_source.values()) / len(self.per_source)

    @property
    def pass1_overall(self) -> float:
        if not self.per_source:
            return 0.0
        return sum(s.pass1_accuracy for s in self.per_source.values()) / len(self.per_source)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "critic": self.critic,
            "per_source": {k: v.to_dict() for k, v in sorted(self.per_source.items())},
            "overall_accuracy": self.overall_accuracy,
            "pass1_overall": self.pass1_overall,
            "dropped": self.dropped,
            "candidate_failures": self.candidate_failures,
        }


def select_candidate(scores: Sequence[float]) -> int:
    """Argmax with ties broken by the lowest candidate index."""
    if not scores:
        raise ContractError("cannot select from zero candidates")
    best = max(scores)
    for index, score in enumerate(scores):
        if score == best:
            return index
    raise AssertionError("unreachable")


def run_bon(
    policy: Backend,
    critic: Critic,
    samples: Iterable[ReasoningSample],
    config: BonConfig,
    pool: CandidatePool | None = None,
    max_workers: int = 1,
) -> BonReport:
    samples = list(samples)
    own_pool = pool is None
    if pool is None:
        pool = CandidatePool(policy, config.temperature, config.n, max_new_tokens=config.max_new_tokens)
    if pool.pool_size < config.n:
        raise ContractError("candidate pool is smaller than n")
    report = BonReport(n=config.n, critic=critic.name)
    # (source, group) -> [all candidates correct so far?, pass@1 correct so far?]
    groups: dict[tuple[str, str], list[bool]] = {}

    def evaluate(sample: ReasoningSample) -> tuple[ReasoningSample, bool, bool] | None:
        texts = pool.candidates(sample)[: config.n]
        if not texts:
            return None
        candidates = [split_solution(text, producer=policy.name) for text in texts]
        scores = critic.scores(sample, candidates)
        if len(scores) != len(candidates):
            raise ContractError("critic returned a mismatched number of scores")
        winner = candidates[select_candidate(scores)]
        correct = verify_answer(winner.text, sample.ground_truth)
        pass1 = verify_answer(texts[0], sample.ground_truth)
        return sample, correct, pass1

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            outcomes = list(executor.map(evaluate, samples))
    else:
        outcomes = [evaluate(sample) for sample in samples]

    for sample, outcome in zip(samples, outcomes):
        if outcome is None:
            report.dropped += 1
            continue
        _, correct, pass1 = outcome
        source = report.per_source.setdefault(sample.source, SourceReport())
        source.samples += 1
        group_key = (sample.source, sample.group if sample.group is not None else f"sample:{sample.id}")
        entry = groups.get(group_key)
        if entry is None:
            groups[group_key] = [correct, pass1]
        else:
            entry[0] = entry[0] and correct
            entry[1] = entry[1] and pass1

    for (source_name, _), (correct, pass1) in groups.items():
        source = report.per_source[source_name]
        source.groups += 1
        source.correct_groups += int(correct)
        source.pass1_correct_groups += int(pass1)

    if own_pool:
        report.candidate_failures = pool.candidate_failures
    return report


def sweep_n(
    policy: Backend,
    critic: Critic,
    samples: Iterable[ReasoningSample],
    n_values: Sequence[int],
    config: BonConfig,
    journal: Journal | None = None,
    max_workers: int = 1,
) -> list[tuple[int, BonReport]]:
    """One report per N; all points share a single content-addressed pool."""
    if list(n_values) != sorted(n_values):
        raise ContractError("n_values must be sorted ascending")
    samples = list(samples)
    pool = CandidatePool(
        policy,
        config.temperature,
        pool_size=max(n_values),
        journal=journal,
        max_new_tokens=config.max_new_tokens,
    )
    results = []
    for n in n_values:
        point = run_bon(
            policy, critic, samples, replace(config, n=n), pool=pool, max_workers=max_workers
        )
        results.append((n, point))
    return results


def render_bon_table(report: BonReport) -> str:
    """Human-readable table: baseline row, critic row, delta row."""
    sources = sorted(report.per_source)
    headers = ["critic"] + sources + ["overall"]
    pass1 = ["pass@1"] + [
        f"{report.per_source[s].pass1_accuracy * 100:.1f}" for s in sources
    ] + [f"{report.pass1_overall * 100:.1f}"]
    picked = [f"{report.critic} (N={report.n})"] + [
        f"{report.per_source[s].accuracy * 100:.1f}" for s in sources
    ] + [f"{report.overall_accuracy * 100:.1f}"]
    delta = ["delta"] + [
        f"{(report.per_source[s].accuracy - report.per_source[s].pass1_accuracy) * 100:+.1f}"
        for s in sources
    ] + [f"{(report.overall_accuracy - report.pass1_overall) * 100:+.1f}"]
    rows = [headers, pass1, picked, delta]
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    if report.dropped:
        lines.append(f"dropped samples (all candidates failed): {report.dropped}")
    return "\n".join(lines)
