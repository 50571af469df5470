"""Process-supervision dataset building, step scoring, best-of-N evaluation,
and step-judgment benchmarking against chat-completion backends."""

from .records import (
    AccuracyEstimate,
    AnnotatedSolution,
    BenchCandidate,
    BenchItem,
    CriticVerdict,
    ProcessSupervisionRecord,
    ReasoningSample,
    Step,
    StepSolution,
    Turn,
    validate_corpus,
)
from .answers import extract_answer, normalize_answer, verify_answer
from .gateway import Backend, Completion, CompletionRequest, EndpointConfig, Message
from .mock import MockBackend, MockBackendScript, mock_rollout_success
from .rollout import (
    RolloutConfig,
    RolloutRunner,
    build_records,
    estimate_baseline_accuracy,
    estimate_step_accuracy,
    label_advantage,
    label_value,
    merge_steps_evenly,
    split_solution,
)
from .scoring import (
    ScoringScheme,
    advantage_scheme,
    orm_score,
    orm_scheme,
    sc_select,
    score_solution,
    step_score,
    value_scheme,
)
from .bon import BonConfig, run_bon, sweep_n
from .bench import bench_stats, judge_steps_prm, macro_f1, overall_score, parse_mllm_judgment

__version__ = "0.1.0"
