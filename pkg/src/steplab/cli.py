"""Unified command-line interface.

Subcommands: rollout, label, export, score, bon, bench-eval, stats,
annotate-serve. Exit code 0 on success, 1 on contract errors, 2 when a
backend's retries were exhausted.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench, bon, dataset_io, rollout
from .annotation import AnnotationStore
from .errors import EXIT_CONTRACT, EXIT_OK, EXIT_TRANSPORT, ContractError, TransportError
from .gateway import load_backend, load_structured_file
from .journal import Journal
from .records import (
    AnnotatedSolution,
    BenchCandidate,
    BenchItem,
    ProcessSupervisionRecord,
    ReasoningSample,
    canonical_json,
    read_jsonl,
    validate_corpus,
    write_jsonl,
)

log = logging.getLogger("steplab")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="pipeline config file (json/yaml)")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--endpoints", type=Path, help="backend endpoints config")
    parser.add_argument("--out", type=Path, help="output file or directory")


def _load_samples(path: Path) -> list[ReasoningSample]:
    samples = list(read_jsonl(path, ReasoningSample))
    report = validate_corpus(samples, image_root=path.parent)
    if not report.ok:
        raise ContractError(
            "corpus rejected: " + "; ".join(f"{i.kind}({i.sample_id})" for i in report.issues)
        )
    return samples


def _rollout_config(args: argparse.Namespace) -> rollout.RolloutConfig:
    if args.config:
        return rollout.RolloutConfig.from_dict(load_structured_file(args.config) or {})
    return rollout.RolloutConfig()


def cmd_rollout(args: argparse.Namespace) -> int:
    samples = _load_samples(args.samples)
    backend = load_backend(args.endpoints, seed=args.seed)
    config = _rollout_config(args)
    out_dir = args.out or Path("rollout-out")
    out_dir.mkdir(parents=True, exist_ok=True)
    runner = rollout.RolloutRunner(
        backend, config, journal=Journal(out_dir / "journal.jsonl"), max_workers=args.workers
    )
    annotated = runner.run(samples)
    write_jsonl(out_dir / "annotated.jsonl", annotated)
    labels = [
        label
        for item in annotated
        for label in rollout.label_value(
            [s.expected_accuracy for s in item.solution.steps], config.value_threshold
        )
    ]
    report = {
        "samples": len(samples),
        "solutions": len(annotated),
        "steps": len(labels),
        "label_histogram": {v: labels.count(v) for v in sorted(set(labels))},
        "incorrect_fraction": labels.count("-") / len(labels) if labels else 0.0,
    }
    (out_dir / "label_report.json").write_text(canonical_json(report) + "\n", encoding="utf-8")
    print(canonical_json(report))
    return EXIT_OK


def cmd_label(args: argparse.Namespace) -> int:
    annotated = list(read_jsonl(args.input, AnnotatedSolution))
    labeled = rollout.label_solutions(annotated, args.scheme, args.threshold)
    out = args.out or Path("labeled.jsonl")
    write_jsonl(out, labeled)
    print(f"labeled {len(labeled)} solutions under the {args.scheme} scheme -> {out}")
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    samples = {s.id: s for s in read_jsonl(args.samples, ReasoningSample)}
    labeled = list(read_jsonl(args.input, AnnotatedSolution))
    records = []
    for item in labeled:
        sample = samples.get(item.sample_id)
        if sample is None:
            raise ContractError(f"no sample with id {item.sample_id!r} in {args.samples}")
        records.append(rollout.build_records(sample, item.solution, args.scheme, args.mode))
    out = args.out or Path("training.jsonl")
    manifest = dataset_io.export_training_set(records, out, supervision_mode=args.mode)
    print(canonical_json(manifest.to_dict()))
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    from .scoring import advantage_scheme, orm_score, score_solution, value_scheme

    samples = {s.id: s for s in _load_samples(args.samples)}
    backend = load_backend(args.endpoints, seed=args.seed)
    lines = []
    for item in read_jsonl(args.solutions, AnnotatedSolution):
        sample = samples.get(item.sample_id)
        if sample is None:
            raise ContractError(f"no sample with id {item.sample_id!r}")
        if args.scheme == "orm":
            verdict = orm_score(backend, sample, item.solution)
        else:
            scheme = (
                value_scheme(args.agg) if args.scheme == "value" else advantage_scheme(args.agg)
            )
            verdict = score_solution(backend, sample, item.solution, scheme)
        lines.append({"sample_id": item.sample_id, **verdict.to_dict()})
    out = args.out or Path("verdicts.jsonl")
    with open(out, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(canonical_json(line) + "\n")
    print(f"scored {len(lines)} solutions -> {out}")
    return EXIT_OK


def cmd_bon(args: argparse.Namespace) -> int:
    samples = _load_samples(args.samples)
    policy = load_backend(args.endpoints, seed=args.seed)
    config = bon.BonConfig(
        n=args.n,
        temperature=args.temperature,
        critic_kind=args.critic,
        aggregation=args.agg,
        seed=args.seed if args.seed is not None else 0,
    )
    critic_backend = None
    if args.critic in ("orm", "prm_value", "prm_advantage"):
        critic_backend = load_backend(args.critic_endpoints or args.endpoints, seed=args.seed)
    critic = bon.make_critic(config, critic_backend)
    journal = Journal(args.journal) if args.journal else None
    pool = bon.CandidatePool(
        policy, config.temperature, config.n, journal=journal, max_new_tokens=config.max_new_tokens
    )
    report = bon.run_bon(policy, critic, samples, config, pool=pool, max_workers=args.workers)
    if args.out:
        args.out.write_text(canonical_json(report.to_dict()) + "\n", encoding="utf-8")
    print(bon.render_bon_table(report))
    return EXIT_OK


def cmd_bench_eval(args: argparse.Namespace) -> int:
    items = list(read_jsonl(args.items, BenchItem))
    backend = load_backend(args.endpoints, seed=args.seed)
    if args.judge == "prm":
        judge = bench.prm_judge(backend, margin=args.margin)
    else:
        template = (
            Path(args.prompt_template).read_text(encoding="utf-8")
            if args.prompt_template
            else bench.DEFAULT_MLLM_PROMPT
        )
        judge = bench.mllm_judge(backend, template)
    report = bench.evaluate_judge(items, judge)
    if args.out:
        args.out.write_text(canonical_json(report.to_dict()) + "\n", encoding="utf-8")
    print(bench.render_bench_table(report))
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    if args.kind == "dataset":
        records = list(read_jsonl(args.input, ProcessSupervisionRecord))
        payload = dataset_io.dataset_stats(records).to_dict()
    else:
        items = list(read_jsonl(args.input, BenchItem))
        payload = bench.bench_stats(items).to_dict()
    text = canonical_json(payload)
    if args.out:
        args.out.write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_annotate_serve(args: argparse.Namespace) -> int:
    state_dir = args.state or Path("annotation-state")
    state_dir.mkdir(parents=True, exist_ok=True)
    store = AnnotationStore(
        state_dir / "events.jsonl",
        seed=args.seed if args.seed is not None else 0,
        review_rate=args.review_rate,
    )
    if not store.splits:
        if not args.items:
            raise ContractError("a fresh store needs --items to create splits")
        candidates = list(read_jsonl(args.items, BenchCandidate))
        store.make_splits(candidates, args.n_splits)
        log.info("created %d splits over %d items", args.n_splits, len(candidates))
    from .annotation_api import serve

    serve(store, host=args.host, port=args.port, ui_dir=args.ui, token=args.token)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steplab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rollout", help="estimate step accuracies over a corpus")
    _common(p)
    p.add_argument("--samples", type=Path, required=True)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("label", help="apply a labeling scheme to rollout output")
    _common(p)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--scheme", choices=["value", "advantage"], required=True)
    p.add_argument("--threshold", type=float, default=0.0)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("export", help="export labeled solutions as training records")
    _common(p)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--samples", type=Path, required=True)
    p.add_argument("--scheme", choices=["value", "advantage"], required=True)
    p.add_argument("--mode", choices=["full", "early_stop"], default="full")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("score", help="score solutions with a critic backend")
    _common(p)
    p.add_argument("--samples", type=Path, required=True)
    p.add_argument("--solutions", type=Path, required=True)
    p.add_argument("--scheme", choices=["value", "advantage", "orm"], default="value")
    p.add_argument("--agg", choices=["average", "min", "max"], default="average")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bon", help="best-of-N evaluation")
    _common(p)
    p.add_argument("--samples", type=Path, required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument(
        "--critic",
        default="prm_value",
        choices=[
            "self_consistency",
            "orm",
            "prm_value",
            "prm_advantage",
            "oracle",
            "constant",
            "random",
        ],
    )
    p.add_argument("--agg", choices=["average", "min", "max"], default="average")
    p.add_argument("--critic-endpoints", type=Path)
    p.add_argument("--journal", type=Path)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=cmd_bon)

    p = sub.add_parser("bench-eval", help="evaluate a step judge with macro F1")
    _common(p)
    p.add_argument("--items", type=Path, required=True)
    p.add_argument("--judge", choices=["prm", "mllm"], default="prm")
    p.add_argument("--margin", type=float, default=0.0)
    p.add_argument("--prompt-template", type=Path)
    p.set_defaults(func=cmd_bench_eval)

    p = sub.add_parser("stats", help="dataset or benchmark statistics")
    _common(p)
    p.add_argument("--kind", choices=["dataset", "bench"], required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("annotate-serve", help="run the annotation service")
    _common(p)
    p.add_argument("--items", type=Path)
    p.add_argument("--state", type=Path)
    p.add_argument("--n-splits", type=int, default=10)
    p.add_argument("--review-rate", type=float, default=0.10)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--token")
    p.add_argument("--ui", type=Path)
    p.set_defaults(func=cmd_annotate_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TransportError as exc:
        log.error("transport exhausted: %s", exc)
        return EXIT_TRANSPORT
    except ContractError as exc:
        log.error("contract error: %s", exc)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
