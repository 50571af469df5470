"""Human annotation workflow: splits, step labeling, skip, review, return.

Annotators see the image, the question, the ground-truth answer, and each
step, and assign every step one of positive / negative / neutral. Items are
dealt into splits of near-equal size; a reviewer samples a fraction of each
split's labeled tasks, then accepts the split (freezing it) or returns it,
which reopens every task with its previous labels kept as drafts.

State persists as an append-only event log replayed at startup, so label
provenance stays auditable without a database. Review sampling draws are
logged, which makes replay exact.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable

from .errors import ContractError, VersionConflict
from .mock import derived_rng
from .records import (
    HUMAN_LABELS,
    BenchCandidate,
    BenchItem,
    canonical_json,
)

TASK_STATUSES = ("pending", "labeled", "skipped", "under_review", "returned")
SPLIT_STATES = ("open", "in_review", "accepted", "returned")


@dataclass
class AnnotationTask:
    task_id: str
    item: BenchCandidate
    split_id: int
    status: str = "pending"
    assignee: str | None = None
    labels: tuple[str, ...] | None = None
    version: int = 0

    def view(self) -> dict[str, Any]:
        """What an annotator is shown, plus the optimistic version."""
        return {
            "task_id": self.task_id,
            "split_id": self.split_id,
            "status": self.status,
            "assignee": self.assignee,
            "version": self.version,
            "image": self.item.sample.image,
            "question": self.item.sample.question,
            "ground_truth": self.item.sample.ground_truth,
            "steps": [step.text for step in self.item.solution.steps],
            "draft_labels": list(self.labels) if self.labels is not None else None,
        }


@dataclass
class Split:
    split_id: int
    task_ids: tuple[str, ...]
    state: str = "open"
    review_sample_rate: float = 0.10
    review_round: int = 0
    review_task_ids: tuple[str, ...] = ()

    def summary(self, tasks: dict[str, AnnotationTask]) -> dict[str, Any]:
        counts: dict[str, int] = {status: 0 for status in TASK_STATUSES}
        for task_id in self.task_ids:
            counts[tasks[task_id].status] += 1
        return {
            "split_id": self.split_id,
            "state": self.state,
            "size": len(self.task_ids),
            "status_counts": counts,
            "review_round": self.review_round,
            "review_task_ids": list(self.review_task_ids),
        }


def split_sizes(total: int, n_splits: int) -> list[int]:
    base, extra = divmod(total, n_splits)
    return [base + (1 if i < extra else 0) for i in range(n_splits)]


class AnnotationStore:
    """In-memory annotation state backed by an append-only event log."""

    def __init__(self, log_path: Path | str | None = None, seed: int = 0, review_rate: float = 0.10):
        self.log_path = Path(log_path) if log_path is not None else None
        self.seed = seed
        self.review_rate = review_rate
        self.tasks: dict[str, AnnotationTask] = {}
        self.splits: dict[int, Split] = {}
        self._lock = threading.Lock()
        if self.log_path is not None and self.log_path.exists():
            self._replay()

    # -- persistence ----------------------------------------------------------

    def _append(self, event: dict[str, Any]) -> None:
        if self.log_path is None:
            return
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(canonical_json({"ts": time.time(), **event}))
            fh.write("\n")
            fh.flush()

    def _replay(self) -> None:
        import json

        with open(self.log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError:
                    continue
                self._apply(event)

    def _apply(self, event: dict[str, Any]) -> None:
        kind = event["event"]
        if kind == "task_created":
            item = BenchCandidate.from_dict(event["item"])
            self.tasks[event["task_id"]] = AnnotationTask(
                task_id=event["task_id"], item=item, split_id=event["split_id"]
            )
        elif kind == "split_created":
            self.splits[event["split_id"]] = Split(
                split_id=event["split_id"],
                task_ids=tuple(event["task_ids"]),
                review_sample_rate=event.get("review_sample_rate", self.review_rate),
            )
        elif kind == "claimed":
            task = self.tasks[event["task_id"]]
            task.assignee = event["assignee"]
            task.version += 1
        elif kind == "labels_submitted":
            task = self.tasks[event["task_id"]]
            task.labels = tuple(event["labels"])
            task.status = "labeled"
            task.version += 1
        elif kind == "skipped":
            task = self.tasks[event["task_id"]]
            task.labels = None
            task.status = "skipped"
            task.assignee = None
            task.version += 1
        elif kind == "review_sampled":
            split = self.splits[event["split_id"]]
            split.state = "in_review"
            split.review_round += 1
            split.review_task_ids = tuple(event["task_ids"])
            for task_id in split.review_task_ids:
                self.tasks[task_id].status = "under_review"
                self.tasks[task_id].version += 1
        elif kind == "review_resolved":
            split = self.splits[event["split_id"]]
            if event["accepted"]:
                split.state = "accepted"
                for task_id in split.review_task_ids:
                    task = self.tasks[task_id]
                    task.status = "labeled"
                    task.version += 1
            else:
                split.state = "open"
                for task_id in split.task_ids:
                    task = self.tasks[task_id]
                    task.status = "returned"
                    task.assignee = None
                    task.version += 1
            split.review_task_ids = ()
        else:
            raise ContractError(f"unknown event kind {kind!r}")

    def _record(self, event: dict[str, Any]) -> None:
        self._apply(event)
        self._append(event)

    # -- setup ----------------------------------------------------------------

    def make_splits(self, items: Iterable[BenchCandidate], n_splits: int) -> list[Split]:
        """Deal items into n splits whose sizes differ by at most one.

        The assignment is a seeded shuffle, deterministic for a fixed seed.
        """
        if n_splits < 1:
            raise ContractError("need at least one split")
        with self._lock:
            if self.splits:
                raise ContractError("store already holds splits")
            items = list(items)
            order = list(range(len(items)))
            derived_rng(self.seed, "splits", len(items), n_splits).shuffle(order)
            sizes = split_sizes(len(items), n_splits)
            cursor = 0
            for split_id, size in enumerate(sizes):
                task_ids = []
                for offset in range(size):
                    item = items[order[cursor + offset]]
                    task_id = f"task-{split_id}-{offset:04d}"
                    self._record(
                        {
                            "event": "task_created",
                            "task_id": task_id,
                            "split_id": split_id,
                            "item": item.to_dict(),
                        }
                    )
                    task_ids.append(task_id)
                cursor += size
                self._record(
                    {
                        "event": "split_created",
                        "split_id": split_id,
                        "task_ids": task_ids,
                        "review_sample_rate": self.review_rate,
                    }
                )
            return list(self.splits.values())

    # -- annotator operations --------------------------------------------------

    def claim(self, split_id: int, assignee: str) -> AnnotationTask:
        """Hand the next unassigned labelable task of a split to an annotator."""
        with self._lock:
            split = self._split(split_id)
            if split.state not in ("open",):
                raise ContractError(f"split {split_id} is {split.state}, not open for labeling")
            for task_id in split.task_ids:
                task = self.tasks[task_id]
                if task.status in ("pending", "returned") and task.assignee is None:
                    self._record({"event": "claimed", "task_id": task_id, "assignee": assignee})
                    return task
            raise ContractError(f"split {split_id} has no claimable task")

    def submit_labels(
        self,
        task_id: str,
        labels: Iterable[str],
        expected_version: int | None = None,
    ) -> AnnotationTask:
        with self._lock:
            task = self._task(task_id)
            self._check_version(task, expected_version)
            self._check_mutable(task)
            if task.status not in ("pending", "returned"):
                raise ContractError(
                    f"cannot submit labels while task {task_id} is {task.status}"
                )
            labels = list(labels)
            steps = task.item.solution.steps
            if len(labels) != len(steps):
                raise ContractError(
                    f"expected {len(steps)} labels, got {len(labels)}"
                )
            for label in labels:
                if label not in HUMAN_LABELS:
                    raise ContractError(f"bad label {label!r}")
            self._record({"event": "labels_submitted", "task_id": task_id, "labels": labels})
            return task

    def skip(self, task_id: str, expected_version: int | None = None) -> AnnotationTask:
        with self._lock:
            task = self._task(task_id)
            self._check_version(task, expected_version)
            self._check_mutable(task)
            if task.status not in ("pending", "returned"):
                raise ContractError(f"cannot skip task {task_id} while it is {task.status}")
            self._record({"event": "skipped", "task_id": task_id})
            return task

    # -- review ----------------------------------------------------------------

    def sample_for_review(self, split_id: int) -> list[str]:
        """Move a fully-annotated split into review over a seeded task sample."""
        with self._lock:
            split = self._split(split_id)
            if split.state != "open":
                raise ContractError(f"split {split_id} is {split.state}, cannot start review")
            labeled = [
                task_id
                for task_id in split.task_ids
                if self.tasks[task_id].status == "labeled"
            ]
            unfinished = [
                task_id
                for task_id in split.task_ids
                if self.tasks[task_id].status in ("pending", "returned")
            ]
            if unfinished:
                raise ContractError(
                    f"split {split_id} still has {len(unfinished)} unfinished task(s)"
                )
            if not labeled:
                raise ContractError(f"split {split_id} has no labeled tasks to review")
            count = math.ceil(split.review_sample_rate * len(labeled))
            rng = derived_rng(self.seed, "review", split_id, split.review_round)
            chosen = sorted(rng.sample(sorted(labeled), count))
            self._record(
                {"event": "review_sampled", "split_id": split_id, "task_ids": chosen}
            )
            return chosen

    def resolve_review(self, split_id: int, accepted: bool) -> Split:
        with self._lock:
            split = self._split(split_id)
            if split.state != "in_review":
                raise ContractError(f"split {split_id} is {split.state}, not in review")
            self._record(
                {"event": "review_resolved", "split_id": split_id, "accepted": accepted}
            )
            return split

    # -- export -----------------------------------------------------------------

    def export_split(self, split_id: int) -> list[BenchItem]:
        """Labeled tasks of an accepted split as benchmark items."""
        with self._lock:
            split = self._split(split_id)
            if split.state != "accepted":
                raise ContractError(f"split {split_id} is {split.state}, not accepted")
            items = []
            for task_id in split.task_ids:
                task = self.tasks[task_id]
                if task.status != "labeled":
                    continue  # skipped tasks drop out of the benchmark
                assert task.labels is not None
                solution = task.item.solution.with_steps(
                    replace(step, human_label=label)
                    for step, label in zip(task.item.solution.steps, task.labels)
                )
                items.append(
                    BenchItem(
                        sample=task.item.sample,
                        solution=solution,
                        solution_source=task.item.solution_source,
                        split_id=split_id,
                    )
                )
            return items

    # -- helpers ----------------------------------------------------------------

    def task(self, task_id: str) -> AnnotationTask:
        return self._task(task_id)

    def _task(self, task_id: str) -> AnnotationTask:
        task = self.tasks.get(task_id)
        if task is None:
            raise KeyError(task_id)
        return task

    def _split(self, split_id: int) -> Split:
        split = self.splits.get(split_id)
        if split is None:
            raise KeyError(split_id)
        return split

    def _check_version(self, task: AnnotationTask, expected: int | None) -> None:
        if expected is not None and expected != task.version:
            raise VersionConflict(
                f"task {task.task_id} is at version {task.version}, not {expected}"
            )

    def _check_mutable(self, task: AnnotationTask) -> None:
        if self.splits[task.split_id].state == "accepted":
            raise ContractError(f"split {task.split_id} is accepted and immutable")
