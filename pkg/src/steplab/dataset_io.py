"""Training-set export, manifests, and dataset statistics.

Exports are deterministic: records are ordered by (sample id, content hash)
so byte-identical files come out of identical record sets regardless of
input order, and the manifest records the file's own content hash.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .errors import ContractError
from .records import (
    MINUS,
    SUPERVISION_MODES,
    ProcessSupervisionRecord,
    canonical_json,
    content_hash,
    dumps_record,
)


@dataclass(frozen=True)
class ExportManifest:
    scheme: str
    supervision_mode: str
    record_count: int
    label_histogram: dict[str, int]
    content_hash: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "scheme": self.scheme,
            "supervision_mode": self.supervision_mode,
            "record_count": self.record_count,
            "label_histogram": dict(sorted(self.label_histogram.items())),
            "content_hash": self.content_hash,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExportManifest:
        return cls(
            scheme=data["scheme"],
            supervision_mode=data["supervision_mode"],
            record_count=data["record_count"],
            label_histogram=dict(data["label_histogram"]),
            content_hash=data["content_hash"],
        )


def label_histogram(records: Iterable[ProcessSupervisionRecord]) -> dict[str, int]:
    counts: Counter[str] = Counter()
    for record in records:
        for turn in record.turns:
            counts[turn.target] += 1
    return dict(counts)


def export_training_set(
    records: Iterable[ProcessSupervisionRecord],
    out_path: Path | str,
    supervision_mode: str = "full",
    manifest_path: Path | str | None = None,
) -> ExportManifest:
    """Write records one per line plus a manifest describing the file."""
    records = list(records)
    if not records:
        raise ContractError("nothing to export")
    if supervision_mode not in SUPERVISION_MODES:
        raise ContractError(f"bad supervision mode {supervision_mode!r}")
    schemes = {record.scheme for record in records}
    if len(schemes) > 1:
        raise ContractError(f"export mixes schemes {sorted(schemes)}")
    records.sort(key=lambda r: (r.sample_id, content_hash(r.to_dict())))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    body = "".join(dumps_record(record) + "\n" for record in records)
    out_path.write_text(body, encoding="utf-8")
    manifest = ExportManifest(
        scheme=schemes.pop(),
        supervision_mode=supervision_mode,
        record_count=len(records),
        label_histogram=label_histogram(records),
        content_hash=content_hash(body),
    )
    if manifest_path is None:
        manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    Path(manifest_path).write_text(
        canonical_json(manifest.to_dict()) + "\n", encoding="utf-8"
    )
    return manifest


def load_manifest(path: Path | str) -> ExportManifest:
    return ExportManifest.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class DatasetStats:
    empty: bool = True
    record_count: int = 0
    mean_words_per_response: float = 0.0
    mean_steps_per_response: float = 0.0
    mean_words_per_step: float = 0.0
    incorrect_step_fraction: float = 0.0
    label_histogram: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "empty": self.empty,
            "record_count": self.record_count,
            "mean_words_per_response": self.mean_words_per_response,
            "mean_steps_per_response": self.mean_steps_per_response,
            "mean_words_per_step": self.mean_words_per_step,
            "incorrect_step_fraction": self.incorrect_step_fraction,
            "label_histogram": dict(sorted(self.label_histogram.items())),
        }


def dataset_stats(records: Iterable[ProcessSupervisionRecord]) -> DatasetStats:
    """Word and step averages plus the share of '-'-labeled steps."""
    records = list(records)
    if not records:
        return DatasetStats()
    total_steps = 0
    total_words = 0
    labels: Counter[str] = Counter()
    for record in records:
        for turn in record.turns:
            total_steps += 1
            total_words += len(turn.step.split())
            labels[turn.target] += 1
    return DatasetStats(
        empty=False,
        record_count=len(records),
        mean_words_per_response=total_words / len(records),
        mean_steps_per_response=total_steps / len(records),
        mean_words_per_step=total_words / total_steps if total_steps else 0.0,
        incorrect_step_fraction=labels[MINUS] / total_steps if total_steps else 0.0,
        label_histogram=dict(labels),
    )
