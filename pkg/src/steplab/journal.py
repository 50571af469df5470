"""Content-addressed resumable journal.

Every expensive intermediate (a sampled candidate pool, a step estimate) is
persisted as an append-only JSONL entry keyed by a content hash, so a
re-run skips finished work. Writes are flushed per entry and idempotent;
a torn trailing line from a crashed run is ignored on load.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any, Callable

from .records import canonical_json


class Journal:
    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, Any] = {}
        self._needs_newline = False
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        raw = self.path.read_text(encoding="utf-8")
        self._needs_newline = bool(raw) and not raw.endswith("\n")
        for line in raw.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn write from an interrupted run
            self._entries[entry["key"]] = entry["value"]

    def __contains__(self, key: str) -> bool:
        with self._lock:
            return key in self._entries

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def get(self, key: str) -> Any | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, value: Any) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = value
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                if self._needs_newline:
                    fh.write("\n")
                    self._needs_newline = False
                fh.write(canonical_json({"key": key, "value": value}))
                fh.write("\n")
                fh.flush()

    def get_or_compute(self, key: str, compute: Callable[[], Any]) -> Any:
        cached = self.get(key)
        if cached is not None:
            return cached
        value = compute()
        self.put(key, value)
        return value
