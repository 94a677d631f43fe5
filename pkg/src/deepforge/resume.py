"""Incremental, resumable artifact writing with deterministic final bytes.

Work items append to a ``.partial`` sidecar as they finish (any order); when
a stage completes, the rows are merged with any previous final file, sorted
by their stable key, and written atomically. Interrupted runs therefore
resume where they stopped yet produce byte-identical final artifacts.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Callable, Optional

from .storage import atomic_write_text, dump_line, iter_records


class StageWriter:
    def __init__(self, final_path: str | Path, key_fn: Callable[[dict], str]):
        self.final_path = Path(final_path)
        self.partial_path = self.final_path.with_suffix(self.final_path.suffix + ".partial")
        self._key_fn = key_fn
        self._lock = threading.Lock()
        self._rows: dict[str, dict] = {}
        if self.final_path.exists():
            for row in iter_records(self.final_path):
                self._rows[key_fn(row)] = row
        if self.partial_path.exists():
            for line in self.partial_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    entry = json.loads(line)
                    self._rows[entry["key"]] = entry["row"]

    def done_keys(self) -> set[str]:
        with self._lock:
            return set(self._rows)

    def append(self, row: dict) -> None:
        key = self._key_fn(row)
        line = dump_line({"key": key, "row": row})
        with self._lock:
            self._rows[key] = row
            with open(self.partial_path, "a", encoding="utf-8") as fh:
                fh.write(line)

    def rows(self) -> list[dict]:
        with self._lock:
            return [self._rows[key] for key in sorted(self._rows)]

    def finalize(self) -> int:
        rows = self.rows()
        atomic_write_text(self.final_path, "".join(dump_line(r) for r in rows))
        if self.partial_path.exists():
            self.partial_path.unlink()
        return len(rows)


def write_sorted(path: str | Path, rows: list[dict], key_fn: Optional[Callable[[dict], str]] = None) -> int:
    """One-shot deterministic artifact write for stages without partial work."""
    ordered = sorted(rows, key=key_fn) if key_fn else rows
    atomic_write_text(path, "".join(dump_line(r) for r in ordered))
    return len(ordered)
