"""Line-delimited JSON persistence with deterministic byte layout."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Optional

from .errors import IoFailure, SchemaMismatch
from .records import canonical_json


def dump_line(record: Any) -> str:
    obj = record.to_dict() if hasattr(record, "to_dict") else record
    return canonical_json(obj) + "\n"


def write_records(path: str | Path, records: Iterable[Any], append: bool = False) -> int:
    """Write one canonical JSON object per line; returns the number written."""
    mode = "a" if append else "w"
    count = 0
    try:
        with open(path, mode, encoding="utf-8") as fh:
            for record in records:
                fh.write(dump_line(record))
                count += 1
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return count


def iter_records(path: str | Path, factory: Optional[Callable[[dict], Any]] = None) -> Iterator[Any]:
    """Stream records back; blank lines are skipped, bad lines carry their number."""
    import json

    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    with fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaMismatch(line_number, exc.msg) from exc
            if factory is None:
                yield obj
            else:
                try:
                    yield factory(obj)
                except (KeyError, TypeError, ValueError) as exc:
                    raise SchemaMismatch(line_number, str(exc)) from exc


def read_records(path: str | Path, factory: Optional[Callable[[dict], Any]] = None) -> list[Any]:
    return list(iter_records(path, factory))


def count_lines(path: str | Path) -> int:
    if not os.path.exists(path):
        return 0
    with open(path, "r", encoding="utf-8") as fh:
        return sum(1 for line in fh if line.strip())


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a sibling temp file so readers never see a partial file."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
