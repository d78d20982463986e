"""Dataset reading: the same CSV/JSONL schema the consumer package loads.

Columns/keys: id, text, project_id, type_label. Only id and text matter
for export; id falls back to the row index when absent.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path


class ExportError(RuntimeError):
    pass


@dataclass(frozen=True)
class Record:
    id: str
    text: str


def read_records(path: str | Path, format: str | None = None) -> list[Record]:
    path = Path(path)
    if not path.exists():
        raise ExportError(f"dataset file not found: {path}")
    fmt = format or path.suffix.lower().lstrip(".")
    if fmt not in ("csv", "jsonl"):
        raise ExportError(f"unsupported dataset format {fmt!r}")

    rows: list[dict] = []
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "text" not in reader.fieldnames:
                raise ExportError(f"{path.name}: missing header with a 'text' column")
            rows = list(reader)
    else:
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ExportError(f"{path.name} line {n}: invalid JSON: {exc}") from None

    records: list[Record] = []
    seen: set[str] = set()
    for i, row in enumerate(rows):
        text = str(row.get("text") or "").strip()
        if not text:
            raise ExportError(f"{path.name} record {i}: empty text")
        rid = str(row.get("id") or "").strip() or str(i)
        if rid in seen:
            raise ExportError(f"{path.name}: id collision on {rid!r}")
        seen.add(rid)
        records.append(Record(id=rid, text=text))
    if not records:
        raise ExportError(f"{path.name}: no records")
    return records
