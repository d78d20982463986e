"""Requirement datasets: loading, validation, project partitions, LOO splits.

A dataset is a flat list of requirement sentences, each tagged with the
project it came from and (optionally) a type label drawn from a declared
taxonomy. Reference-corpus projects must be labelled; target projects
scored at inference time need no labels.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping


class DatasetError(ValueError):
    """Malformed dataset file or invariant violation."""


# Convenience alias table for datasets that use the common short label codes.
# Users supply their own table via config when the file vocabulary differs.
PROMISE_ALIASES: dict[str, str] = {
    "A": "Availability",
    "FT": "Fault Tolerance",
    "F": "Functional",
    "L": "Legal",
    "LF": "Look & Feel",
    "MN": "Maintainability",
    "O": "Operability",
    "PE": "Performance",
    "PO": "Portability",
    "SC": "Scalability",
    "SE": "Security",
    "US": "Usability",
}


@dataclass(frozen=True)
class Requirement:
    """One requirement sentence."""

    id: str
    text: str
    project_id: str
    type_label: str | None = None


@dataclass(frozen=True)
class Taxonomy:
    """Ordered list of type names, optionally with a two-level parent map."""

    type_names: tuple[str, ...]
    parent: Mapping[str, str] | None = None

    def __post_init__(self) -> None:
        if len(self.type_names) < 2:
            raise DatasetError("taxonomy needs at least 2 type names")
        if len(set(self.type_names)) != len(self.type_names):
            raise DatasetError("taxonomy type names must be unique")
        if self.parent is not None:
            for child in self.parent:
                if child not in self.type_names:
                    raise DatasetError(f"parent-map key {child!r} is not a type name")

    @property
    def k_t(self) -> int:
        return len(self.type_names)

    def index(self, name: str) -> int:
        try:
            return self.type_names.index(name)
        except ValueError:
            raise DatasetError(
                f"unknown type {name!r}; valid types: {', '.join(self.type_names)}"
            ) from None


@dataclass
class Dataset:
    """Validated requirement collection with derived project list."""

    requirements: list[Requirement]
    taxonomy: Taxonomy | None
    projects: tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        seen_ids: set[str] = set()
        projects: list[str] = []
        for i, r in enumerate(self.requirements):
            if r.id in seen_ids:
                raise DatasetError(f"duplicate requirement id {r.id!r}")
            seen_ids.add(r.id)
            if not r.text.strip():
                raise DatasetError(f"requirement {r.id!r} has empty text")
            if r.type_label is not None:
                if self.taxonomy is None:
                    raise DatasetError(
                        f"requirement {r.id!r} carries a label but no taxonomy is declared"
                    )
                self.taxonomy.index(r.type_label)
            if r.project_id not in projects:
                projects.append(r.project_id)
        self.projects = tuple(projects)

    def __len__(self) -> int:
        return len(self.requirements)

    def labelled(self) -> list[Requirement]:
        return [r for r in self.requirements if r.type_label is not None]


_FIELDS = ("id", "text", "project_id", "type_label")


def _infer_format(path: Path, format: str | None) -> str:
    if format is not None:
        if format not in ("csv", "jsonl"):
            raise DatasetError(f"unsupported format {format!r} (expected csv or jsonl)")
        return format
    suffix = path.suffix.lower().lstrip(".")
    if suffix in ("csv", "jsonl"):
        return suffix
    raise DatasetError(f"cannot infer format from {path.name!r}; pass format=")


def _resolve_label(raw: str | None, aliases: Mapping[str, str] | None) -> str | None:
    if raw is None:
        return None
    raw = raw.strip()
    if not raw:
        return None
    if aliases and raw in aliases:
        return aliases[raw]
    return raw


def load_dataset(
    path: str | Path,
    format: str | None = None,
    taxonomy: Taxonomy | None = None,
    aliases: Mapping[str, str] | None = None,
) -> Dataset:
    """Load and validate a requirement dataset from CSV or JSONL.

    CSV needs a header with columns id,text,project_id,type_label; JSONL one
    object per line with the same keys. ``id`` may be omitted and is then
    synthesised as the 0-based row index. Labels pass through ``aliases``
    before taxonomy validation. When no taxonomy is given, one is inferred
    from the distinct canonical labels in the file (None if unlabelled).
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    fmt = _infer_format(path, format)

    # rows carry (1-based physical line number, record); the CSV header is line 1
    rows: list[tuple[int, dict]] = []
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "text" not in reader.fieldnames:
                raise DatasetError(f"{path.name}: missing header with a 'text' column")
            if "project_id" not in reader.fieldnames:
                raise DatasetError(f"{path.name}: missing 'project_id' column")
            for i, row in enumerate(reader):
                rows.append((i + 2, row))
    else:
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DatasetError(f"{path.name} line {i + 1}: invalid JSON: {exc}") from None
                if not isinstance(obj, dict):
                    raise DatasetError(f"{path.name} line {i + 1}: expected an object")
                rows.append((i + 1, obj))

    requirements: list[Requirement] = []
    seen_labels: list[str] = []
    for i, row in enumerate(r for _, r in rows):
        rownum = rows[i][0]
        text = row.get("text")
        if text is None or not str(text).strip():
            raise DatasetError(f"{path.name} row {rownum}: field 'text' is empty")
        project_id = row.get("project_id")
        if project_id is None or not str(project_id).strip():
            raise DatasetError(f"{path.name} row {rownum}: field 'project_id' is empty")
        rid = row.get("id")
        rid = str(rid).strip() if rid is not None and str(rid).strip() else str(i)
        label = _resolve_label(row.get("type_label"), aliases)
        if label is not None and taxonomy is not None and label not in taxonomy.type_names:
            raise DatasetError(
                f"{path.name} row {rownum}: unknown label {label!r}; "
                f"valid labels: {', '.join(taxonomy.type_names)}"
            )
        if label is not None and label not in seen_labels:
            seen_labels.append(label)
        requirements.append(
            Requirement(id=rid, text=str(text).strip(), project_id=str(project_id).strip(),
                        type_label=label)
        )

    if taxonomy is None and seen_labels:
        taxonomy = Taxonomy(tuple(sorted(seen_labels)))
    try:
        return Dataset(requirements, taxonomy)
    except DatasetError as exc:
        raise DatasetError(f"{path.name}: {exc}") from None


def save_dataset(dataset: Dataset, path: str | Path, format: str | None = None) -> None:
    """Write a dataset back out; load_dataset(save_dataset(d)) round-trips."""
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(_FIELDS))
            writer.writeheader()
            for r in dataset.requirements:
                writer.writerow(
                    {"id": r.id, "text": r.text, "project_id": r.project_id,
                     "type_label": r.type_label or ""}
                )
    else:
        with open(path, "w", encoding="utf-8") as fh:
            for r in dataset.requirements:
                obj = {"id": r.id, "text": r.text, "project_id": r.project_id,
                       "type_label": r.type_label}
                fh.write(json.dumps(obj) + "\n")


def project_partition(dataset: Dataset) -> dict[str, list[Requirement]]:
    """Split requirements by project, preserving input order within each."""
    out: dict[str, list[Requirement]] = {p: [] for p in dataset.projects}
    for r in dataset.requirements:
        out[r.project_id].append(r)
    return out


def loo_splits(dataset: Dataset) -> list[tuple[str, list[str]]]:
    """Leave-one-out splits: each project once as target, the rest as training."""
    if len(dataset.projects) < 2:
        raise DatasetError("leave-one-out needs at least 2 projects")
    return [
        (target, [p for p in dataset.projects if p != target])
        for target in dataset.projects
    ]
