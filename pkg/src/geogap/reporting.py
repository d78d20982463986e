"""Structured gap reports: ranked type table, cell heatmap SVG, novelties."""
from __future__ import annotations

import json
import xml.sax.saxutils
from pathlib import Path
from typing import Sequence

import numpy as np

from .artifacts import CorpusArtifacts
from .scoring import CLIP, GapResult, ScoringError, Target

REPORT_SCHEMA_VERSION = 1

#: Required top-level fields of a gap report and their JSON types.
REPORT_SCHEMA: dict[str, type] = {
    "schema_version": int,
    "mode": str,
    "config": dict,
    "corpus_fingerprint": (str, type(None)),
    "n_target": int,
    "ranking": list,
    "summary_top": list,
    "cells": dict,
    "flags": dict,
}

_RANKING_FIELDS = {"rank": int, "type": str, "score": float, "components": dict}
_CELL_FIELDS = {"types": list, "topics": list, "psi_cell": list,
                "occupancy": list, "cell_mass": list}


class ReportSchemaError(ValueError):
    """Report document does not match the published schema."""


def gap_report(
    result: GapResult,
    top_n: int = 3,
    fingerprint: str | None = None,
) -> dict:
    """Machine-readable gap report for one scored target.

    Types are ranked by fused score descending with ties falling back to
    taxonomy order. The document round-trips through JSON without losing
    numeric precision.
    """
    order = result.ranking()
    ranking = []
    for pos, t in enumerate(order, start=1):
        name = result.type_names[t]
        ranking.append({
            "rank": pos,
            "type": name,
            "score": float(result.psi_fused[t]),
            "components": {
                "geometric": float(result.psi_geo[t]),
                "type_restricted": float(result.psi_type[t]),
                "population": float(result.psi_pop[t]),
            },
            "flags": result.flags.get(name, []),
        })
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "mode": result.config.get("mode", "A"),
        "config": result.config,
        "corpus_fingerprint": fingerprint or result.fingerprint,
        "n_target": result.n_target,
        "ranking": ranking,
        "summary_top": ranking[:top_n],
        "cells": {
            "types": list(result.type_names),
            "topics": list(result.topic_labels),
            "psi_cell": [[float(v) for v in row] for row in result.psi_cell],
            "occupancy": [[float(v) for v in row] for row in result.occupancy],
            "cell_mass": [[float(v) for v in row] for row in result.cell_mass],
        },
        "flags": {k: list(v) for k, v in result.flags.items()},
    }


def validate_report(report: dict) -> None:
    """Raise ReportSchemaError unless the document matches REPORT_SCHEMA."""
    for key, expected in REPORT_SCHEMA.items():
        if key not in report:
            raise ReportSchemaError(f"missing field {key!r}")
        if not isinstance(report[key], expected):
            raise ReportSchemaError(
                f"field {key!r} has type {type(report[key]).__name__}")
    for entry in report["ranking"]:
        for key, expected in _RANKING_FIELDS.items():
            if key not in entry:
                raise ReportSchemaError(f"ranking entry missing {key!r}")
            if not isinstance(entry[key], expected):
                raise ReportSchemaError(f"ranking field {key!r} has wrong type")
    for key, expected in _CELL_FIELDS.items():
        if key not in report["cells"]:
            raise ReportSchemaError(f"cells section missing {key!r}")
        if not isinstance(report["cells"][key], expected):
            raise ReportSchemaError(f"cells field {key!r} has wrong type")
    n_types = len(report["cells"]["types"])
    for grid_key in ("psi_cell", "occupancy", "cell_mass"):
        if len(report["cells"][grid_key]) != n_types:
            raise ReportSchemaError(f"cells.{grid_key} row count != number of types")


def write_report(report: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# SVG heatmap
# ---------------------------------------------------------------------------

_CELL_PX = 44
_LABEL_PX = 120
_HEADER_PX = 56


def _diverging_color(value: float) -> str:
    """White at 0, saturating red at +5 (gap) and blue at -5 (surplus)."""
    v = max(-CLIP, min(CLIP, float(value))) / CLIP
    if v >= 0:
        other = int(round(255 * (1.0 - v)))
        return f"#ff{other:02x}{other:02x}"
    other = int(round(255 * (1.0 + v)))
    return f"#{other:02x}{other:02x}ff"


def heatmap_svg(
    grid: np.ndarray,
    row_labels: Sequence[str],
    col_labels: Sequence[str],
    title: str = "gap score grid",
) -> str:
    """Render a (rows x cols) grid as an SVG heatmap with value tooltips."""
    grid = np.asarray(grid, dtype=np.float64)
    if not np.all(np.isfinite(grid)):
        raise ScoringError("heatmap grid must be finite")
    rows, cols = grid.shape
    if rows != len(row_labels) or cols != len(col_labels):
        raise ScoringError("label counts must match the grid shape")
    esc = xml.sax.saxutils.escape
    width = _LABEL_PX + cols * _CELL_PX
    height = _HEADER_PX + rows * _CELL_PX
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="4" y="16" font-size="13" font-weight="bold">{esc(title)}</text>',
    ]
    for c, label in enumerate(col_labels):
        x = _LABEL_PX + c * _CELL_PX + _CELL_PX // 2
        parts.append(
            f'<text x="{x}" y="{_HEADER_PX - 8}" font-size="10" '
            f'text-anchor="middle">{esc(str(label))}</text>')
    for r, label in enumerate(row_labels):
        y = _HEADER_PX + r * _CELL_PX + _CELL_PX // 2 + 4
        parts.append(
            f'<text x="{_LABEL_PX - 6}" y="{y}" font-size="10" '
            f'text-anchor="end">{esc(str(label))}</text>')
        for c in range(cols):
            x = _LABEL_PX + c * _CELL_PX
            ytop = _HEADER_PX + r * _CELL_PX
            value = float(grid[r, c])
            parts.append(
                f'<rect x="{x}" y="{ytop}" width="{_CELL_PX}" height="{_CELL_PX}" '
                f'fill="{_diverging_color(value)}" stroke="#888" stroke-width="0.5">'
                f'<title>{esc(str(row_labels[r]))} / {esc(str(col_labels[c]))}: '
                f'{value:.4f}</title></rect>')
    parts.append("</svg>")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# Novelty listing: target requirements with no corpus analogue
# ---------------------------------------------------------------------------


def novelty_scores(art: CorpusArtifacts, target: Target) -> list[tuple[str, float]]:
    """Reverse-coverage z-score per target requirement (all of them, sorted).

    Each target requirement's nearest-corpus distance is z-scored against
    the pooled distribution of the same statistic for every training
    point measured against the rest of the corpus (its own project
    excluded, mirroring the coverage baselines).
    """
    if len(target) == 0:
        return []
    nn_target = (1.0 - target.matrix @ art.corpus_matrix.T).min(axis=1)

    dist = 1.0 - art.corpus_matrix @ art.corpus_matrix.T
    reference = np.empty(art.n_points)
    for j in range(len(art.projects)):
        rows = art.corpus_project_idx == j
        other = ~rows
        if not other.any():
            reference[rows] = np.nan
            continue
        reference[rows] = dist[np.ix_(rows, other)].min(axis=1)
    reference = reference[np.isfinite(reference)]
    mean = float(reference.mean())
    sigma = float(reference.std())
    z = (nn_target - mean) / (sigma + 1e-6)
    pairs = sorted(zip(target.ids, z), key=lambda p: (-p[1], p[0]))
    return [(rid, float(score)) for rid, score in pairs]


def novelties(art: CorpusArtifacts, target: Target, threshold: float) -> list[tuple[str, float]]:
    """Target requirement ids whose reverse-coverage z exceeds the threshold."""
    return [(rid, z) for rid, z in novelty_scores(art, target) if z > threshold]
