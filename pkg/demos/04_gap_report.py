#!/usr/bin/env python3
# Produce the deliverables an integration would consume: the JSON gap
# report, the SVG cell heatmap, and the novelty listing. Artifacts are
# saved to and reloaded from disk to show the full round trip.
import json
import tempfile
from pathlib import Path

import numpy as np

from geogap import (Dataset, EmbeddingStore, Requirement, ScoreConfig,
                    Target, Taxonomy, build_artifacts, gap_report,
                    heatmap_svg, load_artifacts, novelties, save_artifacts,
                    score_project, validate_report)

rng = np.random.default_rng(31)


def unit(v):
    return v / np.linalg.norm(v)


centres = np.eye(8)[:3]
types = ("backup", "encryption", "audit")
ids, rows, reqs = [], [], []
for p in range(4):
    for t, name in enumerate(types):
        for i in range(7):
            rid = f"p{p}{name}{i}"
            ids.append(rid)
            rows.append(unit(centres[t] + 0.05 * rng.normal(size=8)))
            reqs.append(Requirement(rid, f"{name} requirement {i}", f"proj{p}", name))
dataset = Dataset(reqs, Taxonomy(types))
store = EmbeddingStore(ids, np.vstack(rows))

config = ScoreConfig(k=1, k_s=2, temperature=0.05)
art = build_artifacts(dataset, store, list(dataset.projects), config, seed=0)

out_dir = Path(tempfile.mkdtemp(prefix="geogap-demo-"))
artifact_path = out_dir / "corpus.ggz"
save_artifacts(art, artifact_path)
art = load_artifacts(artifact_path)
print(f"artifact round-tripped through {artifact_path}")

# Target: covers encryption and audit, has zero backup requirements, and
# carries one requirement unlike anything in the corpus (a novelty).
target_rows = [unit(centres[t] + 0.05 * rng.normal(size=8))
               for t in (1, 2) for _ in range(10)]
alien = np.zeros(8)
alien[-1] = 1.0
target_rows.append(alien)
target = Target(ids=tuple(f"t{i}" for i in range(len(target_rows))),
                matrix=np.vstack(target_rows))

result = score_project(art, target, config)
report = gap_report(result, top_n=2)
validate_report(report)

report_path = out_dir / "report.json"
report_path.write_text(json.dumps(report, indent=2, sort_keys=True))
print(f"report written to {report_path}")
print("ranked gaps:")
for entry in report["ranking"]:
    print(f"  #{entry['rank']} {entry['type']:<12} score {entry['score']:>6.2f}")

svg_path = out_dir / "cells.svg"
svg_path.write_text(heatmap_svg(result.psi_cell, result.type_names,
                                result.topic_labels))
print(f"heatmap written to {svg_path}")

flagged = novelties(art, target, threshold=3.0)
print(f"novelties above z=3: {[rid for rid, _ in flagged]}")
