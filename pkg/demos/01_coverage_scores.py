#!/usr/bin/env python3
# Walk through the scoring pipeline on a tiny synthetic corpus:
# unit-vector geometry, per-project coverage baselines, the three score
# components, and their fusion into one gap score per type.
import numpy as np

from geogap import (Dataset, EmbeddingStore, Requirement, ScoreConfig,
                    Target, Taxonomy, build_artifacts, score_project)

rng = np.random.default_rng(7)


def unit(v):
    return v / np.linalg.norm(v)


# Three requirement types as well-separated directions on the sphere.
# Five reference projects each cover all three types with 6 requirements.
centres = np.eye(8)[:3]
types = ("security", "performance", "usability")

ids, rows, reqs = [], [], []
for p in range(5):
    for t, name in enumerate(types):
        for i in range(6):
            rid = f"proj{p}-{name}-{i}"
            ids.append(rid)
            rows.append(unit(centres[t] + 0.05 * rng.normal(size=8)))
            reqs.append(Requirement(rid, f"{name} requirement {i}", f"proj{p}", name))

dataset = Dataset(reqs, Taxonomy(types))
store = EmbeddingStore(ids, np.vstack(rows))

# Fit the reference corpus. k=1 nearest neighbour, a fixed Gibbs
# temperature (skip calibration for this demo), and 2 fallback topics.
config = ScoreConfig(k=1, k_s=2, temperature=0.05)
art = build_artifacts(dataset, store, list(dataset.projects), config, seed=0)
print(f"corpus: {art.n_points} points, {len(art.projects)} projects, "
      f"{art.k_t} types, {art.k_s} topics")

# A healthy target covers everything at corpus-typical counts; a gappy
# one has no security requirements at all.
healthy = np.vstack([unit(centres[t] + 0.05 * rng.normal(size=8))
                     for t in (0, 1, 2) for _ in range(6)])
gappy = np.vstack([unit(centres[t] + 0.05 * rng.normal(size=8))
                   for t in (1, 2) for _ in range(9)])

for label, matrix in (("healthy", healthy), ("missing-security", gappy)):
    target = Target(ids=tuple(f"t{i}" for i in range(len(matrix))), matrix=matrix)
    res = score_project(art, target, config)
    print(f"\ntarget: {label}  (n={len(target)})")
    print(f"  {'type':<12} {'geo':>7} {'type':>7} {'pop':>7} {'fused':>7}")
    for t, name in enumerate(types):
        print(f"  {name:<12} {res.psi_geo[t]:>7.2f} {res.psi_type[t]:>7.2f} "
              f"{res.psi_pop[t]:>7.2f} {res.psi_fused[t]:>7.2f}")
    top = res.ranking()[0]
    print(f"  top-ranked gap: {types[top]} (score {res.psi_fused[top]:.2f})")

# The per-point scores behind the geometric component: each corpus point
# asks how far the target's nearest requirement is, z-scored against what
# individual reference projects achieve, clipped to [-5, 5].
target = Target(ids=tuple(f"t{i}" for i in range(len(gappy))), matrix=gappy)
res = score_project(art, target, config)
print("\nper-point coverage z-scores (missing-security target):")
for t, name in enumerate(types):
    member = res.per_point_psi[art.corpus_hard_type == t]
    print(f"  corpus {name:<12} mean psi = {member.mean():>6.2f}")
