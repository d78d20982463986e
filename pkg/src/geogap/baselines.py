"""Six comparison baselines, each ablating one part of the pipeline.

Every baseline is a fold scorer with the same signature as the primary
detector, so the injection harness evaluates all of them on identical
folds, seeds, and removals. Raw scores are fine here: AUROC is rank-based,
so monotone per-type transforms would not change the comparison.
"""
from __future__ import annotations

import re
from typing import Sequence

import numpy as np

from .evaluation import FoldContext
from .corpus import Requirement
from .prototypes import hard_assign_all
from .scoring import ScoringError

_TOKEN = re.compile(r"[a-z0-9]+")


def _count_z_scores(target_counts: np.ndarray, training_counts: np.ndarray,
                    epsilon: float) -> np.ndarray:
    """Per-type z-score of the count deficit against per-project baselines."""
    mean = training_counts.mean(axis=1)
    sigma = training_counts.std(axis=1)
    return (mean - target_counts) / (sigma + epsilon)


def _gt_counts(reqs: Sequence[Requirement], taxonomy_index, k_t: int) -> np.ndarray:
    c = np.zeros(k_t)
    for r in reqs:
        if r.type_label is not None:
            c[taxonomy_index(r.type_label)] += 1
    return c


def baseline_random(ctx: FoldContext) -> np.ndarray:
    """Null detector: i.i.d. uniform scores, seeded per fold."""
    rng = np.random.default_rng([ctx.fold_seed, 777])
    return rng.uniform(size=ctx.art.k_t)


def baseline_gt_count(ctx: FoldContext) -> np.ndarray:
    """Count deficit with ground-truth labels (an oracle unavailable live)."""
    tax = ctx.art.taxonomy
    target = _gt_counts(ctx.target_depleted, tax.index, tax.k_t)
    training = np.column_stack([
        _gt_counts(reqs, tax.index, tax.k_t) for reqs in ctx.training.values()
    ])
    return _count_z_scores(target, training, ctx.config.epsilon)


def baseline_classifier_count(ctx: FoldContext) -> np.ndarray:
    """Classify-then-count: like the oracle, but with predicted labels."""
    art = ctx.art

    def predicted_counts(reqs: Sequence[Requirement]) -> np.ndarray:
        mat = ctx.store.submatrix([r.id for r in reqs])
        pred = hard_assign_all(mat, art.centroids)
        return np.bincount(pred, minlength=art.k_t).astype(float)

    target = predicted_counts(ctx.target_depleted)
    training = np.column_stack([predicted_counts(reqs)
                                for reqs in ctx.training.values()])
    return _count_z_scores(target, training, ctx.config.epsilon)


# ---------------------------------------------------------------------------
# TF-IDF + k-NN: the geometric pipeline on bag-of-words vectors
# ---------------------------------------------------------------------------


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def tfidf_vectors(
    train_texts: Sequence[str], other_texts: Sequence[str] = ()
) -> tuple[np.ndarray, np.ndarray]:
    """L2-normalised TF-IDF rows for training texts and transformed extras.

    Vocabulary and document frequencies come from the training texts only.
    Term frequency is log-scaled (1 + log tf); inverse document frequency
    is smoothed (log((1+N)/(1+df)) + 1). Rows with no in-vocabulary terms
    stay zero; the caller decides what to do with them.
    """
    vocab: dict[str, int] = {}
    train_tokens = [tokenize(t) for t in train_texts]
    for toks in train_tokens:
        for tok in toks:
            vocab.setdefault(tok, len(vocab))
    if not vocab:
        raise ScoringError("empty vocabulary: no tokens in the training texts")
    n_docs = len(train_texts)
    df = np.zeros(len(vocab))
    for toks in train_tokens:
        for tok in set(toks):
            df[vocab[tok]] += 1
    idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0

    def rows(token_lists: list[list[str]]) -> np.ndarray:
        mat = np.zeros((len(token_lists), len(vocab)))
        for i, toks in enumerate(token_lists):
            tf: dict[int, int] = {}
            for tok in toks:
                j = vocab.get(tok)
                if j is not None:
                    tf[j] = tf.get(j, 0) + 1
            for j, count in tf.items():
                mat[i, j] = (1.0 + np.log(count)) * idf[j]
            norm = np.linalg.norm(mat[i])
            if norm > 0:
                mat[i] /= norm
        return mat

    return rows(train_tokens), rows([tokenize(t) for t in other_texts])


def baseline_tfidf_knn(ctx: FoldContext) -> np.ndarray:
    """Geometric-only scoring with TF-IDF vectors instead of embeddings.

    Marginalising the cell grid over topics reduces the geometric score to
    the mean per-point score within each hard type, so no topic model is
    needed at type resolution. Target documents with no in-vocabulary
    terms carry no usable position in this space and are dropped.
    """
    train_reqs = [r for reqs in ctx.training.values() for r in reqs]
    corpus_proj = np.array([
        j for j, reqs in enumerate(ctx.training.values()) for _ in reqs
    ])
    train_mat, target_mat = tfidf_vectors(
        [r.text for r in train_reqs],
        [r.text for r in ctx.target_depleted],
    )
    target_mat = target_mat[np.linalg.norm(target_mat, axis=1) > 0]
    if target_mat.shape[0] == 0:
        raise ScoringError("no target document has in-vocabulary terms")

    tax = ctx.art.taxonomy
    k = ctx.config.k
    epsilon = ctx.config.epsilon
    n, m = train_mat.shape[0], len(ctx.training)

    # Type prototypes and hard types in TF-IDF space.
    mu = np.zeros((tax.k_t, train_mat.shape[1]))
    present = np.zeros(tax.k_t, dtype=bool)
    for t in range(tax.k_t):
        members = train_mat[[tax.index(r.type_label) == t for r in train_reqs]]
        if members.shape[0] == 0:
            continue
        s = members.sum(axis=0)
        norm = np.linalg.norm(s)
        if norm > 0:
            mu[t] = s / norm
            present[t] = True
    sim = train_mat @ mu.T
    sim[:, ~present] = -np.inf
    hard = sim.argmax(axis=1)

    def phi_rows(points: np.ndarray, pool: np.ndarray) -> np.ndarray:
        kk = min(k, pool.shape[0])
        d = 1.0 - points @ pool.T
        if kk == 1:
            return d.min(axis=1)
        return np.partition(d, kk - 1, axis=1)[:, :kk].mean(axis=1)

    phi_star = phi_rows(train_mat, target_mat)
    phi_pp = np.empty((n, m))
    for j in range(m):
        cols = corpus_proj == j
        phi_pp[:, j] = phi_rows(train_mat, train_mat[cols])
        phi_pp[cols, j] = np.nan
    counts = np.isfinite(phi_pp).sum(axis=1)
    phi0 = np.nanmean(phi_pp, axis=1)
    sigma = np.nanstd(phi_pp, axis=1)
    psi = np.where(counts >= 2,
                   np.clip((phi_star - phi0) / (sigma + epsilon), -5.0, 5.0), 0.0)

    scores = np.zeros(tax.k_t)
    for t in range(tax.k_t):
        members = psi[hard == t]
        if members.size:
            scores[t] = members.mean()
    return scores


# ---------------------------------------------------------------------------
# Distribution-distance baselines (deliberately un-normalised)
# ---------------------------------------------------------------------------


def mmd_squared(x: np.ndarray, y: np.ndarray, bandwidth: float | None = None) -> float:
    """Unbiased squared MMD with a Gaussian kernel on cosine distance.

    Bandwidth defaults to the median pairwise cosine distance over the
    pooled sample (median heuristic). The unbiased estimator can dip
    slightly below zero for close distributions.
    """
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise ScoringError("MMD needs at least 2 points on each side")
    pooled = np.vstack([x, y])
    d_all = 1.0 - pooled @ pooled.T
    if bandwidth is None:
        iu = np.triu_indices(d_all.shape[0], k=1)
        bandwidth = float(np.median(d_all[iu]))
    h = max(bandwidth, 1e-12)

    def kernel(d: np.ndarray) -> np.ndarray:
        return np.exp(-(d ** 2) / (2.0 * h * h))

    m, n = x.shape[0], y.shape[0]
    kxx = kernel(1.0 - x @ x.T)
    kyy = kernel(1.0 - y @ y.T)
    kxy = kernel(1.0 - x @ y.T)
    sum_xx = kxx.sum() - np.trace(kxx)
    sum_yy = kyy.sum() - np.trace(kyy)
    return float(sum_xx / (m * (m - 1)) + sum_yy / (n * (n - 1))
                 - 2.0 * kxy.mean())


def baseline_mmd(ctx: FoldContext) -> np.ndarray:
    """Raw per-type MMD between corpus and target, no per-project baseline."""
    art = ctx.art
    target_mat = ctx.store.submatrix([r.id for r in ctx.target_depleted])
    target_types = hard_assign_all(target_mat, art.centroids)
    scores = np.zeros(art.k_t)
    for t in range(art.k_t):
        corpus_side = art.corpus_matrix[art.corpus_type_idx == t]
        target_side = target_mat[target_types == t]
        if corpus_side.shape[0] < 2 or target_side.shape[0] < 2:
            continue
        scores[t] = mmd_squared(corpus_side, target_side)
    return scores


def baseline_centroid_distance(ctx: FoldContext) -> np.ndarray:
    """Raw distance between per-type target and corpus centroids."""
    art = ctx.art
    target_mat = ctx.store.submatrix([r.id for r in ctx.target_depleted])
    target_types = hard_assign_all(target_mat, art.centroids)
    scores = np.zeros(art.k_t)
    for t in range(art.k_t):
        if not art.centroids.present[t]:
            continue
        members = target_mat[target_types == t]
        if members.shape[0] == 0:
            scores[t] = 2.0
            continue
        mean = members.mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm <= 0:
            scores[t] = 2.0
            continue
        scores[t] = 1.0 - float((mean / norm) @ art.centroids.mu[t])
    return scores


BASELINES = {
    "random": baseline_random,
    "gt-count": baseline_gt_count,
    "classifier-count": baseline_classifier_count,
    "tfidf-knn": baseline_tfidf_knn,
    "mmd": baseline_mmd,
    "centroid-distance": baseline_centroid_distance,
}
