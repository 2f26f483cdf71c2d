"""Source-level analytics over pooled context embeddings.

Per (source, entity pair) embeddings are mean-pooled sentence embeddings.
Ideological divergence of an entity pair is the closed-form KL divergence
between multivariate Gaussians fit to the left- and right-labeled sources'
embeddings; ranking pairs by that divergence surfaces the topics on which the
two camps select content most differently.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifiers import ClassifierModel, train_classifier
from .contexts import ContextSet, EntityPair
from .encoder import ContextEncoder
from .fileio import jsonl_dumps

logger = logging.getLogger(__name__)

EMBEDDINGS_SCHEMA = "newslens.embeddings.v1"

DEFAULT_SHRINKAGE = 1e-3
DEFAULT_MIN_GROUP = 3
HEATMAP_MIN_SENTENCES = 10


@dataclass(frozen=True)
class SourceEmbedding:
    source_id: str
    pair: EntityPair
    vector: tuple[float, ...]
    support: int

    def array(self) -> np.ndarray:
        return np.asarray(self.vector, dtype=np.float64)


def pool_source_embedding(cset: ContextSet, encoder: ContextEncoder) -> SourceEmbedding:
    """Arithmetic mean of the set's sentence embeddings."""
    if len(cset) == 0:
        raise ValueError("cannot pool an empty context set")
    total = np.zeros(encoder.dim)
    for s in cset.sentences:
        total += encoder.embed(s)
    mean = total / len(cset)
    return SourceEmbedding(
        source_id=cset.source_id,
        pair=cset.pair,
        vector=tuple(float(x) for x in mean),
        support=len(cset),
    )


def pool_all(sets: list[ContextSet], encoder: ContextEncoder, threads: int = 1) -> list[SourceEmbedding]:
    from .parallel import chunked_map

    return chunked_map(lambda s: pool_source_embedding(s, encoder), sets, threads=threads)


def rank_pairs(embeddings: list[SourceEmbedding]) -> list[EntityPair]:
    """Pairs by total pooled-sentence support, descending; ties lexicographic."""
    freq: dict[EntityPair, int] = {}
    for emb in embeddings:
        freq[emb.pair] = freq.get(emb.pair, 0) + emb.support
    return [p for p, _ in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))]


@dataclass(frozen=True)
class SourceFeatureRow:
    source_id: str
    vector: tuple[float, ...]
    missing: tuple[bool, ...]
    pairs: tuple[EntityPair, ...]


def build_feature_matrix(
    embeddings: list[SourceEmbedding],
    k: int = 20,
    min_support: int = 1,
) -> list[SourceFeatureRow]:
    """Concatenate each source's embeddings over the k most frequent pairs.

    Missing (source, pair) blocks are zero-filled with the mask bit set; a
    source appears if it covers at least one of the k pairs at min_support.
    """
    top = tuple(rank_pairs(embeddings)[:k])
    dim = len(embeddings[0].vector) if embeddings else 0
    table: dict[str, dict[EntityPair, SourceEmbedding]] = {}
    for emb in embeddings:
        table.setdefault(emb.source_id, {})[emb.pair] = emb
    rows = []
    for source_id in sorted(table):
        blocks, mask = [], []
        for pair in top:
            emb = table[source_id].get(pair)
            if emb is not None and emb.support >= min_support:
                blocks.append(emb.array())
                mask.append(False)
            else:
                blocks.append(np.zeros(dim))
                mask.append(True)
        if all(mask):
            continue
        vec = np.concatenate(blocks) if blocks else np.zeros(0)
        rows.append(
            SourceFeatureRow(
                source_id=source_id,
                vector=tuple(float(x) for x in vec),
                missing=tuple(mask),
                pairs=top,
            )
        )
    return rows


@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray
    n: int


def fit_gaussian(vectors, shrinkage: float = DEFAULT_SHRINKAGE, relative: bool = False) -> GaussianFit:
    """Sample mean and (n-1)-denominator covariance with a diagonal ridge.

    ``relative=True`` scales the ridge by trace(cov)/p (falling back to the
    absolute ridge when the sample covariance is exactly zero), keeping the
    regularization commensurate with the embedding scale.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two vectors to fit a Gaussian")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (X.shape[0] - 1)
    p = X.shape[1]
    ridge = shrinkage
    if relative:
        scale = float(np.trace(cov)) / p
        ridge = shrinkage * scale if scale > 0 else shrinkage
    cov = cov + ridge * np.eye(p)
    return GaussianFit(mean=mean, cov=cov, n=X.shape[0])


def fit_gaussian_lw(vectors, floor: float = DEFAULT_SHRINKAGE) -> GaussianFit:
    """Gaussian fit with Ledoit-Wolf shrinkage toward the scaled identity.

    The shrinkage intensity is estimated from the data, so heavily
    noise-dominated fits (few samples, many dimensions) collapse toward a
    spherical covariance instead of amplifying estimation noise through the
    KL formula's inverse. Degenerate zero-spread samples fall back to
    ``floor * I`` so downstream divergences stay finite.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two vectors to fit a Gaussian")
    n, p = X.shape
    mean = X.mean(axis=0)
    centered = X - mean
    S = centered.T @ centered / (n - 1)
    mu = float(np.trace(S)) / p
    if mu <= 0:
        return GaussianFit(mean=mean, cov=floor * np.eye(p), n=n)
    d2 = float(((S - mu * np.eye(p)) ** 2).sum())
    if d2 <= 0:
        return GaussianFit(mean=mean, cov=S + floor * mu * np.eye(p), n=n)
    b2 = 0.0
    for x in centered:
        b2 += float(((np.outer(x, x) - S) ** 2).sum())
    b2 = min(b2 / n**2, d2)
    rho = b2 / d2
    cov = rho * mu * np.eye(p) + (1.0 - rho) * S
    # Tiny absolute floor keeps the Cholesky safe when rho ~ 0 and S is singular.
    cov += floor * mu * np.eye(p)
    return GaussianFit(mean=mean, cov=cov, n=n)


def kl_divergence(L: GaussianFit, R: GaussianFit) -> float:
    """Closed-form KL divergence D(N_L || N_R) between Gaussian fits:
    0.5 * (tr(S_R^-1 S_L) + ln(|S_R|/|S_L|) + (m_R-m_L)^T S_R^-1 (m_R-m_L) - p).
    """
    if L.mean.shape != R.mean.shape:
        raise ValueError("dimension mismatch between Gaussian fits")
    p = L.mean.shape[0]
    try:
        chol_R = np.linalg.cholesky(R.cov)
        chol_L = np.linalg.cholesky(L.cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance not positive definite") from exc
    # tr(S_R^-1 S_L) via two triangular solves.
    half = np.linalg.solve(chol_R, L.cov)
    inv_term = np.linalg.solve(chol_R.T, half)
    trace_term = float(np.trace(inv_term))
    logdet_R = 2.0 * float(np.sum(np.log(np.diag(chol_R))))
    logdet_L = 2.0 * float(np.sum(np.log(np.diag(chol_L))))
    diff = R.mean - L.mean
    z = np.linalg.solve(chol_R, diff)
    maha = float(z @ z)
    return 0.5 * (trace_term + logdet_R - logdet_L + maha - p)


@dataclass(frozen=True)
class AepScore:
    pair: EntityPair
    divergence: float
    n_left: int
    n_right: int


def rank_aeps(
    embeddings: list[SourceEmbedding],
    labels3: dict[str, str],
    top_pairs: int = 100,
    min_group: int = DEFAULT_MIN_GROUP,
    shrinkage: float | str = "lw",
    symmetrized: bool = False,
    reduce: bool = True,
) -> tuple[list[AepScore], list[tuple[EntityPair, str]]]:
    """Divergence ranking over the most frequent pairs.

    Center-labeled sources are excluded from the fits. Pairs lacking
    ``min_group`` sources on either side are reported as skipped, not scored.
    With ``reduce``, vectors are projected onto p = min(d, n//3) principal
    components before fitting. ``shrinkage`` is either "lw" (Ledoit-Wolf
    intensity estimated per fit, the default) or a numeric trace-relative
    ridge; the data-driven intensity keeps same-distribution pairs near zero
    divergence where a fixed small ridge lets estimation noise dominate.
    """
    candidates = rank_pairs(embeddings)[:top_pairs]
    by_pair: dict[EntityPair, list[SourceEmbedding]] = {}
    for emb in embeddings:
        by_pair.setdefault(emb.pair, []).append(emb)

    def fit(vectors):
        if shrinkage == "lw":
            return fit_gaussian_lw(vectors)
        return fit_gaussian(vectors, float(shrinkage), relative=True)

    scores: list[AepScore] = []
    skipped: list[tuple[EntityPair, str]] = []
    for pair in candidates:
        group = {"left": [], "right": []}
        for emb in sorted(by_pair.get(pair, ()), key=lambda e: e.source_id):
            side = labels3.get(emb.source_id)
            if side in group:
                group[side].append(emb.array())
        nl, nr = len(group["left"]), len(group["right"])
        if nl < min_group or nr < min_group:
            skipped.append((pair, f"needs >= {min_group} sources per side, got L={nl} R={nr}"))
            continue
        left = np.array(group["left"])
        right = np.array(group["right"])
        stacked = np.vstack([left, right])
        if reduce:
            p = max(1, min(stacked.shape[1], stacked.shape[0] // 3))
            if p < stacked.shape[1]:
                coords, _ = pca_project(stacked, p)
                left, right = coords[:nl], coords[nl:]
        div = kl_divergence(fit(left), fit(right))
        if symmetrized:
            div += kl_divergence(fit(right), fit(left))
        scores.append(AepScore(pair=pair, divergence=div, n_left=nl, n_right=nr))
    scores.sort(key=lambda s: (-s.divergence, s.pair))
    return scores, skipped


def pca_project(vectors, components: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean-centered projection onto the top principal components.

    Returns (coordinates, explained variance ratios). Sign convention: the
    largest-magnitude coordinate of each component is positive.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a 2-D array of vectors")
    n, p = X.shape
    if components > p:
        raise ValueError(f"components={components} exceeds dimension {p}")
    if n < components + 1:
        raise ValueError(f"need at least components+1={components + 1} vectors, got {n}")
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]
    W = eigvecs[:, :components].copy()
    for j in range(components):
        pivot = np.argmax(np.abs(W[:, j]))
        if W[pivot, j] < 0:
            W[:, j] = -W[:, j]
    total = float(eigvals.sum())
    ratios = eigvals[:components] / total if total > 0 else np.zeros(components)
    return centered @ W, ratios


def evaluate_weighted_prf(pred, gold) -> tuple[float, float, float]:
    """Weighted macro precision/recall/F1 in percent.

    Per-class metrics are averaged with gold-class support weights; classes
    that never occur in gold carry zero weight and are excluded.
    """
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gold)} gold")
    if not gold:
        raise ValueError("empty evaluation set")
    classes = sorted(set(gold))
    n = len(gold)
    P = R = F = 0.0
    for cls in classes:
        tp = sum(1 for p, g in zip(pred, gold) if p == cls and g == cls)
        fp = sum(1 for p, g in zip(pred, gold) if p == cls and g != cls)
        fn = sum(1 for p, g in zip(pred, gold) if p != cls and g == cls)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        weight = (tp + fn) / n
        P += weight * prec
        R += weight * rec
        F += weight * f1
    return (100.0 * P, 100.0 * R, 100.0 * F)


def per_pair_polarity(
    embeddings: list[SourceEmbedding],
    labels3: dict[str, str],
    pairs: list[EntityPair],
    holdout: list[str],
    min_group: int = DEFAULT_MIN_GROUP,
    min_sentences: int = HEATMAP_MIN_SENTENCES,
    svm_c: float = 0.1,
    seed: int = 0,
) -> dict[str, dict[EntityPair, str]]:
    """Per-pair linear-SVM predictions for held-out sources.

    A cell is predicted only when the held-out source has more than
    ``min_sentences`` context sentences for the pair and the pair's training
    side has at least two classes with ``min_group`` sources each; every other
    cell is "n/a".
    """
    holdout_set = set(holdout)
    by_pair: dict[EntityPair, dict[str, SourceEmbedding]] = {}
    for emb in embeddings:
        by_pair.setdefault(emb.pair, {})[emb.source_id] = emb
    matrix: dict[str, dict[EntityPair, str]] = {s: {} for s in sorted(holdout_set)}
    for pair in pairs:
        per_source = by_pair.get(pair, {})
        train_X, train_y = [], []
        for source_id in sorted(per_source):
            if source_id in holdout_set:
                continue
            side = labels3.get(source_id)
            if side is None:
                continue
            train_X.append(per_source[source_id].array())
            train_y.append(side)
        counts = {c: train_y.count(c) for c in set(train_y)}
        usable = {c for c, n in counts.items() if n >= min_group}
        model: ClassifierModel | None = None
        if len(usable) >= 2:
            keep = [i for i, c in enumerate(train_y) if c in usable]
            model = train_classifier(
                np.array([train_X[i] for i in keep]),
                np.array([train_y[i] for i in keep], dtype=object),
                "linear-svm",
                seed=seed,
                C=svm_c,
            )
        for source_id in matrix:
            emb = per_source.get(source_id)
            if model is None or emb is None or emb.support <= min_sentences:
                matrix[source_id][pair] = "n/a"
            else:
                matrix[source_id][pair] = model.predict(emb.array()[None, :])[0]
    return matrix


def write_embeddings(embeddings: list[SourceEmbedding], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(jsonl_dumps({"_schema": EMBEDDINGS_SCHEMA}) + "\n")
        for emb in sorted(embeddings, key=lambda e: (e.source_id, e.pair)):
            fh.write(
                jsonl_dumps(
                    {
                        "source": emb.source_id,
                        "e1": emb.pair.first,
                        "e2": emb.pair.second,
                        "support": emb.support,
                        "vector": list(emb.vector),
                    }
                )
                + "\n"
            )


def read_embeddings(path: str | Path) -> list[SourceEmbedding]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "_schema" in obj:
                if obj["_schema"] != EMBEDDINGS_SCHEMA:
                    raise ValueError(f"unexpected embeddings schema: {obj['_schema']}")
                continue
            out.append(
                SourceEmbedding(
                    source_id=obj["source"],
                    pair=EntityPair.of(obj["e1"], obj["e2"]),
                    vector=tuple(float(x) for x in obj["vector"]),
                    support=int(obj["support"]),
                )
            )
    return out
