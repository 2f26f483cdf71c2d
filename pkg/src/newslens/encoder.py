"""Entity-agnostic context-sentence encoder trained with a triplet margin loss.

A masked sentence is read out through its two role markers: hashed unigram and
bigram counts from a token window around ``[R1]`` form one half of a sparse
feature vector, the ``[R2]`` window the other half, and a learned linear
projection maps the stacked halves to the embedding. Sentences about the same
entity pair are pulled closer than sentences about different pairs under the
L2 distance, with a fixed margin hinge.
"""

from __future__ import annotations

import json
import logging
import random
import struct
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .contexts import ContextSentence, ContextSet, EntityPair, ROLE1, ROLE2
from .hashing import DEFAULT_HASH_SEED, hash_bucket

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"NLENC001"


@dataclass
class EncoderConfig:
    dim: int = 64
    buckets: int = 2**18
    window: int = 8
    margin: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 3
    seed: int = 0
    hash_seed: int = DEFAULT_HASH_SEED
    # Positives from the anchor's own source preserve cross-source contrasts;
    # pooling positives across sources trains those contrasts away.
    positives: str = "same-source"  # or "pooled"
    negative_overlap: str = "one-entity"  # or "disjoint"
    triplets_per_anchor: int = 2

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("embedding dim must be >= 2")
        if self.buckets < 1:
            raise ValueError("need at least one hash bucket")
        if self.window < 1:
            raise ValueError("window radius must be >= 1")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.positives not in ("pooled", "same-source"):
            raise ValueError(f"unknown positives mode: {self.positives!r}")
        if self.negative_overlap not in ("one-entity", "disjoint"):
            raise ValueError(f"unknown negative mode: {self.negative_overlap!r}")


class MalformedContextError(ValueError):
    pass


def _window_features(tokens: list[str], pos: int, radius: int) -> list[str]:
    lo, hi = max(0, pos - radius), min(len(tokens), pos + radius + 1)
    window = [tokens[i] for i in range(lo, hi) if i != pos]
    feats = [f"u:{t}" for t in window]
    feats.extend(f"b:{a} {b}" for a, b in zip(window, window[1:]))
    return feats


class ContextEncoder:
    """Hashed window featurizer plus linear projection; deterministic given
    (config, weights, input)."""

    def __init__(self, config: EncoderConfig, weights: np.ndarray | None = None):
        self.config = config
        rows = 2 * config.buckets
        if weights is None:
            rng = np.random.default_rng(config.seed)
            scale = 1.0 / np.sqrt(config.buckets)
            weights = rng.uniform(-scale, scale, size=(rows, config.dim))
        if weights.shape != (rows, config.dim):
            raise ValueError(f"weights shape {weights.shape} != {(rows, config.dim)}")
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        self._cache: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}

    @property
    def dim(self) -> int:
        return self.config.dim

    def features(self, masked_text: str):
        """(idx1, val1, idx2, val2): bucket indices and L2-normalized counts
        for the two role windows. idx2 is already offset into the second half."""
        hit = self._cache.get(masked_text)
        if hit is not None:
            return hit
        tokens = masked_text.split()
        halves = []
        for offset, role in ((0, ROLE1), (self.config.buckets, ROLE2)):
            positions = [i for i, t in enumerate(tokens) if t == role]
            if len(positions) != 1:
                raise MalformedContextError(
                    f"expected exactly one {role} token: {masked_text!r}"
                )
            counts = Counter(
                hash_bucket(f, self.config.buckets, self.config.hash_seed)
                for f in _window_features(tokens, positions[0], self.config.window)
            )
            idx = np.fromiter(sorted(counts), dtype=np.int64, count=len(counts))
            val = np.array([counts[i] for i in idx], dtype=np.float64)
            norm = np.linalg.norm(val)
            if norm > 0:
                val /= norm
            halves.append((idx + offset, val))
        out = (halves[0][0], halves[0][1], halves[1][0], halves[1][1])
        self._cache[masked_text] = out
        return out

    def embed_text(self, masked_text: str) -> np.ndarray:
        idx1, val1, idx2, val2 = self.features(masked_text)
        r = np.zeros(self.config.dim)
        if len(idx1):
            r += val1 @ self.weights[idx1]
        if len(idx2):
            r += val2 @ self.weights[idx2]
        return r

    def embed(self, sentence: ContextSentence) -> np.ndarray:
        return self.embed_text(sentence.masked_text)

    def save(self, path: str | Path) -> None:
        """Binary checkpoint: magic, uint32 header length, JSON header, then a
        row-major little-endian float32 weight block."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = dict(asdict(self.config))
        header["rows"] = 2 * self.config.buckets
        header["dtype"] = "<f4"
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(np.ascontiguousarray(self.weights, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "ContextEncoder":
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise ValueError(f"not an encoder checkpoint: {path}")
            (blob_len,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(blob_len).decode("utf-8"))
            rows, dim = header.pop("rows"), header["dim"]
            dtype = header.pop("dtype")
            weights = np.frombuffer(fh.read(), dtype=dtype).reshape(rows, dim)
        config = EncoderConfig(**header)
        return cls(config, weights=weights.astype(np.float64))


def triplet_loss(a: np.ndarray, p: np.ndarray, n: np.ndarray, margin: float = 1.0) -> float:
    """max(||a-p|| - ||a-n|| + margin, 0) with L2 distances."""
    a, p, n = np.asarray(a), np.asarray(p), np.asarray(n)
    if not (a.shape == p.shape == n.shape):
        raise ValueError(f"dim mismatch: {a.shape}, {p.shape}, {n.shape}")
    return float(max(np.linalg.norm(a - p) - np.linalg.norm(a - n) + margin, 0.0))


@dataclass(frozen=True)
class Triplet:
    anchor: ContextSentence
    positive: ContextSentence
    negative: ContextSentence

    def __post_init__(self):
        if self.anchor.pair != self.positive.pair:
            raise ValueError("positive must share the anchor's entity pair")
        if self.negative.pair == self.anchor.pair:
            raise ValueError("negative must come from a different entity pair")


def _pairs_disjoint(a: EntityPair, b: EntityPair) -> bool:
    return len({a.first, a.second} & {b.first, b.second}) == 0


def sample_triplets(
    sets: list[ContextSet],
    per_anchor: int = 2,
    seed: int = 0,
    positives: str = "pooled",
    negative_overlap: str = "one-entity",
) -> list[Triplet]:
    """Draw (anchor, positive, negative) triples, reproducibly for a seed.

    Anchors come from groups with >= 2 sentences (grouped per pair when pooled,
    per (source, pair) otherwise); positives from the anchor's group; negatives
    uniformly from other pairs, optionally restricted to entity-disjoint ones.
    """
    by_pair: dict[EntityPair, list[ContextSentence]] = {}
    for cset in sets:
        by_pair.setdefault(cset.pair, []).extend(cset.sentences)
    if positives == "pooled":
        groups = {(pair,): sents for pair, sents in by_pair.items()}
    else:
        groups = {
            (cset.pair, cset.source_id): list(cset.sentences) for cset in sets
        }
    pairs = sorted(by_pair)
    if len(pairs) < 2:
        raise ValueError(
            "triplet sampling needs at least two distinct entity pairs "
            f"(got {len(pairs)})"
        )
    anchor_keys = [k for k in sorted(groups) if len(groups[k]) >= 2]
    if not anchor_keys:
        raise ValueError(
            "triplet sampling needs at least one pair with >= 2 context sentences"
        )
    neg_candidates: dict[EntityPair, list[EntityPair]] = {}
    for pair in pairs:
        if negative_overlap == "disjoint":
            cands = [q for q in pairs if _pairs_disjoint(pair, q)]
        else:
            cands = [q for q in pairs if q != pair]
        neg_candidates[pair] = cands

    rng = random.Random(seed)
    triplets: list[Triplet] = []
    for key in anchor_keys:
        sents = groups[key]
        pair = key[0]
        cands = neg_candidates[pair]
        if not cands:
            continue
        for i, anchor in enumerate(sents):
            for _ in range(per_anchor):
                j = rng.randrange(len(sents) - 1)
                positive = sents[j if j < i else j + 1]
                neg_pair = cands[rng.randrange(len(cands))]
                neg_sents = by_pair[neg_pair]
                negative = neg_sents[rng.randrange(len(neg_sents))]
                triplets.append(Triplet(anchor, positive, negative))
    if not triplets:
        raise ValueError(
            "no valid triplets: every eligible anchor pair lacks an "
            f"entity-{negative_overlap} negative pair"
        )
    return triplets


def _triplet_grads(ra, rp, rn, margin):
    """Gradients of the hinge loss w.r.t. the three embeddings, or None when
    the hinge is inactive. Zero-distance legs use the zero subgradient."""
    diff_p, diff_n = ra - rp, ra - rn
    dp, dn = np.linalg.norm(diff_p), np.linalg.norm(diff_n)
    loss = dp - dn + margin
    if loss <= 0:
        return None, 0.0
    u = diff_p / dp if dp > 0 else np.zeros_like(ra)
    v = diff_n / dn if dn > 0 else np.zeros_like(ra)
    return (u - v, -u, v), loss


def train(
    encoder: ContextEncoder,
    triplets: list[Triplet],
    learning_rate: float | None = None,
    epochs: int | None = None,
    seed: int | None = None,
) -> list[float]:
    """SGD on the triplet margin loss; returns the per-epoch mean loss curve.

    Triplet order is reshuffled each epoch from a single seeded stream, so the
    final weights are a pure function of (seed, data, config).
    """
    if not triplets:
        raise ValueError("empty triplet stream")
    cfg = encoder.config
    lr = cfg.learning_rate if learning_rate is None else learning_rate
    n_epochs = cfg.epochs if epochs is None else epochs
    rng = random.Random(cfg.seed if seed is None else seed)
    W = encoder.weights
    curve: list[float] = []
    order = list(range(len(triplets)))
    for epoch in range(n_epochs):
        rng.shuffle(order)
        total = 0.0
        for t_idx in order:
            t = triplets[t_idx]
            feats = [encoder.features(s.masked_text)
                     for s in (t.anchor, t.positive, t.negative)]
            embs = [encoder.embed_text(s.masked_text)
                    for s in (t.anchor, t.positive, t.negative)]
            grads, loss = _triplet_grads(*embs, cfg.margin)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, triplet {t_idx}: {loss}"
                )
            total += loss
            if grads is None:
                continue
            for (idx1, val1, idx2, val2), g in zip(feats, grads):
                if len(idx1):
                    W[idx1] -= lr * val1[:, None] * g[None, :]
                if len(idx2):
                    W[idx2] -= lr * val2[:, None] * g[None, :]
        curve.append(float(total) / len(triplets))
        logger.info("epoch %d mean triplet loss %.6f", epoch + 1, curve[-1])
    return curve


def write_loss_curve(curve: list[float], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# schema=newslens.loss-curve.v1", "epoch,mean_loss"]
    lines += [f"{i + 1},{float(loss)!r}" for i, loss in enumerate(curve)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
