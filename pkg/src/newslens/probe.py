"""Subjective-predicate probing of source-pair embeddings.

Each polarity-labeled verb becomes a masked prompt encodable by the context
encoder. A source-pair embedding is scored by its cosine similarity to every
prompt embedding: the ten most similar verbs get softmax weights, and the
score is the weighted mean of their +/-1 polarities.
"""

from __future__ import annotations

import csv
import logging
import re
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analytics import SourceEmbedding
from .corpus import CorpusHandle
from .encoder import ContextEncoder

logger = logging.getLogger(__name__)

_VERB_RE = re.compile(r"^[a-z]+(?:-[a-z]+)*$")
_TOKEN_RE = re.compile(r"[a-z]+(?:-[a-z]+)*")


@dataclass(frozen=True)
class PredicateEntry:
    verb: str
    polarity: int
    frequency: int

    def __post_init__(self):
        if self.polarity not in (1, -1):
            raise ValueError(f"polarity must be +1 or -1: {self.polarity}")
        if not _VERB_RE.match(self.verb):
            raise ValueError(f"verb must be lowercase, single-token or hyphenated: {self.verb!r}")


@dataclass(frozen=True)
class ProbeResult:
    source_id: str
    pair: object
    score: float
    top_predicates: tuple[tuple[str, float], ...]


def load_lexicon(path: str | Path) -> list[tuple[str, int]]:
    """CSV ``verb,polarity`` with polarity in {positive, negative}."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(ln for ln in fh if not ln.startswith("#"))
        if reader.fieldnames is None or not {"verb", "polarity"}.issubset(reader.fieldnames):
            raise ValueError("lexicon CSV needs header columns verb,polarity")
        for row in reader:
            pol = row["polarity"].strip().lower()
            if pol not in ("positive", "negative"):
                raise ValueError(f"unknown polarity {row['polarity']!r}")
            out.append((row["verb"].strip().lower(), 1 if pol == "positive" else -1))
    return out


def select_predicates(
    lexicon: list[tuple[str, int]],
    handle: CorpusHandle,
    n_per_class: int = 200,
) -> list[PredicateEntry]:
    """The n most corpus-frequent verbs of each polarity class.

    Frequency is the lowercase token count over article bodies; verbs absent
    from the corpus rank last. A lexicon smaller than requested is taken whole
    with a warning.
    """
    if not lexicon:
        raise ValueError("empty predicate lexicon")
    counts: dict[str, int] = {}
    vocab = {verb for verb, _ in lexicon}
    for art in handle.articles:
        for tok in _TOKEN_RE.findall(art.body.lower()):
            if tok in vocab:
                counts[tok] = counts.get(tok, 0) + 1
    out: list[PredicateEntry] = []
    for polarity in (1, -1):
        verbs = sorted(
            {v for v, p in lexicon if p == polarity},
            key=lambda v: (-counts.get(v, 0), v),
        )
        if len(verbs) < n_per_class:
            warnings.warn(
                f"lexicon has only {len(verbs)} verbs of polarity {polarity:+d}, "
                f"requested {n_per_class}; taking all"
            )
        out.extend(
            PredicateEntry(verb=v, polarity=polarity, frequency=counts.get(v, 0))
            for v in verbs[:n_per_class]
        )
    return out


def build_prompt(verb: str, swap_roles: bool = False) -> str:
    """Marker-normalized prompt placing the verb between the two entity roles."""
    if not verb or not verb.strip():
        raise ValueError("empty verb")
    r_subj, r_obj = ("[R2]", "[R1]") if swap_roles else ("[R1]", "[R2]")
    return f"[ENT] {r_subj} {verb.strip()} [ENT] {r_obj} ."


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity undefined for a zero-norm vector")
    return float(a @ b / (na * nb))


def _softmax(x: np.ndarray, temperature: float) -> np.ndarray:
    z = np.asarray(x, dtype=np.float64) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


class PredicateProber:
    """Caches prompt embeddings once; scoring is then stateless per input."""

    def __init__(
        self,
        predicates: list[PredicateEntry],
        encoder: ContextEncoder,
        top_k: int = 10,
        temperature: float = 1.0,
        average_orderings: bool = False,
    ):
        if len(predicates) < top_k:
            raise ValueError(f"need at least top_k={top_k} predicates, got {len(predicates)}")
        self.predicates = list(predicates)
        self.top_k = top_k
        self.temperature = temperature
        self.orderings = (False, True) if average_orderings else (False,)
        self._prompt_vecs = {
            swap: [encoder.embed_text(build_prompt(p.verb, swap)) for p in self.predicates]
            for swap in self.orderings
        }

    def score(self, embedding: SourceEmbedding) -> ProbeResult:
        vec = embedding.array()
        per_order = []
        top_for_report = None
        for swap in self.orderings:
            sims = np.array([_cosine(vec, pv) for pv in self._prompt_vecs[swap]])
            order = sorted(
                range(len(self.predicates)),
                key=lambda i: (-sims[i], self.predicates[i].verb),
            )[: self.top_k]
            weights = _softmax(sims[order], self.temperature)
            pols = np.array([self.predicates[i].polarity for i in order], dtype=np.float64)
            per_order.append(float(weights @ pols))
            if top_for_report is None:
                top_for_report = tuple(
                    (self.predicates[i].verb, float(w)) for i, w in zip(order, weights)
                )
        return ProbeResult(
            source_id=embedding.source_id,
            pair=embedding.pair,
            score=float(np.mean(per_order)),
            top_predicates=top_for_report,
        )


def probe_score(
    embedding: SourceEmbedding,
    predicates: list[PredicateEntry],
    encoder: ContextEncoder,
    top_k: int = 10,
    temperature: float = 1.0,
    average_orderings: bool = False,
) -> ProbeResult:
    prober = PredicateProber(predicates, encoder, top_k, temperature, average_orderings)
    return prober.score(embedding)
