"""Shared fixtures: synthetic corpora and a trained encoder, built once."""

from __future__ import annotations

import pytest

from newslens.analytics import pool_all
from newslens.corpus import Article, CorpusHandle, normalize_text, parse_timestamp
from newslens.contexts import extract_context_sentences
from newslens.encoder import ContextEncoder, EncoderConfig, sample_triplets, train
from newslens.entities import build_anchor_table_from_counts, top_k_entities
from newslens.synthetic import SyntheticSpec, build_xor_corpus, generate_corpus


def handle_from_records(records) -> CorpusHandle:
    articles = tuple(
        sorted(
            (
                Article(
                    article_id=r["id"],
                    source_id=r["source"],
                    published_at=parse_timestamp(r["date"]),
                    title=normalize_text(r.get("title", "")),
                    body=normalize_text(r["content"]),
                )
                for r in records
            ),
            key=lambda a: a.article_id,
        )
    )
    return CorpusHandle(articles)


class Study:
    """A generated corpus run through linking, extraction, training, pooling."""

    def __init__(self, corpus, seed, dim=32, buckets=2**13, epochs=3,
                 learning_rate=5e-4, encoder=None):
        self.corpus = corpus
        self.handle = handle_from_records(corpus.articles)
        self.table = build_anchor_table_from_counts(corpus.anchor_rows)
        self.catalog = top_k_entities(self.handle, self.table, k=100)
        self.sets = extract_context_sentences(self.handle, self.catalog, self.table)
        if encoder is None:
            config = EncoderConfig(
                dim=dim, buckets=buckets, epochs=epochs,
                learning_rate=learning_rate, seed=seed, triplets_per_anchor=1,
            )
            encoder = ContextEncoder(config)
            self.triplets = sample_triplets(self.sets, per_anchor=1, seed=seed)
            self.curve = train(encoder, self.triplets)
        self.encoder = encoder
        self.embeddings = pool_all(self.sets, encoder)
        self.labels3 = dict(corpus.groups)


@pytest.fixture(scope="session")
def bias_study() -> Study:
    """40 sources, 30 pairs, 5 planted with group-disjoint vocabularies."""
    return Study(
        generate_corpus(
            SyntheticSpec(seed=17, planted_sentences=24, fillers_per_sentence=6)
        ),
        seed=23,
    )


@pytest.fixture(scope="session")
def xor_study(bias_study) -> Study:
    """XOR-labeled variant, embedded with the bias study's trained encoder."""
    return Study(build_xor_corpus(seed=9), seed=9, encoder=bias_study.encoder)


@pytest.fixture(scope="session")
def holdout_sources() -> list[str]:
    return [
        "src-left-00", "src-left-01", "src-left-02",
        "src-right-00", "src-right-01", "src-right-02",
        "src-center-00", "src-center-01",
    ]
