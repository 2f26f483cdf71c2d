"""Synthetic polarized news corpora with known ground truth.

Every entity pair owns a filler vocabulary. For "planted" pairs the
vocabulary is sliced per group: left, center, and right sources draw from
disjoint thirds, so those pairs carry a recoverable group signal (three
separable clusters, one per group). All other pairs share their vocabulary
across groups and should show no divergence. The generator also emits the
anchor table, ideology labels, and a verb lexicon matching the corpus.
"""

from __future__ import annotations

import csv
import io
import random
import string
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

from .contexts import EntityPair

POSITIVE_VERBS = (
    "praised", "backed", "celebrated", "endorsed", "applauded", "supported",
    "welcomed", "championed", "honored", "admired", "encouraged", "defended",
    "commended", "embraced", "favored", "rewarded", "respected", "trusted",
    "uplifted", "reassured",
)
NEGATIVE_VERBS = (
    "condemned", "attacked", "blasted", "slammed", "criticized", "denounced",
    "accused", "blamed", "mocked", "rejected", "undermined", "betrayed",
    "threatened", "ridiculed", "distrusted", "smeared", "sabotaged",
    "punished", "dismissed", "deceived",
)

_SYLLABLES = (
    "bar", "den", "fol", "gar", "hel", "jor", "kal", "lim", "mon", "nar",
    "pol", "quen", "ris", "sat", "tur", "vel", "wex", "yor", "zan", "bri",
    "cor", "dul", "fen", "gos", "hin", "jas", "kip", "lor", "mer", "nov",
)


@dataclass
class SyntheticSpec:
    n_left: int = 15
    n_right: int = 15
    n_center: int = 10
    n_pairs: int = 30
    n_planted: int = 5
    planted_sentences: int = 16  # per (source, pair); above the heatmap threshold
    shared_sentences: int = 9  # per (source, pair); below it
    vocab_size: int = 24  # filler words per pair (planted pairs slice it per group)
    fillers_per_sentence: int = 5
    sentences_per_article: int = 10
    global_vocab: bool = False  # all pairs share one filler pool (chance baseline)
    verb_slot: bool = True
    seed: int = 0


@dataclass
class SyntheticCorpus:
    spec: SyntheticSpec
    articles: list[dict]
    labels: list[tuple[str, str, str]]  # (source_id, rating5, provenance)
    anchor_rows: list[tuple[str, str, int]]
    lexicon: list[tuple[str, str]]  # (verb, polarity word)
    pairs: list[EntityPair]
    planted: list[EntityPair]
    groups: dict[str, str]  # source -> left/right/center
    expected_counts: dict[tuple[str, EntityPair], int]

    @property
    def sources(self) -> list[str]:
        return sorted(self.groups)


def _entity_names(n: int, rng: random.Random) -> list[str]:
    names: list[str] = []
    seen = set()
    while len(names) < n:
        name = "".join(rng.choice(_SYLLABLES) for _ in range(3)).capitalize()
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


def _filler_words(n: int, rng: random.Random, taken: set[str]) -> list[str]:
    words: list[str] = []
    while len(words) < n:
        w = "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(5, 7)))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def _group_sources(spec: SyntheticSpec) -> dict[str, str]:
    groups = {}
    for i in range(spec.n_left):
        groups[f"src-left-{i:02d}"] = "left"
    for i in range(spec.n_right):
        groups[f"src-right-{i:02d}"] = "right"
    for i in range(spec.n_center):
        groups[f"src-center-{i:02d}"] = "center"
    return groups


def _rating5(group: str, index: int) -> str:
    if group == "center":
        return "center"
    return group if index % 2 == 0 else f"lean-{group}"


def generate_corpus(spec: SyntheticSpec) -> SyntheticCorpus:
    rng = random.Random(spec.seed)
    entities = _entity_names(2 * spec.n_pairs, rng)
    pairs = [EntityPair.of(entities[2 * i], entities[2 * i + 1]) for i in range(spec.n_pairs)]
    planted = pairs[: spec.n_planted]

    taken: set[str] = set()
    sides = ("left", "center", "right")
    if spec.global_vocab:
        pool = _filler_words(spec.vocab_size, rng, taken)
        vocab = {pair: {s: pool for s in sides} for pair in pairs}
    else:
        vocab = {}
        for pair in pairs:
            words = _filler_words(spec.vocab_size, rng, taken)
            if pair in planted:
                third = len(words) // 3
                vocab[pair] = {
                    "left": words[:third],
                    "center": words[third : 2 * third],
                    "right": words[2 * third :],
                }
            else:
                vocab[pair] = {s: words for s in sides}

    groups = _group_sources(spec)
    verbs = {
        "left": POSITIVE_VERBS,
        "right": NEGATIVE_VERBS,
        "center": POSITIVE_VERBS + NEGATIVE_VERBS,
    }

    def make_sentence(pair: EntityPair, side: str) -> str:
        words = [rng.choice(vocab[pair][side]) for _ in range(spec.fillers_per_sentence)]
        if spec.verb_slot:
            pool = verbs[side] if pair in planted else verbs["center"]
            words[0] = rng.choice(pool)
        e1, e2 = (pair.first, pair.second) if rng.random() < 0.5 else (pair.second, pair.first)
        cut = rng.randint(1, len(words) - 1)
        return f"{e1} {' '.join(words[:cut])} {e2} {' '.join(words[cut:])}."

    expected: dict[tuple[str, EntityPair], int] = {}
    per_source_sentences: dict[str, list[str]] = {s: [] for s in groups}
    for source in sorted(groups):
        group = groups[source]
        for pair in pairs:
            n_sent = spec.planted_sentences if pair in planted else spec.shared_sentences
            expected[(source, pair)] = n_sent
            for _ in range(n_sent):
                per_source_sentences[source].append(make_sentence(pair, group))

    articles: list[dict] = []
    for source in sorted(groups):
        sents = per_source_sentences[source]
        rng.shuffle(sents)
        for ai in range(0, len(sents), spec.sentences_per_article):
            chunk = sents[ai : ai + spec.sentences_per_article]
            idx = len(articles)
            articles.append(
                {
                    "id": f"art-{idx:05d}",
                    "source": source,
                    "date": (date(2020, 1, 1) + timedelta(days=idx % 360)).isoformat(),
                    "title": f"Bulletin {idx}",
                    "content": " ".join(chunk),
                }
            )

    labels = []
    counters = {"left": 0, "right": 0, "center": 0}
    for source in sorted(groups):
        group = groups[source]
        labels.append((source, _rating5(group, counters[group]), "allsides"))
        counters[group] += 1

    anchor_rows = [(name, name, 5) for name in sorted(entities)]
    lexicon = [(v, "positive") for v in POSITIVE_VERBS] + [(v, "negative") for v in NEGATIVE_VERBS]
    return SyntheticCorpus(
        spec=spec,
        articles=articles,
        labels=labels,
        anchor_rows=anchor_rows,
        lexicon=sorted(lexicon),
        pairs=pairs,
        planted=planted,
        groups=groups,
        expected_counts=expected,
    )


def build_xor_corpus(n_per_cell: int = 6, seed: int = 0) -> SyntheticCorpus:
    """Two signal pairs whose vocab halves encode two latent bits; the label
    is their XOR, so no linear readout of the pair blocks separates it."""
    spec = SyntheticSpec(
        n_left=0, n_right=0, n_center=0, n_pairs=4, n_planted=2,
        planted_sentences=16, shared_sentences=9, seed=seed,
    )
    rng = random.Random(seed)
    entities = _entity_names(2 * spec.n_pairs, rng)
    pairs = [EntityPair.of(entities[2 * i], entities[2 * i + 1]) for i in range(spec.n_pairs)]
    signal = pairs[:2]

    taken: set[str] = set()
    vocab = {}
    for pair in pairs:
        words = _filler_words(spec.vocab_size, rng, taken)
        half = len(words) // 2
        if pair in signal:
            vocab[pair] = {"0": words[:half], "1": words[half:]}
        else:
            vocab[pair] = {"0": words, "1": words}

    groups: dict[str, str] = {}
    bits: dict[str, tuple[int, int]] = {}
    idx = 0
    for b1 in (0, 1):
        for b2 in (0, 1):
            for _ in range(n_per_cell):
                sid = f"src-xor-{idx:02d}"
                groups[sid] = "left" if b1 == b2 else "right"
                bits[sid] = (b1, b2)
                idx += 1

    expected: dict[tuple[str, EntityPair], int] = {}
    per_source: dict[str, list[str]] = {s: [] for s in groups}

    def make_sentence(pair, key):
        words = [rng.choice(vocab[pair][key]) for _ in range(spec.fillers_per_sentence)]
        e1, e2 = (pair.first, pair.second) if rng.random() < 0.5 else (pair.second, pair.first)
        cut = rng.randint(1, len(words) - 1)
        return f"{e1} {' '.join(words[:cut])} {e2} {' '.join(words[cut:])}."

    for source in sorted(groups):
        b1, b2 = bits[source]
        for pair in pairs:
            n_sent = spec.planted_sentences if pair in signal else spec.shared_sentences
            expected[(source, pair)] = n_sent
            for j in range(n_sent):
                if pair == signal[0]:
                    key = str(b1)
                elif pair == signal[1]:
                    key = str(b2)
                else:
                    key = str(j % 2)
                per_source[source].append(make_sentence(pair, key))

    articles: list[dict] = []
    for source in sorted(groups):
        sents = per_source[source]
        rng.shuffle(sents)
        for ai in range(0, len(sents), spec.sentences_per_article):
            chunk = sents[ai : ai + spec.sentences_per_article]
            idx = len(articles)
            articles.append(
                {
                    "id": f"art-{idx:05d}",
                    "source": source,
                    "date": (date(2020, 1, 1) + timedelta(days=idx % 360)).isoformat(),
                    "title": f"Bulletin {idx}",
                    "content": " ".join(chunk),
                }
            )

    labels = [(s, groups[s], "allsides") for s in sorted(groups)]
    return SyntheticCorpus(
        spec=spec,
        articles=articles,
        labels=labels,
        anchor_rows=[(name, name, 5) for name in sorted(entities)],
        lexicon=[(v, "positive") for v in POSITIVE_VERBS] + [(v, "negative") for v in NEGATIVE_VERBS],
        pairs=pairs,
        planted=signal,
        groups=groups,
        expected_counts=expected,
    )


def fixture_spec(seed: int = 7) -> SyntheticSpec:
    """Small end-to-end fixture: ~10 sources, ~220 articles."""
    return SyntheticSpec(
        n_left=4, n_right=4, n_center=2, n_pairs=6, n_planted=2,
        planted_sentences=16, shared_sentences=9, sentences_per_article=3,
        seed=seed,
    )


def write_corpus_files(corpus: SyntheticCorpus, directory: str | Path) -> dict[str, Path]:
    """Write corpus.jsonl, labels.csv, anchors.tsv, and lexicon.csv."""
    import json

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": directory / "corpus.jsonl",
        "labels": directory / "labels.csv",
        "anchors": directory / "anchors.tsv",
        "lexicon": directory / "lexicon.csv",
    }
    with open(paths["corpus"], "w", encoding="utf-8") as fh:
        for art in corpus.articles:
            fh.write(json.dumps(art, sort_keys=True, ensure_ascii=False) + "\n")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source_id", "rating5", "provenance"])
    writer.writerows(corpus.labels)
    paths["labels"].write_text(buf.getvalue(), encoding="utf-8")
    with open(paths["anchors"], "w", encoding="utf-8") as fh:
        for anchor, title, count in corpus.anchor_rows:
            fh.write(f"{anchor}\t{title}\t{count}\n")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["verb", "polarity"])
    writer.writerows(corpus.lexicon)
    paths["lexicon"].write_text(buf.getvalue(), encoding="utf-8")
    return paths
