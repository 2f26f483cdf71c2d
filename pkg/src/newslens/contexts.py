"""Pair-context extraction: find sentences co-mentioning two catalog entities
and mask them into entity-agnostic training text.

Each emitted sentence carries exactly two ``[ENT]`` masks followed by role
tokens: ``[R1]`` marks the pair's canonical (lexicographically first) entity
and ``[R2]`` the second, regardless of textual order, so the roles stay
comparable across sentences and sources. Repeat mentions of either entity are
masked with a bare ``[ENT]``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import combinations
from pathlib import Path

from .corpus import CorpusHandle
from .entities import AnchorTable, EntityCatalog, EntityMention, detect_mentions
from .fileio import jsonl_dumps
from .segment import split_sentences

CONTEXTS_SCHEMA = "newslens.contexts.v1"

MASK = "[ENT]"
ROLE1 = "[R1]"
ROLE2 = "[R2]"

MAX_ENTITIES_PER_SENTENCE = 10
MIN_MASKED_TOKENS = 5


@dataclass(frozen=True, order=True)
class EntityPair:
    first: str
    second: str

    def __post_init__(self):
        if self.first >= self.second:
            raise ValueError(
                f"pair not canonical: {self.first!r} must sort before {self.second!r}"
            )

    @classmethod
    def of(cls, a: str, b: str) -> "EntityPair":
        if a == b:
            raise ValueError(f"pair entities must differ: {a!r}")
        return cls(min(a, b), max(a, b))

    def __contains__(self, title: str) -> bool:
        return title == self.first or title == self.second

    def __str__(self) -> str:
        return f"{self.first}||{self.second}"


def validate_masked_text(text: str) -> None:
    tokens = text.split()
    for role in (ROLE1, ROLE2):
        positions = [i for i, t in enumerate(tokens) if t == role]
        if len(positions) != 1:
            raise ValueError(f"masked text must contain exactly one {role}: {text!r}")
        pos = positions[0]
        if pos == 0 or tokens[pos - 1] != MASK:
            raise ValueError(f"{role} must immediately follow {MASK}: {text!r}")


@dataclass(frozen=True)
class ContextSentence:
    source_id: str
    pair: EntityPair
    masked_text: str
    article_id: str
    published_at: int
    from_title: bool = False

    def __post_init__(self):
        validate_masked_text(self.masked_text)


@dataclass(frozen=True)
class ContextSet:
    source_id: str
    pair: EntityPair
    sentences: tuple[ContextSentence, ...]

    def __post_init__(self):
        if not self.sentences:
            raise ValueError("a context set needs at least one sentence")
        for s in self.sentences:
            if s.source_id != self.source_id or s.pair != self.pair:
                raise ValueError("context set members must share (source, pair)")

    def __len__(self) -> int:
        return len(self.sentences)


def mask_pair(
    sentence: str,
    mention1: EntityMention,
    mention2: EntityMention,
    extra_mentions: tuple[EntityMention, ...] = (),
) -> str:
    """Replace the two role-bearing mentions and any repeats of their entities.

    ``mention1``/``mention2`` are the first mentions of the two pair entities;
    role tokens follow canonical entity order, not textual order.
    """
    if mention1.entity is None or mention2.entity is None:
        raise ValueError("both role mentions must be resolved")
    pair = EntityPair.of(mention1.entity, mention2.entity)
    repl: list[tuple[tuple[int, int], str]] = []
    for m in (mention1, mention2):
        role = ROLE1 if m.entity == pair.first else ROLE2
        repl.append((m.span, f"{MASK} {role}"))
    for m in extra_mentions:
        if m.entity not in pair:
            raise ValueError(f"extra mention {m.surface!r} is not a pair entity")
        repl.append((m.span, MASK))
    spans = sorted(r[0] for r in repl)
    for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
        if s2 < e1:
            raise ValueError(f"overlapping mention spans: {(s1, e1)} and {(s2, e2)}")
    out = sentence
    for (start, end), text in sorted(repl, key=lambda r: -r[0][0]):
        if out[start:end] != sentence[start:end]:
            raise ValueError("mention spans do not match sentence text")
        out = out[:start] + text + out[end:]
    return out


def sentence_pair_contexts(
    sentence: str,
    mentions: list[EntityMention],
    catalog: EntityCatalog,
    max_entities: int = MAX_ENTITIES_PER_SENTENCE,
    min_tokens: int = MIN_MASKED_TOKENS,
) -> list[tuple[EntityPair, str]]:
    """All (pair, masked text) emissions for one sentence."""
    resolved = [m for m in mentions if m.entity is not None and m.entity in catalog]
    order: list[str] = []
    by_entity: dict[str, list[EntityMention]] = {}
    for m in resolved:
        if m.entity not in by_entity:
            order.append(m.entity)
        by_entity.setdefault(m.entity, []).append(m)
    # Cap combinatorial blowup at the first max_entities distinct entities.
    order = order[:max_entities]
    out: list[tuple[EntityPair, str]] = []
    for a, b in combinations(order, 2):
        pair = EntityPair.of(a, b)
        first_a, first_b = by_entity[a][0], by_entity[b][0]
        extras = tuple(by_entity[a][1:] + by_entity[b][1:])
        masked = mask_pair(sentence, first_a, first_b, extras)
        if len(masked.split()) < min_tokens:
            continue
        out.append((pair, masked))
    return out


def _article_contexts(art, catalog, table, include_titles, max_entities, min_tokens):
    units: list[tuple[int, str, bool]] = []
    if include_titles and art.title:
        units.append((0, art.title, True))
    units.extend((i + 1, s, False) for i, s in enumerate(split_sentences(art.body)))
    rows = []
    for sent_idx, sentence, from_title in units:
        mentions = detect_mentions(sentence, table)
        for pair, masked in sentence_pair_contexts(
            sentence, mentions, catalog, max_entities, min_tokens
        ):
            rows.append(
                (
                    sent_idx,
                    ContextSentence(
                        source_id=art.source_id,
                        pair=pair,
                        masked_text=masked,
                        article_id=art.article_id,
                        published_at=art.published_at,
                        from_title=from_title,
                    ),
                )
            )
    return rows


def extract_context_sentences(
    handle: CorpusHandle,
    catalog: EntityCatalog,
    table: AnchorTable,
    include_titles: bool = True,
    max_entities: int = MAX_ENTITIES_PER_SENTENCE,
    min_tokens: int = MIN_MASKED_TOKENS,
    threads: int = 1,
) -> list[ContextSet]:
    """Emit one ContextSentence per (sentence, unordered entity pair), grouped
    into ContextSets keyed by (source, pair).

    Output is deterministic: sets sorted by (source, pair), members by
    (article_id, sentence index).
    """
    if len(catalog) == 0:
        raise ValueError("entity catalog is empty")
    from .parallel import chunked_map

    per_article = chunked_map(
        lambda art: _article_contexts(
            art, catalog, table, include_titles, max_entities, min_tokens
        ),
        handle.articles,
        threads=threads,
    )
    groups: dict[tuple[str, EntityPair], list[tuple[str, int, ContextSentence]]] = {}
    for art, rows in zip(handle.articles, per_article):
        for sent_idx, cs in rows:
            groups.setdefault((cs.source_id, cs.pair), []).append(
                (art.article_id, sent_idx, cs)
            )
    sets = []
    for (source_id, pair), rows in sorted(groups.items()):
        rows.sort(key=lambda r: (r[0], r[1]))
        sets.append(
            ContextSet(source_id=source_id, pair=pair,
                       sentences=tuple(cs for _, _, cs in rows))
        )
    return sets


def write_contexts(sets: list[ContextSet], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(jsonl_dumps({"_schema": CONTEXTS_SCHEMA}) + "\n")
        for cset in sets:
            for s in cset.sentences:
                fh.write(
                    jsonl_dumps(
                        {
                            "source": s.source_id,
                            "e1": s.pair.first,
                            "e2": s.pair.second,
                            "masked_text": s.masked_text,
                            "article_id": s.article_id,
                            "date": s.published_at,
                            "title": s.from_title,
                        }
                    )
                    + "\n"
                )


def read_contexts(path: str | Path) -> list[ContextSet]:
    groups: dict[tuple[str, EntityPair], list[ContextSentence]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "_schema" in obj:
                if obj["_schema"] != CONTEXTS_SCHEMA:
                    raise ValueError(f"unexpected contexts schema: {obj['_schema']}")
                continue
            cs = ContextSentence(
                source_id=obj["source"],
                pair=EntityPair.of(obj["e1"], obj["e2"]),
                masked_text=obj["masked_text"],
                article_id=obj["article_id"],
                published_at=int(obj["date"]),
                from_title=bool(obj.get("title", False)),
            )
            groups.setdefault((cs.source_id, cs.pair), []).append(cs)
    return [
        ContextSet(source_id=k[0], pair=k[1], sentences=tuple(v))
        for k, v in sorted(groups.items())
    ]
