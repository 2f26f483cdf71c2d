"""Anchor-statistics entity linking.

A mention string maps to candidate page titles with link counts, so the link
decision is the argmax of the conditional link probability. The same table
doubles as the gazetteer for mention detection: matching is token-aligned,
leftmost-longest, case-sensitive on the first character and case-insensitive
on the remainder, and only surfaces starting with an uppercase letter or a
digit qualify.
"""

from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

from .corpus import CorpusHandle, normalize_text
from .fileio import read_json, sha256_file, write_json
from .segment import split_sentences

logger = logging.getLogger(__name__)

ANCHORS_SCHEMA = "newslens.anchors.v1"
CATALOG_SCHEMA = "newslens.catalog.v1"

DEFAULT_PRUNE_TOTAL = 2
DEFAULT_CATALOG_SIZE = 1000

# Edge punctuation tolerated around mention tokens in running text.
_LEAD_TRIM = "\"'‘’“”«([{"
_TRAIL_TRIM = "\"'‘’“”»)]}.,;:!?"


def fold_mention(mention: str) -> str:
    """Canonical mention key: NFC, single-spaced, first char exact, rest lowered."""
    m = normalize_text(mention)
    if not m:
        return ""
    return m[0] + m[1:].lower()


@dataclass(frozen=True)
class EntityMention:
    surface: str
    span: tuple[int, int]
    entity: str | None
    article_id: str = ""
    sentence_index: int = -1


@dataclass(frozen=True)
class AnchorTable:
    """mention key -> {entity title -> link count}; totals derived."""

    entries: dict[str, dict[str, int]]
    prune_total: int = DEFAULT_PRUNE_TOTAL
    skipped: int = 0

    @cached_property
    def totals(self) -> dict[str, int]:
        return {m: sum(c.values()) for m, c in self.entries.items()}

    @cached_property
    def _trie(self) -> dict:
        root: dict = {}
        for mention in self.entries:
            node = root
            for tok in mention.split(" "):
                node = node.setdefault(tok, {})
            node[""] = mention  # terminal marker holds the full key
        return root

    @cached_property
    def max_tokens(self) -> int:
        return max((m.count(" ") + 1 for m in self.entries), default=0)

    def __len__(self) -> int:
        return len(self.entries)


def build_anchor_table(link_triples, prune_total: int = DEFAULT_PRUNE_TOTAL) -> AnchorTable:
    """Count (source page, anchor text, target title) triples into a table.

    Malformed triples (wrong arity, empty anchor or target) are skipped and
    counted. Mentions whose total count falls below ``prune_total`` are pruned.
    """
    counts: dict[str, dict[str, int]] = {}
    skipped = 0
    for i, triple in enumerate(link_triples):
        try:
            _source, anchor, target = triple
            key = fold_mention(str(anchor))
            title = normalize_text(str(target))
            if not key or not title:
                raise ValueError("empty anchor or target")
        except (TypeError, ValueError) as exc:
            skipped += 1
            logger.debug("skipping malformed link triple %d: %s", i, exc)
            continue
        bucket = counts.setdefault(key, {})
        bucket[title] = bucket.get(title, 0) + 1
    return _finish_table(counts, prune_total, skipped)


def build_anchor_table_from_counts(rows, prune_total: int = DEFAULT_PRUNE_TOTAL) -> AnchorTable:
    """Same as build_anchor_table but from pre-aggregated (anchor, target, count)."""
    counts: dict[str, dict[str, int]] = {}
    skipped = 0
    for i, row in enumerate(rows):
        try:
            anchor, target, count = row
            key = fold_mention(str(anchor))
            title = normalize_text(str(target))
            n = int(count)
            if not key or not title or n <= 0:
                raise ValueError("empty anchor/target or nonpositive count")
        except (TypeError, ValueError) as exc:
            skipped += 1
            logger.debug("skipping malformed count row %d: %s", i, exc)
            continue
        bucket = counts.setdefault(key, {})
        bucket[title] = bucket.get(title, 0) + n
    return _finish_table(counts, prune_total, skipped)


def _finish_table(counts, prune_total, skipped) -> AnchorTable:
    kept = {m: dict(sorted(c.items())) for m, c in sorted(counts.items())
            if sum(c.values()) >= prune_total}
    return AnchorTable(entries=kept, prune_total=prune_total, skipped=skipped)


def read_anchor_tsv(path: str | Path, format: str = "auto", prune_total: int = DEFAULT_PRUNE_TOTAL) -> AnchorTable:
    """Read link statistics from TSV.

    Accepted layouts: ``anchor \\t target \\t count`` (pre-aggregated) and
    ``source \\t anchor \\t target`` (raw). ``auto`` decides per file: if every
    third column parses as an integer the file is treated as pre-aggregated.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            rows.append(parts)
    if format == "auto":
        def _is_count(p):
            return len(p) == 3 and p[2].strip().lstrip("-").isdigit()
        format = "aggregated" if rows and all(_is_count(p) for p in rows) else "raw"
    if format == "aggregated":
        return build_anchor_table_from_counts(
            ((p[0], p[1], p[2]) if len(p) == 3 else p for p in rows), prune_total
        )
    if format == "raw":
        return build_anchor_table(
            ((p[0], p[1], p[2]) if len(p) == 3 else p for p in rows), prune_total
        )
    raise ValueError(f"unknown anchor TSV format: {format!r}")


def save_anchor_table(table: AnchorTable, path: str | Path) -> None:
    """Persist as sorted TSV plus a sibling JSON manifest; round-trips exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for mention in sorted(table.entries):
            for title, count in sorted(table.entries[mention].items()):
                fh.write(f"{mention}\t{title}\t{count}\n")
    write_json(
        path.with_suffix(path.suffix + ".manifest.json"),
        {
            "schema": ANCHORS_SCHEMA,
            "mention_count": len(table.entries),
            "row_count": sum(len(c) for c in table.entries.values()),
            "prune_total": table.prune_total,
            "skipped_records": table.skipped,
            "checksum": sha256_file(path),
        },
    )


def load_anchor_table(path: str | Path) -> AnchorTable:
    manifest_path = Path(str(path) + ".manifest.json")
    prune_total = DEFAULT_PRUNE_TOTAL
    if manifest_path.exists():
        prune_total = read_json(manifest_path).get("prune_total", DEFAULT_PRUNE_TOTAL)
    # Persisted tables are already pruned; reload verbatim, keep the recorded threshold.
    table = read_anchor_tsv(path, format="aggregated", prune_total=1)
    return replace(table, prune_total=prune_total)


def link_mention(mention: str, table: AnchorTable) -> str | None:
    """argmax over link counts; ties broken lexicographically by title."""
    candidates = table.entries.get(fold_mention(mention))
    if not candidates:
        return None
    return min(candidates, key=lambda t: (-candidates[t], t))


def _token_variants(token: str, start: int):
    """(text, start, end) variants of a token with edge punctuation trimmed."""
    end = start + len(token)
    variants = {(token, start, end)}
    lead = token.lstrip(_LEAD_TRIM)
    lstart = end - len(lead)
    if lead:
        variants.add((lead, lstart, end))
        trail = lead.rstrip(_TRAIL_TRIM)
        if trail:
            variants.add((trail, lstart, lstart + len(trail)))
    trail_only = token.rstrip(_TRAIL_TRIM)
    if trail_only:
        variants.add((trail_only, start, start + len(trail_only)))
    return [(v, s, e) for v, s, e in variants if v]


def detect_mentions(sentence: str, table: AnchorTable) -> list[EntityMention]:
    """Non-overlapping, leftmost-longest, token-aligned gazetteer matches.

    Only surfaces beginning with an uppercase letter or digit are kept; each
    match is resolved through :func:`link_mention`.
    """
    tokens = [(m.group(), m.start()) for m in re.finditer(r"\S+", sentence)]
    if not tokens or not table.entries:
        return []
    variants = [_token_variants(tok, start) for tok, start in tokens]
    root = table._trie
    max_len = table.max_tokens
    mentions: list[EntityMention] = []
    i = 0
    while i < len(tokens):
        best = None  # (n_tokens, surface_len, start, end)
        states = [(root, None, None)]
        for depth in range(min(max_len, len(tokens) - i)):
            next_states = []
            for node, span_start, _ in states:
                for text, vs, ve in variants[i + depth]:
                    # First mention token keeps its first character exact;
                    # everything after is case-insensitive.
                    key = fold_mention(text) if depth == 0 else text.lower()
                    child = node.get(key)
                    if child is None:
                        continue
                    start = span_start if span_start is not None else vs
                    next_states.append((child, start, ve))
                    if "" in child:
                        surface = sentence[start:ve]
                        if surface and (surface[0].isupper() or surface[0].isdigit()):
                            cand = (depth + 1, len(surface), start, ve)
                            if best is None or cand > best:
                                best = cand
            if not next_states:
                break
            states = next_states
        if best is not None:
            n_tok, _, start, end = best
            surface = sentence[start:end]
            mentions.append(
                EntityMention(surface=surface, span=(start, end),
                              entity=link_mention(surface, table))
            )
            i += n_tok
        else:
            i += 1
    return mentions


@dataclass(frozen=True)
class EntityCatalog:
    """Top-K corpus entities by resolved-mention frequency."""

    entries: tuple[tuple[str, int], ...]
    cutoff: int

    @cached_property
    def titles(self) -> frozenset[str]:
        return frozenset(t for t, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, title: str) -> bool:
        return title in self.titles


def top_k_entities(
    handle: CorpusHandle,
    table: AnchorTable,
    k: int = DEFAULT_CATALOG_SIZE,
    include_titles: bool = True,
) -> EntityCatalog:
    """Count resolved mentions over the whole corpus and keep the k most frequent.

    Ties break lexicographically by title. Article titles count as one extra
    sentence each when ``include_titles`` is set.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    freq: dict[str, int] = {}
    for art in handle.articles:
        units = []
        if include_titles and art.title:
            units.append(art.title)
        units.extend(split_sentences(art.body))
        for sent in units:
            for m in detect_mentions(sent, table):
                if m.entity is not None:
                    freq[m.entity] = freq.get(m.entity, 0) + 1
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    return EntityCatalog(entries=tuple(ranked[:k]), cutoff=k)


def save_catalog(catalog: EntityCatalog, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rank", "title", "frequency"])
    for rank, (title, frequency) in enumerate(catalog.entries, start=1):
        writer.writerow([rank, title, frequency])
    path.write_text(f"# schema={CATALOG_SCHEMA}\n" + buf.getvalue(), encoding="utf-8")


def load_catalog(path: str | Path) -> EntityCatalog:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(ln for ln in fh if not ln.startswith("#"))
        header = next(reader)
        if header != ["rank", "title", "frequency"]:
            raise ValueError(f"unexpected catalog header: {header}")
        for row in reader:
            rows.append((row[1], int(row[2])))
    return EntityCatalog(entries=tuple(rows), cutoff=max(len(rows), 1))
