"""News article and source-label ingestion.

Articles arrive as JSON Lines with fields (id, source, date, title, content).
Source ideology labels arrive as CSV with header ``source_id,rating5,provenance``;
the 3-way rating is always derived from the 5-way one, never stored.
"""

from __future__ import annotations

import csv
import json
import re
import unicodedata
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path

from .fileio import jsonl_dumps, read_json, sha256_file, write_json

RATINGS5 = ("left", "lean-left", "center", "lean-right", "right")
RATINGS3 = ("left", "center", "right")
PROVENANCES = ("allsides", "mbfc", "other")

CORPUS_SCHEMA = "newslens.corpus.v1"

_WS_RUN = re.compile(r"\s+")
_DATE_ONLY = re.compile(r"^\d{4}-\d{2}-\d{2}$")


def normalize_text(text: str) -> str:
    """Unicode NFC plus whitespace-run collapse; keeps mention matching stable."""
    return _WS_RUN.sub(" ", unicodedata.normalize("NFC", text)).strip()


def parse_timestamp(value) -> int:
    """Accept epoch seconds, RFC-3339 strings, or bare ``YYYY-MM-DD`` dates.

    Date-only values mean midnight UTC. Returns epoch seconds (int, >= 0).
    """
    if isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        ts = int(value)
    elif isinstance(value, str):
        text = value.strip()
        if _DATE_ONLY.match(text):
            text += "T00:00:00+00:00"
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        try:
            dt = datetime.fromisoformat(text)
        except ValueError as exc:
            raise ValueError(f"unparseable date: {value!r}") from exc
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        ts = int(dt.timestamp())
    else:
        raise ValueError(f"not a timestamp: {value!r}")
    if ts < 0:
        raise ValueError(f"timestamp before epoch 0: {value!r}")
    return ts


@dataclass(frozen=True)
class Article:
    article_id: str
    source_id: str
    published_at: int
    title: str
    body: str


@dataclass(frozen=True)
class IngestError:
    line: int
    message: str


@dataclass(frozen=True)
class CorpusHandle:
    """Immutable view over a set of validated articles, sorted by article_id."""

    articles: tuple[Article, ...]
    errors: tuple[IngestError, ...] = ()

    @property
    def article_count(self) -> int:
        return len(self.articles)

    @cached_property
    def source_index(self) -> dict[str, tuple[str, ...]]:
        index: dict[str, list[str]] = {}
        for art in self.articles:
            index.setdefault(art.source_id, []).append(art.article_id)
        return {src: tuple(ids) for src, ids in sorted(index.items())}

    @cached_property
    def time_range(self) -> tuple[int, int] | None:
        if not self.articles:
            return None
        stamps = [a.published_at for a in self.articles]
        return (min(stamps), max(stamps))

    def __iter__(self):
        return iter(self.articles)


def _parse_record(obj: dict) -> Article:
    for field in ("id", "source", "date", "content"):
        if field not in obj or obj[field] in (None, ""):
            raise ValueError(f"missing required field '{field}'")
    article_id = str(obj["id"]).strip()
    if not article_id:
        raise ValueError("empty article id")
    body = normalize_text(str(obj["content"]))
    if not body:
        raise ValueError("empty body after whitespace normalization")
    return Article(
        article_id=article_id,
        source_id=normalize_text(str(obj["source"])),
        published_at=parse_timestamp(obj["date"]),
        title=normalize_text(str(obj.get("title", ""))),
        body=body,
    )


def load_articles(path: str | Path, format: str = "jsonl") -> CorpusHandle:
    """Load and validate a JSONL article file.

    Invalid records are counted and reported on the returned handle's
    ``errors`` tuple (with 1-based line numbers), never silently dropped.
    Whitespace-only lines are ignored. An unreadable file raises.
    """
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format: {format!r}")
    articles: list[Article] = []
    errors: list[IngestError] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("record is not a JSON object")
                art = _parse_record(obj)
                if art.article_id in seen:
                    raise ValueError(f"duplicate article id {art.article_id!r}")
            except ValueError as exc:
                errors.append(IngestError(lineno, str(exc)))
                continue
            seen.add(art.article_id)
            articles.append(art)
    articles.sort(key=lambda a: a.article_id)
    return CorpusHandle(tuple(articles), tuple(errors))


def filter_time_window(handle: CorpusHandle, start: int, end: int) -> CorpusHandle:
    """Keep articles with start <= published_at < end."""
    if start > end:
        raise ValueError(f"inverted time window: start={start} > end={end}")
    kept = tuple(a for a in handle.articles if start <= a.published_at < end)
    return replace(handle, articles=kept)


def aggregate_labels(rating5: str) -> str:
    """Collapse the 5-way ideology rating onto {left, center, right}."""
    if rating5 in ("left", "lean-left"):
        return "left"
    if rating5 == "center":
        return "center"
    if rating5 in ("lean-right", "right"):
        return "right"
    raise ValueError(f"unknown 5-way rating: {rating5!r}")


@dataclass(frozen=True)
class SourceLabel:
    source_id: str
    rating5: str
    provenance: str

    def __post_init__(self):
        if self.rating5 not in RATINGS5:
            raise ValueError(f"unknown 5-way rating: {self.rating5!r}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance: {self.provenance!r}")

    @property
    def rating3(self) -> str:
        return aggregate_labels(self.rating5)


def load_labels(path: str | Path) -> tuple[SourceLabel, ...]:
    """Load the label CSV. Header required; one label per (source, provenance)."""
    labels: list[SourceLabel] = []
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        reader = csv.DictReader(lines)
        required = {"source_id", "rating5", "provenance"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(
                f"label CSV must have header with columns {sorted(required)}"
            )
        for row in reader:
            label = SourceLabel(
                source_id=normalize_text(row["source_id"]),
                rating5=row["rating5"].strip(),
                provenance=row["provenance"].strip(),
            )
            key = (label.source_id, label.provenance)
            if key in seen:
                raise ValueError(f"duplicate label for {key}")
            seen.add(key)
            labels.append(label)
    return tuple(labels)


def labels_by_source(
    labels, prefer: tuple[str, ...] = ("allsides", "mbfc", "other")
) -> dict[str, SourceLabel]:
    """Pick one label per source, by provenance preference order."""
    rank = {p: i for i, p in enumerate(prefer)}
    best: dict[str, SourceLabel] = {}
    for lab in labels:
        cur = best.get(lab.source_id)
        if cur is None or rank.get(lab.provenance, 99) < rank.get(cur.provenance, 99):
            best[lab.source_id] = lab
    return best


def save_corpus(handle: CorpusHandle, directory: str | Path) -> Path:
    """Persist the normalized corpus: articles.jsonl plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    articles_path = directory / "articles.jsonl"
    with open(articles_path, "w", encoding="utf-8") as fh:
        for art in handle.articles:
            fh.write(
                jsonl_dumps(
                    {
                        "id": art.article_id,
                        "source": art.source_id,
                        "date": art.published_at,
                        "title": art.title,
                        "content": art.body,
                    }
                )
                + "\n"
            )
    manifest = {
        "schema": CORPUS_SCHEMA,
        "article_count": handle.article_count,
        "source_count": len(handle.source_index),
        "time_range": list(handle.time_range) if handle.time_range else None,
        "ingest_errors": len(handle.errors),
        "checksum": sha256_file(articles_path),
    }
    write_json(directory / "manifest.json", manifest)
    return directory


def load_corpus(directory: str | Path) -> CorpusHandle:
    """Load a persisted corpus directory, verifying the manifest checksum."""
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    articles_path = directory / "articles.jsonl"
    if manifest.get("checksum") != sha256_file(articles_path):
        raise ValueError(f"corpus checksum mismatch under {directory}")
    handle = load_articles(articles_path)
    if handle.errors:
        raise ValueError(f"persisted corpus contains invalid records: {handle.errors[:3]}")
    return handle
