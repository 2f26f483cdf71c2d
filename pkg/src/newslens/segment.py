"""Rule-based sentence segmentation with an abbreviation stop-list.

A boundary is a run of ``.``, ``!`` or ``?`` followed by whitespace and an
uppercase letter, unless the token ending at a lone period is a known
abbreviation, a dotted acronym ("U.S."), or a single-letter initial.
"""

from __future__ import annotations

import re

# Lowercased tokens (trailing period included) that never end a sentence.
ABBREVIATIONS = frozenset(
    {
        "mr.", "mrs.", "ms.", "dr.", "prof.", "rev.", "hon.", "st.", "mt.",
        "gen.", "sen.", "rep.", "gov.", "pres.", "sec.", "amb.", "capt.",
        "sgt.", "lt.", "col.", "maj.", "adm.", "cmdr.", "cpl.", "pvt.",
        "jr.", "sr.", "inc.", "ltd.", "corp.", "co.", "dept.", "univ.",
        "assn.", "bros.", "dist.", "est.", "vs.", "etc.", "e.g.", "i.e.",
        "cf.", "al.", "no.", "nos.", "vol.", "pp.", "p.", "fig.", "ch.",
        "sec.", "approx.", "jan.", "feb.", "mar.", "apr.", "jun.", "jul.",
        "aug.", "sep.", "sept.", "oct.", "nov.", "dec.", "mon.", "tue.",
        "wed.", "thu.", "fri.", "sat.", "sun.", "ave.", "blvd.", "rd.",
    }
)

_TERMINATOR = re.compile(r"[.!?]+")
_DOTTED_ACRONYM = re.compile(r"^(?:[A-Za-z]\.)+$")
_INITIAL = re.compile(r"^[A-Z]\.$")


def _token_ending_at(text: str, end: int) -> str:
    start = end
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    return text[start:end]


def _is_boundary(text: str, match: re.Match) -> bool:
    after = match.end()
    # Require whitespace then an uppercase letter.
    i = after
    if i >= len(text) or not text[i].isspace():
        return False
    while i < len(text) and text[i].isspace():
        i += 1
    if i >= len(text) or not text[i].isupper():
        return False
    if match.group() != ".":
        return True
    token = _token_ending_at(text, after)
    if token.lower() in ABBREVIATIONS:
        return False
    if _DOTTED_ACRONYM.match(token) or _INITIAL.match(token):
        return False
    return True


def split_spans(text: str) -> list[tuple[int, int]]:
    """Sentence spans (start, end) into ``text``; gaps are whitespace only."""
    if not text.strip():
        return []
    spans: list[tuple[int, int]] = []
    start = 0
    while start < len(text) and text[start].isspace():
        start += 1
    for match in _TERMINATOR.finditer(text):
        if match.start() < start:
            continue
        if _is_boundary(text, match):
            spans.append((start, match.end()))
            start = match.end()
            while start < len(text) and text[start].isspace():
                start += 1
    tail_end = len(text.rstrip())
    if start < tail_end:
        spans.append((start, tail_end))
    return spans


def split_sentences(body: str) -> list[str]:
    return [body[s:e] for s, e in split_spans(body)]
