"""Sentence segmentation with character spans, and tokenisation."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path


@dataclass(frozen=True)
class Token:
    surface: str
    begin: int
    end: int

    @property
    def norm(self) -> str:
        return self.surface.lower()


@dataclass
class Sentence:
    report_id: str
    index: int
    begin: int
    end: int
    text: str
    tokens: list[Token] = field(default_factory=list)


# digits joined by '-' or '.', a word, or a single punctuation mark
_TOKEN_RE = re.compile(r"\d+(?:[.\-]\d+)+|\w+|[^\w\s]")
_HEADER_ONLY = re.compile(r"^[ \t]*([A-Z][A-Z0-9 /&-]*[A-Z0-9])[ \t]*:?[ \t]*$")
_HEADER_PREFIX = re.compile(r"^[ \t]*([A-Z][A-Z /&-]*[A-Z]):")
_TERMINATOR = re.compile(r"[.!?]+")


def tokenize(text: str, offset: int = 0) -> list[Token]:
    """Whitespace/punctuation tokenisation; offsets are shifted by ``offset``."""
    return [Token(m.group(), m.start() + offset, m.end() + offset) for m in _TOKEN_RE.finditer(text)]


def load_abbreviations(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        return _default_abbreviations()
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(line.strip().lower() for line in lines if line.strip())


@lru_cache(maxsize=1)
def _default_abbreviations() -> frozenset[str]:
    text = resources.files("radfollow").joinpath("data/abbreviations.txt").read_text(encoding="utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


def _is_header(line: str) -> bool:
    m = _HEADER_ONLY.match(line)
    return m is not None and sum(c.isalpha() for c in m.group(1)) >= 3


def _blocks(text: str) -> list[tuple[int, int]]:
    """Ranges of running text between blank lines and section headers."""
    blocks = []
    start = None
    pos = 0
    for line in text.splitlines(keepends=True):
        line_end = pos + len(line)
        body = line.rstrip("\r\n")
        if not body.strip() or _is_header(body):
            if start is not None:
                blocks.append((start, pos))
                start = None
        else:
            m = _HEADER_PREFIX.match(body)
            if m is not None:
                if start is not None:
                    blocks.append((start, pos))
                start = pos + m.end()
            elif start is None:
                start = pos
        pos = line_end
    if start is not None:
        blocks.append((start, len(text)))
    return blocks


def _split_block(text: str, begin: int, end: int, abbrevs: frozenset[str]) -> list[tuple[int, int]]:
    cuts = []
    for m in _TERMINATOR.finditer(text, begin, end):
        p = m.end()
        if p >= end:
            continue
        q = p
        while q < end and text[q].isspace():
            q += 1
        if q == p:
            continue
        gap = text[p:q]
        if q < end and "\n" not in gap and not text[q].isupper():
            continue
        if m.group().endswith("."):
            ws = max(text.rfind(" ", begin, m.start()), text.rfind("\n", begin, m.start()), text.rfind("\t", begin, m.start()))
            word = text[ws + 1 : p].lstrip("([\"'").lower()
            if word in abbrevs:
                continue
        cuts.append(p)
    pieces = []
    prev = begin
    for c in cuts + [end]:
        pieces.append((prev, c))
        prev = c
    return pieces


def sentence_spans(text: str, abbreviations: frozenset[str] | None = None) -> list[tuple[int, int]]:
    abbrevs = _default_abbreviations() if abbreviations is None else abbreviations
    spans = []
    for b, e in _blocks(text):
        for pb, pe in _split_block(text, b, e, abbrevs):
            while pb < pe and text[pb].isspace():
                pb += 1
            while pe > pb and text[pe - 1].isspace():
                pe -= 1
            if pb < pe:
                spans.append((pb, pe))
    return spans


def split_sentences(text: str, report_id: str = "", abbreviations: frozenset[str] | None = None) -> list[Sentence]:
    """Segment ``text`` into tokenised sentences.

    Breaks at ``.``/``!``/``?`` followed by whitespace and an uppercase
    letter, or by a newline; at blank lines; and around ALL-CAPS section
    headers (``IMPRESSION``, ``FINDINGS:``), which are not emitted.
    A period closing a known abbreviation never breaks.
    """
    out = []
    for i, (b, e) in enumerate(sentence_spans(text, abbreviations)):
        out.append(Sentence(report_id, i, b, e, text[b:e], tokenize(text[b:e], b)))
    return out
