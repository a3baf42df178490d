"""Text to token-id mapping with a reserved blank symbol.

Two modes. Character mode collects every distinct character of the
corpus (space included) so any text over that alphabet stays encodable.
Subword mode loads a unit inventory from a file, adds all corpus
characters as fallback units, segments each word independently by
greedy longest match, and joins words with a dedicated separator unit.

Id 0 is the blank symbol in both modes: it is never produced by
``encode`` and never legal inside a target sequence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CoverageError, DataError

BLANK_ID = 0
WORD_SEP = " "

_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Lowercase and collapse runs of whitespace to single spaces."""
    return _WS.sub(" ", text.strip()).lower()


@dataclass(frozen=True)
class Vocab:
    units: tuple[str, ...]  # units[0] is the blank placeholder
    mode: str  # "character" | "subword"
    _ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in ("character", "subword"):
            raise ValueError(f"unknown vocab mode {self.mode!r}")
        seen = {}
        for i, u in enumerate(self.units):
            if i == 0:
                continue
            if not u:
                raise ValueError("empty unit string")
            if u in seen:
                raise ValueError(f"duplicate unit {u!r}")
            seen[u] = i
        object.__setattr__(self, "_ids", seen)

    @property
    def size(self) -> int:
        """Number of real (non-blank) units."""
        return len(self.units) - 1

    def id_of(self, unit: str) -> int:
        return self._ids[unit]

    def __contains__(self, unit: str) -> bool:
        return unit in self._ids


def load_subword_file(path: str | Path) -> list[str]:
    """One unit per line, UTF-8; blank lines and duplicates are errors."""
    raw = Path(path).read_text(encoding="utf-8")
    units = raw.splitlines()
    if not units:
        raise DataError(f"subword file {path} is empty")
    seen = set()
    for line in units:
        if not line:
            raise DataError(f"subword file {path} contains a blank line")
        if line in seen:
            raise DataError(f"subword file {path} contains duplicate unit {line!r}")
        seen.add(line)
    return units


def build_vocab(corpus_texts: list[str], mode: str = "character",
                subword_file: str | Path | None = None) -> Vocab:
    """Collect the unit inventory for a corpus.

    Character mode: all distinct characters of the normalized corpus, in
    sorted order. Subword mode: file units in file order, then sorted
    fallback characters not already present, plus the word separator
    when the corpus has multi-word texts.
    """
    if not corpus_texts:
        raise DataError("cannot build a vocabulary from an empty corpus")
    normalized = [normalize_text(t) for t in corpus_texts]
    chars = sorted({ch for t in normalized for ch in t})

    if mode == "character":
        if subword_file is not None:
            raise ValueError("subword_file is only valid in subword mode")
        units = ("", *chars)
        return Vocab(units=units, mode="character")

    if mode == "subword":
        if subword_file is None:
            raise ValueError("subword mode requires a subword_file")
        file_units = load_subword_file(subword_file)
        units = list(file_units)
        have = set(units)
        if any(" " in t for t in normalized) and WORD_SEP not in have:
            units.append(WORD_SEP)
            have.add(WORD_SEP)
        for ch in chars:
            if ch not in have and ch != " ":
                units.append(ch)
                have.add(ch)
        return Vocab(units=("", *units), mode="subword")

    raise ValueError(f"unknown vocab mode {mode!r}")


def _greedy_segment(word: str, vocab: Vocab) -> list[int]:
    ids = []
    pos = 0
    n = len(word)
    while pos < n:
        match = None
        # longest match first; fallback single characters guarantee progress
        for end in range(n, pos, -1):
            piece = word[pos:end]
            if piece in vocab:
                match = piece
                break
        if match is None:
            raise CoverageError(word[pos])
        ids.append(vocab.id_of(match))
        pos += len(match)
    return ids


def encode(text: str, vocab: Vocab) -> list[int]:
    """Map text to token ids; never emits the blank id."""
    norm = normalize_text(text)
    if not norm:
        raise ValueError("text is empty after normalization")
    if vocab.mode == "character":
        ids = []
        for ch in norm:
            if ch not in vocab:
                raise CoverageError(ch)
            ids.append(vocab.id_of(ch))
        return ids
    sep = vocab.id_of(WORD_SEP) if WORD_SEP in vocab else None
    ids: list[int] = []
    for i, word in enumerate(norm.split(" ")):
        if i > 0:
            if sep is None:
                raise CoverageError(" ")
            ids.append(sep)
        ids.extend(_greedy_segment(word, vocab))
    return ids


def decode(tokens: list[int], vocab: Vocab) -> str:
    """Concatenate unit strings; inverse of encode on covered text."""
    out = []
    for t in tokens:
        t = int(t)
        if t == BLANK_ID:
            raise ValueError("blank id in a decoded sequence")
        if not (0 < t < len(vocab.units)):
            raise ValueError(f"token id {t} out of range")
        out.append(vocab.units[t])
    return "".join(out)
