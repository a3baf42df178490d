"""Manifests, OOV word extraction, subset construction, weighted sampling.

A manifest is an ordered collection of utterances, each holding an id, a
normalized transcript, and a reference to a feature file. On disk it is
a UTF-8 TSV with one utterance per line (id, features path, transcript);
'#' lines are comments and feature paths are stored relative to the
manifest's directory so a corpus tree can be moved or compared byte for
byte.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DataError
from .tokenizer import normalize_text


@dataclass(frozen=True)
class Utterance:
    id: str
    text: str
    features_path: str


class Manifest:
    """Ordered utterances with unique ids."""

    def __init__(self, utterances: list[Utterance], base_dir: str | Path = "."):
        self.base_dir = Path(base_dir)
        self.utterances = list(utterances)
        ids = [u.id for u in self.utterances]
        if len(set(ids)) != len(ids):
            dup = [i for i, n in Counter(ids).items() if n > 1]
            raise DataError(f"duplicate utterance ids: {dup[:5]}")
        for u in self.utterances:
            if not u.text:
                raise DataError(f"utterance {u.id} has an empty transcript")
        self._by_id = {u.id: u for u in self.utterances}

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self) -> Iterator[Utterance]:
        return iter(self.utterances)

    def __getitem__(self, i: int) -> Utterance:
        return self.utterances[i]

    def by_id(self, utt_id: str) -> Utterance:
        return self._by_id[utt_id]

    def ids(self) -> set[str]:
        return set(self._by_id)

    def texts(self) -> list[str]:
        return [u.text for u in self.utterances]

    def feature_file(self, utt: Utterance) -> Path:
        return self.base_dir / utt.features_path


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    utterances = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        utt_id, feat, text = parts
        utterances.append(Utterance(id=utt_id, text=normalize_text(text), features_path=feat))
    return Manifest(utterances, base_dir=path.parent)


def save_manifest(manifest: Manifest, path: str | Path):
    """Write the TSV, re-expressing feature paths relative to its location."""
    path = Path(path)
    target = path.parent.resolve()
    lines = []
    for u in manifest:
        feat = (manifest.base_dir / u.features_path).resolve()
        rel = Path(os.path.relpath(feat, target)).as_posix()
        lines.append(f"{u.id}\t{rel}\t{u.text}")
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


@dataclass(frozen=True)
class OovList:
    """Words absent from the reference text set, frequent enough in the probe."""

    words: frozenset[str]
    min_count: int

    def __len__(self) -> int:
        return len(self.words)

    def sorted_words(self) -> list[str]:
        return sorted(self.words)


def words_of(text: str) -> list[str]:
    return normalize_text(text).split()


def extract_oov(train_texts: list[str], probe_texts: list[str], min_count: int = 3) -> OovList:
    """Probe-set words never seen in training, occurring >= min_count times.

    The occurrence floor filters out one-off typos.
    """
    if not train_texts or not probe_texts:
        raise DataError("extract_oov needs non-empty train and probe text sets")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    train_vocab = {w for t in train_texts for w in words_of(t)}
    probe_counts = Counter(w for t in probe_texts for w in words_of(t))
    words = frozenset(w for w, n in probe_counts.items() if n >= min_count and w not in train_vocab)
    return OovList(words=words, min_count=min_count)


def select_oov_utterances(manifest: Manifest, oov: OovList) -> Manifest:
    """Utterances whose transcript contains at least one listed word."""
    hits = [u for u in manifest if any(w in oov.words for w in words_of(u.text))]
    return Manifest(hits, base_dir=manifest.base_dir)


def downsample(manifest: Manifest, n: int, seed: int) -> Manifest:
    """Uniform sample without replacement, preserving manifest order."""
    if n > len(manifest):
        raise DataError(f"cannot sample {n} of {len(manifest)} utterances")
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(manifest), size=n, replace=False))
    return Manifest([manifest[int(i)] for i in keep], base_dir=manifest.base_dir)


def complement(manifest: Manifest, subset: Manifest) -> Manifest:
    """Utterances of ``manifest`` not present in ``subset``, order preserved."""
    foreign = subset.ids() - manifest.ids()
    if foreign:
        raise DataError(f"subset contains ids not in the manifest: {sorted(foreign)[:5]}")
    drop = subset.ids()
    return Manifest([u for u in manifest if u.id not in drop], base_dir=manifest.base_dir)


@dataclass(frozen=True)
class SamplingWeights:
    weights: tuple[float, ...]

    def __post_init__(self):
        if any(w < 0 for w in self.weights):
            raise ValueError("sampling weights must be non-negative")
        total = sum(self.weights)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"sampling weights must sum to 1, got {total!r}")

    @classmethod
    def from_percentages(cls, parts: list[float]) -> "SamplingWeights":
        total = float(sum(parts))
        if total <= 0:
            raise ValueError("sampling percentages must have a positive sum")
        return cls(tuple(p / total for p in parts))


def weighted_sampler(sources: list[tuple[Manifest, float]], seed: int) -> Iterator[Utterance]:
    """Endless stream: pick a source by weight, then a uniform utterance.

    Every draw is independent, so the realized mixing ratio tracks the
    weights regardless of how large or small each source is.
    """
    weights = SamplingWeights(tuple(w for _, w in sources))
    for (manifest, w) in sources:
        if w > 0 and len(manifest) == 0:
            raise DataError("non-zero sampling weight on an empty manifest")
    rng = np.random.default_rng(seed)
    manifests = [m for m, _ in sources]
    probs = np.asarray(weights.weights)

    def stream():
        while True:
            src = int(rng.choice(len(manifests), p=probs))
            idx = int(rng.integers(len(manifests[src])))
            yield manifests[src][idx]

    return stream()
