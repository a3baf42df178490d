"""Toy corpus generation: lexicon, held-out words, rendered splits.

Builds a small in-vocabulary lexicon plus a disjoint list of held-out
words that never enter the training texts. The dev and eval splits get
those held-out words injected at controlled occurrence counts (at least
three in dev, so the extraction rule recovers exactly the injected
list). Training, dev, and eval audio come from the multi-speaker real
pool; the fine-tuning set re-renders the dev utterances containing
held-out words with the single synthetic voice.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import synth
from .data import Manifest, Utterance, extract_oov, save_manifest, select_oov_utterances
from .errors import ConfigError
from .tokenizer import Vocab, build_vocab

LETTERS = np.array(list(string.ascii_lowercase))


def save_vocab(vocab: Vocab, path: str | Path):
    doc = {"mode": vocab.mode, "units": list(vocab.units[1:])}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1), encoding="utf-8")


def load_vocab(path: str | Path) -> Vocab:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return Vocab(units=("", *doc["units"]), mode=doc["mode"])


@dataclass(frozen=True)
class CorpusSpec:
    vocab_words: int = 50
    oov_words: int = 20
    train_size: int = 2000
    dev_size: int = 500
    eval_size: int = 500
    words_min: int = 3
    words_max: int = 6
    word_len_min: int = 3
    word_len_max: int = 7
    # cycled over the held-out words: fine-tuning exposure per word
    oov_dev_counts: tuple[int, ...] = (3, 4, 6, 9, 12)
    oov_eval_count: int = 5

    def validate(self):
        if min(self.vocab_words, self.oov_words, self.train_size, self.dev_size,
               self.eval_size) < 1:
            raise ConfigError("corpus sizes must all be >= 1")
        if self.words_min < 1 or self.words_max < self.words_min:
            raise ConfigError("bad words_min/words_max range")
        if min(self.oov_dev_counts) < 3:
            raise ConfigError("dev occurrence counts must be >= 3 so extraction can find them")
        need_dev = sum(self.oov_dev_counts[i % len(self.oov_dev_counts)]
                       for i in range(self.oov_words))
        if need_dev > self.dev_size:
            raise ConfigError(f"dev split too small: needs {need_dev} host utterances")
        if self.oov_words * self.oov_eval_count > self.eval_size:
            raise ConfigError("eval split too small for the held-out word occurrences")


def _random_word(rng, spec: CorpusSpec) -> str:
    n = int(rng.integers(spec.word_len_min, spec.word_len_max + 1))
    return "".join(rng.choice(LETTERS, size=n))


def build_lexicon(rng, spec: CorpusSpec) -> tuple[list[str], list[str]]:
    """Disjoint in-vocabulary and held-out word lists, all distinct."""
    seen: set[str] = set()
    words = []
    while len(words) < spec.vocab_words + spec.oov_words:
        w = _random_word(rng, spec)
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words[:spec.vocab_words], words[spec.vocab_words:]


def _draw_texts(rng, lexicon: list[str], n: int, spec: CorpusSpec) -> list[str]:
    texts = []
    for _ in range(n):
        k = int(rng.integers(spec.words_min, spec.words_max + 1))
        texts.append(" ".join(rng.choice(lexicon, size=k)))
    return texts


def _inject(rng, texts: list[str], oov_words: list[str], counts: list[int]) -> list[str]:
    """Insert each held-out word into ``counts[i]`` distinct utterances."""
    out = list(texts)
    free = list(range(len(out)))
    rng.shuffle(free)
    cursor = 0
    for word, count in zip(oov_words, counts):
        for _ in range(count):
            idx = free[cursor]
            cursor += 1
            host = out[idx].split()
            pos = int(rng.integers(len(host) + 1))
            host.insert(pos, word)
            out[idx] = " ".join(host)
    return out


@dataclass
class GeneratedTexts:
    train: list[str]
    dev: list[str]
    eval: list[str]
    oov_words: list[str]
    dev_counts: dict[str, int] = field(default_factory=dict)


def generate_texts(spec: CorpusSpec, seed: int) -> GeneratedTexts:
    spec.validate()
    rng = np.random.default_rng([seed, 1])
    vocab_words, oov_words = build_lexicon(rng, spec)
    train = _draw_texts(rng, vocab_words, spec.train_size, spec)
    dev_base = _draw_texts(rng, vocab_words, spec.dev_size, spec)
    eval_base = _draw_texts(rng, vocab_words, spec.eval_size, spec)
    dev_counts = [spec.oov_dev_counts[i % len(spec.oov_dev_counts)]
                  for i in range(spec.oov_words)]
    dev = _inject(rng, dev_base, oov_words, dev_counts)
    eval_texts = _inject(rng, eval_base, oov_words,
                         [spec.oov_eval_count] * spec.oov_words)
    return GeneratedTexts(train=train, dev=dev, eval=eval_texts, oov_words=oov_words,
                          dev_counts=dict(zip(oov_words, dev_counts)))


def _reroot(manifest: Manifest, subdir: str, new_base: Path) -> Manifest:
    """Re-express feature paths relative to the corpus root."""
    moved = [Utterance(id=u.id, text=u.text, features_path=f"{subdir}/{u.features_path}")
             for u in manifest]
    return Manifest(moved, base_dir=new_base)


@dataclass
class CorpusTree:
    """Paths of everything gendata wrote."""

    out_dir: Path
    train: Path
    dev: Path
    eval: Path
    dev_oov_tts: Path
    oov_true: Path
    acoustics: Path
    vocab_file: Path


def generate_corpus_tree(out_dir: str | Path, spec: CorpusSpec, seed: int,
                         feature_dim: int = 16, frames_per_token: int = 2,
                         pattern_scale: float = 0.5, real_speakers: int = 10,
                         real_noise: float = 0.1, tts_noise: float = 0.05,
                         real_angle: float = 0.3, tts_angle: float = 0.8) -> CorpusTree:
    """Generate texts, render all splits, and write manifests and metadata."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    texts = generate_texts(spec, seed)

    # character inventory comes from the full word list so every split
    # (held-out words included) is encodable
    vocab = build_vocab(texts.train + texts.dev + texts.eval, mode="character")
    ac = synth.Acoustics(
        feature_dim=feature_dim,
        frames_per_token=frames_per_token,
        pattern_seed=seed,
        pattern_scale=pattern_scale,
        real_pool=tuple(synth.make_real_pool(real_speakers, seed, feature_dim,
                                             angle=real_angle, noise_std=real_noise)),
        tts=synth.make_tts_profile(seed, feature_dim, angle=tts_angle,
                                   noise_std=tts_noise),
    )

    paths = CorpusTree(
        out_dir=out_dir,
        train=out_dir / "train.tsv",
        dev=out_dir / "dev.tsv",
        eval=out_dir / "eval.tsv",
        dev_oov_tts=out_dir / "dev_oov_tts.tsv",
        oov_true=out_dir / "oov_true.txt",
        acoustics=out_dir / "acoustics.json",
        vocab_file=out_dir / "vocab.json",
    )

    pool = list(ac.real_pool)
    splits = {
        "train": (texts.train, pool, paths.train, 11),
        "dev": (texts.dev, pool, paths.dev, 22),
        "eval": (texts.eval, pool, paths.eval, 33),
    }
    manifests = {}
    for name, (split_texts, speakers, manifest_path, offset) in splits.items():
        m = synth.make_corpus(split_texts, speakers, seed=seed * 100 + offset,
                              out_dir=out_dir / name, vocab=vocab, ac=ac, prefix=f"{name}_")
        m = _reroot(m, name, out_dir)
        save_manifest(m, manifest_path)
        manifests[name] = m

    # the synthetic fine-tuning set: dev utterances that contain held-out
    # words, re-rendered with the single synthetic voice
    oov = extract_oov(texts.train, texts.dev, min_count=3)
    dev_oov = select_oov_utterances(manifests["dev"], oov)
    tts_texts = dev_oov.texts()
    m_tts = synth.make_corpus(tts_texts, [ac.tts], seed=seed + 4242,
                              out_dir=out_dir / "dev_oov_tts", vocab=vocab, ac=ac,
                              prefix="devoovtts_")
    save_manifest(_reroot(m_tts, "dev_oov_tts", out_dir), paths.dev_oov_tts)

    paths.oov_true.write_text(
        "\n".join(sorted(texts.oov_words)) + "\n", encoding="utf-8")
    synth.save_acoustics(ac, paths.acoustics)
    save_vocab(vocab, paths.vocab_file)
    return paths
