"""Deterministic text-to-feature rendering.

Stands in for both a TTS engine and real recordings. Every token id owns
a fixed feature pattern (hashed from a pattern seed); a speaker profile
passes the pattern sequence through an affine channel and adds seeded
Gaussian noise. The "synthetic" voice is a single profile whose channel
rotation is held out of, and larger than, the multi-speaker "real" pool,
which is what creates the acoustic mismatch between the two.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .data import Manifest, Utterance
from .errors import DataError
from .features import write_features
from .tokenizer import Vocab, encode


@dataclass(frozen=True)
class SpeakerProfile:
    id: str
    transform: np.ndarray  # (D, D) mixing matrix
    bias: np.ndarray       # (D,)
    noise_std: float

    def __post_init__(self):
        cond = np.linalg.cond(self.transform)
        if not np.isfinite(cond) or cond > 100.0:
            raise ValueError(f"profile {self.id}: transform condition {cond:.1f} exceeds 100")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def _rotation(rng: np.random.Generator, dim: int, angle: float) -> np.ndarray:
    """Orthogonal matrix exp(angle * S) for a unit-spectral-norm skew S."""
    raw = rng.standard_normal((dim, dim))
    skew = raw - raw.T
    norm = np.linalg.norm(skew, 2)
    return expm(skew * (angle / norm))


def make_profile(profile_id: str, seed, dim: int, angle: float, noise_std: float) -> SpeakerProfile:
    rng = np.random.default_rng(seed)
    rot = _rotation(rng, dim, angle)
    scale = rng.uniform(0.85, 1.2, size=dim)
    bias = rng.normal(0.0, 0.05, size=dim)
    return SpeakerProfile(id=profile_id, transform=rot * scale[:, None], bias=bias,
                          noise_std=noise_std)


def make_real_pool(n: int, seed: int, dim: int, angle: float = 0.3,
                   noise_std: float = 0.1) -> list[SpeakerProfile]:
    return [make_profile(f"real{i:02d}", [seed, 100 + i], dim, angle, noise_std)
            for i in range(n)]


def make_tts_profile(seed: int, dim: int, angle: float = 0.8,
                     noise_std: float = 0.05) -> SpeakerProfile:
    """Single clean voice on a channel rotated well outside the real pool."""
    return make_profile("tts", [seed, 999], dim, angle, noise_std)


@dataclass(frozen=True)
class Acoustics:
    """Everything needed to render text into this corpus's feature space."""

    feature_dim: int
    frames_per_token: int
    pattern_seed: int
    pattern_scale: float
    real_pool: tuple[SpeakerProfile, ...]
    tts: SpeakerProfile


def save_acoustics(ac: Acoustics, path: str | Path):
    def profile_dict(p: SpeakerProfile) -> dict:
        return {"id": p.id, "transform": p.transform.tolist(),
                "bias": p.bias.tolist(), "noise_std": p.noise_std}

    doc = {
        "feature_dim": ac.feature_dim,
        "frames_per_token": ac.frames_per_token,
        "pattern_seed": ac.pattern_seed,
        "pattern_scale": ac.pattern_scale,
        "real_pool": [profile_dict(p) for p in ac.real_pool],
        "tts": profile_dict(ac.tts),
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


def load_acoustics(path: str | Path) -> Acoustics:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))

    def profile(d: dict) -> SpeakerProfile:
        return SpeakerProfile(id=d["id"], transform=np.asarray(d["transform"]),
                              bias=np.asarray(d["bias"]), noise_std=float(d["noise_std"]))

    return Acoustics(
        feature_dim=int(doc["feature_dim"]),
        frames_per_token=int(doc["frames_per_token"]),
        pattern_seed=int(doc["pattern_seed"]),
        pattern_scale=float(doc["pattern_scale"]),
        real_pool=tuple(profile(d) for d in doc["real_pool"]),
        tts=profile(doc["tts"]),
    )


def token_pattern(token_id: int, feature_dim: int, pattern_seed: int,
                  pattern_scale: float = 1.0) -> np.ndarray:
    """Fixed unit-norm pattern for one token id, scaled."""
    rng = np.random.default_rng([pattern_seed, int(token_id)])
    p = rng.standard_normal(feature_dim)
    return pattern_scale * p / np.linalg.norm(p)


def base_features(tokens, frames_per_token: int, feature_dim: int,
                  pattern_seed: int, pattern_scale: float = 1.0) -> np.ndarray:
    """Each token's pattern repeated frames_per_token times, concatenated."""
    tokens = list(tokens)
    if not tokens:
        raise ValueError("cannot render an empty token sequence")
    if frames_per_token < 1:
        raise ValueError("frames_per_token must be >= 1")
    rows = np.stack([token_pattern(t, feature_dim, pattern_seed, pattern_scale)
                     for t in tokens])
    return np.repeat(rows, frames_per_token, axis=0)


def render(text: str, profile: SpeakerProfile, vocab: Vocab, seed,
           ac: Acoustics) -> np.ndarray:
    """Affine-transformed base features plus seeded channel noise."""
    tokens = encode(text, vocab)
    base = base_features(tokens, ac.frames_per_token, ac.feature_dim,
                         ac.pattern_seed, ac.pattern_scale)
    out = base @ profile.transform.T + profile.bias
    if profile.noise_std > 0:
        rng = np.random.default_rng(seed)
        out = out + rng.normal(0.0, profile.noise_std, size=out.shape)
    return out


def make_corpus(texts: list[str], speaker_pool: list[SpeakerProfile], seed: int,
                out_dir: str | Path, vocab: Vocab, ac: Acoustics,
                prefix: str = "u") -> Manifest:
    """Render every text with a seeded-random speaker from the pool.

    Feature files land under ``out_dir/feats`` and the returned manifest
    references them relative to ``out_dir``. A pool of size one renders a
    single-voice corpus.
    """
    if not speaker_pool:
        raise DataError("speaker pool is empty")
    out_dir = Path(out_dir)
    (out_dir / "feats").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    utterances = []
    for i, text in enumerate(texts):
        profile = speaker_pool[int(rng.integers(len(speaker_pool)))]
        frames = render(text, profile, vocab, [seed, 7000 + i], ac)
        rel = f"feats/{prefix}{i:06d}.feat"
        write_features(out_dir / rel, frames)
        utterances.append(Utterance(id=f"{prefix}{i:06d}", text=text, features_path=rel))
    return Manifest(utterances, base_dir=out_dir)
