"""Training loops: baseline from scratch and regularized fine-tuning.

Batches come from the weighted sampler stream; features pad to the batch
maximum length and padded frames never reach the loss (the lattice sees
each utterance's own grid). Gradient clipping at a global norm protects
the small model from loss spikes. Every run is a pure function of
(config, seed, corpus): checkpoints are bit-reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ewc as ewc_mod
from .autodiff import backward
from .checkpoint import Checkpoint, save_checkpoint
from .data import Manifest, weighted_sampler
from .errors import ConfigError, NumericsError
from .ewc import EwcState, FreezeMask, apply_freeze, ewc_penalty
from .features import read_features
from .model import ModelConfig, RnntModel
from .tokenizer import Vocab, encode


@dataclass(frozen=True)
class EwcSettings:
    lam: float
    scope: frozenset[str]
    fisher_source: Manifest | None = None  # defaults to the first sampling source
    fisher_samples: int = 100
    fisher_seed: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    batch_size: int = 8
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    grad_clip: float = 5.0
    checkpoint_every: int = 0  # 0: only the final checkpoint
    freeze: FreezeMask = field(default_factory=FreezeMask)
    ewc: EwcSettings | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, frozen: frozenset[str] = frozenset()):
        for _, p in params.items():
            if p.component in frozen:
                p.value.grad[...] = 0.0
                continue
            g = p.value.grad
            if not np.all(np.isfinite(g)):
                raise NumericsError("non-finite gradient in optimizer step")
            p.value.data = p.value.data - self.lr * g
            p.value.grad = np.zeros_like(p.value.data)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params, frozen: frozenset[str] = frozenset()):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            if p.component in frozen:
                p.value.grad[...] = 0.0
                continue
            g = p.value.grad
            if not np.all(np.isfinite(g)):
                raise NumericsError("non-finite gradient in optimizer step")
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.value.data = p.value.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.value.grad = np.zeros_like(p.value.data)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return Sgd(config.learning_rate)
    return Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)


def clip_gradients(params, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for _, p in params.items():
        total += float((p.value.grad ** 2).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        for _, p in params.items():
            p.value.grad = p.value.grad * factor
    return norm


class FeatureCache:
    """In-memory cache of feature arrays and token sequences per manifest."""

    def __init__(self, vocab: Vocab):
        self.vocab = vocab
        self._feats: dict[tuple[int, str], np.ndarray] = {}
        self._tokens: dict[str, list[int]] = {}

    def features(self, manifest: Manifest, utt) -> np.ndarray:
        key = (id(manifest), utt.id)
        if key not in self._feats:
            self._feats[key] = read_features(manifest.feature_file(utt))
        return self._feats[key]

    def tokens(self, utt) -> list[int]:
        if utt.id not in self._tokens:
            self._tokens[utt.id] = encode(utt.text, self.vocab)
        return self._tokens[utt.id]


@dataclass
class LogRow:
    step: int
    loss: float
    penalty: float
    wall_ms: float


def write_log(rows: list[LogRow], path: str | Path):
    lines = ["step\tloss\tpenalty\twall_ms"]
    lines += [f"{r.step}\t{r.loss:.6f}\t{r.penalty:.6f}\t{r.wall_ms:.1f}" for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _train_loop(model: RnntModel, vocab: Vocab, config: TrainConfig,
                sources: list[tuple[Manifest, float]], ewc_state: EwcState | None,
                out_dir: Path | None, start_step: int = 0) -> tuple[list[LogRow], Checkpoint]:
    sampler = weighted_sampler(sources, seed=[config.seed, 2])
    opt = make_optimizer(config)
    cache = FeatureCache(vocab)
    frozen = config.freeze.frozen_components
    rows: list[LogRow] = []
    source_of = {}
    for manifest, _ in sources:
        for u in manifest:
            source_of[u.id] = manifest

    def ckpt_at(step: int) -> Checkpoint:
        return Checkpoint(config=model.config, vocab=vocab,
                          values=model.params.values_dict(),
                          components=model.params.components_dict(),
                          step=step, ewc=ewc_state)

    step = start_step
    for _ in range(config.steps):
        step += 1
        t0 = time.perf_counter()
        batch = [next(sampler) for _ in range(config.batch_size)]
        feats = [cache.features(source_of[u.id], u) for u in batch]
        targets = [cache.tokens(u) for u in batch]

        model.params.zero_grads()
        loss_t, per_utt, _ = model.batch_loss(feats, targets)
        loss = float(loss_t.data)
        if not np.isfinite(loss):
            ids = ",".join(u.id for u in batch)
            raise NumericsError(f"non-finite loss {loss} at step {step} (batch {ids})")
        penalty = ewc_penalty(ewc_state, model.params) if ewc_state is not None else 0.0
        backward(loss_t)
        apply_freeze(model.params, config.freeze)
        clip_gradients(model.params, config.grad_clip)
        opt.step(model.params, frozen=frozen)

        rows.append(LogRow(step=step, loss=loss, penalty=penalty,
                           wall_ms=(time.perf_counter() - t0) * 1e3))
        if out_dir is not None and config.checkpoint_every > 0 and step % config.checkpoint_every == 0:
            save_checkpoint(ckpt_at(step), out_dir / f"step{step:06d}.ckpt")

    final = ckpt_at(step)
    if out_dir is not None:
        save_checkpoint(final, out_dir / "final.ckpt")
        write_log(rows, out_dir / "train_log.tsv")
    return rows, final


def train_baseline(model_config: ModelConfig, config: TrainConfig, manifest: Manifest,
                   vocab: Vocab, out_dir: str | Path | None = None) -> tuple[list[LogRow], Checkpoint]:
    """Train from seeded initialization on a single source."""
    if config.freeze.frozen_components or config.ewc is not None:
        raise ConfigError("baseline training takes no freeze mask or consolidation settings")
    if len(manifest) == 0:
        raise ConfigError("training manifest is empty")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    model = RnntModel(model_config, seed=config.seed)
    return _train_loop(model, vocab, config, [(manifest, 1.0)], None, out)


def finetune(base: Checkpoint, config: TrainConfig,
             sources: list[tuple[Manifest, float]],
             out_dir: str | Path | None = None) -> tuple[list[LogRow], Checkpoint]:
    """Continue from a checkpoint with weighted sources, freezing, and EWC.

    The anchor snapshot is taken from the base checkpoint exactly once,
    before any step runs.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    model = base.to_model()
    vocab = base.vocab
    ewc_state = None
    if config.ewc is not None:
        settings = config.ewc
        fisher_src = settings.fisher_source if settings.fisher_source is not None else sources[0][0]
        fisher = ewc_mod.estimate_fisher(model, vocab, fisher_src,
                                         n_samples=settings.fisher_samples,
                                         seed=settings.fisher_seed)
        ewc_state = ewc_mod.snapshot_state(model.params, fisher, settings.lam, settings.scope)
    return _train_loop(model, vocab, config, sources, ewc_state, out, start_step=base.step)
