"""The transducer: LSTM encoder, LSTM prediction network, feed-forward joint.

The joint combines a frame state f_t and a prefix state g_u by adding
separate linear projections, applying tanh, and projecting to V+1
logits (blank at index 0). Loss and gradients come from the alignment
lattice in :mod:`oovtune.lattice`. Greedy decoding runs on a graph-free
numpy path since it needs no gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import DimensionError
from .lattice import LossLattice, transducer_nll_padded


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int  # output units excluding blank
    feature_dim: int = 16
    encoder_layers: int = 2
    encoder_width: int = 64
    decoder_layers: int = 1
    decoder_width: int = 64
    joint_width: int = 64

    def __post_init__(self):
        for name, value in asdict(self).items():
            if int(value) < 1:
                raise ValueError(f"ModelConfig.{name} must be >= 1, got {value}")

    @property
    def output_size(self) -> int:
        """V + 1: labels plus the blank at index 0."""
        return self.vocab_size + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{k: int(v) for k, v in d.items()})


class RnntModel:
    """Transducer with component-tagged parameters (encoder/decoder/joint)."""

    def __init__(self, config: ModelConfig, seed: int | None = 0):
        self.config = config
        self.params = nn.ParamTree()
        rng = np.random.default_rng(seed)
        self._build(rng)

    def _build(self, rng):
        cfg = self.config
        for layer in range(cfg.encoder_layers):
            in_dim = cfg.feature_dim if layer == 0 else cfg.encoder_width
            h = cfg.encoder_width
            self.params.add(f"enc.l{layer}.wx", nn.uniform_init(rng, (in_dim, 4 * h), in_dim), "encoder")
            self.params.add(f"enc.l{layer}.wh", nn.uniform_init(rng, (h, 4 * h), h), "encoder")
            self.params.add(f"enc.l{layer}.b", nn.uniform_init(rng, (4 * h,), h), "encoder")
        emb = cfg.decoder_width
        self.params.add("dec.embed", nn.uniform_init(rng, (cfg.output_size, emb), emb), "decoder")
        for layer in range(cfg.decoder_layers):
            in_dim = emb if layer == 0 else cfg.decoder_width
            h = cfg.decoder_width
            self.params.add(f"dec.l{layer}.wx", nn.uniform_init(rng, (in_dim, 4 * h), in_dim), "decoder")
            self.params.add(f"dec.l{layer}.wh", nn.uniform_init(rng, (h, 4 * h), h), "decoder")
            self.params.add(f"dec.l{layer}.b", nn.uniform_init(rng, (4 * h,), h), "decoder")
        j = cfg.joint_width
        self.params.add("joint.enc_w", nn.uniform_init(rng, (cfg.encoder_width, j), cfg.encoder_width), "joint")
        self.params.add("joint.dec_w", nn.uniform_init(rng, (cfg.decoder_width, j), cfg.decoder_width), "joint")
        self.params.add("joint.hid_b", nn.uniform_init(rng, (j,), j), "joint")
        self.params.add("joint.out_w", nn.uniform_init(rng, (j, cfg.output_size), j), "joint")
        self.params.add("joint.out_b", nn.uniform_init(rng, (cfg.output_size,), j), "joint")

    def _t(self, name: str) -> Tensor:
        return self.params.tensor(name)

    # -- graph paths (training and gradient checks) --

    def _encoder_batch(self, feats: Tensor) -> Tensor:
        cur = feats
        for layer in range(self.config.encoder_layers):
            wx, wh, b = (self._t(f"enc.l{layer}.{p}") for p in ("wx", "wh", "b"))
            cur = nn.lstm_layer(cur, wx, wh, b)
        return cur

    def _decoder_batch(self, ids: np.ndarray) -> Tensor:
        cur = ad.embedding_lookup(self._t("dec.embed"), ids)
        for layer in range(self.config.decoder_layers):
            wx, wh, b = (self._t(f"dec.l{layer}.{p}") for p in ("wx", "wh", "b"))
            cur = nn.lstm_layer(cur, wx, wh, b)
        return cur

    def encode_audio(self, features: np.ndarray) -> Tensor:
        """Encoder states f_1..f_T for a (T, feature_dim) frame sequence."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise DimensionError(f"features must be a non-empty (T, D) array, got {features.shape}")
        if features.shape[1] != self.config.feature_dim:
            raise DimensionError(
                f"frame width {features.shape[1]} != feature_dim {self.config.feature_dim}")
        out = self._encoder_batch(Tensor(features[None, :, :]))
        return out[0]

    def _check_targets(self, targets):
        targets = [int(t) for t in targets]
        for t in targets:
            if t == 0:
                raise ValueError("blank id 0 is not a legal target")
            if not (0 < t <= self.config.vocab_size):
                raise ValueError(f"target id {t} outside 1..{self.config.vocab_size}")
        return targets

    def predict(self, targets) -> Tensor:
        """Prediction states g_0..g_U; g_0 comes from the learned start row."""
        targets = self._check_targets(targets)
        ids = np.zeros((1, len(targets) + 1), dtype=np.int64)
        ids[0, 1:] = targets
        out = self._decoder_batch(ids)
        return out[0]

    def joint(self, f_t: Tensor | np.ndarray, g_u: Tensor | np.ndarray) -> Tensor:
        """Logits over V+1 outputs for one (frame state, prefix state) pair."""
        f_t = f_t if isinstance(f_t, Tensor) else Tensor(f_t)
        g_u = g_u if isinstance(g_u, Tensor) else Tensor(g_u)
        if f_t.shape != (self.config.encoder_width,) or g_u.shape != (self.config.decoder_width,):
            raise DimensionError(
                f"joint state widths {f_t.shape}/{g_u.shape} do not match the model config")
        fp = ad.matmul(f_t.reshape(1, -1), self._t("joint.enc_w"))
        gp = ad.matmul(g_u.reshape(1, -1), self._t("joint.dec_w"))
        hidden = ad.tanh(ad.add(ad.add(fp, gp), self._t("joint.hid_b")))
        logits = ad.add(ad.matmul(hidden, self._t("joint.out_w")), self._t("joint.out_b"))
        return logits[0]

    def _joint_grid(self, enc: Tensor, dec: Tensor) -> Tensor:
        """Log-probs over the padded (B, Tm, Um+1, V+1) joint grid."""
        bsz, tm, _ = enc.shape
        um1 = dec.shape[1]
        j = self.config.joint_width
        fp = ad.matmul(enc.reshape(bsz * tm, self.config.encoder_width),
                       self._t("joint.enc_w")).reshape(bsz, tm, 1, j)
        gp = ad.matmul(dec.reshape(bsz * um1, self.config.decoder_width),
                       self._t("joint.dec_w")).reshape(bsz, 1, um1, j)
        hidden = ad.tanh(ad.add(ad.add(fp, gp), self._t("joint.hid_b")))
        logits = ad.add(ad.matmul(hidden.reshape(bsz * tm * um1, j), self._t("joint.out_w")),
                        self._t("joint.out_b"))
        return ad.log_softmax(logits.reshape(bsz, tm, um1, self.config.output_size), axis=-1)

    def batch_loss(self, features_list, targets_list) -> tuple[Tensor, list[float], list[LossLattice]]:
        """Mean transducer loss over a batch; returns the scalar graph node."""
        bsz = len(features_list)
        if bsz == 0:
            raise ValueError("empty batch")
        feats = [np.asarray(f, dtype=np.float64) for f in features_list]
        targets = [self._check_targets(t) for t in targets_list]
        for f in feats:
            if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] != self.config.feature_dim:
                raise DimensionError(f"bad feature array of shape {f.shape}")
        t_lens = [f.shape[0] for f in feats]
        u_lens = [len(t) for t in targets]
        tmax, umax1 = max(t_lens), max(u_lens) + 1

        padded = np.zeros((bsz, tmax, self.config.feature_dim))
        ids = np.zeros((bsz, umax1), dtype=np.int64)
        for b in range(bsz):
            padded[b, :t_lens[b]] = feats[b]
            ids[b, 1:u_lens[b] + 1] = targets[b]

        enc = self._encoder_batch(Tensor(padded))
        dec = self._decoder_batch(ids)
        log_probs = self._joint_grid(enc, dec)
        return transducer_nll_padded(log_probs, t_lens, u_lens, targets)

    def rnnt_loss(self, features, targets, accumulate: bool = True) -> tuple[float, LossLattice]:
        """Loss for one utterance; backpropagates into the ParamTree unless told not to."""
        loss, per_utt, lattices = self.batch_loss([features], [targets])
        if accumulate:
            ad.backward(loss)
        return per_utt[0], lattices[0]

    # -- graph-free inference --

    def _np_param(self, name: str) -> np.ndarray:
        return self.params.tensor(name).data

    def _np_encode(self, features: np.ndarray) -> np.ndarray:
        cur = features
        for layer in range(self.config.encoder_layers):
            wx, wh, b = (self._np_param(f"enc.l{layer}.{p}") for p in ("wx", "wh", "b"))
            h = np.zeros(self.config.encoder_width)
            c = np.zeros(self.config.encoder_width)
            outs = np.empty((features.shape[0], self.config.encoder_width))
            for t in range(cur.shape[0]):
                h, c = nn.lstm_step_np(cur[t], h, c, wx, wh, b)
                outs[t] = h
            cur = outs
        return cur

    def _np_decoder_step(self, token_id: int, state):
        emb = self._np_param("dec.embed")[token_id]
        new_state = []
        x = emb
        for layer, (h, c) in enumerate(state):
            wx, wh, b = (self._np_param(f"dec.l{layer}.{p}") for p in ("wx", "wh", "b"))
            h, c = nn.lstm_step_np(x, h, c, wx, wh, b)
            new_state.append((h, c))
            x = h
        return x, new_state

    def greedy_decode(self, features: np.ndarray, max_emits_per_frame: int = 5) -> list[int]:
        """Frame-synchronous greedy search; ties go to the lowest index so
        blank wins any tie with a label."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise DimensionError(f"features must be a non-empty (T, D) array, got {features.shape}")
        if features.shape[1] != self.config.feature_dim:
            raise DimensionError(
                f"frame width {features.shape[1]} != feature_dim {self.config.feature_dim}")
        if max_emits_per_frame < 1:
            raise ValueError("max_emits_per_frame must be >= 1")

        enc = self._np_encode(features)
        enc_w = self._np_param("joint.enc_w")
        dec_w = self._np_param("joint.dec_w")
        hid_b = self._np_param("joint.hid_b")
        out_w = self._np_param("joint.out_w")
        out_b = self._np_param("joint.out_b")
        f_proj = enc @ enc_w

        width = self.config.decoder_width
        state = [(np.zeros(width), np.zeros(width)) for _ in range(self.config.decoder_layers)]
        g, state = self._np_decoder_step(0, state)  # start symbol row
        g_proj = g @ dec_w

        out: list[int] = []
        for t in range(enc.shape[0]):
            emits = 0
            while emits < max_emits_per_frame:
                logits = np.tanh(f_proj[t] + g_proj + hid_b) @ out_w + out_b
                k = int(np.argmax(logits))
                if k == 0:
                    break
                out.append(k)
                g, state = self._np_decoder_step(k, state)
                g_proj = g @ dec_w
                emits += 1
        return out
