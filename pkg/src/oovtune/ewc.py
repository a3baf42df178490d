"""Consolidation penalty and component-scoped parameter freezing.

The penalty anchors parameters to a snapshot taken before fine-tuning:
0.5 * lambda * sum_i F_i * (theta_i - theta_old_i)^2, restricted to the
components in scope. F is the empirical Fisher diagonal: the mean of
squared per-utterance loss gradients at the ground-truth transcripts,
estimated on source-domain data whose behaviour the anchor protects.
Setting every F_i to 1 turns the penalty into plain L2-to-snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Manifest
from .errors import DimensionError
from .features import read_features
from .nn import COMPONENTS, ParamTree
from .tokenizer import Vocab, encode


@dataclass(frozen=True)
class FreezeMask:
    frozen_components: frozenset[str] = frozenset()

    def __post_init__(self):
        bad = self.frozen_components - set(COMPONENTS)
        if bad:
            raise ValueError(f"unknown components in freeze mask: {sorted(bad)}")

    @classmethod
    def of(cls, *components: str) -> "FreezeMask":
        return cls(frozenset(components))

    def covers(self, component: str) -> bool:
        return component in self.frozen_components


def apply_freeze(params: ParamTree, mask: FreezeMask):
    """Zero the gradients of every frozen component; others stay untouched."""
    if not mask.frozen_components:
        return
    for _, p in params.items():
        if mask.covers(p.component):
            p.value.grad[...] = 0.0


@dataclass(frozen=True)
class EwcState:
    """Snapshot, Fisher diagonal, strength, and component scope.

    ``theta_old`` is captured once when fine-tuning starts and must stay
    untouched for the lifetime of the run.
    """

    theta_old: dict[str, np.ndarray]
    fisher: dict[str, np.ndarray]
    lam: float
    scope: frozenset[str]

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        bad = self.scope - set(COMPONENTS)
        if bad:
            raise ValueError(f"unknown components in scope: {sorted(bad)}")
        if set(self.theta_old) != set(self.fisher):
            raise ValueError("theta_old and fisher must cover the same parameter names")
        for name, f in self.fisher.items():
            if f.shape != self.theta_old[name].shape:
                raise DimensionError(f"fisher/theta_old shape mismatch for {name!r}")
            if not np.all(np.isfinite(f)) or np.any(f < 0):
                raise ValueError(f"fisher entries for {name!r} must be finite and >= 0")
        # freeze the arrays themselves so the anchor cannot drift
        for arr in (*self.theta_old.values(), *self.fisher.values()):
            arr.setflags(write=False)


def snapshot_state(params: ParamTree, fisher: dict[str, np.ndarray], lam: float,
                   scope: frozenset[str]) -> EwcState:
    return EwcState(theta_old=params.values_dict(), fisher={k: v.copy() for k, v in fisher.items()},
                    lam=float(lam), scope=frozenset(scope))


def estimate_fisher(model, vocab: Vocab, manifest: Manifest, n_samples: int,
                    seed: int = 0) -> dict[str, np.ndarray]:
    """Empirical Fisher diagonal from seeded utterance draws.

    F_i = mean over draws of (d loss / d theta_i)^2, with gradients
    cleared between draws so each sample contributes exactly once.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if len(manifest) == 0:
        raise ValueError("cannot estimate the Fisher on an empty manifest")
    rng = np.random.default_rng(seed)
    fisher = {name: np.zeros_like(p.value.data) for name, p in model.params.items()}
    for _ in range(n_samples):
        utt = manifest[int(rng.integers(len(manifest)))]
        feats = read_features(manifest.feature_file(utt))
        targets = encode(utt.text, vocab)
        model.params.zero_grads()
        model.rnnt_loss(feats, targets)
        for name, p in model.params.items():
            fisher[name] += p.value.grad ** 2
    model.params.zero_grads()
    for name in fisher:
        fisher[name] /= n_samples
    return fisher


def ewc_penalty(state: EwcState, params: ParamTree) -> float:
    """Penalty value; adds lambda * F * (theta - theta_old) to in-scope gradients.

    Parameters outside the scope are untouched, gradient included.
    """
    if set(state.theta_old) != set(params.names()):
        raise ValueError("consolidation state is not aligned with the model parameters")
    penalty = 0.0
    for name, p in params.items():
        if p.component not in state.scope:
            continue
        old = state.theta_old[name]
        if old.shape != p.value.data.shape:
            raise DimensionError(f"shape mismatch for {name!r} between state and model")
        delta = p.value.data - old
        f = state.fisher[name]
        penalty += 0.5 * state.lam * float((f * delta * delta).sum())
        p.value.grad = p.value.grad + state.lam * f * delta
    return penalty
