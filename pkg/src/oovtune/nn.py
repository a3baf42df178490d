"""Parameter containers and the LSTM building block.

Every parameter lives in a :class:`ParamTree` under a unique name and is
tagged with the model component it belongs to (``encoder``, ``decoder``
or ``joint``). The tags are what freezing masks and the consolidation
penalty key on. Iteration order is always lexicographic by name so that
checkpoints, Fisher vectors, and freezing masks line up across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError

COMPONENTS = ("encoder", "decoder", "joint")


@dataclass
class Param:
    value: Tensor
    component: str


class ParamTree:
    """Ordered map: parameter name -> (value, gradient, component tag)."""

    def __init__(self):
        self._entries: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray, component: str) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        if component not in COMPONENTS:
            raise ValueError(f"unknown component tag {component!r}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self._entries[name] = Param(t, component)
        return t

    def __getitem__(self, name: str) -> Param:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return sorted(self._entries)

    def items(self):
        for name in sorted(self._entries):
            yield name, self._entries[name]

    def tensor(self, name: str) -> Tensor:
        return self._entries[name].value

    def component_of(self, name: str) -> str:
        return self._entries[name].component

    def zero_grads(self):
        for p in self._entries.values():
            p.value.zero_grad()

    def values_dict(self) -> dict[str, np.ndarray]:
        """Copies of all parameter arrays, keyed by name."""
        return {name: p.value.data.copy() for name, p in self.items()}

    def grads_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.grad.copy() for name, p in self.items()}

    def components_dict(self) -> dict[str, str]:
        return {name: p.component for name, p in self.items()}

    def load_values(self, values: dict[str, np.ndarray]):
        """Overwrite parameter arrays in place; names and shapes must match."""
        if set(values) != set(self._entries):
            missing = set(self._entries) ^ set(values)
            raise ValueError(f"parameter name mismatch: {sorted(missing)}")
        for name, arr in values.items():
            p = self._entries[name]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != p.value.data.shape:
                raise DimensionError(f"shape mismatch for {name!r}: {arr.shape} vs {p.value.data.shape}")
            p.value.data = arr.copy()


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform in [-k, k] with k = 1/sqrt(fan_in)."""
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape)


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step on a (batch, dim) slice.

    Gate layout along the fused weight columns is (input, forget,
    candidate, output). Sigmoid gates, tanh candidate, tanh on the new
    cell before the output gate. Implemented as one fused graph node so
    backpropagation through time costs a single pass per step.
    """
    bsz, in_dim = x.data.shape
    hid = h.data.shape[1]
    if wx.data.shape != (in_dim, 4 * hid) or wh.data.shape != (hid, 4 * hid) or b.data.shape != (4 * hid,):
        raise DimensionError(
            f"lstm_cell weight shapes {wx.data.shape}/{wh.data.shape}/{b.data.shape} "
            f"inconsistent with input {x.data.shape} and state {h.data.shape}"
        )
    if c.data.shape != h.data.shape or x.data.shape[0] != h.data.shape[0]:
        raise DimensionError("lstm_cell state shapes inconsistent")

    z = x.data @ wx.data + h.data @ wh.data + b.data
    gi = expit(z[:, :hid])
    gf = expit(z[:, hid:2 * hid])
    gc = np.tanh(z[:, 2 * hid:3 * hid])
    go = expit(z[:, 3 * hid:])
    c_new = gf * c.data + gi * gc
    tc = np.tanh(c_new)
    h_new = go * tc

    fused = np.concatenate([h_new, c_new], axis=1)

    def bw(g, grads, needs):
        gh = g[:, :hid]
        gcell = g[:, hid:]
        dc = gcell + gh * go * (1.0 - tc * tc)
        dz = np.empty_like(z)
        dz[:, :hid] = dc * gc * gi * (1.0 - gi)
        dz[:, hid:2 * hid] = dc * c.data * gf * (1.0 - gf)
        dz[:, 2 * hid:3 * hid] = dc * gi * (1.0 - gc * gc)
        dz[:, 3 * hid:] = gh * tc * go * (1.0 - go)
        ad._acc(grads, needs, x, dz @ wx.data.T)
        ad._acc(grads, needs, h, dz @ wh.data.T)
        ad._acc(grads, needs, c, dc * gf)
        ad._acc(grads, needs, wx, x.data.T @ dz)
        ad._acc(grads, needs, wh, h.data.T @ dz)
        ad._acc(grads, needs, b, dz.sum(axis=0))

    out = ad._node(fused, (x, h, c, wx, wh, b), bw)
    return out[:, :hid], out[:, hid:]


def lstm_step_np(x, h, c, wx, wh, b):
    """Graph-free LSTM step on plain arrays; used by greedy decoding."""
    hid = h.shape[-1]
    z = x @ wx + h @ wh + b
    gi = expit(z[..., :hid])
    gf = expit(z[..., hid:2 * hid])
    gc = np.tanh(z[..., 2 * hid:3 * hid])
    go = expit(z[..., 3 * hid:])
    c_new = gf * c + gi * gc
    h_new = go * np.tanh(c_new)
    return h_new, c_new


def lstm_layer(xs: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """Run one LSTM layer over a (batch, time, dim) sequence.

    Equivalent to chaining :func:`lstm_cell` from zero initial state but
    fused into a single graph node: the whole unrolled forward and the
    full backward-through-time pass each run as one tight numpy loop,
    which keeps the per-step graph overhead out of the training hot path.
    """
    bsz, t_len, in_dim = xs.data.shape
    hid = wh.data.shape[0]
    if wx.data.shape != (in_dim, 4 * hid) or b.data.shape != (4 * hid,):
        raise DimensionError(
            f"lstm_layer weight shapes {wx.data.shape}/{wh.data.shape}/{b.data.shape} "
            f"inconsistent with input {xs.data.shape}")

    wx_d, wh_d, b_d = wx.data, wh.data, b.data
    hs = np.empty((bsz, t_len, hid))
    cache_gates = np.empty((bsz, t_len, 4 * hid))
    cache_c_prev = np.empty((bsz, t_len, hid))
    cache_tc = np.empty((bsz, t_len, hid))
    h = np.zeros((bsz, hid))
    c = np.zeros((bsz, hid))
    x_all = xs.data @ wx_d + b_d  # input contributions for every step at once
    for t in range(t_len):
        z = x_all[:, t, :] + h @ wh_d
        gi = expit(z[:, :hid])
        gf = expit(z[:, hid:2 * hid])
        gc = np.tanh(z[:, 2 * hid:3 * hid])
        go = expit(z[:, 3 * hid:])
        cache_gates[:, t, :hid] = gi
        cache_gates[:, t, hid:2 * hid] = gf
        cache_gates[:, t, 2 * hid:3 * hid] = gc
        cache_gates[:, t, 3 * hid:] = go
        cache_c_prev[:, t, :] = c
        c = gf * c + gi * gc
        tc = np.tanh(c)
        cache_tc[:, t, :] = tc
        h = go * tc
        hs[:, t, :] = h

    def bw(g, grads, needs):
        dzs = np.empty((bsz, t_len, 4 * hid))
        dh_next = np.zeros((bsz, hid))
        dc_next = np.zeros((bsz, hid))
        for t in range(t_len - 1, -1, -1):
            gi = cache_gates[:, t, :hid]
            gf = cache_gates[:, t, hid:2 * hid]
            gc = cache_gates[:, t, 2 * hid:3 * hid]
            go = cache_gates[:, t, 3 * hid:]
            tc = cache_tc[:, t, :]
            gh = g[:, t, :] + dh_next
            dc = dc_next + gh * go * (1.0 - tc * tc)
            dz = dzs[:, t, :]
            dz[:, :hid] = dc * gc * gi * (1.0 - gi)
            dz[:, hid:2 * hid] = dc * cache_c_prev[:, t, :] * gf * (1.0 - gf)
            dz[:, 2 * hid:3 * hid] = dc * gi * (1.0 - gc * gc)
            dz[:, 3 * hid:] = gh * tc * go * (1.0 - go)
            dh_next = dz @ wh_d.T
            dc_next = dc * gf
        flat_dz = dzs.reshape(bsz * t_len, 4 * hid)
        flat_x = xs.data.reshape(bsz * t_len, in_dim)
        ad._acc(grads, needs, xs, (flat_dz @ wx_d.T).reshape(bsz, t_len, in_dim))
        ad._acc(grads, needs, wx, flat_x.T @ flat_dz)
        ad._acc(grads, needs, b, flat_dz.sum(axis=0))
        # recurrent weight gradient: h_prev per step is hs shifted right
        h_prev = np.empty_like(hs)
        h_prev[:, 0, :] = 0.0
        h_prev[:, 1:, :] = hs[:, :-1, :]
        ad._acc(grads, needs, wh, h_prev.reshape(bsz * t_len, hid).T @ flat_dz)

    return ad._node(hs, (xs, wx, wh, b), bw)
