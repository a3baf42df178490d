"""Alignment lattice of the transducer loss.

The loss of a (features, targets) pair is the negative log of the total
probability over all monotonic alignments. Nodes (t, u) of a T x (U+1)
grid carry per-node output distributions; a blank transition advances t,
a label transition consumes target u+1. Everything runs in log-space.

The forward/backward tables are computed with a row scan: within a row
the label recurrence alpha[t,u] = LSE(inject[u], alpha[t,u-1] + lab[u-1])
factorizes through cumulative label scores, so each row costs a cumsum
plus one logaddexp.accumulate instead of a Python loop over columns.
Several utterances are processed together on padded arrays; padded cells
hold -inf and never contribute mass.

Gradients with respect to the per-node log-probabilities are the usual
edge posteriors: -exp(alpha + edge_lp + beta_after_edge - total).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

NEG_INF = -np.inf


@dataclass
class LossLattice:
    """Per-utterance tables: log-forward, log-backward, node log-probs."""

    alpha: np.ndarray      # (T, U+1)
    beta: np.ndarray       # (T, U+1)
    log_probs: np.ndarray  # (T, U+1, V+1)
    labels: np.ndarray     # (U,)
    total_log_prob: float


def _exclusive_cumsum(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    out[:, 0] = 0.0
    np.cumsum(a[:, :-1], axis=1, out=out[:, 1:])
    return out


def _forward_tables(blank_lp, label_lp, t_lens, u_lens):
    """Batched alpha over padded (B, Tm, Um+1) log-prob grids."""
    bsz, tm, um1 = blank_lp.shape
    alpha = np.full((bsz, tm, um1), NEG_INF)
    inject = np.full((bsz, um1), NEG_INF)
    inject[:, 0] = 0.0
    with np.errstate(invalid="ignore"):
        for t in range(tm):
            if t > 0:
                inject = alpha[:, t - 1, :] + blank_lp[:, t - 1, :]
            lab_cum = _exclusive_cumsum(label_lp[:, t, :])
            s = np.where(np.isneginf(inject) | np.isneginf(lab_cum), NEG_INF, inject - lab_cum)
            run = np.logaddexp.accumulate(s, axis=1)
            alpha[:, t, :] = run + lab_cum
    rows = np.arange(bsz)
    total = alpha[rows, t_lens - 1, u_lens] + blank_lp[rows, t_lens - 1, u_lens]
    return alpha, total


def _backward_tables(blank_lp, label_lp, t_lens, u_lens):
    """Batched beta; beta[t,u] includes the emission leaving (t,u)."""
    bsz, tm, um1 = blank_lp.shape
    beta = np.full((bsz, tm, um1), NEG_INF)
    bnext = np.full((bsz, um1), NEG_INF)
    with np.errstate(invalid="ignore"):
        for t in range(tm - 1, -1, -1):
            final_here = (t_lens - 1) == t
            if np.any(final_here):
                bnext[final_here, :] = NEG_INF
                bnext[final_here, u_lens[final_here]] = 0.0
            inject = blank_lp[:, t, :] + bnext
            lab_cum = _exclusive_cumsum(label_lp[:, t, :])
            s = inject + lab_cum
            run = np.logaddexp.accumulate(s[:, ::-1], axis=1)[:, ::-1]
            beta[:, t, :] = np.where(np.isneginf(run), NEG_INF, run - lab_cum)
            bnext = beta[:, t, :]
    return beta


def _edge_posteriors(alpha, beta, blank_lp, label_lp, t_lens, u_lens, total):
    """Occupancy of blank and label edges, exp(alpha + lp + beta' - total)."""
    bsz, tm, um1 = blank_lp.shape
    beta_right = np.full_like(beta, NEG_INF)
    beta_right[:, :, :-1] = beta[:, :, 1:]
    beta_down = np.full_like(beta, NEG_INF)
    beta_down[:, :-1, :] = beta[:, 1:, :]
    rows = np.arange(bsz)
    beta_down[rows, t_lens - 1, u_lens] = 0.0  # final blank leaves the lattice
    z = total[:, None, None]
    with np.errstate(invalid="ignore"):
        occ_blank = np.exp(alpha + blank_lp + beta_down - z)
        occ_label = np.exp(alpha + label_lp + beta_right - z)
    return occ_blank, occ_label


def _pad_grids(log_probs_list, labels_list):
    bsz = len(log_probs_list)
    t_lens = np.array([lp.shape[0] for lp in log_probs_list], dtype=np.int64)
    u_lens = np.array([len(lab) for lab in labels_list], dtype=np.int64)
    tm = int(t_lens.max())
    um1 = int(u_lens.max()) + 1
    blank_lp = np.full((bsz, tm, um1), NEG_INF)
    label_lp = np.full((bsz, tm, um1), NEG_INF)
    for b, (lp, lab) in enumerate(zip(log_probs_list, labels_list)):
        t, u1 = lp.shape[0], lp.shape[1]
        blank_lp[b, :t, :u1] = lp[:, :, 0]
        if len(lab):
            label_lp[b, :t, :u1 - 1] = np.take_along_axis(
                lp[:, :-1, :], np.asarray(lab)[None, :, None], axis=2
            )[:, :, 0]
    return blank_lp, label_lp, t_lens, u_lens


def lattice_tables(log_probs: np.ndarray, labels) -> LossLattice:
    """Forward/backward tables for one utterance's (T, U+1, V+1) grid."""
    labels = np.asarray(labels, dtype=np.int64)
    blank_lp, label_lp, t_lens, u_lens = _pad_grids([log_probs], [labels])
    alpha, total = _forward_tables(blank_lp, label_lp, t_lens, u_lens)
    beta = _backward_tables(blank_lp, label_lp, t_lens, u_lens)
    return LossLattice(
        alpha=alpha[0],
        beta=beta[0],
        log_probs=log_probs,
        labels=labels,
        total_log_prob=float(total[0]),
    )


def _solve(blank_lp, label_lp, t_lens, u_lens, lp_for_lattices, labels_list):
    """Shared core: tables, per-utterance lattices, and the loss gradient."""
    bsz = blank_lp.shape[0]
    alpha, total = _forward_tables(blank_lp, label_lp, t_lens, u_lens)
    beta = _backward_tables(blank_lp, label_lp, t_lens, u_lens)
    occ_blank, occ_label = _edge_posteriors(alpha, beta, blank_lp, label_lp, t_lens, u_lens, total)

    per_utt = [float(-total[b]) for b in range(bsz)]
    lattices = []
    for b in range(bsz):
        t, u = int(t_lens[b]), int(u_lens[b])
        lattices.append(LossLattice(
            alpha=alpha[b, :t, :u + 1].copy(),
            beta=beta[b, :t, :u + 1].copy(),
            log_probs=lp_for_lattices[b],
            labels=labels_list[b],
            total_log_prob=float(total[b]),
        ))
    return per_utt, lattices, occ_blank, occ_label


def transducer_nll(log_prob_tensors: list[Tensor], labels_list) -> tuple[Tensor, list[float], list[LossLattice]]:
    """Mean negative log alignment probability over per-utterance grids.

    Each entry of ``log_prob_tensors`` is a graph node of shape
    (T_b, U_b+1, V+1) holding normalized log-probabilities. Returns the
    scalar loss tensor plus per-utterance loss values and lattices.
    """
    labels_list = [np.asarray(lab, dtype=np.int64) for lab in labels_list]
    bsz = len(log_prob_tensors)
    lp_arrays = [t.data for t in log_prob_tensors]
    blank_lp, label_lp, t_lens, u_lens = _pad_grids(lp_arrays, labels_list)
    per_utt, lattices, occ_blank, occ_label = _solve(
        blank_lp, label_lp, t_lens, u_lens, lp_arrays, labels_list)

    grads = []
    for b in range(bsz):
        t, u = int(t_lens[b]), int(u_lens[b])
        g = np.zeros_like(lp_arrays[b])
        g[:, :, 0] = -occ_blank[b, :t, :u + 1] / bsz
        if u:
            np.add.at(g[:, :-1, :], (slice(None), np.arange(u), labels_list[b]),
                      -occ_label[b, :t, :u] / bsz)
        grads.append(g)

    out_data = np.asarray(np.mean(per_utt))

    def bw(g, grad_table, needs):
        for tensor, garr in zip(log_prob_tensors, grads):
            ad._acc(grad_table, needs, tensor, g * garr)

    loss = ad._node(out_data, tuple(log_prob_tensors), bw)
    return loss, per_utt, lattices


def transducer_nll_padded(log_probs: Tensor, t_lens, u_lens, labels_list) -> tuple[Tensor, list[float], list[LossLattice]]:
    """Batch loss over one padded (B, Tm, Um+1, V+1) log-prob grid.

    Cells outside an utterance's own (T_b, U_b+1) region carry junk
    values; they receive exactly zero gradient and no lattice mass.
    """
    labels_list = [np.asarray(lab, dtype=np.int64) for lab in labels_list]
    t_lens = np.asarray(t_lens, dtype=np.int64)
    u_lens = np.asarray(u_lens, dtype=np.int64)
    lp = log_probs.data
    bsz, tm, um1, _ = lp.shape

    t_grid = np.arange(tm)[None, :, None]
    u_grid = np.arange(um1)[None, None, :]
    valid = (t_grid < t_lens[:, None, None]) & (u_grid <= u_lens[:, None, None])
    blank_lp = np.where(valid, lp[:, :, :, 0], NEG_INF)
    labels_pad = np.zeros((bsz, um1), dtype=np.int64)
    for b, lab in enumerate(labels_list):
        labels_pad[b, :len(lab)] = lab
    label_lp = np.take_along_axis(lp, labels_pad[:, None, :, None], axis=3)[:, :, :, 0]
    label_valid = valid & (u_grid < u_lens[:, None, None])
    label_lp = np.where(label_valid, label_lp, NEG_INF)

    views = [lp[b, :int(t_lens[b]), :int(u_lens[b]) + 1, :] for b in range(bsz)]
    per_utt, lattices, occ_blank, occ_label = _solve(
        blank_lp, label_lp, t_lens, u_lens, views, labels_list)

    grad = np.zeros_like(lp)
    grad[:, :, :, 0] = -occ_blank / bsz
    for b, lab in enumerate(labels_list):
        u = len(lab)
        if u:
            np.add.at(grad[b, :, :-1, :], (slice(None), np.arange(u), lab),
                      -occ_label[b, :, :u] / bsz)

    out_data = np.asarray(np.mean(per_utt))

    def bw(g, grad_table, needs):
        ad._acc(grad_table, needs, log_probs, g * grad)

    loss = ad._node(out_data, (log_probs,), bw)
    return loss, per_utt, lattices
