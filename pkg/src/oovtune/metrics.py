"""Word error rate via edit-distance alignment, plus per-word analysis.

The aligner minimizes substitutions + deletions + insertions and, among
minimal-cost alignments, maximizes the number of exact matches; this
secondary objective pins the (S, D, I) split so counts are symmetric
(deletions of a->b equal insertions of b->a). The backtrace resolves any
remaining ties with the fixed preference match > substitution >
deletion > insertion, giving deterministic alignments.

NWER is plain WER divided by one fixed, externally chosen normalizer
(by convention the baseline model's WER on the downsampled dev split).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Manifest, OovList, words_of
from .errors import DataError
from .features import read_features


def edit_distance(ref_words: list[str], hyp_words: list[str]):
    """Minimal (S, D, I) alignment between two word sequences.

    Returns (s, d, i, ops) where ops is the deterministic backtraced
    alignment: a list of (op, ref_index, hyp_index) with op one of
    match/sub/del/ins and None for the missing side.
    """
    n, m = len(ref_words), len(hyp_words)
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    matches = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cands = []
            if ref_words[i - 1] == hyp_words[j - 1]:
                cands.append((cost[i - 1, j - 1], matches[i - 1, j - 1] + 1))
            else:
                cands.append((cost[i - 1, j - 1] + 1, matches[i - 1, j - 1]))
            cands.append((cost[i - 1, j] + 1, matches[i - 1, j]))
            cands.append((cost[i, j - 1] + 1, matches[i, j - 1]))
            best = min(c for c, _ in cands)
            cost[i, j] = best
            matches[i, j] = max(mt for c, mt in cands if c == best)

    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref_words[i - 1] == hyp_words[j - 1] \
                and cost[i, j] == cost[i - 1, j - 1] and matches[i, j] == matches[i - 1, j - 1] + 1:
            ops.append(("match", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + 1 \
                and matches[i, j] == matches[i - 1, j - 1]:
            ops.append(("sub", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and cost[i, j] == cost[i - 1, j] + 1 and matches[i, j] == matches[i - 1, j]:
            ops.append(("del", i - 1, None))
            i = i - 1
        else:
            ops.append(("ins", None, j - 1))
            j = j - 1
    ops.reverse()
    s = sum(1 for op, _, _ in ops if op == "sub")
    d = sum(1 for op, _, _ in ops if op == "del")
    ins = sum(1 for op, _, _ in ops if op == "ins")
    return s, d, ins, ops


@dataclass
class UttAlignment:
    utt_id: str
    ref_words: list[str]
    hyp_words: list[str]
    s: int
    d: int
    i: int
    ref_matched: list[bool]  # one flag per reference word


@dataclass
class WerReport:
    set_name: str
    per_utt: list[UttAlignment]  # sorted by utterance id
    s: int
    d: int
    i: int
    n: int
    normalizer: float | None = None

    def __post_init__(self):
        if self.normalizer is not None and self.normalizer <= 0:
            raise ValueError("NWER normalizer must be positive")

    @property
    def wer(self) -> float:
        if self.n == 0:
            raise ValueError("WER undefined on an empty reference")
        return (self.s + self.d + self.i) / self.n

    @property
    def nwer(self) -> float | None:
        return None if self.normalizer is None else self.wer / self.normalizer


def align_pair(utt_id: str, ref_text: str, hyp_text: str) -> UttAlignment:
    ref_words = words_of(ref_text)
    hyp_words = words_of(hyp_text)
    s, d, i, ops = edit_distance(ref_words, hyp_words)
    matched = [False] * len(ref_words)
    for op, ref_idx, _ in ops:
        if op == "match":
            matched[ref_idx] = True
    return UttAlignment(utt_id=utt_id, ref_words=ref_words, hyp_words=hyp_words,
                        s=s, d=d, i=i, ref_matched=matched)


def report_from_alignments(set_name: str, alignments: list[UttAlignment],
                           normalizer: float | None = None) -> WerReport:
    alignments = sorted(alignments, key=lambda a: a.utt_id)
    return WerReport(
        set_name=set_name,
        per_utt=alignments,
        s=sum(a.s for a in alignments),
        d=sum(a.d for a in alignments),
        i=sum(a.i for a in alignments),
        n=sum(len(a.ref_words) for a in alignments),
        normalizer=normalizer,
    )


def evaluate(model, vocab, manifest: Manifest, set_name: str = "eval",
             normalizer: float | None = None, max_emits: int = 5) -> WerReport:
    """Greedy-decode every utterance and aggregate edit counts by id."""
    from .tokenizer import decode

    alignments = []
    for utt in manifest:
        feats = read_features(manifest.feature_file(utt))
        hyp_ids = model.greedy_decode(feats, max_emits_per_frame=max_emits)
        hyp_text = decode(hyp_ids, vocab)
        alignments.append(align_pair(utt.id, utt.text, hyp_text))
    return report_from_alignments(set_name, alignments, normalizer)


def per_word_error(report: WerReport, word: str) -> tuple[int, int]:
    """(occurrences, misses) of a word over the report's references."""
    occur = 0
    miss = 0
    for a in report.per_utt:
        for idx, w in enumerate(a.ref_words):
            if w == word:
                occur += 1
                if not a.ref_matched[idx]:
                    miss += 1
    return occur, miss


def per_word_analysis(base_report: WerReport, new_report: WerReport, oov: OovList,
                      finetune_texts: list[str]):
    """Relative per-word error reduction, bucketed by fine-tuning exposure.

    For each listed word with base error e_base > 0, the relative
    reduction 1 - e_new/e_base is averaged over all words sharing the
    same occurrence count in the fine-tuning texts.
    """
    base_ids = [a.utt_id for a in base_report.per_utt]
    new_ids = [a.utt_id for a in new_report.per_utt]
    if base_ids != new_ids:
        raise DataError("per-word analysis needs two reports over the same manifest")
    exposure = {}
    for w in oov.words:
        exposure[w] = sum(words_of(t).count(w) for t in finetune_texts)

    rows = []
    for w in sorted(oov.words):
        occur, miss_base = per_word_error(base_report, w)
        if occur == 0:
            continue
        _, miss_new = per_word_error(new_report, w)
        e_base = miss_base / occur
        e_new = miss_new / occur
        if e_base == 0:
            continue
        rows.append({"word": w, "exposure": exposure[w], "occurrences": occur,
                     "e_base": e_base, "e_new": e_new,
                     "reduction": 1.0 - e_new / e_base})

    buckets: dict[int, float] = {}
    for count in sorted({r["exposure"] for r in rows}):
        members = [r["reduction"] for r in rows if r["exposure"] == count]
        buckets[count] = float(np.mean(members))
    return buckets, rows


def write_report(report: WerReport, out_dir: str | Path):
    """TSV summary plus a structured JSON dump with per-utterance detail."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nwer = report.nwer
    header = "set\tS\tD\tI\tN\tWER\tNWER"
    line = (f"{report.set_name}\t{report.s}\t{report.d}\t{report.i}\t{report.n}"
            f"\t{report.wer:.6f}\t" + (f"{nwer:.6f}" if nwer is not None else "-"))
    (out_dir / "report.tsv").write_text(header + "\n" + line + "\n", encoding="utf-8")
    doc = {
        "set": report.set_name,
        "s": report.s, "d": report.d, "i": report.i, "n": report.n,
        "wer": report.wer,
        "normalizer": report.normalizer,
        "nwer": nwer,
        "utterances": [
            {"id": a.utt_id, "ref": " ".join(a.ref_words), "hyp": " ".join(a.hyp_words),
             "s": a.s, "d": a.d, "i": a.i, "ref_matched": a.ref_matched}
            for a in report.per_utt
        ],
    }
    (out_dir / "report.json").write_text(json.dumps(doc, sort_keys=True, indent=1),
                                         encoding="utf-8")


def read_report(path: str | Path) -> WerReport:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    per_utt = [
        UttAlignment(utt_id=u["id"], ref_words=u["ref"].split(), hyp_words=u["hyp"].split(),
                     s=u["s"], d=u["d"], i=u["i"], ref_matched=list(u["ref_matched"]))
        for u in doc["utterances"]
    ]
    return WerReport(set_name=doc["set"], per_utt=per_utt, s=doc["s"], d=doc["d"],
                     i=doc["i"], n=doc["n"], normalizer=doc["normalizer"])
