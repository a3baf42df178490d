"""Manifest handling, OOV extraction, subsets, and the weighted sampler."""

import numpy as np
import pytest

from oovtune import data
from oovtune.data import Manifest, OovList, SamplingWeights, Utterance
from oovtune.errors import DataError


def mk_manifest(texts, prefix="u"):
    utts = [Utterance(id=f"{prefix}{i:04d}", text=t, features_path=f"feats/{prefix}{i:04d}.feat")
            for i, t in enumerate(texts)]
    return Manifest(utts)


class TestManifestIO:
    def test_round_trip(self, tmp_path):
        m = mk_manifest(["play the music", "turn off covid news"])
        path = tmp_path / "m.tsv"
        data.save_manifest(m, path)
        loaded = data.load_manifest(path)
        assert [u.id for u in loaded] == [u.id for u in m]
        assert loaded.texts() == m.texts()
        assert loaded.base_dir == tmp_path

    def test_comments_ignored(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("# header\nu1\tf/u1.feat\thello there\n", encoding="utf-8")
        m = data.load_manifest(path)
        assert len(m) == 1 and m[0].id == "u1"

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("u1\ta.feat\tone\nu1\tb.feat\ttwo\n", encoding="utf-8")
        with pytest.raises(DataError):
            data.load_manifest(path)

    def test_bad_field_count_rejected(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("u1\ta.feat\n", encoding="utf-8")
        with pytest.raises(DataError):
            data.load_manifest(path)

    def test_transcripts_are_normalized(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("u1\ta.feat\tPlay   MUSIC\n", encoding="utf-8")
        assert data.load_manifest(path)[0].text == "play music"


class TestExtractOov:
    def test_threshold_rule(self):
        # "covid" appears 3 times and never in train; "zzz" only twice
        train = ["play music", "turn off the lights"]
        probe = ["covid music", "play covid", "covid zzz", "zzz lights"]
        oov = data.extract_oov(train, probe, min_count=3)
        assert oov.words == frozenset({"covid"})

    def test_probe_covered_by_train_gives_empty(self):
        train = ["alpha beta gamma"]
        probe = ["alpha beta", "beta gamma", "gamma alpha"]
        assert len(data.extract_oov(train, probe)) == 0

    def test_disjoint_from_train_vocabulary(self, rng):
        lex = [f"w{i}" for i in range(30)]
        train = [" ".join(rng.choice(lex, size=4)) for _ in range(50)]
        probe = [" ".join(rng.choice(lex + ["newword"], size=4)) for _ in range(50)]
        oov = data.extract_oov(train, probe, min_count=1)
        train_vocab = {w for t in train for w in t.split()}
        assert not (oov.words & train_vocab)

    def test_empty_inputs_rejected(self):
        with pytest.raises(DataError):
            data.extract_oov([], ["x"])
        with pytest.raises(DataError):
            data.extract_oov(["x"], [])


class TestSubsets:
    def test_select_oov_membership(self):
        m = mk_manifest(["turn off covid news", "play music", "covid update"])
        subset = data.select_oov_utterances(m, OovList(frozenset({"covid"}), 3))
        assert [u.text for u in subset] == ["turn off covid news", "covid update"]

    def test_empty_oov_list_gives_empty_subset(self):
        m = mk_manifest(["a b", "c d"])
        assert len(data.select_oov_utterances(m, OovList(frozenset(), 3))) == 0

    def test_partition_property(self, rng):
        m = mk_manifest([" ".join(rng.choice(["a", "b", "covid"], size=3)) for _ in range(40)])
        oov = OovList(frozenset({"covid"}), 3)
        subset = data.select_oov_utterances(m, oov)
        rest = data.complement(m, subset)
        assert len(subset) + len(rest) == len(m)
        assert subset.ids() | rest.ids() == m.ids()
        assert not (subset.ids() & rest.ids())

    def test_complement_edge_cases(self):
        m = mk_manifest(["a", "b", "c"])
        assert len(data.complement(m, m)) == 0
        empty = Manifest([])
        assert [u.id for u in data.complement(m, empty)] == [u.id for u in m]

    def test_complement_rejects_foreign_ids(self):
        m = mk_manifest(["a", "b"])
        other = mk_manifest(["x"], prefix="z")
        with pytest.raises(DataError):
            data.complement(m, other)

    def test_downsample_identity_and_determinism(self):
        m = mk_manifest([f"t {i}" for i in range(20)])
        assert [u.id for u in data.downsample(m, 20, seed=1)] == [u.id for u in m]
        a = [u.id for u in data.downsample(m, 7, seed=5)]
        b = [u.id for u in data.downsample(m, 7, seed=5)]
        assert a == b
        with pytest.raises(DataError):
            data.downsample(m, 21, seed=0)

    def test_downsample_preserves_order(self):
        m = mk_manifest([f"t {i}" for i in range(50)])
        sub = data.downsample(m, 20, seed=3)
        positions = [int(u.id[1:]) for u in sub]
        assert positions == sorted(positions)

    def test_downsample_inclusion_frequencies(self):
        # binomial concentration: with n = size/2 over many seeds each
        # utterance should be kept about half the time
        m = mk_manifest([f"t {i}" for i in range(20)])
        counts = {u.id: 0 for u in m}
        n_seeds = 1000
        for seed in range(n_seeds):
            for u in data.downsample(m, 10, seed=seed):
                counts[u.id] += 1
        for c in counts.values():
            assert 0.45 <= c / n_seeds <= 0.55


class TestSamplingWeights:
    def test_validation(self):
        with pytest.raises(ValueError):
            SamplingWeights((0.5, 0.6))
        with pytest.raises(ValueError):
            SamplingWeights((-0.1, 1.1))
        SamplingWeights((1.0, 0.0))

    def test_paper_style_percentages_are_expressible(self):
        for parts in ([70, 30], [80, 20], [90, 10]):
            w = SamplingWeights.from_percentages(parts)
            assert abs(sum(w.weights) - 1.0) <= 1e-12


class TestWeightedSampler:
    def test_degenerate_weight_draws_single_source(self):
        a = mk_manifest(["a one", "a two"], prefix="a")
        b = mk_manifest(["b one"], prefix="b")
        stream = data.weighted_sampler([(a, 1.0), (b, 0.0)], seed=0)
        assert all(next(stream).id.startswith("a") for _ in range(200))

    def test_zero_weight_allows_empty_manifest(self):
        a = mk_manifest(["a one"], prefix="a")
        stream = data.weighted_sampler([(a, 1.0), (Manifest([]), 0.0)], seed=0)
        assert next(stream).id.startswith("a")

    def test_nonzero_weight_on_empty_manifest_rejected(self):
        a = mk_manifest(["a one"], prefix="a")
        with pytest.raises(DataError):
            data.weighted_sampler([(a, 0.5), (Manifest([]), 0.5)], seed=0)

    def test_mixing_fraction(self):
        a = mk_manifest([f"a {i}" for i in range(10)], prefix="a")
        b = mk_manifest([f"b {i}" for i in range(10)], prefix="b")
        stream = data.weighted_sampler([(a, 0.9), (b, 0.1)], seed=77)
        hits = sum(next(stream).id.startswith("a") for _ in range(10_000))
        assert 0.88 <= hits / 10_000 <= 0.92

    def test_mixing_is_size_independent(self):
        small = mk_manifest([f"s {i}" for i in range(10)], prefix="s")
        large = mk_manifest([f"l {i}" for i in range(10_000)], prefix="l")
        stream = data.weighted_sampler([(small, 0.7), (large, 0.3)], seed=5)
        hits = sum(next(stream).id.startswith("s") for _ in range(10_000))
        assert 0.68 <= hits / 10_000 <= 0.72

    def test_deterministic_stream(self):
        a = mk_manifest([f"a {i}" for i in range(5)], prefix="a")
        b = mk_manifest([f"b {i}" for i in range(5)], prefix="b")
        s1 = data.weighted_sampler([(a, 0.5), (b, 0.5)], seed=9)
        s2 = data.weighted_sampler([(a, 0.5), (b, 0.5)], seed=9)
        assert [next(s1).id for _ in range(100)] == [next(s2).id for _ in range(100)]
