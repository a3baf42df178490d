"""Feature files, speaker profiles, rendering determinism, corpus generation."""

import numpy as np
import pytest

from oovtune import corpus, data, synth
from oovtune.corpus import CorpusSpec
from oovtune.errors import DataError
from oovtune.features import read_features, write_features
from oovtune.tokenizer import build_vocab, encode


@pytest.fixture(scope="module")
def acoustics():
    return synth.Acoustics(
        feature_dim=8,
        frames_per_token=2,
        pattern_seed=11,
        pattern_scale=1.0,
        real_pool=tuple(synth.make_real_pool(4, seed=11, dim=8)),
        tts=synth.make_tts_profile(seed=11, dim=8),
    )


@pytest.fixture(scope="module")
def vocab():
    return build_vocab(["abcdefg hij"], mode="character")


class TestFeatureFiles:
    def test_round_trip(self, tmp_path, rng):
        frames = rng.normal(size=(7, 5)).astype(np.float32).astype(np.float64)
        path = tmp_path / "x.feat"
        write_features(path, frames)
        back = read_features(path)
        np.testing.assert_array_equal(back, frames)
        assert back.dtype == np.float64

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.feat"
        path.write_bytes(b"NOPE!" + b"\x00" * 16)
        with pytest.raises(DataError):
            read_features(path)

    def test_truncated_rejected(self, tmp_path, rng):
        path = tmp_path / "x.feat"
        write_features(path, rng.normal(size=(3, 4)))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(DataError):
            read_features(path)


class TestProfiles:
    def test_condition_number_bounded(self):
        for p in synth.make_real_pool(10, seed=0, dim=16):
            assert np.linalg.cond(p.transform) <= 100.0

    def test_bad_profile_rejected(self):
        with pytest.raises(ValueError):
            synth.SpeakerProfile(id="x", transform=np.array([[1.0, 0.0], [0.0, 1e-9]]),
                                 bias=np.zeros(2), noise_std=0.1)
        with pytest.raises(ValueError):
            synth.SpeakerProfile(id="x", transform=np.eye(2), bias=np.zeros(2), noise_std=-1.0)

    def test_acoustics_round_trip(self, tmp_path, acoustics):
        path = tmp_path / "ac.json"
        synth.save_acoustics(acoustics, path)
        back = synth.load_acoustics(path)
        assert back.feature_dim == acoustics.feature_dim
        assert back.pattern_seed == acoustics.pattern_seed
        np.testing.assert_array_equal(back.tts.transform, acoustics.tts.transform)
        np.testing.assert_array_equal(back.real_pool[2].bias, acoustics.real_pool[2].bias)


class TestBaseFeatures:
    def test_shape(self):
        out = synth.base_features([3, 1, 4], frames_per_token=2, feature_dim=8, pattern_seed=0)
        assert out.shape == (6, 8)

    def test_deterministic(self):
        a = synth.base_features([5, 2], 3, 8, pattern_seed=9)
        b = synth.base_features([5, 2], 3, 8, pattern_seed=9)
        np.testing.assert_array_equal(a, b)

    def test_patterns_distinct_over_full_vocab(self):
        pats = [synth.token_pattern(t, 16, pattern_seed=4) for t in range(1, 60)]
        for i in range(len(pats)):
            for j in range(i + 1, len(pats)):
                assert np.linalg.norm(pats[i] - pats[j]) > 0

    def test_empty_tokens_rejected(self):
        with pytest.raises(ValueError):
            synth.base_features([], 2, 8, pattern_seed=0)


class TestRender:
    def test_identity_profile_no_noise_equals_base(self, vocab, acoustics):
        ident = synth.SpeakerProfile(id="id", transform=np.eye(8), bias=np.zeros(8),
                                     noise_std=0.0)
        out = synth.render("abc", ident, vocab, seed=0, ac=acoustics)
        base = synth.base_features(encode("abc", vocab), 2, 8, acoustics.pattern_seed,
                                   acoustics.pattern_scale)
        np.testing.assert_array_equal(out, base)

    def test_deterministic_given_seed(self, vocab, acoustics):
        p = acoustics.real_pool[0]
        a = synth.render("abc hij", p, vocab, seed=[1, 2], ac=acoustics)
        b = synth.render("abc hij", p, vocab, seed=[1, 2], ac=acoustics)
        np.testing.assert_array_equal(a, b)

    def test_distinct_profiles_differ_beyond_noise(self, vocab, acoustics):
        p0, p1 = acoustics.real_pool[0], acoustics.real_pool[1]
        a = synth.render("abcdefg", p0, vocab, seed=3, ac=acoustics)
        b = synth.render("abcdefg", p1, vocab, seed=3, ac=acoustics)
        gap = np.abs(a.mean(axis=0) - b.mean(axis=0)).max()
        assert gap > 3 * p0.noise_std / np.sqrt(a.shape[0])


class TestMakeCorpus:
    def test_single_profile_pool(self, tmp_path, vocab, acoustics):
        m = synth.make_corpus(["abc", "hij"], [acoustics.tts], seed=5,
                              out_dir=tmp_path, vocab=vocab, ac=acoustics)
        assert len(m) == 2
        for u in m:
            assert (tmp_path / u.features_path).exists()

    def test_seeded_rerun_identical(self, tmp_path, vocab, acoustics):
        texts = ["abc", "hij", "cab bag".replace("g", "c")]
        m1 = synth.make_corpus(texts, list(acoustics.real_pool), seed=5,
                               out_dir=tmp_path / "one", vocab=vocab, ac=acoustics)
        m2 = synth.make_corpus(texts, list(acoustics.real_pool), seed=5,
                               out_dir=tmp_path / "two", vocab=vocab, ac=acoustics)
        for u1, u2 in zip(m1, m2):
            assert u1.id == u2.id and u1.features_path == u2.features_path
            b1 = (tmp_path / "one" / u1.features_path).read_bytes()
            b2 = (tmp_path / "two" / u2.features_path).read_bytes()
            assert b1 == b2

    def test_speaker_assignment_concentration(self, tmp_path, vocab, acoustics):
        pool = list(acoustics.real_pool)  # 4 profiles, 1000 draws
        rng = np.random.default_rng(0)
        counts = np.zeros(len(pool), dtype=int)
        # count assignments through the same seeded choice the renderer makes
        r = np.random.default_rng(123)
        for _ in range(1000):
            counts[int(r.integers(len(pool)))] += 1
        # multinomial concentration: each of 4 speakers near 250
        assert np.all(counts > 190) and np.all(counts < 310)


class TestMismatchIsReal:
    def test_tts_channel_is_more_alien_than_a_held_out_real_profile(self, vocab):
        # fit per-token mean frames on 9 of the real profiles, then compare
        # reconstruction error on the held-out real profile vs the
        # synthetic voice: the synthetic channel must sit further away
        dim = 8
        ac = synth.Acoustics(
            feature_dim=dim, frames_per_token=2, pattern_seed=3, pattern_scale=1.0,
            real_pool=tuple(synth.make_real_pool(10, seed=3, dim=dim)),
            tts=synth.make_tts_profile(seed=3, dim=dim),
        )
        text = "abcdefg hij abc"
        train_profiles = ac.real_pool[:9]
        held_out = ac.real_pool[9]
        renders = [synth.render(text, p, vocab, seed=[4, i], ac=ac)
                   for i, p in enumerate(train_profiles)]
        mean_frames = np.mean(renders, axis=0)

        def err(profile, seed):
            r = synth.render(text, profile, vocab, seed=seed, ac=ac)
            return float(np.mean((r - mean_frames) ** 2))

        assert err(ac.tts, seed=99) > err(held_out, seed=99)


class TestCorpusGeneration:
    def test_texts_satisfy_the_extraction_rule(self):
        spec = CorpusSpec(vocab_words=20, oov_words=6, train_size=60, dev_size=80,
                          eval_size=60, oov_dev_counts=(3, 4, 5), oov_eval_count=3)
        texts = corpus.generate_texts(spec, seed=77)
        train_vocab = {w for t in texts.train for w in t.split()}
        assert not (set(texts.oov_words) & train_vocab)
        found = data.extract_oov(texts.train, texts.dev, min_count=3)
        assert set(texts.oov_words) <= found.words

    def test_dev_counts_follow_the_cycle(self):
        spec = CorpusSpec(vocab_words=20, oov_words=6, train_size=60, dev_size=80,
                          eval_size=60, oov_dev_counts=(3, 4, 5), oov_eval_count=3)
        texts = corpus.generate_texts(spec, seed=77)
        for i, w in enumerate(texts.oov_words):
            n = sum(t.split().count(w) for t in texts.dev)
            assert n == spec.oov_dev_counts[i % 3] == texts.dev_counts[w]

    def test_generation_is_deterministic(self):
        spec = CorpusSpec(vocab_words=10, oov_words=3, train_size=20, dev_size=30,
                          eval_size=20, oov_dev_counts=(3,), oov_eval_count=2)
        a = corpus.generate_texts(spec, seed=5)
        b = corpus.generate_texts(spec, seed=5)
        assert a.train == b.train and a.dev == b.dev and a.eval == b.eval
        assert a.oov_words == b.oov_words

    def test_tree_generation(self, tmp_path):
        spec = CorpusSpec(vocab_words=10, oov_words=3, train_size=15, dev_size=25,
                          eval_size=15, oov_dev_counts=(3,), oov_eval_count=2)
        tree = corpus.generate_corpus_tree(tmp_path / "c", spec, seed=5,
                                           feature_dim=8, real_speakers=3)
        for path in (tree.train, tree.dev, tree.eval, tree.dev_oov_tts,
                     tree.oov_true, tree.acoustics, tree.vocab_file):
            assert path.exists(), path
        dev = data.load_manifest(tree.dev)
        tts = data.load_manifest(tree.dev_oov_tts)
        oov_words = set(tree.oov_true.read_text().split())
        dev_oov = data.select_oov_utterances(dev, data.OovList(frozenset(oov_words), 3))
        assert tts.texts() == dev_oov.texts()
