"""Checkpoint container: bit-exact round trips, format details, EWC section."""

import numpy as np
import pytest

from oovtune import ewc as ewc_mod
from oovtune.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from oovtune.errors import DataError
from oovtune.model import RnntModel


def make_ckpt(config, vocab, seed=4, step=17, with_ewc=False):
    model = RnntModel(config, seed=seed)
    state = None
    if with_ewc:
        fisher = {name: np.abs(p.value.data) for name, p in model.params.items()}
        state = ewc_mod.snapshot_state(model.params, fisher, lam=12.5,
                                       scope=frozenset({"decoder", "joint"}))
    return Checkpoint(config=config, vocab=vocab, values=model.params.values_dict(),
                      components=model.params.components_dict(), step=step, ewc=state)


class TestRoundTrip:
    def test_values_survive_bit_exactly(self, tmp_path, tiny_setup):
        _, vocab, config, _ = tiny_setup
        ckpt = make_ckpt(config, vocab)
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        back = load_checkpoint(path)
        assert back.config == ckpt.config
        assert back.vocab.units == ckpt.vocab.units
        assert back.vocab.mode == ckpt.vocab.mode
        assert back.components == ckpt.components
        assert back.step == 17
        for name in ckpt.values:
            np.testing.assert_array_equal(back.values[name], ckpt.values[name])

    def test_save_load_save_is_byte_identical(self, tmp_path, tiny_setup):
        _, vocab, config, _ = tiny_setup
        ckpt = make_ckpt(config, vocab, with_ewc=True)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(ckpt, p1)
        save_checkpoint(load_checkpoint(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_ewc_section_round_trips(self, tmp_path, tiny_setup):
        _, vocab, config, _ = tiny_setup
        ckpt = make_ckpt(config, vocab, with_ewc=True)
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        back = load_checkpoint(path)
        assert back.ewc is not None
        assert back.ewc.lam == 12.5
        assert back.ewc.scope == frozenset({"decoder", "joint"})
        for name in ckpt.ewc.fisher:
            np.testing.assert_array_equal(back.ewc.fisher[name], ckpt.ewc.fisher[name])
            np.testing.assert_array_equal(back.ewc.theta_old[name], ckpt.ewc.theta_old[name])

    def test_loaded_model_decodes_identically(self, tmp_path, tiny_setup, rng):
        manifest, vocab, config, _ = tiny_setup
        ckpt = make_ckpt(config, vocab)
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        model_a = ckpt.to_model()
        model_b = load_checkpoint(path).to_model()
        from oovtune.features import read_features
        feats = read_features(manifest.feature_file(manifest[0]))
        assert model_a.greedy_decode(feats) == model_b.greedy_decode(feats)


class TestFormat:
    def test_magic_bytes(self, tmp_path, tiny_setup):
        _, vocab, config, _ = tiny_setup
        path = tmp_path / "m.ckpt"
        save_checkpoint(make_ckpt(config, vocab), path)
        raw = path.read_bytes()
        assert raw[:8] == b"RNTCKPT1"

    def test_ewc_magic_present_only_when_attached(self, tmp_path, tiny_setup):
        _, vocab, config, _ = tiny_setup
        plain, with_state = tmp_path / "p.ckpt", tmp_path / "e.ckpt"
        save_checkpoint(make_ckpt(config, vocab), plain)
        save_checkpoint(make_ckpt(config, vocab, with_ewc=True), with_state)
        assert b"EWC1" not in plain.read_bytes()
        assert b"EWC1" in with_state.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_trailing_garbage_rejected(self, tmp_path, tiny_setup):
        _, vocab, config, _ = tiny_setup
        path = tmp_path / "m.ckpt"
        save_checkpoint(make_ckpt(config, vocab), path)
        path.write_bytes(path.read_bytes() + b"XTRA")
        with pytest.raises(DataError):
            load_checkpoint(path)
