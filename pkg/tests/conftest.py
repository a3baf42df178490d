import numpy as np
import pytest

from oovtune import autodiff as ad


def central_difference(f, theta: np.ndarray, index: tuple, step: float = 1e-5) -> float:
    """Central finite difference of scalar f with respect to theta[index].

    Perturbs the array in place and restores it, so ``f`` may close over
    ``theta`` directly.
    """
    orig = theta[index]
    theta[index] = orig + step
    up = f()
    theta[index] = orig - step
    down = f()
    theta[index] = orig
    return (up - down) / (2.0 * step)


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    denom = max(abs(analytic), abs(numeric), floor)
    return abs(analytic - numeric) / denom


def check_gradient(f, tensor: ad.Tensor, *, n_coords: int | None = None, rng=None,
                   step: float = 1e-5, tol: float = 1e-5):
    """Compare tensor.grad (already populated) against finite differences of f().

    Checks every coordinate unless ``n_coords`` is given, in which case a
    random subsample is used. The relative-error denominator is floored at
    a small fraction of the tensor's gradient scale so that coordinates
    whose true gradient is essentially zero measure absolute, not
    relative, agreement.
    """
    flat_idx = list(np.ndindex(tensor.data.shape))
    if n_coords is not None and n_coords < len(flat_idx):
        assert rng is not None
        chosen = rng.choice(len(flat_idx), size=n_coords, replace=False)
        flat_idx = [flat_idx[i] for i in chosen]
    scale_floor = max(1e-3 * float(np.max(np.abs(tensor.grad))), 1e-8)
    worst = 0.0
    for idx in flat_idx:
        numeric = central_difference(f, tensor.data, idx, step=step)
        analytic = tensor.grad[idx]
        worst = max(worst, relative_error(analytic, numeric, floor=scale_floor))
    assert worst <= tol, f"gradient mismatch: worst relative error {worst:.3e} > {tol:.0e}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_setup(tmp_path):
    """A 12-utterance rendered corpus plus a matching small model config."""
    from oovtune import synth
    from oovtune.model import ModelConfig
    from oovtune.tokenizer import build_vocab

    texts = [
        "go on", "stop it", "go go", "stop on", "it is", "is it",
        "on it", "go is", "stop stop", "it on", "is go", "on on",
    ]
    vocab = build_vocab(texts, mode="character")
    ac = synth.Acoustics(
        feature_dim=6, frames_per_token=2, pattern_seed=5, pattern_scale=1.0,
        real_pool=tuple(synth.make_real_pool(3, seed=5, dim=6)),
        tts=synth.make_tts_profile(seed=5, dim=6),
    )
    manifest = synth.make_corpus(texts, list(ac.real_pool), seed=5,
                                 out_dir=tmp_path / "corpus", vocab=vocab, ac=ac)
    config = ModelConfig(vocab_size=vocab.size, feature_dim=6, encoder_layers=1,
                         encoder_width=8, decoder_layers=1, decoder_width=6,
                         joint_width=8)
    return manifest, vocab, config, ac
