"""Desk-scale transducer training and out-of-vocabulary fine-tuning.

A numpy library that trains a small RNN transducer from scratch on
deterministic synthetic features, then fine-tunes it on a single-voice
synthetic rendering of new words using weighted data mixing, encoder
freezing, and an elastic consolidation penalty, with WER-based reports
of what was gained and what was forgotten.
"""

from .autodiff import Tensor, backward, log_softmax, logsumexp, matmul
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (Manifest, OovList, SamplingWeights, Utterance, complement,
                   downsample, extract_oov, load_manifest, save_manifest,
                   select_oov_utterances, weighted_sampler)
from .errors import (ConfigError, CoverageError, DataError, DimensionError,
                     NumericsError, OovtuneError)
from .ewc import EwcState, FreezeMask, apply_freeze, estimate_fisher, ewc_penalty
from .features import read_features, write_features
from .lattice import LossLattice, lattice_tables
from .metrics import WerReport, edit_distance, evaluate, per_word_analysis
from .model import ModelConfig, RnntModel
from .nn import ParamTree, lstm_cell
from .synth import Acoustics, SpeakerProfile, base_features, make_corpus, render
from .tokenizer import Vocab, build_vocab, decode, encode, normalize_text
from .training import Adam, EwcSettings, Sgd, TrainConfig, finetune, train_baseline

__version__ = "0.1.0"

__all__ = [
    "Acoustics", "Adam", "Checkpoint", "ConfigError", "CoverageError",
    "DataError", "DimensionError", "EwcSettings", "EwcState", "FreezeMask",
    "LossLattice", "Manifest", "ModelConfig", "NumericsError", "OovList",
    "OovtuneError", "ParamTree", "RnntModel", "SamplingWeights", "Sgd",
    "SpeakerProfile", "Tensor", "TrainConfig", "Utterance", "Vocab",
    "WerReport", "apply_freeze", "backward", "base_features", "build_vocab",
    "complement", "decode", "downsample", "edit_distance", "encode",
    "estimate_fisher", "evaluate", "ewc_penalty", "extract_oov", "finetune",
    "lattice_tables", "load_checkpoint", "load_manifest", "log_softmax",
    "logsumexp", "lstm_cell", "make_corpus", "matmul", "normalize_text",
    "per_word_analysis", "read_features", "render", "save_checkpoint",
    "save_manifest", "select_oov_utterances", "train_baseline",
    "weighted_sampler", "write_features",
]
