"""Command-line entry point for the whole pipeline.

Subcommands: gendata, extract-oov, subset, synth, train, finetune, eval,
report. Every flag can also come from a flat ``key = value`` config file
(named with underscores instead of dashes); values given on the command
line win over the file. Diagnostics go to stderr, data to files.

Exit codes: 0 success, 2 I/O failure, 3 invalid configuration or rule
violation, 4 numeric abort (non-finite loss).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import corpus, data, ewc, metrics, synth, training
from .checkpoint import load_checkpoint
from .corpus import CorpusSpec, load_vocab
from .data import OovList, load_manifest, save_manifest
from .errors import ConfigError, DataError, NumericsError, OovtuneError
from .features import read_features
from .model import ModelConfig
from .training import EwcSettings, TrainConfig


def read_kv_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


class Options:
    """CLI flags merged over config-file entries over hard defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file: dict[str, str] = {}
        if getattr(args, "config", None):
            self.file = read_kv_file(args.config)

    def get(self, key: str, default=None, cast=str):
        cli = getattr(self.args, key, None)
        if cli is not None:
            return cli
        if key in self.file:
            raw = self.file[key]
            try:
                if cast is bool:
                    return raw.lower() in ("1", "true", "yes")
                return cast(raw)
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from exc
        return default

    def require(self, key: str, cast=str):
        value = self.get(key, None, cast)
        if value is None:
            raise ConfigError(f"missing required option --{key.replace('_', '-')}")
        return value


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def load_oov_file(path: str | Path) -> OovList:
    min_count = 3
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            if "min_count=" in line:
                min_count = int(line.split("min_count=")[1])
            continue
        if line.strip():
            words.append(line.strip())
    return OovList(frozenset(words), min_count)


def save_oov_file(oov: OovList, path: str | Path):
    lines = [f"# min_count={oov.min_count}"] + oov.sorted_words()
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- subcommands --

def cmd_gendata(args) -> int:
    opt = Options(args)
    spec = CorpusSpec(
        vocab_words=opt.get("vocab_words", 50, int),
        oov_words=opt.get("oov_words", 20, int),
        train_size=opt.get("train_size", 2000, int),
        dev_size=opt.get("dev_size", 500, int),
        eval_size=opt.get("eval_size", 500, int),
        words_min=opt.get("words_min", 3, int),
        words_max=opt.get("words_max", 6, int),
        word_len_min=opt.get("word_len_min", 3, int),
        word_len_max=opt.get("word_len_max", 7, int),
        oov_dev_counts=tuple(opt.get("oov_dev_counts", [3, 4, 6, 9, 12], _int_list)),
        oov_eval_count=opt.get("oov_eval_count", 5, int),
    )
    tree = corpus.generate_corpus_tree(
        opt.require("out"), spec, seed=opt.get("seed", 0, int),
        feature_dim=opt.get("feature_dim", 16, int),
        frames_per_token=opt.get("frames_per_token", 2, int),
        pattern_scale=opt.get("pattern_scale", 0.5, float),
        real_speakers=opt.get("real_speakers", 10, int),
        real_noise=opt.get("real_noise", 0.1, float),
        tts_noise=opt.get("tts_noise", 0.05, float),
        real_angle=opt.get("real_angle", 0.3, float),
        tts_angle=opt.get("tts_angle", 0.8, float),
    )
    print(f"gendata: wrote corpus tree under {tree.out_dir}", file=sys.stderr)
    return 0


def cmd_extract_oov(args) -> int:
    opt = Options(args)
    train = load_manifest(opt.require("train"))
    probe = load_manifest(opt.require("probe"))
    min_count = opt.get("min_count", 3, int)
    oov = data.extract_oov(train.texts(), probe.texts(), min_count=min_count)
    save_oov_file(oov, opt.require("out"))
    if len(oov) == 0:
        print("extract-oov: no out-of-vocabulary words found", file=sys.stderr)
    else:
        print(f"extract-oov: {len(oov)} words", file=sys.stderr)
    return 0


def cmd_subset(args) -> int:
    opt = Options(args)
    manifest = load_manifest(opt.require("manifest"))
    op = opt.require("op")
    if op == "oov":
        oov = load_oov_file(opt.require("oov"))
        result = data.select_oov_utterances(manifest, oov)
    elif op == "minus-oov":
        oov = load_oov_file(opt.require("oov"))
        hits = data.select_oov_utterances(manifest, oov)
        result = data.complement(manifest, hits)
    elif op == "sample":
        result = data.downsample(manifest, opt.require("n", int), seed=opt.get("seed", 0, int))
    else:
        raise ConfigError(f"unknown subset op {op!r} (expected oov, minus-oov, or sample)")
    out = Path(opt.require("out"))
    save_manifest(result, out)
    print(f"subset {op}: kept {len(result)} of {len(manifest)} utterances "
          f"(complement {len(manifest) - len(result)})", file=sys.stderr)
    return 0


def cmd_synth(args) -> int:
    opt = Options(args)
    manifest = load_manifest(opt.require("manifest"))
    ac = synth.load_acoustics(opt.require("acoustics"))
    vocab = load_vocab(opt.require("vocab"))
    out_dir = Path(opt.require("out"))
    profile_name = opt.get("profile", "tts")
    if profile_name == "tts":
        pool = [ac.tts]
    elif profile_name == "real":
        pool = list(ac.real_pool)
    else:
        raise ConfigError(f"unknown profile {profile_name!r} (expected tts or real)")
    m = synth.make_corpus(manifest.texts(), pool, seed=opt.get("seed", 0, int),
                          out_dir=out_dir, vocab=vocab, ac=ac, prefix="synth_")
    save_manifest(m, out_dir / "manifest.tsv")
    print(f"synth: rendered {len(m)} utterances with profile {profile_name}", file=sys.stderr)
    return 0


def _train_config(opt: Options, for_finetune: bool) -> TrainConfig:
    freeze = ewc.FreezeMask(frozenset(opt.get("freeze", [], _str_list)))
    settings = None
    lam = opt.get("ewc_lambda", None, float)
    if lam is not None:
        scope = frozenset(opt.get("ewc_scope", ["encoder"], _str_list))
        fisher_source = opt.get("fisher_source", None)
        settings = EwcSettings(
            lam=lam, scope=scope,
            fisher_source=load_manifest(fisher_source) if fisher_source else None,
            fisher_samples=opt.get("fisher_samples", 100, int),
            fisher_seed=opt.get("fisher_seed", 1, int),
        )
    if not for_finetune and (freeze.frozen_components or settings is not None):
        raise ConfigError("freeze/ewc options apply to finetune, not train")
    return TrainConfig(
        steps=opt.require("steps", int),
        batch_size=opt.get("batch_size", 8, int),
        learning_rate=opt.get("learning_rate", 1e-3, float),
        optimizer=opt.get("optimizer", "adam"),
        adam_beta1=opt.get("adam_beta1", 0.9, float),
        adam_beta2=opt.get("adam_beta2", 0.999, float),
        adam_eps=opt.get("adam_eps", 1e-8, float),
        seed=opt.get("seed", 0, int),
        grad_clip=opt.get("grad_clip", 5.0, float),
        checkpoint_every=opt.get("checkpoint_every", 0, int),
        freeze=freeze,
        ewc=settings,
    )


def cmd_train(args) -> int:
    opt = Options(args)
    manifest = load_manifest(opt.require("manifest"))
    vocab = load_vocab(opt.require("vocab"))
    feature_dim = opt.get("feature_dim", None, int)
    if feature_dim is None:
        feature_dim = read_features(manifest.feature_file(manifest[0])).shape[1]
    model_config = ModelConfig(
        vocab_size=vocab.size,
        feature_dim=feature_dim,
        encoder_layers=opt.get("encoder_layers", 2, int),
        encoder_width=opt.get("encoder_width", 64, int),
        decoder_layers=opt.get("decoder_layers", 1, int),
        decoder_width=opt.get("decoder_width", 64, int),
        joint_width=opt.get("joint_width", 64, int),
    )
    config = _train_config(opt, for_finetune=False)
    out_dir = Path(opt.require("out"))
    rows, _ = training.train_baseline(model_config, config, manifest, vocab, out_dir=out_dir)
    print(f"train: {len(rows)} steps, final loss {rows[-1].loss:.4f}, "
          f"checkpoint {out_dir / 'final.ckpt'}", file=sys.stderr)
    return 0


def cmd_finetune(args) -> int:
    opt = Options(args)
    base = load_checkpoint(opt.require("base"))
    source_paths = opt.require("sources", _str_list)
    weights = data.SamplingWeights.from_percentages(opt.require("weights", _float_list))
    if len(source_paths) != len(weights.weights):
        raise ConfigError("--sources and --weights must have the same arity")
    sources = [(load_manifest(p), w) for p, w in zip(source_paths, weights.weights)]
    config = _train_config(opt, for_finetune=True)
    out_dir = Path(opt.require("out"))
    rows, _ = training.finetune(base, config, sources, out_dir=out_dir)
    print(f"finetune: {len(rows)} steps, final loss {rows[-1].loss:.4f}, "
          f"checkpoint {out_dir / 'final.ckpt'}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    opt = Options(args)
    ckpt = load_checkpoint(opt.require("ckpt"))
    manifest = load_manifest(opt.require("manifest"))
    normalizer = opt.get("normalizer", None, float)
    norm_from = opt.get("normalizer_from", None)
    if normalizer is None and norm_from:
        normalizer = metrics.read_report(norm_from).wer
    model = ckpt.to_model()
    report = metrics.evaluate(model, ckpt.vocab, manifest,
                              set_name=opt.get("name", "eval"),
                              normalizer=normalizer,
                              max_emits=opt.get("max_emits", 5, int))
    out_dir = Path(opt.require("out"))
    metrics.write_report(report, out_dir)
    nwer = f"{report.nwer:.4f}" if report.nwer is not None else "-"
    print(f"eval {report.set_name}: WER {report.wer:.4f} NWER {nwer} "
          f"over {len(report.per_utt)} utterances", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    opt = Options(args)
    runs = []
    for entry in args.runs or []:
        if "=" not in entry:
            raise ConfigError(f"--runs entries look like label=path/report.json, got {entry!r}")
        label, path = entry.split("=", 1)
        runs.append((label, metrics.read_report(path)))
    if not runs:
        raise ConfigError("report needs at least one --runs entry")
    out_dir = Path(opt.require("out"))
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = ["config\tset\tS\tD\tI\tN\tWER\tNWER"]
    for label, rep in runs:
        nwer = f"{rep.nwer:.6f}" if rep.nwer is not None else "-"
        lines.append(f"{label}\t{rep.set_name}\t{rep.s}\t{rep.d}\t{rep.i}\t{rep.n}"
                     f"\t{rep.wer:.6f}\t{nwer}")
    (out_dir / "summary.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    base_label = opt.get("per_word_base", None)
    new_label = opt.get("per_word_new", None)
    if base_label and new_label:
        oov = load_oov_file(opt.require("oov"))
        ft_manifest = load_manifest(opt.require("finetune_texts"))
        by_label = dict(runs)
        if base_label not in by_label or new_label not in by_label:
            raise ConfigError("per-word labels must match --runs entries")
        buckets, rows = metrics.per_word_analysis(by_label[base_label], by_label[new_label],
                                                  oov, ft_manifest.texts())
        blines = ["exposure\tmean_relative_reduction\twords"]
        for count in sorted(buckets):
            words = ",".join(r["word"] for r in rows if r["exposure"] == count)
            blines.append(f"{count}\t{buckets[count]:.6f}\t{words}")
        (out_dir / "per_word.tsv").write_text("\n".join(blines) + "\n", encoding="utf-8")
        (out_dir / "per_word.json").write_text(
            json.dumps({"buckets": {str(k): v for k, v in buckets.items()}, "words": rows},
                       sort_keys=True, indent=1), encoding="utf-8")
    print(f"report: {len(runs)} rows -> {out_dir / 'summary.tsv'}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oovtune",
        description="Train a small transducer, then teach it new words from "
                    "synthetic features without forgetting the old ones.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, flags):
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        for flag, kw in flags:
            p.add_argument(flag, **kw)
        p.set_defaults(func=func)
        return p

    ints = {"type": int}
    floats = {"type": float}
    add("gendata", cmd_gendata, [
        ("--vocab-words", ints), ("--oov-words", ints), ("--train-size", ints),
        ("--dev-size", ints), ("--eval-size", ints), ("--words-min", ints),
        ("--words-max", ints), ("--word-len-min", ints), ("--word-len-max", ints),
        ("--oov-dev-counts", {"type": _int_list}), ("--oov-eval-count", ints),
        ("--feature-dim", ints), ("--frames-per-token", ints),
        ("--pattern-scale", floats), ("--real-speakers", ints),
        ("--real-noise", floats), ("--tts-noise", floats),
        ("--real-angle", floats), ("--tts-angle", floats),
    ])
    add("extract-oov", cmd_extract_oov, [
        ("--train", {}), ("--probe", {}), ("--min-count", ints),
    ])
    add("subset", cmd_subset, [
        ("--manifest", {}), ("--op", {"choices": ["oov", "minus-oov", "sample"]}),
        ("--oov", {}), ("--n", ints),
    ])
    add("synth", cmd_synth, [
        ("--manifest", {}), ("--acoustics", {}), ("--vocab", {}),
        ("--profile", {"choices": ["tts", "real"]}),
    ])
    train_flags = [
        ("--steps", ints), ("--batch-size", ints), ("--learning-rate", floats),
        ("--optimizer", {"choices": ["sgd", "adam"]}),
        ("--adam-beta1", floats), ("--adam-beta2", floats), ("--adam-eps", floats),
        ("--grad-clip", floats), ("--checkpoint-every", ints),
    ]
    add("train", cmd_train, train_flags + [
        ("--manifest", {}), ("--vocab", {}), ("--feature-dim", ints),
        ("--encoder-layers", ints), ("--encoder-width", ints),
        ("--decoder-layers", ints), ("--decoder-width", ints), ("--joint-width", ints),
    ])
    add("finetune", cmd_finetune, train_flags + [
        ("--base", {}), ("--sources", {"type": _str_list}),
        ("--weights", {"type": _float_list}),
        ("--freeze", {"type": _str_list}),
        ("--ewc-scope", {"dest": "ewc_scope", "type": _str_list}),
        ("--lambda", {"dest": "ewc_lambda", "type": float}),
        ("--fisher-source", {}), ("--fisher-samples", ints), ("--fisher-seed", ints),
    ])
    add("eval", cmd_eval, [
        ("--ckpt", {}), ("--manifest", {}), ("--name", {}),
        ("--normalizer", floats), ("--normalizer-from", {}), ("--max-emits", ints),
    ])
    add("report", cmd_report, [
        ("--runs", {"action": "append"}),
        ("--per-word-base", {}), ("--per-word-new", {}),
        ("--oov", {}), ("--finetune-texts", {}),
    ])
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OovtuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
