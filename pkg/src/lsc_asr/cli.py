"""Command-line entry point: ``lsc-asr <command> [options]``.

Exit codes: 0 success, 2 configuration or checkpoint error, 3 data error,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import autograd as ag
from .audio_io import WavFormatError, frame_signal, read_wav
from .augment import apply_masks, apply_time_warp, utterance_rng
from .checkpoint import CheckpointSchemaError
from .config import ConfigError, RunConfig, load_config, toy_config
from .dconv import frontend_forward, param_count_full, param_count_pointwise, pointwise_saving
from .decoding import UniformLM, bigram_lm_train, load_lm, save_lm
from .gradcheck import NumericError
from .gradsuite import TOLERANCE, run_suite
from .model import HybridModel, load_model, save_model
from .plots import bounds_plot, kernel_plot
from .sinc import inspect_filters
from .toy import CharTokenizer, read_corpus, toy_corpus, write_corpus
from .training import DivergenceError, train

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
FEATURE_FORMAT = 1

log = logging.getLogger("lsc_asr")


class DataError(ValueError):
    pass


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _model_from_args(args, default_cfg=None):
    """Checkpoint if given, else a freshly initialized model; returns (model, hash)."""
    if getattr(args, "checkpoint", None):
        return load_model(args.checkpoint)
    cfg = load_config(args.config) if getattr(args, "config", None) else (default_cfg or RunConfig())
    return HybridModel(cfg.validate(), args.seed), "none"


def _fmt_row(values):
    return ",".join(repr(float(v)) for v in values)


# ---------------------------------------------------------------- commands

def cmd_extract(args):
    model, digest = _model_from_args(args)
    cfg = model.cfg
    audio = read_wav(args.wav)
    if audio.sample_rate_hz != cfg.audio.sample_rate:
        raise DataError(f"{args.wav}: sample rate {audio.sample_rate_hz} Hz, config expects "
                        f"{cfg.audio.sample_rate} Hz")
    frames = frame_signal(audio, cfg.audio.frame_ms, cfg.audio.shift_ms)
    if frames.num_frames == 0:
        feats = np.zeros((0, cfg.frontend.output_dim))
    else:
        with ag.no_grad():
            feats = frontend_forward(frames, cfg.frontend, model.store).data
    if not np.all(np.isfinite(feats)):
        raise NumericError("non-finite features")
    T, C = feats.shape
    if args.binary:
        np.save(args.out, feats)
    else:
        lines = [f"# format={FEATURE_FORMAT} T={T} C={C} frame_ms={cfg.audio.frame_ms:g} "
                 f"shift_ms={cfg.audio.shift_ms:g} checkpoint={digest}"]
        lines += [_fmt_row(row) for row in feats]
        _write(args.out, "\n".join(lines) + "\n")
    print(f"wrote {T} x {C} features to {args.out}")
    return EXIT_OK


def _toy_cfg_from_args(args):
    if args.config:
        return load_config(args.config)
    kw = {}
    for key in ("lr", "optimizer", "stop_at_accuracy"):
        if getattr(args, key) is not None:
            kw[key] = getattr(args, key)
    return toy_config(activation=args.activation, augment=args.augment, lam=args.lam,
                      seed=args.seed, epochs=args.epochs, **kw)


def cmd_train_toy(args):
    cfg = _toy_cfg_from_args(args)
    if args.corpus:
        alphabet, utts = read_corpus(args.corpus)
    else:
        alphabet = cfg.alphabet
        utts = toy_corpus(alphabet, args.utterances, seed=args.seed)
    from dataclasses import replace
    cfg = replace(cfg, alphabet=alphabet,
                  model=replace(cfg.model, vocab_size=len(alphabet))).validate()
    tok = CharTokenizer(alphabet)
    os.makedirs(args.out, exist_ok=True)
    metrics_path = os.path.join(args.out, "metrics.jsonl")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        def on_epoch(row):
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            fh.flush()
            if not args.quiet:
                print(f"epoch {row['epoch']:4d}  loss {row['loss']:.4f}  acc {row['accuracy']:.3f}  "
                      f"drift {row['max_center_drift']:.4f}")
        result = train(cfg, utts, tok, on_epoch=on_epoch)
    ckpt = os.path.join(args.out, "checkpoint.json")
    digest = save_model(ckpt, result.model, result.best_values)
    if args.lm:
        save_lm(args.lm, bigram_lm_train([tok.encode(u.text) for u in utts], tok.vocab_size))
    print(f"best accuracy {result.best_accuracy:.4f} at epoch {result.best_epoch}; "
          f"checkpoint {ckpt} sha256 {digest}", flush=True)
    print(f"training time {result.seconds:.1f} s", file=sys.stderr)
    return EXIT_OK


def _load_lm_arg(spec, vocab_size):
    if spec is None:
        return None
    if spec == "uniform":
        return UniformLM(vocab_size)
    return load_lm(spec)


def cmd_decode(args):
    model, _ = load_model(args.checkpoint)
    cfg = model.cfg
    tok = CharTokenizer(cfg.alphabet)
    lm = _load_lm_arg(args.lm, tok.vocab_size)
    beta = args.beta if lm is not None else 0.0
    print("# wav\trank\ttext\tscore\tatt\tctc\tlm")
    for path in args.wav:
        audio = read_wav(path)
        frames = frame_signal(audio, cfg.audio.frame_ms, cfg.audio.shift_ms)
        if frames.num_frames == 0:
            raise DataError(f"{path}: shorter than one frame")
        hyps = model.decode(frames, beam=args.beam, lam=args.lam, beta=beta, lm=lm,
                            max_len=args.max_len, n_best=args.n_best)
        for rank, h in enumerate(hyps, 1):
            flag = "\ttruncated" if h.truncated else ""
            print(f"{path}\t{rank}\t{tok.decode(h.tokens)}\t{h.score:.6f}\t{h.att:.6f}\t"
                  f"{h.ctc:.6f}\t{h.lm:.6f}{flag}")
    return EXIT_OK


def cmd_params(args):
    if args.checkpoint:
        model, _ = load_model(args.checkpoint)
    else:
        model = HybridModel(load_config(args.config) if args.config else RunConfig(), args.seed)
    fe = model.cfg.frontend
    print("name\tshape\tcount\tformula\tcomponent")
    for name, shape, count, formula, comp in model.param_rows():
        print(f"{name}\t{'x'.join(map(str, shape))}\t{count}\t{formula}\t{comp}")
    front, back = model.counts()
    print(f"front-end total\t{front}")
    print(f"back-end total\t{back}")
    print("block\tc_in\tc_out\tk\tdepthwise\tfull_conv\tpointwise_added")
    for i, b in enumerate(fe.blocks):
        print(f"dconv.{i}\t{b.in_channels}\t{b.out_channels}\t{b.kernel_size}\t"
              f"{b.out_channels * b.kernel_size}\t{param_count_full(b)}\t{param_count_pointwise(b)}")
    print(f"full-convolution front-end total\t"
          f"{fe.sinc.param_count() + sum(param_count_full(b) for b in fe.blocks)}")
    print(f"pointwise-omission saving\t{pointwise_saving(fe)}")
    return EXIT_OK


def cmd_filters(args):
    model, _ = _model_from_args(args)
    cfg = model.cfg
    bank, sr = cfg.frontend.sinc, cfg.audio.sample_rate
    rows = inspect_filters(bank, model.store, sr)
    os.makedirs(args.out, exist_ok=True)
    keys = ["index", "f1_hz", "f2_hz", "center_hz", "bandwidth_hz", "amplitude"]
    lines = [",".join(keys)] + [",".join(repr(r[k]) for k in keys) for r in rows]
    _write(os.path.join(args.out, "filters.csv"), "\n".join(lines) + "\n")
    bounds_plot(rows).save(os.path.join(args.out, "bounds.svg"))
    picks = np.unique(np.linspace(0, len(rows) - 1, min(args.plots, len(rows))).astype(int))
    for j in picks:
        r = rows[j]
        kernel_plot(r["f1_hz"] / sr, r["f2_hz"] / sr, bank.kernel_len, sr, r["index"]).save(
            os.path.join(args.out, f"kernel_{r['index']:03d}.svg"))
    print(f"wrote filters.csv, bounds.svg and {len(picks)} kernel plots to {args.out}")
    return EXIT_OK


def cmd_augment_preview(args):
    model, _ = _model_from_args(args)
    cfg = model.cfg
    audio = read_wav(args.wav)
    frames = frame_signal(audio, cfg.audio.frame_ms, cfg.audio.shift_ms)
    if frames.num_frames == 0:
        raise DataError(f"{args.wav}: shorter than one frame")
    with ag.no_grad():
        before = frontend_forward(frames, cfg.frontend, model.store).data
    rng = utterance_rng(cfg.augment.seed if args.aug_seed is None else args.aug_seed, 0, 0)
    after = apply_masks(apply_time_warp(before, cfg.augment, rng), cfg.augment, rng)
    os.makedirs(args.out, exist_ok=True)
    for name, arr in (("before.csv", before), ("after.csv", after)):
        _write(os.path.join(args.out, name), "\n".join(_fmt_row(r) for r in arr) + "\n")
    masked = float(np.mean(after == 0.0))
    print(f"wrote before.csv and after.csv ({arr.shape[0]} x {arr.shape[1]}); "
          f"zero fraction after {masked:.3f}")
    return EXIT_OK


def cmd_check_gradients(args):
    rows, seconds = run_suite(args.seed, args.instances)
    ok = True
    for op, i, err, passed in rows:
        ok &= passed
        print(f"{op}\t{i}\t{err:.3e}\t{'pass' if passed else 'FAIL'}")
    print(f"{'all passed' if ok else 'FAILED'} (tolerance {TOLERANCE:g}) in {seconds:.1f} s")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_synth_corpus(args):
    utts = toy_corpus(args.alphabet, args.utterances, seed=args.seed)
    path = write_corpus(args.out, utts, args.alphabet)
    print(f"wrote {len(utts)} utterances; index {path}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="lsc-asr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(func=fn)
        return sp

    sp = add("extract", cmd_extract, "front-end features of a WAV file as CSV")
    sp.add_argument("wav")
    sp.add_argument("out")
    sp.add_argument("--config")
    sp.add_argument("--checkpoint")
    sp.add_argument("--binary", action="store_true", help="write .npy instead of CSV")

    sp = add("train-toy", cmd_train_toy, "joint CTC/attention training on the tone corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--corpus", help="corpus.json (default: synthesize)")
    sp.add_argument("--config", help="run config JSON (overrides the toy defaults)")
    sp.add_argument("--utterances", type=int, default=20)
    sp.add_argument("--epochs", type=int, default=300)
    sp.add_argument("--lambda", dest="lam", type=float, default=0.5)
    sp.add_argument("--activation", choices=("logc", "relu"), default="logc")
    sp.add_argument("--augment", action="store_true")
    sp.add_argument("--optimizer", choices=("sgd", "adam"))
    sp.add_argument("--lr", type=float)
    sp.add_argument("--stop-at-accuracy", dest="stop_at_accuracy", type=float)
    sp.add_argument("--lm", help="also write a bigram LM trained on the transcripts here")
    sp.add_argument("--quiet", action="store_true")

    sp = add("decode", cmd_decode, "joint beam search over WAV files")
    sp.add_argument("wav", nargs="+")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--beam", type=int, default=4)
    sp.add_argument("--lambda", dest="lam", type=float, default=0.4)
    sp.add_argument("--beta", type=float, default=0.5)
    sp.add_argument("--lm", help="LM JSON path or 'uniform'")
    sp.add_argument("--max-len", dest="max_len", type=int)
    sp.add_argument("--n-best", dest="n_best", type=int, default=1)

    sp = add("params", cmd_params, "per-layer and per-component parameter counts")
    sp.add_argument("--config")
    sp.add_argument("--checkpoint")

    sp = add("filters", cmd_filters, "filter table, kernel plots and bounds plot")
    sp.add_argument("--checkpoint")
    sp.add_argument("--config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--plots", type=int, default=4, help="number of kernel plots")

    sp = add("augment-preview", cmd_augment_preview, "features before and after augmentation")
    sp.add_argument("wav")
    sp.add_argument("--checkpoint")
    sp.add_argument("--config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--aug-seed", dest="aug_seed", type=int)

    sp = add("check-gradients", cmd_check_gradients, "finite-difference gradient suite")
    sp.add_argument("--instances", type=int, default=3)

    sp = add("synth-corpus", cmd_synth_corpus, "write the synthesized tone corpus as WAVs")
    sp.add_argument("--out", required=True)
    sp.add_argument("--alphabet", default="abcd")
    sp.add_argument("--utterances", type=int, default=20)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointSchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ArithmeticError as exc:  # NumericError, CtcNumericError, FloatingPointError
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (WavFormatError, DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
