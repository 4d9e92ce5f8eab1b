"""``bivicap`` command line: train, caption, evaluate, search, make-toy.

Settings resolve as command-line flag > config file > built-in default. The
config file is YAML; nested sections are flattened, so ``training:``,
``model:`` and ``paths:`` groupings are optional.

Exit codes: 0 success, 1 data/config/domain error, 2 usage error.
"""
import argparse
import logging
import sys
from contextlib import nullcontext
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

import yaml

from . import __version__
from .data import (DataError, FEATURE_MAGIC, build_vocab, load_features, load_split, make_toy_dataset,
                   read_features)
from .inference import CaptionConfig, generate, write_hypotheses_tsv
from .encoder import subsample
from .metrics import METRICS, EvaluationError, evaluate_files, format_report
from .model import CheckpointError, read_checkpoint, write_checkpoint
from .numerics import Rng, ShapeError
from .training import SEARCH_RANGES, TrainingConfig, random_search, scale_ranges, train

log = logging.getLogger("bivicap")

PATH_KEYS = ("train_captions", "val_captions", "features_manifest", "out_dir")
EXTRA_KEYS = ("min_count",)


class CliError(Exception):
    """Reported as a one-line message with exit code 1."""


def _flatten(mapping, out=None):
    out = {} if out is None else out
    for k, v in mapping.items():
        if isinstance(v, dict):
            _flatten(v, out)
        else:
            out[str(k).replace("-", "_")] = v
    return out


def load_config_file(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise CliError(f"{p}: cannot parse config ({exc})") from None
    if not isinstance(data, dict):
        raise CliError(f"{p}: config must be a mapping of keys to values")
    return _flatten(data)


def resolve_settings(args, file_values):
    """Merge flags over config-file values; returns ``(TrainingConfig, extras)``."""
    cfg_names = {f.name for f in fields(TrainingConfig)}
    known = cfg_names | set(PATH_KEYS) | set(EXTRA_KEYS)
    unknown = sorted(set(file_values) - known)
    if unknown:
        raise CliError(f"unknown config keys: {unknown}")
    merged = dict(file_values)
    for key in known:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    try:
        cfg = TrainingConfig.from_dict({k: v for k, v in merged.items() if k in cfg_names})
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid training config: {exc}") from None
    extras = {k: merged.get(k) for k in PATH_KEYS + EXTRA_KEYS}
    return cfg, extras


def _require(extras, *keys):
    missing = [k for k in keys if not extras.get(k)]
    if missing:
        raise CliError("missing required setting(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _load_splits(cfg, extras):
    _require(extras, "train_captions", "val_captions", "features_manifest", "out_dir")
    features = load_features(extras["features_manifest"])
    vocab = build_vocab(extras["train_captions"], extras.get("min_count") or 1)
    train_set = load_split("train", extras["train_captions"], features, vocab, cfg.stride)
    val_set = load_split("val", extras["val_captions"], features, vocab, cfg.stride)
    return train_set, val_set


def cmd_train(args):
    cfg, extras = resolve_settings(args, load_config_file(args.config))
    train_set, val_set = _load_splits(cfg, extras)
    out = Path(extras["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train.log"
    with open(log_path, "w", encoding="utf-8") as fh:
        def on_eval(rec):
            fh.write(rec.line() + "\n")
            fh.flush()

        result = train(cfg, train_set, val_set, on_eval=on_eval)
    write_checkpoint(out / "best.ckpt", result.model, {"training": cfg.to_dict()})
    print(f"best validation BLEU {result.best_bleu:.2f} after {result.updates} updates")
    print(f"checkpoint: {out / 'best.ckpt'}")
    return 0


def _load_inputs(path):
    p = Path(path)
    if not p.is_file():
        raise CliError(f"features not found: {p}")
    with open(p, "rb") as fh:
        head = fh.read(4)
    if head == FEATURE_MAGIC:
        return {p.stem: read_features(p, p.stem)}
    return load_features(p)


def cmd_caption(args):
    model = read_checkpoint(args.model)
    inputs = _load_inputs(args.features)
    conf = CaptionConfig(beam_width=args.beam_width, max_len=args.max_len,
                         length_norm=args.length_norm, greedy=args.greedy)
    if conf.beam_width < 1 or conf.max_len < 1:
        raise CliError("--beam-width and --max-len must be >= 1")
    for vid, seq in inputs.items():
        if seq.d != model.dims.d:
            raise CliError(f"video {vid!r} has feature dimension {seq.d}, model expects {model.dims.d}")

    def run(seq):
        return generate(model, subsample(seq, model.stride), conf)

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(run, inputs.values()))
    for vid, hyps in zip(inputs, results):
        print(f"{vid}\t{model.vocab.detokenize(hyps[0].tokens)}")
    if args.top_k:
        sink = open(args.top_k_file, "w", encoding="utf-8") if args.top_k_file else nullcontext(sys.stdout)
        with sink as fh:
            for vid, hyps in zip(inputs, results):
                fh.write(f"# {vid}\n")
                write_hypotheses_tsv(fh, hyps, model.vocab, args.top_k)
    return 0


def cmd_evaluate(args):
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in metrics if m not in METRICS]
    if unknown or not metrics:
        raise CliError(f"unknown metric(s) {unknown}; valid names: {', '.join(sorted(METRICS))}")
    scores = evaluate_files(args.hyp, args.refs, metrics)
    sys.stdout.write(format_report(scores))
    return 0


def cmd_search(args):
    cfg, extras = resolve_settings(args, load_config_file(args.config))
    train_set, val_set = _load_splits(cfg, extras)
    ranges = scale_ranges(SEARCH_RANGES, args.scale)
    out = Path(extras["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    def on_trial(tr):
        (out / f"trial_{tr.trial}.log").write_text(tr.result.log_text, encoding="utf-8")
        print(f"trial {tr.trial}: {tr.hyperparams} -> val BLEU {tr.best_bleu:.2f}")

    results = random_search(cfg, ranges, args.trials, train_set, val_set, on_trial=on_trial)
    with open(out / "summary.tsv", "w", encoding="utf-8") as fh:
        fh.write("rank\ttrial\tm\tH\tD\tval_bleu\tupdates\n")
        for rank, tr in enumerate(results, 1):
            hp = tr.hyperparams
            fh.write(f"{rank}\t{tr.trial}\t{hp['m']}\t{hp['H']}\t{hp['D']}\t{tr.best_bleu:.4f}\t{tr.updates}\n")
    write_checkpoint(out / "best.ckpt", results[0].result.model,
                     {"training": replace(cfg, **results[0].hyperparams).to_dict()})
    print(f"summary: {out / 'summary.tsv'}")
    return 0


def cmd_make_toy(args):
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        make_toy_dataset(Rng(args.seed), args.n, (args.min_frames, args.max_frames), args.d, out_dir=out)
    except OSError as exc:
        raise CliError(f"cannot write toy dataset to {out}: {exc.strerror}") from None
    print(f"wrote {args.n} videos to {out}")
    return 0


def _add_training_flags(p):
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--train-captions", dest="train_captions")
    p.add_argument("--val-captions", dest="val_captions")
    p.add_argument("--features-manifest", dest="features_manifest")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="default 64")
    p.add_argument("--eval-every", dest="eval_every", type=int, help="updates between validations (default 1000)")
    p.add_argument("--patience", type=int, help="evaluations without improvement before stopping (default 5)")
    p.add_argument("--stride", type=int, help="frame subsampling stride (default 26)")
    p.add_argument("--beam-width", dest="beam_width_for_val", type=int, help="validation beam width (default 1)")
    p.add_argument("--max-caption-len", dest="max_caption_len", type=int)
    p.add_argument("--max-updates", dest="max_updates", type=int, help="hard update limit (0 = none)")
    p.add_argument("--cell-variant", dest="cell_variant", choices=["linear", "standard"])
    p.add_argument("--decoder-init", dest="decoder_init", choices=["learned", "zero"])
    p.add_argument("--embedding-size", "-m", dest="m", type=int)
    p.add_argument("--hidden-size", dest="H", type=int, help="decoder state size")
    p.add_argument("--encoder-size", dest="D", type=int, help="per-direction encoder state size")
    p.add_argument("--attention-size", dest="A", type=int)
    p.add_argument("--clip-norm", dest="clip_norm", type=float)
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--seed", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="bivicap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and keep the best validation checkpoint")
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("caption", help="caption videos with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True, help="a .vdfq feature file or a manifest")
    p.add_argument("--beam-width", dest="beam_width", type=int, default=10)
    p.add_argument("--max-len", dest="max_len", type=int, default=30)
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--length-norm", dest="length_norm", action="store_true")
    p.add_argument("--top-k", dest="top_k", type=int, default=0, help="also dump the top-k hypotheses as TSV")
    p.add_argument("--top-k-file", dest="top_k_file")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_caption)

    p = sub.add_parser("evaluate", help="score hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--metrics", default="bleu,cider")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search", help="random hyperparameter search")
    _add_training_flags(p)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--scale", type=float, default=1.0, help="multiplies the default size ranges")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("make-toy", help="write a synthetic dataset")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=16, help="feature dimension")
    p.add_argument("--min-frames", dest="min_frames", type=int, default=30)
    p.add_argument("--max-frames", dest="max_frames", type=int, default=150)
    p.set_defaults(func=cmd_make_toy)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (CliError, DataError, EvaluationError, CheckpointError, ShapeError, ValueError, OSError) as exc:
        print(f"bivicap {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
