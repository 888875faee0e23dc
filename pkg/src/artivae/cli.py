"""Command-line entry point: ``artivae <subcommand>``.

Exit status is 0 on success, 1 on runtime errors and 2 on usage errors.
Diagnostics go to stderr; data goes to files or stdout.

Config files are plain ``key = value`` lines (``#`` starts a comment). Keys
are the long option names with ``_`` for ``-`` (e.g. ``n_seeds = 5``,
``alphas = 0, 0.25, 1``). Flags given on the command line win over the file.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__, articulatory, experiments, features, synthcorpus
from .arvae import TrainConfig, save_checkpoint, train, write_curve_csv
from .arvae.train import CHECKPOINT_FORMAT, load_checkpoint
from .errors import ArtivaeError

log = logging.getLogger("artivae")

# option defaults; None-valued flags fall back to config file, then to these
DEFAULTS = {
    "seed": 0,
    "out": None,
    "n_params": 6,
    "n_utterances": 25,
    "frames": 200,
    "source_dims": 2,
    "no_audio": False,
    "alpha": 0.0,
    "epochs": 30,
    "batch_size": 32,
    "learning_rate": 1e-3,
    "denoising": False,
    "snr": None,
    "resume": None,
    "corpus": None,
    "n_seeds": 5,
    "alphas": None,
    "snrs": "clean,10,5,0",
    "corpus_seed": 0,
    "format": None,
}


def _version_text():
    lines = [f"artivae {__version__}"]
    for fmt in (articulatory.MODEL_FORMAT, features.FEATURE_FORMAT, CHECKPOINT_FORMAT,
                synthcorpus.MANIFEST_FORMAT):
        lines.append(f"  format {fmt}")
    return "\n".join(lines)


def read_config_file(path):
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}: line {lineno}: expected key = value")
            key = key.strip().replace("-", "_")
            if key not in DEFAULTS:
                raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
            values[key] = value.strip()
    return values


def _coerce(key, value):
    if not isinstance(value, str):
        return value
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


class _VersionAction(argparse.Action):
    def __init__(self, option_strings, dest, **kwargs):
        super().__init__(option_strings, dest, nargs=0, default=argparse.SUPPRESS, **kwargs)

    def __call__(self, parser, namespace, values, option_string=None):
        print(_version_text())
        parser.exit()


def _global_options(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="key = value config file")
    parser.add_argument("--out", default=d, help="output path or directory")
    parser.add_argument("--seed", type=int, default=d, help="random seed")
    parser.add_argument("--quiet", action="store_true", default=d or False,
                        help="suppress progress output")


def build_parser():
    p = argparse.ArgumentParser(prog="artivae", description=__doc__.splitlines()[0])
    p.add_argument("--version", action=_VersionAction, help="print version and file formats")
    _global_options(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    g = sub.add_parser("gen-corpus", parents=[common], help="generate a synthetic corpus")
    g.add_argument("--n-params", type=int, default=None, help="articulatory parameters (6 or 7)")
    g.add_argument("--n-utterances", type=int, default=None)
    g.add_argument("--frames", type=int, default=None, help="frames per utterance (100 Hz)")
    g.add_argument("--source-dims", type=int, default=None)
    g.add_argument("--no-audio", action="store_true", default=None)

    f = sub.add_parser("fit-artic", parents=[common], help="fit the guided-PCA model")
    f.add_argument("ema", nargs="+", help="EMA CSV file(s)")

    x = sub.add_parser("features", parents=[common], help="extract Bark cepstra from a WAV")
    x.add_argument("wav")
    x.add_argument("--format", choices=["csv", "bin"], default=None,
                   help="output format (default: from --out extension)")

    t = sub.add_parser("train", parents=[common], help="train one VAE / AR-VAE")
    t.add_argument("--corpus", default=None, help="corpus directory")
    t.add_argument("--alpha", type=float, default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--learning-rate", type=float, default=None)
    t.add_argument("--denoising", action="store_true", default=None)
    t.add_argument("--snr", type=float, default=None, help="noise SNR in dB for --denoising")
    t.add_argument("--resume", default=None, help="checkpoint to initialize from")

    e = sub.add_parser("exp", parents=[common], help="run an experiment")
    e.add_argument("experiment", choices=["convergence", "denoising"])
    e.add_argument("--corpus", default=None, help="corpus directory (default: generate)")
    e.add_argument("--corpus-seed", type=int, default=None)
    e.add_argument("--n-params", type=int, default=None)
    e.add_argument("--n-utterances", type=int, default=None)
    e.add_argument("--frames", type=int, default=None)
    e.add_argument("--n-seeds", type=int, default=None)
    e.add_argument("--epochs", type=int, default=None)
    e.add_argument("--batch-size", type=int, default=None)
    e.add_argument("--learning-rate", type=float, default=None)
    e.add_argument("--alphas", default=None, help="comma-separated alphas")
    e.add_argument("--snrs", default=None, help="comma-separated SNRs in dB or 'clean'")
    return p


def effective_config(args, parser):
    """Merge defaults < config file < explicit flags."""
    file_values = {}
    if getattr(args, "config", None):
        try:
            file_values = read_config_file(args.config)
        except (OSError, ValueError) as exc:
            parser.error(str(exc))
    cfg = {}
    present = vars(args)
    for key in DEFAULTS:
        if key not in present and key not in ("seed", "out"):
            continue  # option not used by this command
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
        elif key in file_values:
            try:
                cfg[key] = _coerce(key, file_values[key])
            except ValueError as exc:
                parser.error(f"config {key}: {exc}")
        else:
            cfg[key] = DEFAULTS[key]
    cfg["quiet"] = bool(getattr(args, "quiet", False))
    return cfg


def _parse_floats(text, parser, what):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        parser.error(f"{what}: expected comma-separated numbers, got {text!r}")


def _parse_snrs(text, parser):
    out = []
    for v in str(text).split(","):
        v = v.strip().lower()
        if not v:
            continue
        if v == "clean":
            out.append("clean")
        else:
            try:
                out.append(float(v.removesuffix("db")))
            except ValueError:
                parser.error(f"snrs: bad value {v!r}")
    return out


def _synth_config(cfg, parser, seed_key):
    try:
        return synthcorpus.SynthConfig(
            n_utterances=cfg["n_utterances"], frames_per_utterance=cfg["frames"],
            n_params=cfg["n_params"], source_dims=cfg.get("source_dims", 2),
            seed=cfg[seed_key], with_audio=not cfg.get("no_audio", False))
    except ValueError as exc:
        parser.error(str(exc))


def _require_out(cfg, parser):
    if not cfg["out"]:
        parser.error("--out is required")
    return cfg["out"]


def cmd_gen_corpus(cfg, parser):
    out = _require_out(cfg, parser)
    config = _synth_config(cfg, parser, "seed")
    corpus = synthcorpus.generate(config)
    path = synthcorpus.write_corpus(corpus, out)
    log.info("manifest sha256 %s", synthcorpus.manifest_hash(path))
    print(path)


def cmd_fit_artic(cfg, parser, paths):
    out = _require_out(cfg, parser)
    frames, layout = [], None
    for path in paths:
        _, ema, file_layout = articulatory.read_ema_csv(path)
        if layout is not None and file_layout != layout:
            raise ArtivaeError(f"{path}: coil layout differs from {paths[0]}")
        layout = file_layout
        frames.append(ema)
    model = articulatory.fit_guided_pca(np.vstack(frames), layout)
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    articulatory.save_model(model, out)
    print(out)


def cmd_features(cfg, parser, wav):
    out = _require_out(cfg, parser)
    fmt = cfg["format"] or ("bin" if out.endswith((".feat", ".bin")) else "csv")
    ceps = features.bark_cepstrum(features.read_wav(wav))
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    if fmt == "csv":
        features.write_feature_csv(out, ceps)
    else:
        features.write_feature_binary(out, ceps)
    log.info("%d frames", len(ceps))
    print(out)


def cmd_train(cfg, parser):
    out = _require_out(cfg, parser)
    if not cfg["corpus"]:
        parser.error("--corpus is required")
    if cfg["denoising"] and cfg["snr"] is None:
        parser.error("--denoising needs --snr")
    corpus = synthcorpus.load_corpus(cfg["corpus"])
    _, artic = experiments.articulatory_targets(corpus)
    if cfg["denoising"]:
        clean = experiments.clean_audio_features(corpus)
        noisy = experiments.noisy_audio_features(corpus, cfg["snr"], cfg["seed"])
        data = experiments.parallel_data(artic, clean, noisy)
    else:
        data = experiments.parallel_data(artic, [u.cepstra for u in corpus.utterances])
    try:
        config = TrainConfig(alpha=cfg["alpha"], epochs=cfg["epochs"], seed=cfg["seed"],
                             batch_size=cfg["batch_size"], learning_rate=cfg["learning_rate"],
                             denoising=cfg["denoising"])
    except ValueError as exc:
        parser.error(str(exc))
    init = load_checkpoint(cfg["resume"])[0] if cfg["resume"] else None

    def progress(epoch, mse):
        log.info("epoch %d test_mse %.6g", epoch + 1, mse)

    result = train(config, data, callback=progress, init=init)
    os.makedirs(out, exist_ok=True)
    save_checkpoint(result, os.path.join(out, f"{result.label}.checkpoint.json"))
    write_curve_csv(os.path.join(out, "curve.csv"), result.curve)
    print(os.path.join(out, f"{result.label}.checkpoint.json"))


def cmd_exp(cfg, parser, name):
    out = _require_out(cfg, parser)
    default_alphas = "0,0.25,1" if name == "convergence" else "0,1"
    alphas = _parse_floats(cfg["alphas"] or default_alphas, parser, "alphas")
    snrs = _parse_snrs(cfg["snrs"], parser)
    if cfg["corpus"]:
        corpus = synthcorpus.load_corpus(cfg["corpus"])
    else:
        # the convergence study reads generator cepstra and needs no audio
        corpus_cfg = dict(cfg, no_audio=name == "convergence")
        corpus = synthcorpus.generate(_synth_config(corpus_cfg, parser, "corpus_seed"))
    common = dict(alphas=alphas, n_seeds=cfg["n_seeds"], epochs=cfg["epochs"],
                  base_seed=cfg["seed"], batch_size=cfg["batch_size"],
                  learning_rate=cfg["learning_rate"])
    if name == "convergence":
        report = experiments.run_convergence(corpus, **common)
    else:
        report = experiments.run_denoising(corpus, snrs=snrs, **common)
    experiments.emit_report(report, out)
    print(out)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = effective_config(args, parser)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.handlers = [handler]
    log.propagate = False
    log.setLevel(logging.WARNING if cfg["quiet"] else logging.INFO)
    if not cfg["quiet"]:
        log.info("effective config: %s", json.dumps({"command": args.command, **cfg},
                                                    sort_keys=True))
    if cfg.get("n_params", 6) not in (6, 7):
        parser.error(f"n_params must be 6 or 7, got {cfg['n_params']}")
    try:
        if args.command == "gen-corpus":
            cmd_gen_corpus(cfg, parser)
        elif args.command == "fit-artic":
            cmd_fit_artic(cfg, parser, args.ema)
        elif args.command == "features":
            cmd_features(cfg, parser, args.wav)
        elif args.command == "train":
            cmd_train(cfg, parser)
        elif args.command == "exp":
            cmd_exp(cfg, parser, args.experiment)
    except (ArtivaeError, OSError, ValueError) as exc:
        print(f"artivae: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
