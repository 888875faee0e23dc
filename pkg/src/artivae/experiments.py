"""Convergence-speed and denoising comparisons between VAE and AR-VAE.

Runs are keyed by (alpha, seed) or (snr, alpha, seed). At a fixed seed the
models differ only in alpha: same split, batch order, noise draws and
initial weights (see :func:`artivae.arvae.train`). Independent runs may be
spread over ``ARTIVAE_THREADS`` worker processes; results are folded in key
order so reports do not depend on scheduling.
"""
import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import articulatory, features
from .arvae import ParallelData, TrainConfig, train
from .errors import ArtivaeError
from .numerics import fit_exponential_decay

FULL_STUDY_ALPHAS = (0.0, 0.1, 0.25, 0.5, 1.0)
SNR_CONDITIONS = ("clean", 10.0, 5.0, 0.0)
SPEED_EPOCH = 10  # epoch (1-based) at which convergence speed is compared


def snr_label(snr):
    return "clean" if snr == "clean" or snr is None else f"{float(snr):g}dB"


def alpha_label(alpha):
    return f"{float(alpha):g}"


def model_label(alpha):
    return "vae" if alpha == 0 else "ar-vae"


def thread_count():
    raw = os.environ.get("ARTIVAE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ArtivaeError(f"ARTIVAE_THREADS must be an integer, got {raw!r}") from None
    return max(n, 1)


# --------------------------------------------------------------------------
# data assembly

def articulatory_targets(corpus):
    """Fit the guided-PCA model on all corpus EMA and map every utterance."""
    model = articulatory.fit_guided_pca(corpus.stacked("ema"), corpus.layout)
    return model, [model.ema_to_artic(u.ema) for u in corpus.utterances]


def clean_audio_features(corpus):
    return [features.bark_cepstrum(u.audio).coeffs for u in _with_audio(corpus)]


def _with_audio(corpus):
    if any(u.audio is None for u in corpus.utterances):
        raise ArtivaeError("corpus has no audio; regenerate with audio enabled")
    return corpus.utterances


def noisy_audio_features(corpus, snr_db, seed):
    """Features of every utterance mixed with a random babble crop at ``snr_db``."""
    if corpus.babble is None:
        raise ArtivaeError("corpus has no babble noise track")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(round(snr_db * 1000))]))
    out = []
    for u in _with_audio(corpus):
        mixed, _, _ = features.mix_at_snr(u.audio, corpus.babble, snr_db, rng)
        out.append(features.bark_cepstrum(mixed).coeffs)
    return out


def parallel_data(artic, clean, noisy=None):
    """Align per-utterance streams by frame index and stack them."""
    xs, as_, ns = [], [], []
    for i, (a, x) in enumerate(zip(artic, clean)):
        al = features.align(x, a)
        n = al.n_pairs
        if noisy is not None:
            n = min(n, len(noisy[i]))
            ns.append(noisy[i][:n])
        xs.append(al.cepstra[:n])
        as_.append(al.artic[:n])
    return ParallelData(np.vstack(xs), np.vstack(as_), np.vstack(ns) if noisy is not None else None)


def corpus_data(corpus, feature_source="generator"):
    """Parallel frames for the convergence study.

    ``feature_source`` is ``"generator"`` (corpus cepstra) or ``"audio"``
    (features re-extracted from the clean audio, as in the denoising study).
    """
    _, artic = articulatory_targets(corpus)
    if feature_source == "generator":
        clean = [u.cepstra for u in corpus.utterances]
    elif feature_source == "audio":
        clean = clean_audio_features(corpus)
    else:
        raise ValueError(f"unknown feature source {feature_source!r}")
    return parallel_data(artic, clean)


# --------------------------------------------------------------------------
# execution

def _run_one(args):
    data, config = args
    return train(config, data).curve


def _run_all(jobs, threads=None):
    """``jobs``: list of (key, data, TrainConfig). Returns {key: curve}."""
    threads = thread_count() if threads is None else threads
    keys = [k for k, _, _ in jobs]
    payload = [(d, c) for _, d, c in jobs]
    if threads <= 1 or len(jobs) <= 1:
        curves = []
        for key, (d, c) in zip(keys, payload):
            try:
                curves.append(_run_one((d, c)))
            except ArtivaeError as exc:
                raise ArtivaeError(f"run {key}: {exc}") from exc
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            curves = list(pool.map(_run_one, payload))
    return dict(zip(keys, curves))


@dataclass
class ConvergenceReport:
    alphas: tuple
    seeds: tuple
    epochs: int
    curves: dict                       # (alpha, seed) -> curve
    mean_curves: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    corpus_hash: str = ""

    kind = "convergence"

    def final(self, alpha):
        return np.array([self.curves[alpha, s][-1] for s in self.seeds])

    def at_epoch(self, alpha, epoch):
        return np.array([self.curves[alpha, s][epoch - 1] for s in self.seeds])

    def best_regularized_alpha(self):
        regs = [a for a in self.alphas if a > 0]
        return min(regs, key=lambda a: self.final(a).mean()) if regs else None

    def paired_sign_counts(self):
        """Per seed: does some alpha > 0 strictly beat alpha = 0 (final epoch, speed epoch)?"""
        if 0.0 not in self.alphas or len(self.alphas) < 2:
            return {}
        regs = [a for a in self.alphas if a > 0]
        out = {"final": int(sum(min(self.curves[a, s][-1] for a in regs) < self.curves[0.0, s][-1]
                                for s in self.seeds)),
               "n_seeds": len(self.seeds)}
        if self.epochs >= SPEED_EPOCH:
            i = SPEED_EPOCH - 1
            out[f"epoch{SPEED_EPOCH}"] = int(sum(
                min(self.curves[a, s][i] for a in regs) < self.curves[0.0, s][i]
                for s in self.seeds))
        for a in regs:
            out[f"alpha={alpha_label(a)} final"] = int(sum(
                self.curves[a, s][-1] < self.curves[0.0, s][-1] for s in self.seeds))
        return out

    def summary(self):
        agg = {}
        for a in self.alphas:
            fin = self.final(a)
            entry = {
                "model": model_label(a),
                "final_mean": float(fin.mean()),
                "final_std": float(fin.std()),
                "mean_curve": [float(v) for v in self.mean_curves[a]],
                "exp_fit": self.fits[a].as_dict() if a in self.fits else None,
            }
            if self.epochs >= SPEED_EPOCH:
                entry[f"epoch{SPEED_EPOCH}_mean"] = float(self.at_epoch(a, SPEED_EPOCH).mean())
            agg[alpha_label(a)] = entry
        best = self.best_regularized_alpha()
        return {
            "experiment": self.kind,
            "config": self.config,
            "corpus_hash": self.corpus_hash,
            "aggregates": agg,
            "best_regularized_alpha": None if best is None else float(best),
            "paired_sign_counts": self.paired_sign_counts(),
        }


def run_convergence(corpus, alphas=(0.0, 0.25, 1.0), n_seeds=5, epochs=30, base_seed=0,
                    feature_source="generator", batch_size=32, learning_rate=1e-3,
                    threads=None, data=None):
    """Train ``n_seeds`` models per alpha and fit an exponential to each mean curve."""
    alphas = tuple(sorted({float(a) for a in alphas}))
    if not alphas:
        raise ValueError("alphas must be nonempty")
    seeds = tuple(range(base_seed, base_seed + n_seeds))
    data = corpus_data(corpus, feature_source) if data is None else data
    jobs = [((a, s), data, TrainConfig(alpha=a, epochs=epochs, seed=s, batch_size=batch_size,
                                        learning_rate=learning_rate))
            for a in alphas for s in seeds]
    curves = _run_all(jobs, threads)
    report = ConvergenceReport(alphas, seeds, epochs, curves)
    t = np.arange(1, epochs + 1, dtype=float)
    for a in alphas:
        mean_curve = np.mean([curves[a, s] for s in seeds], axis=0)
        report.mean_curves[a] = mean_curve
        if epochs >= 4:
            report.fits[a] = fit_exponential_decay(t, mean_curve)
    report.config = {
        "alphas": list(alphas), "n_seeds": n_seeds, "epochs": epochs, "base_seed": base_seed,
        "feature_source": feature_source, "batch_size": batch_size,
        "learning_rate": learning_rate, "split_fraction": 0.8,
        "corpus": asdict(corpus.config) if corpus is not None else None,
    }
    report.corpus_hash = corpus.fingerprint() if corpus is not None else ""
    return report


@dataclass
class DenoisingReport:
    snrs: tuple
    alphas: tuple
    seeds: tuple
    epochs: int
    curves: dict                      # (snr, alpha, seed) -> curve
    config: dict = field(default_factory=dict)
    corpus_hash: str = ""

    kind = "denoising"

    def final(self, snr, alpha):
        return np.array([self.curves[snr, alpha, s][-1] for s in self.seeds])

    def summary(self):
        agg = {}
        signs = {}
        for snr in self.snrs:
            row = {}
            for a in self.alphas:
                fin = self.final(snr, a)
                row[model_label(a)] = {"alpha": float(a), "mean": float(fin.mean()),
                                       "std": float(fin.std()),
                                       "per_seed": [float(v) for v in fin]}
            agg[snr_label(snr)] = row
            if 0.0 in self.alphas and len(self.alphas) == 2:
                ar = max(self.alphas)
                signs[snr_label(snr)] = int(np.sum(self.final(snr, ar) < self.final(snr, 0.0)))
        return {
            "experiment": self.kind,
            "config": self.config,
            "corpus_hash": self.corpus_hash,
            "aggregates": agg,
            "paired_sign_counts": {"ar-vae < vae": signs, "n_seeds": len(self.seeds)},
        }


def run_denoising(corpus, snrs=SNR_CONDITIONS, alphas=(0.0, 1.0), n_seeds=5, epochs=30,
                  base_seed=0, batch_size=32, learning_rate=1e-3, threads=None):
    """Train VAE and AR-VAE to map noisy features to clean ones at each SNR.

    The babble crops for a given SNR are drawn once from ``base_seed`` and
    shared by every model and seed at that SNR.
    """
    alphas = tuple(sorted({float(a) for a in alphas}))
    seeds = tuple(range(base_seed, base_seed + n_seeds))
    _, artic = articulatory_targets(corpus)
    clean = clean_audio_features(corpus)
    jobs = []
    for snr in snrs:
        noisy = clean if snr == "clean" else noisy_audio_features(corpus, float(snr), base_seed)
        data = parallel_data(artic, clean, noisy)
        for a in alphas:
            for s in seeds:
                jobs.append(((snr, a, s), data,
                             TrainConfig(alpha=a, epochs=epochs, seed=s, batch_size=batch_size,
                                         learning_rate=learning_rate, denoising=True)))
    curves = _run_all(jobs, threads)
    report = DenoisingReport(tuple(snrs), alphas, seeds, epochs, curves)
    report.config = {
        "snrs": [snr_label(s) for s in snrs], "alphas": list(alphas), "n_seeds": n_seeds,
        "epochs": epochs, "base_seed": base_seed, "batch_size": batch_size,
        "learning_rate": learning_rate, "split_fraction": 0.8,
        "corpus": asdict(corpus.config),
    }
    report.corpus_hash = corpus.fingerprint()
    return report


# --------------------------------------------------------------------------
# reports

_README = """\
Experiment output ({kind})

curves.csv   one row per (condition, model, seed, epoch): test reconstruction
             MSE in original cepstral units (mean over frames of squared
             error / 18)
summary.json aggregates (mean/std over seeds), exponential fits of the
             mean learning curves, paired sign counts, config echo and the
             corpus hash
config.json  the effective experiment configuration
{figures}
"""


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    return repr(float(v))


def emit_report(report, out_dir):
    """Write curves.csv, summary.json, config.json, figure CSVs and a README."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise ArtivaeError(f"cannot create output directory {out_dir}: {exc}") from None
    if not os.access(out_dir, os.W_OK):
        raise ArtivaeError(f"output directory {out_dir} is not writable")

    written = []
    if isinstance(report, ConvergenceReport):
        rows = [[alpha_label(a), model_label(a), s, e + 1, _fmt(report.curves[a, s][e])]
                for a in report.alphas for s in report.seeds for e in range(report.epochs)]
        _write_csv(os.path.join(out_dir, "curves.csv"),
                   ["alpha", "model", "seed", "epoch", "mse"], rows)
        fig_a = []
        t = np.arange(1, report.epochs + 1)
        for a in report.alphas:
            fitted = report.fits[a](t) if a in report.fits else [float("nan")] * report.epochs
            for e in range(report.epochs):
                fig_a.append([alpha_label(a), e + 1, _fmt(report.mean_curves[a][e]),
                              _fmt(fitted[e])])
        _write_csv(os.path.join(out_dir, "learning_curves.csv"),
                   ["alpha", "epoch", "mean_mse", "fitted_mse"], fig_a)
        _write_csv(os.path.join(out_dir, "final_mse.csv"),
                   ["alpha", "final_mean", "final_std", "n_seeds"],
                   [[alpha_label(a), _fmt(report.final(a).mean()), _fmt(report.final(a).std()),
                     len(report.seeds)] for a in report.alphas])
        figures = ("learning_curves.csv  mean test MSE per alpha and epoch with the "
                   "fitted exponential\nfinal_mse.csv        final-epoch mean/std per alpha")
        written += ["learning_curves.csv", "final_mse.csv"]
    elif isinstance(report, DenoisingReport):
        rows = [[snr_label(snr), model_label(a), s, e + 1, _fmt(report.curves[snr, a, s][e])]
                for snr in report.snrs for a in report.alphas for s in report.seeds
                for e in range(report.epochs)]
        _write_csv(os.path.join(out_dir, "curves.csv"),
                   ["snr", "model", "seed", "epoch", "mse"], rows)
        _write_csv(os.path.join(out_dir, "denoising_mse.csv"),
                   ["snr", "model", "alpha", "mean_mse", "std_mse", "n_seeds"],
                   [[snr_label(snr), model_label(a), alpha_label(a),
                     _fmt(report.final(snr, a).mean()), _fmt(report.final(snr, a).std()),
                     len(report.seeds)] for snr in report.snrs for a in report.alphas])
        figures = "denoising_mse.csv  final test MSE mean/std per SNR and model"
        written.append("denoising_mse.csv")
    else:
        raise TypeError(f"unsupported report type {type(report).__name__}")

    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(report.summary(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(report.config, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "README.txt"), "w") as fh:
        fh.write(_README.format(kind=report.kind, figures=figures))
    return ["curves.csv", "summary.json", "config.json", "README.txt"] + written
