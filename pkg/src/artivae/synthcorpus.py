"""Seeded synthetic parallel corpora: articulatory trajectories, EMA, cepstra, audio.

Everything is built for identifiability and determinism, not phonetic
realism. The EMA generator matrix has orthogonal columns arranged so that
the staged guided-PCA extraction recovers the generating parameters; the
cepstra come from a fixed random one-hidden-layer network of the
articulatory and "source" trajectories; audio is white noise shaped frame
by frame with the cepstral spectral envelope.
"""
import hashlib
import json
import os
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import signal

from . import articulatory, features
from .articulatory import CoilLayout
from .errors import ArtivaeError
from .features import AudioSignal, Cepstra

MANIFEST_FORMAT = "artivae-corpus-v1"
FRAME_S = 0.010
AUDIO_RMS = 0.05
N_HIDDEN = 64

# fixed tags mixed into seed sequences
_TAG_TRAJ, _TAG_SOURCE, _TAG_M, _TAG_G, _TAG_EMA_NOISE, _TAG_CEP_NOISE = 1, 2, 3, 4, 5, 6
_TAG_AUDIO, _TAG_BABBLE, _TAG_MEAN = 7, 8, 9


@dataclass(frozen=True)
class SynthConfig:
    n_utterances: int = 25
    frames_per_utterance: int = 200
    n_params: int = 6
    source_dims: int = 2
    seed: int = 0
    nonlinearity_scale: float = 1.0
    ema_noise: float = 0.05
    cepstral_noise: float = 0.01
    target_interval_s: float = 0.150
    time_constant_s: float = 0.030
    with_audio: bool = True
    n_babble_talkers: int = 6
    sample_rate_hz: int = features.CANONICAL_RATE

    def __post_init__(self):
        if self.n_params not in (6, 7):
            raise ValueError(f"n_params must be 6 or 7, got {self.n_params}")
        for name in ("n_utterances", "frames_per_utterance", "source_dims"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.frames_per_utterance < 2:
            raise ValueError("frames_per_utterance must be at least 2")

    @property
    def n_frames(self):
        return self.n_utterances * self.frames_per_utterance


def _rng(*entropy):
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


# --------------------------------------------------------------------------
# trajectories

def _damped_track(rng, n_frames, dims, interval_frames, tau_frames):
    """Critically damped (two cascaded first-order lags) response to random step targets."""
    phase = int(rng.integers(0, interval_frames))
    n_targets = (n_frames + phase) // interval_frames + 1
    targets = rng.standard_normal((n_targets, dims))
    steps = np.repeat(targets, interval_frames, axis=0)[phase:phase + n_frames]
    k = 1.0 - np.exp(-1.0 / tau_frames)
    b, a = [k], [1.0, -(1.0 - k)]
    y = steps
    for _ in range(2):
        y = signal.lfilter(b, a, y, axis=0, zi=(1.0 - k) * y[:1])[0]
    return y


def _whiten(x):
    """Jointly decorrelate columns in order (Cholesky) and standardize."""
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / len(xc)
    chol = np.linalg.cholesky(cov)
    white = np.linalg.solve(chol, xc.T).T
    white -= white.mean(axis=0)
    return white / white.std(axis=0)


def gen_trajectories(config):
    """Articulatory and source trajectories, each ``(n_frames, dims)``, 100 Hz.

    Utterances are generated independently from seeds derived from
    ``(seed, utterance index)`` and concatenated; the concatenation is then
    decorrelated across dimensions and standardized.
    """
    interval = max(int(round(config.target_interval_s / FRAME_S)), 1)
    tau = config.time_constant_s / FRAME_S
    T = config.frames_per_utterance
    art, src = [], []
    for u in range(config.n_utterances):
        art.append(_damped_track(_rng(config.seed, _TAG_TRAJ, u), T, config.n_params, interval, tau))
        src.append(_damped_track(_rng(config.seed, _TAG_SOURCE, u), T, config.source_dims,
                                 interval, tau))
    return _whiten(np.vstack(art)), _whiten(np.vstack(src))


# --------------------------------------------------------------------------
# ground-truth generators

def _unit(v):
    return v / np.linalg.norm(v)


def _orth_complement_vector(rng, basis, dim):
    """Random unit vector orthogonal to the columns of ``basis``."""
    q, _ = np.linalg.qr(basis)
    v = rng.standard_normal(dim)
    v -= q @ (q.T @ v)
    return _unit(v)


def ema_generator(config):
    """``(M, mean, layout)`` with y = M a + mean; columns of M are orthogonal."""
    layout = CoilLayout.default(with_velum=config.n_params == 7)
    rng = _rng(config.seed, _TAG_M)
    D, N = layout.dims, config.n_params
    M = np.zeros((D, N))
    tongue = layout.index("tongue_tip", "tongue_blade", "tongue_dorsum")
    lips = layout.index("upper_lip", "lower_lip")  # ul_x, ul_y, ll_x, ll_y

    u = _unit(rng.standard_normal(2))
    u_perp = np.array([-u[1], u[0]])
    q, _ = np.linalg.qr(rng.standard_normal((4, 2)))
    v1, v2 = q[:, 0], q[:, 1]
    tb = np.concatenate([0.8 * u_perp, 3.0 * v1])
    td = np.concatenate([np.zeros(2), 2.0 * v2])
    tt = np.concatenate([1.5 * u, np.zeros(4)])

    h = _unit(np.array([1.0, 0.8]) + 0.2 * rng.standard_normal(2))
    w = _unit(rng.standard_normal(2))
    w_perp = np.array([-w[1], w[0]])
    lp = np.array([2.0 * h[0], 0.5 * w[0], 2.0 * h[1], 0.5 * w[1]])
    lh = np.array([0.0, 1.8 * w_perp[0], 0.0, 1.8 * w_perp[1]])

    M[layout.index("jaw"), 0] = 2.5 * _unit(rng.standard_normal(2))
    M[tongue, 0] = 2.0 * _orth_complement_vector(rng, np.column_stack([tb, td, tt]), 6)
    M[lips, 0] = 1.5 * _orth_complement_vector(rng, np.column_stack([lp, lh]), 4)
    M[tongue, 1], M[tongue, 2], M[tongue, 3] = tb, td, tt
    M[lips, 4], M[lips, 5] = lp, lh
    if N == 7:
        M[layout.index("velum"), 6] = 1.2 * _unit(rng.standard_normal(2))

    base = np.array([0.0, -20.0, 50.0, 0.0, 40.0, 10.0, 25.0, 15.0, 85.0, 5.0, 80.0, -15.0,
                     10.0, 25.0])[:D]
    mean = base + _rng(config.seed, _TAG_MEAN).normal(0.0, 2.0, D)
    return M, mean, layout


@dataclass(frozen=True)
class SpectralMap:
    """x = tanh(u @ W1 + b1) @ W2 + b2 with u = [a; source]."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __call__(self, u):
        return np.tanh(u @ self.W1 + self.b1) @ self.W2 + self.b2


# per-coefficient spread and offset of the generated cepstra
_CEP_STD = np.concatenate([[1.0], np.full(8, 2.0), np.linspace(1.5, 0.8, 9)])
_CEP_MEAN = np.zeros(features.N_CEPS)
_CEP_MEAN[1] = 3.0


def spectral_map(config):
    rng = _rng(config.seed, _TAG_G)
    n_in = config.n_params + config.source_dims
    W1 = rng.normal(0.0, config.nonlinearity_scale / np.sqrt(n_in), (n_in, N_HIDDEN))
    b1 = rng.normal(0.0, 0.5, N_HIDDEN)
    W2 = rng.normal(0.0, 1.0 / np.sqrt(N_HIDDEN), (N_HIDDEN, features.N_CEPS))
    # output calibration on a fixed reference sample of standard-normal inputs
    ref = np.tanh(rng.standard_normal((20000, n_in)) @ W1 + b1) @ W2
    scale = _CEP_STD / ref.std(axis=0)
    return SpectralMap(W1, b1, W2 * scale, _CEP_MEAN - ref.mean(axis=0) * scale)


def gen_ema(config, a_true, M=None, mean=None):
    if M is None:
        M, mean, _ = ema_generator(config)
    noise = _rng(config.seed, _TAG_EMA_NOISE).normal(0.0, config.ema_noise,
                                                     (len(a_true), M.shape[0]))
    return a_true @ M.T + mean + noise


def gen_cepstra(config, a_true, source, g=None):
    g = spectral_map(config) if g is None else g
    x = g(np.hstack([a_true, source]))
    return x + _rng(config.seed, _TAG_CEP_NOISE).normal(0.0, config.cepstral_noise, x.shape)


# --------------------------------------------------------------------------
# audio

def synth_audio(coeffs, rng, sample_rate_hz=features.CANONICAL_RATE):
    """White noise shaped per 20 ms frame by the cepstral envelope, overlap-added at 10 ms.

    Frame ``j`` of the output is centered where :func:`features.bark_cepstrum`
    places its frame ``j``.
    """
    win, hop = features.frame_geometry(sample_rate_hz)
    fb = features.bark_filterbank(sample_rate_hz, win)
    colsum = fb.sum(axis=0)
    interp = np.divide(fb, colsum, out=np.zeros_like(fb), where=colsum > 0)
    energies = np.exp(features.cepstra_to_log_energies(coeffs))
    gains = np.sqrt(energies @ interp)
    T = len(coeffs)
    noise = rng.standard_normal((T, win))
    segments = np.fft.irfft(np.fft.rfft(noise, axis=1) * gains, n=win, axis=1)
    segments *= features.analysis_window(win)
    out = np.zeros((T - 1) * hop + win)
    for j in range(T):
        out[j * hop:j * hop + win] += segments[j]
    return out


@dataclass
class Utterance:
    name: str
    times: np.ndarray          # (T,) frame centers, shared clock
    a_true: np.ndarray         # (T, N)
    source: np.ndarray         # (T, S)
    ema: np.ndarray            # (T, D)
    cepstra: np.ndarray        # (T, 18) generator cepstra
    audio: AudioSignal | None = None


@dataclass
class Corpus:
    config: SynthConfig
    layout: CoilLayout
    utterances: list
    babble: AudioSignal | None = None
    audio_gain: float = 1.0
    babble_gain: float = 1.0
    M: np.ndarray | None = None
    ema_mean: np.ndarray | None = None

    def stacked(self, attr):
        return np.vstack([getattr(u, attr) for u in self.utterances])

    def fingerprint(self):
        """SHA-256 over the config and every generated array."""
        h = hashlib.sha256(json.dumps(asdict(self.config), sort_keys=True).encode())
        for u in self.utterances:
            for arr in (u.ema, u.cepstra):
                h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
            if u.audio is not None:
                h.update(np.ascontiguousarray(u.audio.samples, dtype="<f8").tobytes())
        if self.babble is not None:
            h.update(np.ascontiguousarray(self.babble.samples, dtype="<f8").tobytes())
        return h.hexdigest()


def _track_for(config):
    """Concatenated clean audio of an independent corpus, unnormalized."""
    a_true, source = gen_trajectories(config)
    x = gen_cepstra(config, a_true, source)
    T = config.frames_per_utterance
    pieces = [synth_audio(x[i * T:(i + 1) * T], _rng(config.seed, _TAG_AUDIO, i),
                          config.sample_rate_hz)
              for i in range(config.n_utterances)]
    return np.concatenate(pieces)


def gen_noise_and_audio(config, cepstra_per_utt):
    """Clean audio per utterance (corpus RMS ``AUDIO_RMS``) and a unit-RMS babble track."""
    clean = [synth_audio(c, _rng(config.seed, _TAG_AUDIO, i), config.sample_rate_hz)
             for i, c in enumerate(cepstra_per_utt)]
    gain = AUDIO_RMS / np.sqrt(np.mean(np.concatenate(clean) ** 2))
    clean = [AudioSignal(c * gain, config.sample_rate_hz) for c in clean]

    babble = None
    for talker in range(config.n_babble_talkers):
        seed = int(np.random.SeedSequence([config.seed, _TAG_BABBLE, talker]).generate_state(1)[0])
        track = _track_for(replace(config, seed=seed))
        babble = track if babble is None else babble + track
    babble = babble / np.sqrt(np.mean(babble**2))
    return clean, AudioSignal(babble, config.sample_rate_hz), float(gain)


def generate(config):
    """Build a full in-memory :class:`Corpus`."""
    a_true, source = gen_trajectories(config)
    M, mean, layout = ema_generator(config)
    ema = gen_ema(config, a_true, M, mean)
    x = gen_cepstra(config, a_true, source)
    T = config.frames_per_utterance
    times = FRAME_S * (np.arange(T) + 1)  # centers of the 20 ms analysis windows
    utts = []
    for i in range(config.n_utterances):
        sl = slice(i * T, (i + 1) * T)
        utts.append(Utterance(f"utt{i:03d}", times.copy(), a_true[sl], source[sl], ema[sl], x[sl]))
    corpus = Corpus(config, layout, utts, M=M, ema_mean=mean)
    if config.with_audio:
        clean, babble, gain = gen_noise_and_audio(config, [u.cepstra for u in utts])
        for u, audio in zip(utts, clean):
            u.audio = audio
        corpus.babble = babble
        corpus.audio_gain = gain
    return corpus


# --------------------------------------------------------------------------
# files

def _sha256_file(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def write_corpus(corpus, out_dir):
    """Write EMA/feature/WAV/ground-truth files and ``manifest.json``; return the manifest path."""
    for sub in ("ema", "features", "wav", "truth"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    entries = []
    for u in corpus.utterances:
        files = {
            "ema": f"ema/{u.name}.csv",
            "features_csv": f"features/{u.name}.csv",
            "features_bin": f"features/{u.name}.feat",
            "truth": f"truth/{u.name}.csv",
        }
        articulatory.write_ema_csv(os.path.join(out_dir, files["ema"]), u.times, u.ema,
                                   corpus.layout)
        ceps = Cepstra(u.cepstra, u.times)
        features.write_feature_csv(os.path.join(out_dir, files["features_csv"]), ceps)
        features.write_feature_binary(os.path.join(out_dir, files["features_bin"]), ceps)
        _write_truth(os.path.join(out_dir, files["truth"]), u, corpus.config)
        if u.audio is not None:
            files["wav"] = f"wav/{u.name}.wav"
            features.write_wav(os.path.join(out_dir, files["wav"]), u.audio)
        entries.append({"name": u.name, "frames": len(u.times),
                        "seed_entropy": [corpus.config.seed, _TAG_TRAJ,
                                         len(entries)], "files": files})
    manifest = {
        "format": MANIFEST_FORMAT,
        "config": asdict(corpus.config),
        "layout": corpus.layout.columns(),
        "audio_gain": corpus.audio_gain,
        "utterances": entries,
        "ground_truth": "truth/generator.json",
    }
    with open(os.path.join(out_dir, "truth", "generator.json"), "w") as fh:
        g = spectral_map(corpus.config)
        json.dump({"M": corpus.M.tolist(), "ema_mean": corpus.ema_mean.tolist(),
                   "spectral_map": {k: v.tolist() for k, v in vars(g).items()}},
                  fh, sort_keys=True)
        fh.write("\n")
    if corpus.babble is not None:
        # unit-RMS babble exceeds the PCM range; stored scaled, gain recorded
        peak = float(np.max(np.abs(corpus.babble.samples)))
        bgain = 1.0 / (1.01 * peak) if peak >= 1.0 else 1.0
        features.write_wav(os.path.join(out_dir, "babble.wav"),
                           AudioSignal(corpus.babble.samples * bgain, corpus.babble.sample_rate_hz))
        manifest["babble"] = {"file": "babble.wav", "stored_gain": bgain}
    manifest["file_sha256"] = {
        rel: _sha256_file(os.path.join(out_dir, rel))
        for e in entries for rel in e["files"].values()
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def _write_truth(path, u, config):
    cols = list(articulatory.PARAM_NAMES[:config.n_params]) + [
        f"src{i}" for i in range(config.source_dims)]
    with open(path, "w") as fh:
        fh.write(",".join(["time_s"] + cols) + "\n")
        for t, row in zip(u.times, np.hstack([u.a_true, u.source])):
            fh.write(",".join([repr(float(t))] + [repr(float(v)) for v in row]) + "\n")


def manifest_hash(path):
    return _sha256_file(path)


def load_corpus(corpus_dir):
    """Read a corpus written by :func:`write_corpus` (ground truth included when present)."""
    path = os.path.join(corpus_dir, "manifest.json")
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise ArtivaeError(f"{corpus_dir}: no manifest.json") from None
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ArtivaeError(f"{path}: not a {MANIFEST_FORMAT} manifest")
    config = SynthConfig(**manifest["config"])
    layout = CoilLayout.from_columns(manifest["layout"])
    utts = []
    for e in manifest["utterances"]:
        f = e["files"]
        times, ema, file_layout = articulatory.read_ema_csv(os.path.join(corpus_dir, f["ema"]))
        if file_layout != layout:
            raise ArtivaeError(f"{f['ema']}: coil layout differs from manifest")
        ceps = features.read_feature_binary(os.path.join(corpus_dir, f["features_bin"]))
        truth = np.loadtxt(os.path.join(corpus_dir, f["truth"]), delimiter=",", skiprows=1,
                           ndmin=2)
        audio = None
        if "wav" in f:
            audio = features.read_wav(os.path.join(corpus_dir, f["wav"]))
        n = config.n_params
        utts.append(Utterance(e["name"], times, truth[:, 1:1 + n], truth[:, 1 + n:], ema,
                              ceps.coeffs, audio))
    corpus = Corpus(config, layout, utts, audio_gain=manifest.get("audio_gain", 1.0))
    if "babble" in manifest:
        b = features.read_wav(os.path.join(corpus_dir, manifest["babble"]["file"]))
        corpus.babble = AudioSignal(b.samples / manifest["babble"]["stored_gain"],
                                    b.sample_rate_hz)
    gt = os.path.join(corpus_dir, manifest.get("ground_truth", ""))
    if os.path.isfile(gt):
        with open(gt) as fh:
            g = json.load(fh)
        corpus.M = np.asarray(g["M"])
        corpus.ema_mean = np.asarray(g["ema_mean"])
    return corpus
