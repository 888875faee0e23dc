"""Bark-scale cepstral features, noise mixing and stream alignment.

Feature contract (bit-exact, deterministic): 20 ms periodic-Hann frames at
a 10 ms hop, power spectrum, 18 triangular bands spaced uniformly on the
Bark scale from 0 Hz to Nyquist, natural log with a 1e-10 floor, and an
orthonormal DCT-II across the bands.
"""
import csv
import struct
from dataclasses import dataclass

import numpy as np
from scipy import fft
from scipy.io import wavfile

from .errors import ArtivaeError

N_CEPS = 18
N_BANDS = 18
WINDOW_S = 0.020
HOP_S = 0.010
ENERGY_FLOOR = 1e-10
CANONICAL_RATE = 16000

FEATURE_FORMAT = "artivae-feat-v1"
_FEAT_MAGIC = b"AVFEAT01"


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray
    sample_rate_hz: int = CANONICAL_RATE

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or not np.all(np.isfinite(s)):
            raise ValueError("audio samples must be a finite 1-D sequence")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return len(self.samples)

    @property
    def rms(self):
        return float(np.sqrt(np.mean(self.samples**2)))


@dataclass(frozen=True)
class Cepstra:
    """A sequence of cepstral frames: ``coeffs`` (T, 18) and frame-center ``times`` (T,)."""

    coeffs: np.ndarray
    times: np.ndarray

    def __len__(self):
        return len(self.coeffs)


def hz_to_bark(f):
    """Traunmueller's approximation."""
    f = np.asarray(f, dtype=np.float64)
    return 26.81 * f / (1960.0 + f) - 0.53


def bark_to_hz(z):
    z = np.asarray(z, dtype=np.float64)
    return 1960.0 * (z + 0.53) / (26.28 - z)


def frame_geometry(sample_rate_hz):
    """(window, hop) lengths in samples."""
    if sample_rate_hz <= 0:
        raise ValueError(f"sample rate must be positive, got {sample_rate_hz}")
    return int(round(WINDOW_S * sample_rate_hz)), int(round(HOP_S * sample_rate_hz))


def bark_filterbank(sample_rate_hz, n_fft, n_bands=N_BANDS):
    """Triangular band weights, shape (n_bands, n_fft // 2 + 1).

    Triangles are linear in Bark, so overlapping neighbours sum to one
    between the first and last band centers.
    """
    freqs = np.arange(n_fft // 2 + 1) * sample_rate_hz / n_fft
    z = hz_to_bark(freqs)
    edges = np.linspace(hz_to_bark(0.0), hz_to_bark(sample_rate_hz / 2.0), n_bands + 2)
    left, center, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (z - left) / (center - left)
    falling = (right - z) / (right - center)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def analysis_window(win):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)  # periodic Hann


def frame_signal(samples, win, hop):
    n = (len(samples) - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(n)[:, None]
    return samples[idx]


def band_energies(audio):
    """Per-frame filterbank energies (before the log), shape (T, 18)."""
    sr = audio.sample_rate_hz
    win, hop = frame_geometry(sr)
    if len(audio.samples) < win:
        raise ValueError(f"audio shorter than one {win}-sample window")
    frames = frame_signal(audio.samples, win, hop) * analysis_window(win)
    power = np.abs(fft.rfft(frames, axis=1)) ** 2
    return power @ bark_filterbank(sr, win).T


def log_energies_to_cepstra(log_e):
    return fft.dct(log_e, type=2, norm="ortho", axis=-1)


def cepstra_to_log_energies(coeffs):
    return fft.idct(coeffs, type=2, norm="ortho", axis=-1)


def bark_cepstrum(audio):
    """18 Bark-scale cepstral coefficients per 10 ms frame."""
    if not isinstance(audio, AudioSignal):
        audio = AudioSignal(np.asarray(audio, dtype=np.float64))
    energies = band_energies(audio)
    coeffs = log_energies_to_cepstra(np.log(np.maximum(energies, ENERGY_FLOOR)))
    win, hop = frame_geometry(audio.sample_rate_hz)
    times = (np.arange(len(coeffs)) * hop + win / 2.0) / audio.sample_rate_hz
    return Cepstra(coeffs, times)


def mix_at_snr(clean, noise, snr_db, rng=None, offset=None):
    """Add a crop of ``noise`` to ``clean`` at ``snr_db`` (full-utterance RMS).

    The crop starts at ``offset`` or, if not given, at a uniformly random
    position drawn from ``rng``. Returns ``(mixed, offset, gain)``.
    """
    if clean.sample_rate_hz != noise.sample_rate_hz:
        raise ValueError("clean and noise sample rates differ")
    n = len(clean)
    if len(noise) < n:
        raise ValueError("noise is shorter than the clean signal")
    if offset is None:
        rng = np.random.default_rng() if rng is None else rng
        offset = int(rng.integers(0, len(noise) - n + 1))
    crop = noise.samples[offset:offset + n]
    p_clean = np.mean(clean.samples**2)
    p_noise = np.mean(crop**2)
    if p_clean == 0.0 or p_noise == 0.0:
        raise ArtivaeError("SNR undefined for a silent clean or noise signal")
    gain = np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    return AudioSignal(clean.samples + gain * crop, clean.sample_rate_hz), offset, float(gain)


def measured_snr_db(clean, mixed):
    """SNR of ``mixed`` relative to ``clean``, in dB."""
    c = clean.samples if isinstance(clean, AudioSignal) else np.asarray(clean)
    m = mixed.samples if isinstance(mixed, AudioSignal) else np.asarray(mixed)
    return float(10.0 * np.log10(np.mean(c**2) / np.mean((m - c) ** 2)))


@dataclass(frozen=True)
class Alignment:
    cepstra: np.ndarray  # (T, 18)
    artic: np.ndarray    # (T, N)
    n_pairs: int
    dropped: int


def align(cepstra, artic):
    """Pair 100 Hz cepstral and articulatory frames by index, truncating to the shorter."""
    c = cepstra.coeffs if isinstance(cepstra, Cepstra) else np.asarray(cepstra)
    a = np.asarray(artic)
    if len(c) == 0 or len(a) == 0:
        raise ValueError("both streams must be nonempty")
    n = min(len(c), len(a))
    return Alignment(c[:n], a[:n], n, abs(len(c) - len(a)))


# --------------------------------------------------------------------------
# files

def read_wav(path):
    """Read a mono 16-bit PCM WAV into an :class:`AudioSignal` scaled to [-1, 1)."""
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise ArtivaeError(f"{path}: unreadable WAV ({exc})") from None
    if data.dtype != np.int16:
        raise ArtivaeError(f"{path}: unsupported WAV encoding {data.dtype}; need 16-bit PCM")
    if data.ndim != 1:
        raise ArtivaeError(f"{path}: need mono audio, got {data.shape[1]} channels")
    return AudioSignal(data.astype(np.float64) / 32768.0, int(rate))


def write_wav(path, audio):
    s = audio.samples
    if np.max(np.abs(s), initial=0.0) > 1.0:
        raise ArtivaeError(f"{path}: samples outside [-1, 1]; rescale before writing")
    pcm = np.clip(np.round(s * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, audio.sample_rate_hz, pcm)


def write_feature_csv(path, cepstra):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"c{i}" for i in range(N_CEPS)] + ["time_s"])
        for row, t in zip(cepstra.coeffs, cepstra.times):
            w.writerow([repr(float(v)) for v in row] + [repr(float(t))])


def read_feature_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = [f"c{i}" for i in range(N_CEPS)] + ["time_s"]
        if header != expected:
            raise ArtivaeError(f"{path}: line 1: expected header {','.join(expected)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                if len(row) != len(expected):
                    raise ValueError
                rows.append([float(v) for v in row])
            except ValueError:
                raise ArtivaeError(f"{path}: line {lineno}: malformed feature row") from None
    data = np.array(rows, dtype=np.float64).reshape(-1, N_CEPS + 1)
    return Cepstra(data[:, :N_CEPS], data[:, N_CEPS])


def write_feature_binary(path, cepstra):
    """``artivae-feat-v1``: magic, uint32 dims, uint32 count, then float64 rows
    of ``dims`` coefficients followed by the frame time, little-endian."""
    data = np.column_stack([cepstra.coeffs, cepstra.times]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_FEAT_MAGIC)
        fh.write(struct.pack("<II", cepstra.coeffs.shape[1], len(data)))
        fh.write(data.tobytes())


def read_feature_binary(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _FEAT_MAGIC:
        raise ArtivaeError(f"{path}: not an {FEATURE_FORMAT} file")
    dims, count = struct.unpack("<II", blob[8:16])
    body = np.frombuffer(blob[16:], dtype="<f8")
    if body.size != count * (dims + 1):
        raise ArtivaeError(f"{path}: truncated feature file")
    body = body.reshape(count, dims + 1).astype(np.float64)
    return Cepstra(body[:, :dims], body[:, dims])
