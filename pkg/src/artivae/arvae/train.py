"""Seeded mini-batch training with per-epoch test reconstruction error."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ArtivaeError, NonFiniteLossError, TrainingAborted
from .model import VaeParams, init_params, loss_and_grads, reconstruct
from .optim import Adam

CHECKPOINT_FORMAT = "artivae-vae-v1"


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.0
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    split_fraction: float = 0.8
    denoising: bool = False
    n_latent: int | None = None  # default 2 * N

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    @property
    def label(self):
        return "vae" if self.alpha == 0 else "ar-vae"


@dataclass(frozen=True)
class ParallelData:
    """Aligned frames: clean cepstra ``x`` (T, 18), articulatory ``a`` (T, N),
    optional noisy cepstra ``x_noisy`` (T, 18)."""

    x: np.ndarray
    a: np.ndarray
    x_noisy: np.ndarray | None = None

    def __post_init__(self):
        if len(self.x) != len(self.a):
            raise ValueError("x and a must have the same number of frames")
        if self.x_noisy is not None and self.x_noisy.shape != self.x.shape:
            raise ValueError("x_noisy must match x in shape")

    def __len__(self):
        return len(self.x)

    def inputs(self, denoising):
        if denoising:
            if self.x_noisy is None:
                raise ArtivaeError("denoising training needs noisy features")
            return self.x_noisy
        return self.x


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x):
        scale = x.std(axis=0)
        scale = np.where(scale > 1e-12, scale, 1.0)
        return cls(x.mean(axis=0), scale)

    def apply(self, x):
        return (x - self.mean) / self.scale

    def invert(self, x):
        return x * self.scale + self.mean


@dataclass
class TrainResult:
    params: VaeParams
    curve: np.ndarray
    config: TrainConfig
    input_norm: Standardizer
    target_norm: Standardizer
    train_index: np.ndarray = field(repr=False)
    test_index: np.ndarray = field(repr=False)

    @property
    def label(self):
        return self.config.label


def split_indices(n, fraction, rng):
    perm = rng.permutation(n)
    n_train = min(max(int(round(fraction * n)), 1), n - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def test_mse(params, x_in_std, target, target_norm, backend=None):
    """Mean over frames of ||x_target - reconstruction||^2 / F in original units."""
    pred = target_norm.invert(reconstruct(params, x_in_std, backend))
    return float(np.mean((pred - target) ** 2))


def train(config, data, backend=None, callback=None, init=None):
    """Train a VAE (``alpha == 0``) or AR-VAE and record the test-MSE curve.

    Randomness is split into independent streams (data split, init, batch
    order, reparameterization noise) derived from ``config.seed``, so runs
    that differ only in ``alpha`` see identical splits, batches, draws and
    initial weights. ``init`` (a :class:`VaeParams`) replaces the random
    initial weights, e.g. to continue from a checkpoint.
    """
    n_frames = len(data)
    if n_frames < 10 * config.batch_size:
        raise ArtivaeError(f"need at least {10 * config.batch_size} frames, got {n_frames}")
    n_constrained = data.a.shape[1]
    n_latent = config.n_latent or 2 * n_constrained
    split_ss, init_ss, order_ss, eps_ss = np.random.SeedSequence(config.seed).spawn(4)

    train_idx, test_idx = split_indices(n_frames, config.split_fraction,
                                        np.random.default_rng(split_ss))
    x_in = data.inputs(config.denoising)
    input_norm = Standardizer.fit(x_in[train_idx])
    target_norm = Standardizer.fit(data.x[train_idx])
    xin_tr = input_norm.apply(x_in[train_idx])
    tgt_tr = target_norm.apply(data.x[train_idx])
    a_tr = np.ascontiguousarray(data.a[train_idx], dtype=np.float64)
    xin_te = input_norm.apply(x_in[test_idx])
    tgt_te = data.x[test_idx]

    params = init_params(n_latent, n_constrained, np.random.default_rng(init_ss),
                         n_features=data.x.shape[1])
    if init is not None:
        if (init.n_latent, init.n_constrained, init.n_features) != (
                n_latent, n_constrained, data.x.shape[1]):
            raise ArtivaeError("initial parameters do not match the data dimensions")
        params = init.copy()
    grads = params.zeros_like()
    opt = Adam(params.size, config.learning_rate, backend=backend)
    order_rng = np.random.default_rng(order_ss)
    eps_rng = np.random.default_rng(eps_ss)

    curve = []
    n_train = len(train_idx)
    for epoch in range(config.epochs):
        order = order_rng.permutation(n_train)
        for bi, start in enumerate(range(0, n_train, config.batch_size)):
            rows = order[start:start + config.batch_size]
            eps = eps_rng.standard_normal((len(rows), n_latent))
            try:
                terms, _ = loss_and_grads(params, xin_tr[rows], tgt_tr[rows], a_tr[rows],
                                          config.alpha, eps, backend=backend, grads=grads)
            except NonFiniteLossError as exc:
                raise TrainingAborted(epoch, bi, exc) from exc
            opt.step(params, grads)
            if not np.all(np.isfinite(params.data)):
                raise TrainingAborted(epoch, bi, "non-finite parameters after update")
        mse = test_mse(params, xin_te, tgt_te, target_norm, backend)
        curve.append(mse)
        if callback is not None:
            callback(epoch, mse)
    return TrainResult(params, np.array(curve), config, input_norm, target_norm,
                       train_idx, test_idx)


# --------------------------------------------------------------------------
# files

def checkpoint_to_dict(result):
    p = result.params
    return {
        "format": CHECKPOINT_FORMAT,
        "label": result.label,
        "n_latent": p.n_latent,
        "n_constrained": p.n_constrained,
        "n_features": p.n_features,
        "hidden": list(p.hidden),
        "alpha": result.config.alpha,
        "seed": result.config.seed,
        "config": asdict(result.config),
        "input_norm": {"mean": result.input_norm.mean.tolist(),
                       "scale": result.input_norm.scale.tolist()},
        "target_norm": {"mean": result.target_norm.mean.tolist(),
                        "scale": result.target_norm.scale.tolist()},
        "tensors": {name: arr.tolist() for name, arr in p.tensors()},
    }


def save_checkpoint(result, path):
    with open(path, "w") as fh:
        json.dump(checkpoint_to_dict(result), fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Return ``(params, checkpoint_dict)``."""
    with open(path) as fh:
        d = json.load(fh)
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ArtivaeError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    params = VaeParams(d["n_latent"], d["n_constrained"], None, d["n_features"],
                       tuple(d["hidden"]))
    for name, arr in params.tensors():
        arr[...] = np.asarray(d["tensors"][name])
    return params, d


def write_curve_csv(path, curve):
    with open(path, "w") as fh:
        fh.write("epoch,test_mse\n")
        for i, v in enumerate(curve):
            fh.write(f"{i + 1},{float(v)!r}\n")
