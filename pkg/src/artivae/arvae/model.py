"""Encoder/decoder MLPs, loss terms and exact reverse-mode gradients.

All parameters live in one flat float64 buffer; weight and bias arrays are
views into it, so optimizers and checkpoints work on a single vector.
Weights are stored ``(fan_in, fan_out)`` and applied as ``h @ W + b``.
"""
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import NonFiniteLossError

N_FEATURES = 18
HIDDEN = (256, 128, 64, 32)
LOGVAR_MIN, LOGVAR_MAX = -15.0, 15.0
LOG_2PI = float(np.log(2.0 * np.pi))


def _layer_shapes(n_features, hidden, n_latent):
    enc = [n_features, *hidden]
    dec = [n_latent, *reversed(hidden)]
    shapes = []
    for i, (a, b) in enumerate(zip(enc[:-1], enc[1:])):
        shapes.append((f"enc{i}", a, b))
    shapes += [("enc_mu", hidden[-1], n_latent), ("enc_logvar", hidden[-1], n_latent)]
    for i, (a, b) in enumerate(zip(dec[:-1], dec[1:])):
        shapes.append((f"dec{i}", a, b))
    shapes += [("dec_mu", hidden[0], n_features), ("dec_logvar", hidden[0], n_features)]
    return shapes


class VaeParams:
    """Flat parameter vector with named ``(W, b)`` views per layer.

    ``n_latent`` is the total latent size L, ``n_constrained`` the size N of
    the articulatory-constrained prefix of z.
    """

    def __init__(self, n_latent, n_constrained, data=None, n_features=N_FEATURES,
                 hidden=HIDDEN):
        if not 0 < n_constrained < n_latent:
            raise ValueError(f"need 0 < N < L, got N={n_constrained}, L={n_latent}")
        self.n_latent = int(n_latent)
        self.n_constrained = int(n_constrained)
        self.n_features = int(n_features)
        self.hidden = tuple(int(h) for h in hidden)
        self.shapes = _layer_shapes(self.n_features, self.hidden, self.n_latent)
        size = sum(a * b + b for _, a, b in self.shapes)
        if data is None:
            data = np.zeros(size)
        data = np.ascontiguousarray(data, dtype=np.float64)
        if data.shape != (size,):
            raise ValueError(f"parameter vector must have {size} entries, got {data.shape}")
        self.data = data
        self.layers = {}
        pos = 0
        for name, a, b in self.shapes:
            W = data[pos:pos + a * b].reshape(a, b)
            pos += a * b
            self.layers[name] = (W, data[pos:pos + b])
            pos += b

    def __getitem__(self, name):
        return self.layers[name]

    @property
    def size(self):
        return self.data.size

    def zeros_like(self):
        return VaeParams(self.n_latent, self.n_constrained, None, self.n_features, self.hidden)

    def copy(self):
        return VaeParams(self.n_latent, self.n_constrained, self.data.copy(),
                         self.n_features, self.hidden)

    def tensors(self):
        """Yield ``(name, array)`` for every weight and bias array."""
        for name, (W, b) in self.layers.items():
            yield f"{name}.W", W
            yield f"{name}.b", b


def init_params(n_latent, n_constrained, rng, n_features=N_FEATURES, hidden=HIDDEN):
    """Glorot-uniform weights, zero biases."""
    params = VaeParams(n_latent, n_constrained, None, n_features, hidden)
    for name, a, b in params.shapes:
        limit = np.sqrt(6.0 / (a + b))
        params[name][0][...] = rng.uniform(-limit, limit, size=(a, b))
    return params


@dataclass(frozen=True)
class LatentPosterior:
    mu: np.ndarray
    logvar: np.ndarray


def _check_finite(x, what):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite {what}")
    return x


def _mlp(params, h, names, k):
    for name in names:
        W, b = params[name]
        h = h @ W
        k.bias_tanh(h, b)
    return h


def _enc_names(params):
    return [f"enc{i}" for i in range(len(params.hidden))]


def _dec_names(params):
    return [f"dec{i}" for i in range(len(params.hidden))]


def encode(params, x, backend=None):
    """Posterior mean and (clamped) log-variance for frame(s) ``x``."""
    x = _check_finite(x, "encoder input")
    k = kernels.get_backend(backend)
    h = _mlp(params, np.atleast_2d(x), _enc_names(params), k)
    Wm, bm = params["enc_mu"]
    Wv, bv = params["enc_logvar"]
    mu = h @ Wm + bm
    logvar = np.clip(h @ Wv + bv, LOGVAR_MIN, LOGVAR_MAX)
    if x.ndim == 1:
        mu, logvar = mu[0], logvar[0]
    return LatentPosterior(mu, logvar)


def decode(params, z, backend=None):
    """Likelihood mean and (clamped) log-variance for latent(s) ``z``."""
    z = _check_finite(z, "decoder input")
    k = kernels.get_backend(backend)
    h = _mlp(params, np.atleast_2d(z), _dec_names(params), k)
    Wm, bm = params["dec_mu"]
    Wv, bv = params["dec_logvar"]
    mu = h @ Wm + bm
    logvar = np.clip(h @ Wv + bv, LOGVAR_MIN, LOGVAR_MAX)
    if z.ndim == 1:
        mu, logvar = mu[0], logvar[0]
    return mu, logvar


def reparameterize(post, eps):
    return post.mu + np.exp(0.5 * post.logvar) * eps


def kl_standard_normal(post):
    """KL(q || N(0, I)) for a diagonal Gaussian; summed over the last axis."""
    mu, lv = np.asarray(post.mu), np.asarray(post.logvar)
    return 0.5 * np.sum(np.expm1(lv) - lv + mu * mu, axis=-1)  # expm1 keeps it >= 0


def gaussian_loglik(x, mu, logvar):
    x, mu, logvar = (np.asarray(v, dtype=np.float64) for v in (x, mu, logvar))
    return -0.5 * np.sum(LOG_2PI + logvar + (x - mu) ** 2 * np.exp(-logvar), axis=-1)


def artic_reg(z, a):
    """Squared distance between the first N latent entries and ``a``."""
    z, a = np.asarray(z), np.asarray(a)
    n = a.shape[-1]
    if n > z.shape[-1]:
        raise ValueError(f"articulatory vector ({n}) longer than latent ({z.shape[-1]})")
    d = z[..., :n] - a
    return np.sum(d * d, axis=-1)


@dataclass
class LossTerms:
    loss: float
    nll: float
    kl: float
    reg: float


def loss_and_grads(params, x_in, x_target, a, alpha, eps, backend=None, grads=None):
    """Mean per-frame ``-log p(x|z) + KL + alpha * ||z[:N] - a||^2`` and its gradient.

    One reparameterized sample per frame, ``z = mu + exp(logvar / 2) * eps``.
    Returns ``(LossTerms, grads)`` where ``grads`` is a :class:`VaeParams`
    laid out like ``params`` (reused if passed in).
    """
    k = kernels.get_backend(backend)
    x_in = np.atleast_2d(x_in)
    x_target = np.atleast_2d(x_target)
    a = np.atleast_2d(a)
    eps = np.atleast_2d(eps)
    B = x_in.shape[0]
    if B == 0:
        raise ValueError("empty batch")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    n = params.n_constrained
    inv_b = 1.0 / B
    if grads is None:
        grads = params.zeros_like()

    # ---- forward
    enc_names, dec_names = _enc_names(params), _dec_names(params)
    acts = [x_in]
    h = x_in
    for name in enc_names:
        W, b = params[name]
        h = h @ W
        k.bias_tanh(h, b)
        acts.append(h)
    Wm, bm = params["enc_mu"]
    Wv, bv = params["enc_logvar"]
    mu_z = h @ Wm + bm
    lv_raw = h @ Wv + bv
    lv_z = np.clip(lv_raw, LOGVAR_MIN, LOGVAR_MAX)
    std_z = np.exp(0.5 * lv_z)
    z = mu_z + std_z * eps

    dacts = [z]
    g = z
    for name in dec_names:
        W, b = params[name]
        g = g @ W
        k.bias_tanh(g, b)
        dacts.append(g)
    Dm, dm = params["dec_mu"]
    Dv, dv = params["dec_logvar"]
    mu_x = g @ Dm + dm
    lvx_raw = g @ Dv + dv

    nll = np.empty(B)
    d_mux = np.empty_like(mu_x)
    d_lvx = np.empty_like(mu_x)
    k.gaussian_nll(np.ascontiguousarray(x_target, dtype=np.float64), mu_x, lvx_raw,
                   LOGVAR_MIN, LOGVAR_MAX, inv_b, d_mux, d_lvx, nll)
    ev1 = np.expm1(lv_z)
    with np.errstate(over="ignore", invalid="ignore"):  # caught just below
        kl = 0.5 * np.sum(ev1 - lv_z + mu_z * mu_z, axis=1)
        diff = z[:, :n] - a
        reg = np.sum(diff * diff, axis=1)
        per_frame = nll + kl + alpha * reg
    bad = np.flatnonzero(~np.isfinite(per_frame))
    if bad.size:
        raise NonFiniteLossError(int(bad[0]))

    # ---- backward
    gW, gb = grads["dec_mu"]
    np.matmul(g.T, d_mux, out=gW)
    d_mux.sum(axis=0, out=gb)
    gW, gb = grads["dec_logvar"]
    np.matmul(g.T, d_lvx, out=gW)
    d_lvx.sum(axis=0, out=gb)
    delta = d_mux @ Dm.T + d_lvx @ Dv.T
    for i in range(len(dec_names) - 1, -1, -1):
        W, _ = params[dec_names[i]]
        gW, gb = grads[dec_names[i]]
        k.tanh_backward(delta, dacts[i + 1], gb)
        np.matmul(dacts[i].T, delta, out=gW)
        delta = delta @ W.T
    dz = delta
    dz[:, :n] += (2.0 * alpha * inv_b) * diff

    d_mu = dz + mu_z * inv_b
    active = (lv_raw >= LOGVAR_MIN) & (lv_raw <= LOGVAR_MAX)
    d_lv = (dz * eps * 0.5 * std_z + 0.5 * ev1 * inv_b) * active
    gW, gb = grads["enc_mu"]
    np.matmul(h.T, d_mu, out=gW)
    d_mu.sum(axis=0, out=gb)
    gW, gb = grads["enc_logvar"]
    np.matmul(h.T, d_lv, out=gW)
    d_lv.sum(axis=0, out=gb)
    delta = d_mu @ Wm.T + d_lv @ Wv.T
    for i in range(len(enc_names) - 1, -1, -1):
        W, _ = params[enc_names[i]]
        gW, gb = grads[enc_names[i]]
        k.tanh_backward(delta, acts[i + 1], gb)
        np.matmul(acts[i].T, delta, out=gW)
        if i:
            delta = delta @ W.T

    terms = LossTerms(float(per_frame.mean()), float(nll.mean()), float(kl.mean()),
                      float(reg.mean()))
    return terms, grads


def batch_loss(params, x_in, x_target, a, alpha, eps, backend=None):
    """Forward-only mean loss (finite-difference oracle target)."""
    post = encode(params, np.atleast_2d(x_in), backend)
    z = reparameterize(post, np.atleast_2d(eps))
    mu_x, lv_x = decode(params, z, backend)
    per_frame = (-gaussian_loglik(np.atleast_2d(x_target), mu_x, lv_x)
                 + kl_standard_normal(post) + alpha * artic_reg(z, np.atleast_2d(a)))
    return float(per_frame.mean())


def reconstruct(params, x_in, backend=None):
    """Deterministic reconstruction through the posterior mean."""
    post = encode(params, np.atleast_2d(x_in), backend)
    return decode(params, post.mu, backend)[0]
