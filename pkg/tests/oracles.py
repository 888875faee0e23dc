"""Independent reference implementations used by the tests.

Written with plain Python loops so they share no code path with the
library (no LAPACK, no QR, no scipy).
"""
import math

import numpy as np


def jacobi_eigh(a, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors as columns), unsorted.
    """
    a = [list(map(float, row)) for row in a]
    n = len(a)
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i][j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p][q]) < 1e-300:
                    continue
                theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = a[k][p], a[k][q]
                    a[k][p] = c * akp - s * akq
                    a[k][q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p][k], a[q][k]
                    a[p][k] = c * apk - s * aqk
                    a[q][k] = s * apk + c * aqk
                for k in range(n):
                    vkp, vkq = v[k][p], v[k][q]
                    v[k][p] = c * vkp - s * vkq
                    v[k][q] = s * vkp + c * vkq
    return np.array([a[i][i] for i in range(n)]), np.array(v)


def pca_oracle(data, k):
    """Top-k components (rows, sign-normalized) and variances via Jacobi."""
    data = np.asarray(data, dtype=float)
    n, d = data.shape
    mean = [sum(data[i][j] for i in range(n)) / n for j in range(d)]
    cov = [[sum((data[i][p] - mean[p]) * (data[i][q] - mean[q]) for i in range(n)) / (n - 1)
            for q in range(d)] for p in range(d)]
    evals, evecs = jacobi_eigh(cov)
    order = sorted(range(d), key=lambda i: -evals[i])[:k]
    comps = []
    for i in order:
        vec = evecs[:, i]
        j = max(range(d), key=lambda m: abs(vec[m]))
        comps.append(vec if vec[j] >= 0 else -vec)
    return np.array(comps), evals[order]


def gauss_solve(a, b):
    """Solve a x = b (b may have several columns) by Gaussian elimination
    with partial pivoting."""
    a = [list(map(float, row)) for row in a]
    b = [list(map(float, np.atleast_1d(row))) for row in b]
    n = len(a)
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        a[col], a[piv] = a[piv], a[col]
        b[col], b[piv] = b[piv], b[col]
        for r in range(col + 1, n):
            f = a[r][col] / a[col][col]
            for c in range(col, n):
                a[r][c] -= f * a[col][c]
            for c in range(len(b[r])):
                b[r][c] -= f * b[col][c]
    x = [[0.0] * len(b[0]) for _ in range(n)]
    for r in range(n - 1, -1, -1):
        for c in range(len(b[0])):
            s = b[r][c] - sum(a[r][k] * x[k][c] for k in range(r + 1, n))
            x[r][c] = s / a[r][r]
    return np.array(x)


def ols_oracle(X, Y):
    """Normal equations on centered data: (coefficients, intercept)."""
    X = np.atleast_2d(np.asarray(X, dtype=float).T).T
    Y = np.atleast_2d(np.asarray(Y, dtype=float).T).T
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - xm, Y - ym
    p = X.shape[1]
    xtx = [[float(sum(Xc[:, i] * Xc[:, j])) for j in range(p)] for i in range(p)]
    xty = [[float(sum(Xc[:, i] * Yc[:, j])) for j in range(Y.shape[1])] for i in range(p)]
    coef = gauss_solve(xtx, xty)
    return coef, ym - xm @ coef


def gram_schmidt(cols):
    """Orthonormal basis (columns) for the span of ``cols``, modified Gram-Schmidt."""
    basis = []
    for v in np.asarray(cols, dtype=float).T:
        w = v.copy()
        for q in basis:
            w -= (q @ w) * q
        for q in basis:
            w -= (q @ w) * q
        norm = math.sqrt(float(w @ w))
        if norm > 1e-12:
            basis.append(w / norm)
    return np.array(basis).T


def direct_dft_power(frame):
    """|DFT|^2 for bins 0..n/2 by explicit summation."""
    n = len(frame)
    out = []
    for k in range(n // 2 + 1):
        re = sum(frame[m] * math.cos(2 * math.pi * k * m / n) for m in range(n))
        im = -sum(frame[m] * math.sin(2 * math.pi * k * m / n) for m in range(n))
        out.append(re * re + im * im)
    return np.array(out)


def dense_grid_exp_fit(t, v, grid_size=400, c_min=1e-3, c_max=10.0):
    """Brute-force grid over the rate with the linear solve at each point; returns SSE."""
    best = math.inf
    for c in np.logspace(math.log10(c_min), math.log10(c_max), grid_size):
        e = np.exp(-c * t)
        # 2x2 normal equations for (a, b)
        sol = gauss_solve([[len(t), e.sum()], [e.sum(), e @ e]], [[v.sum()], [e @ v]])
        r = v - sol[0, 0] - sol[1, 0] * e
        best = min(best, float(r @ r))
    return best


def finite_difference_grad(f, x, step=1e-5):
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (modified in place)."""
    g = np.empty_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + step
        fp = f()
        x[i] = old - step
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * step)
    return g


def vae_loss_oracle(layers, n_hidden, x_in, x_target, a, alpha, eps, lo=-15.0, hi=15.0):
    """Mean per-frame VAE / AR-VAE loss written out directly from the definition.

    ``layers`` maps layer name -> (W, b) as stored by the model
    (``h @ W + b``); ``n_hidden`` is the number of tanh layers per side.
    """
    h = x_in
    for i in range(n_hidden):
        W, b = layers[f"enc{i}"]
        h = np.tanh(h @ W + b)
    mu = h @ layers["enc_mu"][0] + layers["enc_mu"][1]
    lv = np.clip(h @ layers["enc_logvar"][0] + layers["enc_logvar"][1], lo, hi)
    z = mu + np.exp(lv / 2) * eps
    g = z
    for i in range(n_hidden):
        W, b = layers[f"dec{i}"]
        g = np.tanh(g @ W + b)
    mx = g @ layers["dec_mu"][0] + layers["dec_mu"][1]
    lvx = np.clip(g @ layers["dec_logvar"][0] + layers["dec_logvar"][1], lo, hi)
    nll = 0.5 * (np.log(2 * np.pi) + lvx + (x_target - mx) ** 2 / np.exp(lvx)).sum(axis=1)
    kl = 0.5 * (np.exp(lv) + mu**2 - 1 - lv).sum(axis=1)
    reg = ((z[:, :a.shape[1]] - a) ** 2).sum(axis=1)
    return float(np.mean(nll + kl + alpha * reg))


def _mm(h, W):
    return (h.reshape(-1, h.shape[-1]) @ W).reshape(*h.shape[:-1], W.shape[1])


def _vae_forward_losses(layers, n_hidden, x_in, x_target, a, alpha, eps, lo, hi,
                        override=None):
    """Per-copy mean loss; ``override = (name, delta)`` adds ``delta`` (K, B, out)
    to that layer's pre-activation, giving K perturbed copies of the network."""
    def pre(name, h):
        W, b = layers[name]
        p = _mm(h, W) + b
        if override is not None and override[0] == name:
            p = p + override[1]
        return p

    h = x_in[None]
    for i in range(n_hidden):
        h = np.tanh(pre(f"enc{i}", h))
    mu = pre("enc_mu", h)
    lv = np.clip(pre("enc_logvar", h), lo, hi)
    z = mu + np.exp(lv / 2) * eps[None]
    g = z
    for i in range(n_hidden):
        g = np.tanh(pre(f"dec{i}", g))
    mx = pre("dec_mu", g)
    lvx = np.clip(pre("dec_logvar", g), lo, hi)
    nll = 0.5 * (np.log(2 * np.pi) + lvx + (x_target[None] - mx) ** 2 / np.exp(lvx)).sum(-1)
    kl = 0.5 * (np.exp(lv) + mu**2 - 1 - lv).sum(-1)
    reg = ((z[..., :a.shape[1]] - a[None]) ** 2).sum(-1)
    return (nll + kl + alpha * reg).mean(axis=-1)


def _layer_inputs(layers, n_hidden, x_in, eps, lo, hi):
    """Unperturbed input of every layer, shape (B, fan_in)."""
    inputs = {}
    h = x_in
    for i in range(n_hidden):
        inputs[f"enc{i}"] = h
        h = np.tanh(h @ layers[f"enc{i}"][0] + layers[f"enc{i}"][1])
    inputs["enc_mu"] = inputs["enc_logvar"] = h
    mu = h @ layers["enc_mu"][0] + layers["enc_mu"][1]
    lv = np.clip(h @ layers["enc_logvar"][0] + layers["enc_logvar"][1], lo, hi)
    g = mu + np.exp(lv / 2) * eps
    for i in range(n_hidden):
        inputs[f"dec{i}"] = g
        g = np.tanh(g @ layers[f"dec{i}"][0] + layers[f"dec{i}"][1])
    inputs["dec_mu"] = inputs["dec_logvar"] = g
    return inputs


def vae_fd_grads(layers, n_hidden, x_in, x_target, a, alpha, eps, step=1e-5, chunk=128,
                 lo=-15.0, hi=15.0):
    """Central finite differences of the VAE loss for every weight and bias.

    A perturbation of one entry of layer l only shifts one column of that
    layer's pre-activation, so many perturbed copies are pushed through the
    remaining layers as one stacked batch. Returns {"name.W": ..., "name.b": ...}.
    """
    args = (layers, n_hidden, x_in, x_target, a, alpha, eps, lo, hi)
    inputs = _layer_inputs(layers, n_hidden, x_in, eps, lo, hi)
    B = x_in.shape[0]
    out = {}
    for name, (W, b) in layers.items():
        fan_in, fan_out = W.shape
        inp = inputs[name]
        for kind, shape in (("W", W.shape), ("b", b.shape)):
            flat = np.empty(int(np.prod(shape)))
            for start in range(0, flat.size, chunk):
                idx = np.arange(start, min(start + chunk, flat.size))
                K = len(idx)
                delta = np.zeros((2 * K, B, fan_out))
                if kind == "W":
                    i, j = np.divmod(idx, fan_out)
                    col = inp[:, i].T * step          # (K, B)
                else:
                    j = idx
                    col = np.full((K, B), step)
                delta[np.arange(K), :, j] = col
                delta[K + np.arange(K), :, j] = -col
                losses = _vae_forward_losses(*args, override=(name, delta))
                flat[idx] = (losses[:K] - losses[K:]) / (2 * step)
            out[f"{name}.{kind}"] = flat.reshape(shape)
    return out
