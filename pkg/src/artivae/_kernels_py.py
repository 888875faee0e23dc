"""Pure-numpy twins of the compiled kernels in ``_kernels.pyx``."""
import numpy as np

LOG_2PI = np.log(2.0 * np.pi)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, step):
    """One bias-corrected Adam update over flat buffers, in place."""
    c1 = 1.0 / (1.0 - beta1**step)
    c2 = 1.0 / (1.0 - beta2**step)
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    denom = v * c2
    np.sqrt(denom, out=denom)
    denom += eps
    update = m * c1
    update *= lr
    update /= denom
    p -= update


def bias_tanh(z, b):
    np.add(z, b, out=z)
    np.tanh(z, out=z)


def tanh_backward(grad, h, bias_grad):
    grad *= 1.0 - h * h
    grad.sum(axis=0, out=bias_grad)


def gaussian_nll(target, mu, logvar_raw, lo, hi, scale, dmu, dlogvar, nll):
    lv = np.clip(logvar_raw, lo, hi)
    r = target - mu
    prec = np.exp(-lv)
    r2p = r * r * prec
    nll[:] = 0.5 * (LOG_2PI + lv + r2p).sum(axis=1)
    np.multiply(-r * prec, scale, out=dmu)
    active = (logvar_raw >= lo) & (logvar_raw <= hi)
    np.multiply(0.5 * (1.0 - r2p) * scale, active, out=dlogvar)
