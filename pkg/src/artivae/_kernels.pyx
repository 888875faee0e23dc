# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner-loop kernels for VAE training.

Every function here has a numpy twin in :mod:`artivae._kernels_py` with the
same signature and in-place semantics.
"""
import numpy as np

from libc.math cimport exp, sqrt

cdef double LOG_2PI = 1.8378770664093453


def adam_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, long step):
    """One bias-corrected Adam update over flat buffers, in place."""
    cdef Py_ssize_t i, n = p.shape[0]
    if g.shape[0] != n or m.shape[0] != n or v.shape[0] != n:
        raise ValueError("adam_update: buffer lengths differ")
    if n == 0:
        return
    cdef double* pp = &p[0]
    cdef const double* gp = &g[0]
    cdef double* mp = &m[0]
    cdef double* vp = &v[0]
    cdef double c1 = 1.0 / (1.0 - beta1 ** step)
    cdef double c2 = 1.0 / (1.0 - beta2 ** step)
    cdef double ob1 = 1.0 - beta1, ob2 = 1.0 - beta2
    cdef double gi, mi, vi
    with nogil:
        for i in range(n):
            gi = gp[i]
            mi = beta1 * mp[i] + ob1 * gi
            vi = beta2 * vp[i] + ob2 * gi * gi
            mp[i] = mi
            vp[i] = vi
            pp[i] -= lr * (mi * c1) / (sqrt(vi * c2) + eps)


def bias_tanh(z, b):
    """z <- tanh(z + b), broadcasting b over rows.

    Stays on numpy: its vectorized tanh beats a scalar libm loop here.
    """
    np.add(z, b, out=z)
    np.tanh(z, out=z)


def tanh_backward(double[:, ::1] grad, const double[:, ::1] h, double[::1] bias_grad):
    """grad <- grad * (1 - h**2); bias_grad <- column sums of the result."""
    cdef Py_ssize_t i, j, rows = grad.shape[0], cols = grad.shape[1]
    cdef double d, hij
    with nogil:
        for j in range(cols):
            bias_grad[j] = 0.0
        for i in range(rows):
            for j in range(cols):
                hij = h[i, j]
                d = grad[i, j] * (1.0 - hij * hij)
                grad[i, j] = d
                bias_grad[j] += d


def gaussian_nll(const double[:, ::1] target, const double[:, ::1] mu,
                 const double[:, ::1] logvar_raw, double lo, double hi, double scale,
                 double[:, ::1] dmu, double[:, ::1] dlogvar, double[::1] nll):
    """Diagonal Gaussian negative log-likelihood per row, with scaled gradients.

    The log-variance is clamped to [lo, hi]; its gradient is zero where the
    clamp is active.
    """
    cdef Py_ssize_t i, j, rows = target.shape[0], cols = target.shape[1]
    cdef double lv, r, prec, acc
    with nogil:
        for i in range(rows):
            acc = 0.0
            for j in range(cols):
                lv = logvar_raw[i, j]
                if lv < lo:
                    lv = lo
                    dlogvar[i, j] = 0.0
                elif lv > hi:
                    lv = hi
                    dlogvar[i, j] = 0.0
                else:
                    dlogvar[i, j] = 1.0
                r = target[i, j] - mu[i, j]
                prec = exp(-lv)
                acc += LOG_2PI + lv + r * r * prec
                dmu[i, j] = -r * prec * scale
                dlogvar[i, j] *= 0.5 * (1.0 - r * r * prec) * scale
            nll[i] = 0.5 * acc
