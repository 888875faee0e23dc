"""Dense linear-algebra and curve-fitting primitives.

Matrices are plain 2-D float64 numpy arrays (samples along rows).
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ArtivaeError

__all__ = [
    "PcaResult",
    "OlsResult",
    "ExpFit",
    "RankDeficientError",
    "pca",
    "ols_fit",
    "residualize",
    "fit_exponential_decay",
    "sign_convention",
]


class RankDeficientError(ArtivaeError):
    """A regression predictor is constant or collinear with earlier ones."""

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"rank-deficient predictors: column {column} is "
                                    "constant or a linear combination of earlier columns")


def _as_matrix(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


@dataclass(frozen=True)
class PcaResult:
    mean: np.ndarray                 # (dims,)
    components: np.ndarray           # (k, dims), orthonormal rows
    explained_variance: np.ndarray   # (k,), non-increasing

    def transform(self, data):
        return (np.asarray(data, dtype=np.float64) - self.mean) @ self.components.T


def sign_convention(vectors):
    """Flip rows so that each row's largest-magnitude entry is nonnegative.

    Ties in magnitude resolve to the lowest index.
    """
    vectors = np.array(vectors, dtype=np.float64, copy=True)
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.where(vectors[np.arange(len(vectors)), idx] < 0, -1.0, 1.0)
    return vectors * signs[:, None]


def pca(data, k):
    """Top-``k`` principal components of ``data`` (samples x dims).

    Uses the eigendecomposition of the sample covariance (divisor n - 1).
    Equal eigenvalues keep their original axis order.
    """
    data = _as_matrix(data, "data")
    n, dims = data.shape
    if n < 2:
        raise ValueError("pca needs at least 2 samples")
    if not 1 <= k <= dims:
        raise ValueError(f"k must be in [1, {dims}], got {k}")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (n - 1)
    if not np.any(cov):
        # eigh of the zero matrix is the identity basis; keep it explicit
        evals, evecs = np.zeros(dims), np.eye(dims)
    else:
        evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")[:k]
    components = sign_convention(evecs[:, order].T)
    variance = np.maximum(evals[order], 0.0)
    return PcaResult(mean=mean, components=components, explained_variance=variance)


@dataclass(frozen=True)
class OlsResult:
    coefficients: np.ndarray  # (p, q)
    intercept: np.ndarray     # (q,)

    def predict(self, X):
        return _as_matrix(X, "X") @ self.coefficients + self.intercept


def ols_fit(X, Y, rtol=1e-10):
    """Least squares fit of ``Y`` on ``X`` with an intercept.

    Solved by QR on the centered predictors. A predictor whose centered
    column lies (relatively within ``rtol``) in the span of the earlier
    ones raises :class:`RankDeficientError`; no pseudo-inverse fallback.
    """
    X = _as_matrix(X, "X")
    Y = _as_matrix(Y, "Y")
    n, p = X.shape
    if Y.shape[0] != n:
        raise ValueError(f"X has {n} rows but Y has {Y.shape[0]}")
    if n <= p:
        raise ValueError(f"need more samples than predictors ({n} <= {p})")
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xc = X - x_mean
    Yc = Y - y_mean
    q, r = np.linalg.qr(Xc)
    norms = np.linalg.norm(Xc, axis=0)
    scale = max(float(norms.max()), np.finfo(float).tiny)
    for j in range(p):
        if abs(r[j, j]) <= rtol * scale or norms[j] == 0.0:
            raise RankDeficientError(j)
    coef = solve_triangular(r, q.T @ Yc)
    return OlsResult(coefficients=coef, intercept=y_mean - x_mean @ coef)


def residualize(X, Y, fit):
    """``Y - (X @ coefficients + intercept)``."""
    X = _as_matrix(X, "X")
    Y = _as_matrix(Y, "Y")
    p, q = fit.coefficients.shape
    if X.shape[1] != p or Y.shape[1] != q or X.shape[0] != Y.shape[0]:
        raise ValueError(f"shape mismatch: X {X.shape}, Y {Y.shape}, fit ({p} -> {q})")
    return Y - (X @ fit.coefficients + fit.intercept)


@dataclass(frozen=True)
class ExpFit:
    """Learning-curve model ``v(t) = offset + amplitude * exp(-rate * t)``."""

    offset: float
    amplitude: float
    rate: float

    def __call__(self, t):
        return self.offset + self.amplitude * np.exp(-self.rate * np.asarray(t, dtype=float))

    def as_dict(self):
        return {"offset": self.offset, "amplitude": self.amplitude, "rate": self.rate}


_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _linear_part(t, v, c):
    """Best (a, b) and the SSE for a fixed rate ``c``."""
    basis = np.column_stack([np.ones_like(t), np.exp(-c * t)])
    coef, *_ = np.linalg.lstsq(basis, v, rcond=None)
    resid = v - basis @ coef
    return coef[0], coef[1], float(resid @ resid)


def fit_exponential_decay(t, v, grid_size=200, c_min=1e-3, c_max=10.0, tol=1e-10):
    """Fit ``v ~ a + b exp(-c t)`` with ``c >= 0``.

    Log-spaced grid search over ``c`` with the closed-form linear solve for
    ``(a, b)`` at each candidate, then golden-section refinement (in log c)
    inside the bracket around the best grid point.
    """
    t = np.asarray(t, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if t.ndim != 1 or t.shape != v.shape:
        raise ValueError("t and v must be 1-D and of equal length")
    if len(t) < 4:
        raise ValueError(f"need at least 4 points, got {len(t)}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
        raise ValueError("t and v must be finite")
    if np.any(np.diff(t) <= 0):
        raise ValueError("t must be strictly increasing")
    if np.all(v == v[0]):
        return ExpFit(float(v[0]), 0.0, 0.0)

    grid = np.logspace(np.log10(c_min), np.log10(c_max), grid_size)
    sse = np.array([_linear_part(t, v, c)[2] for c in grid])
    i = int(np.argmin(sse))
    best_c, best_sse = grid[i], sse[i]

    lo = np.log(grid[max(i - 1, 0)])
    hi = np.log(grid[min(i + 1, grid_size - 1)])
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = _linear_part(t, v, np.exp(x1))[2]
    f2 = _linear_part(t, v, np.exp(x2))[2]
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = _linear_part(t, v, np.exp(x1))[2]
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = _linear_part(t, v, np.exp(x2))[2]
    for x, f in ((x1, f1), (x2, f2)):
        if f < best_sse:
            best_c, best_sse = np.exp(x), f
    a, b, _ = _linear_part(t, v, best_c)
    return ExpFit(float(a), float(b), float(best_c))
