"""Guided-PCA articulatory model: EMA coil coordinates <-> articulatory parameters.

Parameters, in order: JH (jaw height), TB (tongue body), TD (tongue dorsum),
TT (tongue tip), LP (lip protrusion), LH (lip height) and, when a velum coil
is present, VL (velum). Each is extracted after linearly removing the
contribution of the parameters extracted before it, and standardized to
zero mean and unit variance over the fitting corpus.

The staged extraction is affine in the EMA frame, so the fitted model is
stored as one forward matrix (frame -> parameters) and its pseudo-inverse.
"""
import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import ArtivaeError, StageError
from .numerics import RankDeficientError, ols_fit, pca

MODEL_FORMAT = "artivae-gpca-v1"
MIN_FRAMES = 100
FRAME_RATE_HZ = 100.0

# group name -> CSV column prefix
COIL_GROUPS = (
    ("jaw", "jaw"),
    ("tongue_tip", "tt"),
    ("tongue_blade", "tb"),
    ("tongue_dorsum", "td"),
    ("upper_lip", "ul"),
    ("lower_lip", "ll"),
    ("velum", "vl"),
)
_PREFIX = dict(COIL_GROUPS)
_GROUP = {prefix: group for group, prefix in COIL_GROUPS}

PARAM_NAMES = ("JH", "TB", "TD", "TT", "LP", "LH", "VL")


@dataclass(frozen=True)
class CoilLayout:
    """Maps each coil group to the (x, y) column indices inside an EMA frame."""

    groups: dict = field(default_factory=dict)

    def __post_init__(self):
        required = [g for g, _ in COIL_GROUPS if g != "velum"]
        missing = [g for g in required if g not in self.groups]
        if missing:
            raise ValueError(f"layout is missing coil groups {missing}")
        unknown = set(self.groups) - set(_PREFIX)
        if unknown:
            raise ValueError(f"unknown coil groups {sorted(unknown)}")
        flat = [i for pair in self.groups.values() for i in pair]
        if any(len(pair) != 2 for pair in self.groups.values()):
            raise ValueError("each coil group needs exactly two indices (x, y)")
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("coil indices must be disjoint and cover the frame exactly")
        if self.has_velum != (len(flat) == 14):
            raise ValueError("velum coil present iff the frame has 14 dims")

    @classmethod
    def default(cls, with_velum=False):
        names = [g for g, _ in COIL_GROUPS if with_velum or g != "velum"]
        return cls({g: (2 * i, 2 * i + 1) for i, g in enumerate(names)})

    @classmethod
    def from_columns(cls, columns):
        """Build from coil column names such as ``jaw_x, jaw_y, tt_x, ...``."""
        groups = {}
        for i, name in enumerate(columns):
            prefix, _, axis = name.rpartition("_")
            if prefix not in _GROUP or axis not in ("x", "y"):
                raise ValueError(f"unrecognised EMA column {name!r}")
            pair = groups.setdefault(_GROUP[prefix], [None, None])
            pair[0 if axis == "x" else 1] = i
        if any(None in pair for pair in groups.values()):
            raise ValueError("each coil needs both _x and _y columns")
        return cls({g: tuple(p) for g, p in groups.items()})

    @property
    def has_velum(self):
        return "velum" in self.groups

    @property
    def dims(self):
        return 2 * len(self.groups)

    @property
    def n_params(self):
        return 7 if self.has_velum else 6

    @property
    def param_names(self):
        return PARAM_NAMES[: self.n_params]

    def columns(self):
        names = [None] * self.dims
        for group, (ix, iy) in self.groups.items():
            names[ix] = f"{_PREFIX[group]}_x"
            names[iy] = f"{_PREFIX[group]}_y"
        return names

    def index(self, *groups, axis=None):
        """Column indices for ``groups`` in order; ``axis`` 'x' or 'y' selects one."""
        out = []
        for g in groups:
            ix, iy = self.groups[g]
            out.extend({"x": [ix], "y": [iy], None: [ix, iy]}[axis])
        return out


# --------------------------------------------------------------------------
# staged extraction

@dataclass(frozen=True)
class _Stages:
    jaw: object
    jh_to_tongue: object
    tbtd: object
    tbtd_to_tip: object
    tt: object
    jh_to_lips: object
    lp: object
    lp_to_aperture: object
    lh: object
    vl: object = None


def _project(pca_result, data):
    return (data - pca_result.mean) @ pca_result.components.T


def _raw_params(Y, layout, st):
    """Unstandardized parameters for frames ``Y`` (rows)."""
    jh = _project(st.jaw, Y[:, layout.index("jaw")])
    tongue = Y[:, layout.index("tongue_tip", "tongue_blade", "tongue_dorsum")]
    tongue = tongue - st.jh_to_tongue.predict(jh)
    tbtd = _project(st.tbtd, tongue[:, 2:6])
    tip = tongue[:, 0:2] - st.tbtd_to_tip.predict(tbtd)
    tt = _project(st.tt, tip)

    lips = Y[:, layout.index("upper_lip", "lower_lip")]  # ul_x, ul_y, ll_x, ll_y
    lips = lips - st.jh_to_lips.predict(jh)
    lp = _project(st.lp, lips[:, [0, 2]])
    aperture = lips[:, [1, 3]] - st.lp_to_aperture.predict(lp)
    lh = _project(st.lh, aperture)

    cols = [jh, tbtd, tt, lp, lh]
    if st.vl is not None:
        cols.append(_project(st.vl, Y[:, layout.index("velum")]))
    return np.hstack(cols)


def _stage_pca(data, k, stage, tol):
    result = pca(data, k)
    if result.explained_variance[-1] <= tol:
        raise StageError(stage, "zero variance")
    return result


def _stage_ols(X, Y, stage):
    try:
        return ols_fit(X, Y)
    except RankDeficientError as exc:
        raise StageError(stage, f"rank-deficient regression ({exc})") from None


def _fit_stages(Y, layout):
    # variance threshold relative to the whole corpus spread
    total = float(np.var(Y, axis=0, ddof=1).sum())
    tol = 1e-12 * total

    jaw = _stage_pca(Y[:, layout.index("jaw")], 1, "jaw", tol)
    jh = _project(jaw, Y[:, layout.index("jaw")])

    tongue = Y[:, layout.index("tongue_tip", "tongue_blade", "tongue_dorsum")]
    jh_to_tongue = _stage_ols(jh, tongue, "jaw->tongue")
    tongue = tongue - jh_to_tongue.predict(jh)
    tbtd = _stage_pca(tongue[:, 2:6], 2, "tongue body/dorsum", tol)
    tbtd_vals = _project(tbtd, tongue[:, 2:6])
    tbtd_to_tip = _stage_ols(tbtd_vals, tongue[:, 0:2], "tongue body/dorsum->tip")
    tip = tongue[:, 0:2] - tbtd_to_tip.predict(tbtd_vals)
    tt = _stage_pca(tip, 1, "tongue tip", tol)

    lips = Y[:, layout.index("upper_lip", "lower_lip")]
    jh_to_lips = _stage_ols(jh, lips, "jaw->lips")
    lips = lips - jh_to_lips.predict(jh)
    lp = _stage_pca(lips[:, [0, 2]], 1, "lip protrusion", tol)
    lp_vals = _project(lp, lips[:, [0, 2]])
    lp_to_aperture = _stage_ols(lp_vals, lips[:, [1, 3]], "lip protrusion->aperture")
    aperture = lips[:, [1, 3]] - lp_to_aperture.predict(lp_vals)
    lh = _stage_pca(aperture, 1, "lip height", tol)

    vl = None
    if layout.has_velum:
        vl = _stage_pca(Y[:, layout.index("velum")], 1, "velum", tol)
    return _Stages(jaw, jh_to_tongue, tbtd, tbtd_to_tip, tt, jh_to_lips, lp,
                   lp_to_aperture, lh, vl)


# --------------------------------------------------------------------------
# model

@dataclass(frozen=True)
class GuidedPcaModel:
    layout: CoilLayout
    ema_mean: np.ndarray        # (D,)
    param_mean: np.ndarray      # (N,) raw-parameter means removed by standardization
    param_scale: np.ndarray     # (N,)
    forward: np.ndarray         # (N, D): a = forward @ y + forward_offset
    forward_offset: np.ndarray  # (N,)
    inverse: np.ndarray         # (D, N): y_hat = inverse @ a + ema_mean
    stages: dict = field(default=None, compare=False, repr=False)

    @property
    def param_names(self):
        return self.layout.param_names

    @property
    def n_params(self):
        return self.layout.n_params

    def ema_to_artic(self, frames):
        return ema_to_artic(self, frames)

    def artic_to_ema(self, params):
        return artic_to_ema(self, params)


def fit_guided_pca(frames, layout=None):
    """Fit the staged model on EMA frames (rows of a ``(T, 12|14)`` array)."""
    Y = np.asarray(frames, dtype=np.float64)
    if Y.ndim != 2:
        raise ValueError("frames must be a 2-D array (T, dims)")
    if layout is None:
        layout = CoilLayout.default(with_velum=Y.shape[1] == 14)
    if Y.shape[1] != layout.dims:
        raise StageError("layout", f"frame dimension {Y.shape[1]} does not match "
                                   f"layout dimension {layout.dims}")
    if Y.shape[0] < MIN_FRAMES:
        raise StageError("input", f"insufficient frames ({Y.shape[0]} < {MIN_FRAMES})")
    if not np.all(np.isfinite(Y)):
        raise StageError("input", "non-finite EMA values")

    stages = _fit_stages(Y, layout)
    raw = _raw_params(Y, layout, stages)
    p_mean = raw.mean(axis=0)
    p_scale = raw.std(axis=0)

    # affine map recovered from its action on the origin and unit frames
    probe = np.vstack([np.zeros(layout.dims), np.eye(layout.dims)])
    mapped = (_raw_params(probe, layout, stages) - p_mean) / p_scale
    offset = mapped[0]
    forward = (mapped[1:] - offset).T
    return GuidedPcaModel(
        layout=layout,
        ema_mean=Y.mean(axis=0),
        param_mean=p_mean,
        param_scale=p_scale,
        forward=forward,
        forward_offset=offset,
        inverse=np.linalg.pinv(forward),
        stages=_stages_to_dict(stages),
    )


def ema_to_artic(model, frames):
    """Standardized articulatory vector(s) for one frame ``(D,)`` or many ``(T, D)``."""
    y = np.asarray(frames, dtype=np.float64)
    if y.shape[-1] != model.layout.dims:
        raise ValueError(f"frame dimension {y.shape[-1]} != model dimension {model.layout.dims}")
    return y @ model.forward.T + model.forward_offset


def artic_to_ema(model, params):
    """Minimum-norm EMA frame(s) mapping back to ``params``.

    Offsets from the training mean frame are confined to the row space of
    the forward map, so ``ema_to_artic(artic_to_ema(a)) == a``.
    """
    a = np.asarray(params, dtype=np.float64)
    if a.shape[-1] != model.n_params:
        raise ValueError(f"expected {model.n_params} parameters, got {a.shape[-1]}")
    return a @ model.inverse.T + model.ema_mean


# --------------------------------------------------------------------------
# preprocessing

def preprocess_ema(raw, fs_in=200.0, cutoff_hz=20.0, order=4):
    """Low-pass (zero-phase Butterworth, SOS forward-backward) and decimate to 100 Hz."""
    raw = np.asarray(raw, dtype=np.float64)
    factor = fs_in / FRAME_RATE_HZ
    if factor < 1 or factor != int(factor):
        raise ValueError(f"input rate {fs_in} Hz is not an integer multiple of 100 Hz")
    sos = signal.butter(order, cutoff_hz, btype="low", fs=fs_in, output="sos")
    smoothed = signal.sosfiltfilt(sos, raw, axis=0)
    return smoothed[:: int(factor)]


# --------------------------------------------------------------------------
# files

def write_ema_csv(path, times, frames, layout):
    frames = np.asarray(frames, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time_s"] + layout.columns())
        for t, row in zip(times, frames):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_ema_csv(path):
    """Return ``(times, frames, layout)`` from an EMA CSV file."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ArtivaeError(f"{path}: empty EMA file") from None
        if not header or header[0] != "time_s":
            raise ArtivaeError(f"{path}: line 1: first column must be time_s")
        try:
            layout = CoilLayout.from_columns(header[1:])
        except ValueError as exc:
            raise ArtivaeError(f"{path}: line 1: {exc}") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ArtivaeError(f"{path}: line {lineno}: expected {len(header)} fields, "
                                   f"got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ArtivaeError(f"{path}: line {lineno}: non-numeric field") from None
    data = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    if not np.all(np.isfinite(data)):
        raise ArtivaeError(f"{path}: non-finite values")
    return data[:, 0], data[:, 1:], layout


def _stages_to_dict(st):
    out = {}
    for name, value in vars(st).items():
        if value is None:
            continue
        if hasattr(value, "components"):
            out[name] = {"mean": value.mean.tolist(), "components": value.components.tolist(),
                         "explained_variance": value.explained_variance.tolist()}
        else:
            out[name] = {"coefficients": value.coefficients.tolist(),
                         "intercept": value.intercept.tolist()}
    return out


def model_to_dict(model):
    return {
        "format": MODEL_FORMAT,
        "layout": model.layout.columns(),
        "param_names": list(model.param_names),
        "ema_mean": model.ema_mean.tolist(),
        "param_mean": model.param_mean.tolist(),
        "param_scale": model.param_scale.tolist(),
        "forward": model.forward.tolist(),
        "forward_offset": model.forward_offset.tolist(),
        "inverse": model.inverse.tolist(),
        "stages": model.stages,
    }


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        d = json.load(fh)
    if d.get("format") != MODEL_FORMAT:
        raise ArtivaeError(f"{path}: not a {MODEL_FORMAT} file")
    arr = lambda k: np.asarray(d[k], dtype=np.float64)  # noqa: E731
    return GuidedPcaModel(
        layout=CoilLayout.from_columns(d["layout"]),
        ema_mean=arr("ema_mean"),
        param_mean=arr("param_mean"),
        param_scale=arr("param_scale"),
        forward=arr("forward"),
        forward_offset=arr("forward_offset"),
        inverse=arr("inverse"),
        stages=d.get("stages"),
    )
