"""Articulatory-regularized variational autoencoder over Bark-scale cepstra."""
from .kernels import BACKEND

__version__ = "0.1.0"

FORMATS = {
    "articulatory model": "artivae-gpca-v1",
    "features": "artivae-feat-v1",
    "checkpoint": "artivae-vae-v1",
}
