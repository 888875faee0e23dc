import os
import subprocess
import sys

import numpy as np
import pytest

from artivae import kernels
from artivae.kernels import BACKENDS, get_backend


def _twins():
    if "compiled" not in BACKENDS:
        pytest.skip("compiled backend not built")
    return BACKENDS["python"], BACKENDS["compiled"]


class TestSelection:
    def test_active_backend_listed(self):
        assert kernels.BACKEND in BACKENDS
        assert get_backend() is BACKENDS[kernels.BACKEND]

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            get_backend("fortran")

    @pytest.mark.parametrize("value,expected", [("python", "python"), ("bogus", None)])
    def test_environment_override(self, value, expected):
        env = dict(os.environ, ARTIVAE_BACKEND=value)
        proc = subprocess.run([sys.executable, "-c", "import artivae; print(artivae.BACKEND)"],
                              env=env, capture_output=True, text=True)
        if expected is None:
            assert proc.returncode != 0 and "ARTIVAE_BACKEND" in proc.stderr
        else:
            assert proc.stdout.strip() == expected


class TestEquivalence:
    def test_adam(self, rng):
        py, cy = _twins()
        bufs = [[rng.standard_normal(1000) for _ in range(4)] for _ in range(2)]
        bufs[1] = [b.copy() for b in bufs[0]]
        bufs[0][3] = np.abs(bufs[0][3])
        bufs[1][3] = bufs[0][3].copy()
        for step in (1, 2, 50):
            for k, (p, g, m, v) in zip((py, cy), bufs):
                k.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, step)
        for a, b in zip(*bufs):
            np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-16)

    def test_adam_length_check(self):
        _, cy = _twins()
        with pytest.raises(ValueError):
            cy.adam_update(np.zeros(3), np.zeros(2), np.zeros(3), np.zeros(3),
                           1e-3, 0.9, 0.999, 1e-8, 1)

    def test_bias_tanh(self, rng):
        py, cy = _twins()
        z, b = rng.standard_normal((16, 32)) * 3, rng.standard_normal(32)
        z1, z2 = z.copy(), z.copy()
        py.bias_tanh(z1, b)
        cy.bias_tanh(z2, b)
        np.testing.assert_array_equal(z1, z2)
        np.testing.assert_allclose(z1, np.tanh(z + b), rtol=1e-15)

    def test_tanh_backward(self, rng):
        py, cy = _twins()
        grad, h = rng.standard_normal((16, 32)), np.tanh(rng.standard_normal((16, 32)))
        out = []
        for k in (py, cy):
            g, bg = grad.copy(), np.empty(32)
            k.tanh_backward(g, h, bg)
            out.append((g, bg))
        np.testing.assert_allclose(out[0][0], grad * (1 - h * h), rtol=1e-15)
        np.testing.assert_allclose(out[1][0], out[0][0], rtol=1e-15)
        np.testing.assert_allclose(out[1][1], out[0][1], rtol=1e-12, atol=1e-14)

    def test_gaussian_nll(self, rng):
        py, cy = _twins()
        target, mu = rng.standard_normal((10, 18)), rng.standard_normal((10, 18))
        lv = rng.normal(0, 10, (10, 18))  # some entries beyond the clamp
        out = []
        for k in (py, cy):
            bufs = [np.empty((10, 18)), np.empty((10, 18)), np.empty(10)]
            k.gaussian_nll(target, mu, lv, -15.0, 15.0, 0.1, *bufs)
            out.append(bufs)
        for a, b in zip(*out):
            np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)
        clamped = (lv < -15) | (lv > 15)
        assert clamped.any()
        np.testing.assert_array_equal(out[0][1][clamped], 0.0)
        lvc = np.clip(lv, -15, 15)
        expected = 0.5 * (np.log(2 * np.pi) + lvc + (target - mu) ** 2 * np.exp(-lvc)).sum(1)
        np.testing.assert_allclose(out[0][2], expected, rtol=1e-13)
