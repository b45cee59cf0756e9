"""The compiled kernels and the numpy fallback must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from spikerules import kernels
from spikerules.kernels import LOSS_CE, LOSS_MSE

IMPLS = kernels.implementations()
needs_cython = pytest.mark.skipif("cython" not in IMPLS, reason="compiled kernels not built")


def _net(rng, n_in=5, n_rec=9, n_out=3):
    w_rec = rng.normal(0, 0.4, (n_rec, n_rec))
    np.fill_diagonal(w_rec, 0)
    return (rng.normal(0, 0.6, (n_in, n_rec)), w_rec, rng.normal(0, 0.4, (n_rec, n_out)),
            rng.normal(0, 0.1, n_out))


@needs_cython
@pytest.mark.parametrize("beta", [0.0, 0.07])
def test_forward_agrees(beta):
    rng = np.random.default_rng(0)
    x = rng.random((4, 30, 5)) * 2
    w = _net(rng)
    args = (x, *w, 0.95, 0.995, beta, 0.9, 1.0)
    zc, yc = kernels.snn_forward(*args, impl=IMPLS["cython"])
    zp, yp = kernels.snn_forward(*args, impl=IMPLS["python"])
    np.testing.assert_array_equal(zc, zp)
    np.testing.assert_allclose(yc, yp, rtol=1e-12, atol=1e-12)
    assert zc.any() and not zc.all()


@needs_cython
@pytest.mark.parametrize("beta,loss", [(0.0, LOSS_CE), (0.07, LOSS_CE), (0.07, LOSS_MSE)])
def test_eprop_agrees(beta, loss):
    rng = np.random.default_rng(1)
    x = rng.random((3, 20, 5)) * 2
    w_in, w_rec, w_out, b_out = _net(rng)
    targets = np.eye(3)[rng.integers(0, 3, 3)][:, None, :].repeat(20, axis=1)
    sw = np.full(20, 1 / 20)
    fb = rng.normal(size=(3, 9))
    args = (x, targets, sw, loss, w_in, w_rec, w_out, b_out, fb, 0.95, 0.995, beta, 0.9, 1.0, 0.3)
    c = kernels.eprop_online(*args, impl=IMPLS["cython"])
    p = kernels.eprop_online(*args, impl=IMPLS["python"])
    assert c["loss"] == pytest.approx(p["loss"], rel=1e-12)
    for k in ("w_in", "w_rec", "w_out", "b_out", "esum_in", "esum_rec", "outputs"):
        np.testing.assert_allclose(c[k], p[k], rtol=1e-10, atol=1e-12, err_msg=k)
    np.testing.assert_array_equal(c["spikes"], p["spikes"])


@needs_cython
def test_encoders_agree():
    rng = np.random.default_rng(2)
    for _ in range(20):
        s = np.cumsum(rng.normal(size=200))
        np.testing.assert_array_equal(kernels.step_forward(s, 0.7, impl=IMPLS["cython"]),
                                      kernels.step_forward(s, 0.7, impl=IMPLS["python"]))
        np.testing.assert_array_equal(kernels.moving_window(s, 0.5, 4, impl=IMPLS["cython"]),
                                      kernels.moving_window(s, 0.5, 4, impl=IMPLS["python"]))


def test_env_var_forces_fallback():
    env = dict(os.environ, SPIKERULES_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from spikerules import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
