"""Hot-loop dispatch: compiled kernels when built, numpy fallback otherwise.

Set ``SPIKERULES_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the
implementation in use.
"""

import os

import numpy as np

from . import _pykernels

LOSS_CE = _pykernels.LOSS_CE
LOSS_MSE = _pykernels.LOSS_MSE

_impl = _pykernels
BACKEND = "python"
if os.environ.get("SPIKERULES_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def snn_forward(x, w_in, w_rec, w_out, b_out, alpha, rho, beta, kappa, v_th, impl=None):
    impl = impl or _impl
    return impl.snn_forward(_c(x), _c(w_in), _c(w_rec), _c(w_out), _c(b_out),
                            float(alpha), float(rho), float(beta), float(kappa), float(v_th))


def eprop_online(x, targets, step_weight, loss_kind, w_in, w_rec, w_out, b_out, feedback,
                 alpha, rho, beta, kappa, v_th, gamma, impl=None):
    impl = impl or _impl
    return impl.eprop_online(_c(x), _c(targets), _c(step_weight), int(loss_kind),
                             _c(w_in), _c(w_rec), _c(w_out), _c(b_out), _c(feedback),
                             float(alpha), float(rho), float(beta), float(kappa),
                             float(v_th), float(gamma))


def step_forward(signal, threshold, impl=None):
    return (impl or _impl).step_forward(_c(signal), float(threshold))


def moving_window(signal, threshold, window, impl=None):
    return (impl or _impl).moving_window(_c(signal), float(threshold), int(window))


def implementations():
    """Available kernel modules keyed by name (for tests and benchmarks)."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
