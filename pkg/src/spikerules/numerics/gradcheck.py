"""Central finite differences, used as an independent gradient oracle."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import NonFiniteError


def finite_difference_gradient(
    f: Callable[[dict[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    only: "set[str] | None" = None,
) -> dict[str, np.ndarray]:
    """Estimate ``df/dp`` coordinate by coordinate.

    ``f`` receives a fresh dict of arrays on every call. ``only`` restricts
    which parameters are differentiated; the rest are left out of the result.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def call():
        val = float(f({k: v.copy() for k, v in work.items()}))
        if not np.isfinite(val):
            raise NonFiniteError("objective returned a non-finite value")
        return val

    grads = {}
    for name, arr in work.items():
        if only is not None and name not in only:
            continue
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = call()
            flat[i] = orig - eps
            lo = call()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        grads[name] = g
    return grads
