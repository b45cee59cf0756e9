"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--batch 32]

Each workload runs on both backends with identical inputs; the script checks
the outputs agree before reporting best-of-N wall time and the speedup.
"""

import argparse
import sys
import timeit
from pathlib import Path

import numpy as np

from spikerules import kernels
from spikerules.data import image_to_sequence, load_mnist
from spikerules.neurons import RecurrentSNN
from spikerules.rules.eprop import eprop_online
from spikerules.training import Evaluator

MNIST = Path(__file__).resolve().parents[1] / "data" / "mnist-subset"


def workloads(batch: int, rng: np.random.Generator):
    """Name -> callable(impl) returning an array to compare across backends."""
    try:
        images = load_mnist(MNIST, n_train=batch, n_test=1)[0].inputs
    except FileNotFoundError:
        images = rng.random((batch, 784))
    spikes = image_to_sequence(images, "threshold_crossing")        # [B, 28, 784], sparse
    rows = image_to_sequence(images, "row_scan")                     # [B, 28, 28], dense
    net_sparse = RecurrentSNN(784, 100, 10, "alif", seed=0)
    net_dense = RecurrentSNN(28, 100, 10, "alif", seed=0)
    labels = rng.integers(0, 10, batch)
    fb = net_sparse.params["w_out"].T.copy()
    signal = np.cumsum(rng.normal(size=100_000))

    def forward(net, x):
        p = net.params
        return lambda impl: kernels.snn_forward(x, p["w_in"], p["w_rec"], p["w_out"], p["b_out"],
                                                net.alpha, net.rho, net.beta, net.kappa,
                                                net.v_th, impl=impl)[1]

    def eprop(net, x):
        ev = Evaluator(net)
        return lambda impl: eprop_online(ev, (x, labels), fb, impl=impl)["grads"]["w_in"]

    return {
        "forward, spike input 784->100": forward(net_sparse, spikes),
        "forward, dense input 28->100": forward(net_dense, rows),
        "e-prop, spike input 784->100": eprop(net_sparse, spikes),
        "e-prop, dense input 28->100": eprop(net_dense, rows),
        "step-forward encoder, 100k samples": lambda impl: kernels.step_forward(signal, 0.5, impl),
        "moving-window encoder, 100k samples": lambda impl: kernels.moving_window(signal, 0.5, 5,
                                                                                  impl),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=32)
    args = ap.parse_args(argv)

    impls = kernels.implementations()
    if "cython" not in impls:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return 1
    print(f"{'workload':40s} {'cython':>10s} {'python':>10s} {'speedup':>8s}")
    for name, fn in workloads(args.batch, np.random.default_rng(0)).items():
        a, b = fn(impls["cython"]), fn(impls["python"])
        if not np.allclose(a, b, rtol=1e-9, atol=1e-12):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        t = {k: min(timeit.repeat(lambda: fn(impls[k]), number=1, repeat=args.repeat))
             for k in ("cython", "python")}
        print(f"{name:40s} {t['cython'] * 1e3:8.2f}ms {t['python'] * 1e3:8.2f}ms "
              f"{t['python'] / t['cython']:7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
