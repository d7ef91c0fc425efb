"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on the same inputs under both backends; the table shows
the best wall time, the speed-up, and the largest relative difference
between the two results.
"""
import argparse
import math
import time

import numpy as np

from nvpdmr import kernels
from nvpdmr import physics as phy


def _cases():
    nv = phy.NVParams()
    m = phy.rate_matrix(nv, 8.0, True)
    x0 = np.array([1.0, 0, 0, 0, 0, 0])
    noise = np.random.default_rng(0).normal(size=1_000_000)
    f = 1e5
    return {
        "rk4_linear 6x6, 1e5 steps": lambda: kernels.rk4_linear(m, x0, nv.tau_excited / 10, 100_000),
        "lowpass_iir 1e6 samples": lambda: kernels.lowpass_iir(noise, 0.01),
        "pulse_train 2e6 pulses": lambda: kernels.pulse_train_sin_integral(
            0.0, 1 / f, 0.25 / f, 2_000_000, 2 * math.pi * f * 1.001, 0.3),
    }


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), np.asarray(out, dtype=float)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the Python backend is available")
    print(f"{'kernel':<28}" + "".join(f"{b + ' [s]':>14}" for b in backends) + f"{'speed-up':>10}{'max rel diff':>14}")
    previous = kernels.BACKEND
    try:
        for name, fn in _cases().items():
            results = {}
            for b in backends:
                kernels.use_backend(b)
                results[b] = _best(fn, args.repeat)
            row = f"{name:<28}" + "".join(f"{results[b][0]:>14.4f}" for b in backends)
            if len(results) == 2:
                (tp, yp), (tc, yc) = results["python"], results["cython"]
                diff = float(np.max(np.abs(yc - yp)) / max(np.max(np.abs(yp)), 1e-300))
                row += f"{tp / tc:>9.1f}x{diff:>14.1e}"
            print(row)
    finally:
        kernels.use_backend(previous)


if __name__ == "__main__":
    main()
