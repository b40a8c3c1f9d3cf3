"""Compare the compiled pulse kernel with the numpy fallback.

Usage: python benchmarks/bench_kernel.py [--pulses 1048576] [--repeat 5]
"""

import argparse
import time

import numpy as np

from starqkd import _kernel_py, kernel
from starqkd.protocol import PulsePhysics, click_thresholds, transmit


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pulses", type=int, default=1 << 20)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    phys = PulsePhysics(mu=0.1, transmittance=10 ** -1.163, efficiency=0.1,
                        visibility=0.9744, p_dark=5.2e-6, excess_error=0.0218)
    thr = np.ascontiguousarray(click_thresholds(phys))
    rng = np.random.default_rng(7)
    n = args.pulses
    rbits = rng.integers(0, 16, size=n, dtype=np.uint8)
    u_click = rng.random(n)
    u_flip = rng.random(n)

    backends = {"numpy": _kernel_py.process_block}
    if kernel.BACKEND == "cython":
        backends["cython"] = kernel.process_block
    else:
        print("compiled kernel not built; timing the numpy fallback only")

    ref = None
    for name, fn in backends.items():
        out = fn(rbits, u_click, u_flip, thr, phys.excess_error)
        if ref is None:
            ref = out
        else:
            assert all(np.array_equal(a, b) for a, b in zip(ref, out)), "backends disagree"
        t = best_of(lambda: fn(rbits, u_click, u_flip, thr, phys.excess_error), args.repeat)
        print(f"kernel {name:>6}: {t * 1e3:8.2f} ms per {n} pulses ({n / t / 1e6:7.1f} Mpulse/s)")

    for name, fn in backends.items():
        t = best_of(lambda: transmit(phys, 10_000_000, np.random.default_rng(1), fn), 1)
        print(f"session {name:>5}: {t:8.3f} s per 1e7 pulses (draws included)")


if __name__ == "__main__":
    main()
