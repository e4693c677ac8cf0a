"""Compiled vs pure-Python event loop on identical pre-drawn inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--duration 20000]

Prints wall time per backend, the speed-up, and whether the two kernels
returned identical counters.
"""

import argparse
import time

import numpy as np

from nbfi import _backend, simulator
from nbfi.core import Scenario, allocation_from_radii, single_bn_allocation

CASES = {
    "BN4-only R=1 lam=5": Scenario(1000, 1.0, 5.0, single_bn_allocation(4, 1.0)),
    "mix R=1 lam=1": Scenario(1000, 1.0, 1.0, allocation_from_radii([1.0, 0.75**0.5, 0.5**0.5, 0.5], 1.0)),
    "BN1-only R=7 lam=7": Scenario(1000, 7.0, 7.0, single_bn_allocation(1, 7.0)),
}


def _time(sc, duration, backend, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = simulator.simulate_counts(sc, duration, seed=1, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--duration", type=float, default=20000.0, help="simulated seconds per run")
    args = ap.parse_args(argv)
    try:
        _backend.get("cython")
    except ImportError:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")

    print(f"{'case':<22}{'packets':>9}{'python s':>11}{'cython s':>11}{'speed-up':>10}  identical")
    for name, sc in CASES.items():
        t_py, a = _time(sc, args.duration, "python", args.repeat)
        t_cy, b = _time(sc, args.duration, "cython", args.repeat)
        same = all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("counts", "delay_sum", "airtime", "hist"))
        print(f"{name:<22}{a.total(0):>9d}{t_py:>11.3f}{t_cy:>11.3f}{t_py / t_cy:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
