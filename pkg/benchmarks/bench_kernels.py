"""Wall-clock comparison of the compiled kernels against their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``; the first compiled call is
timed separately so compilation does not leak into the per-call figures.
"""
import argparse
import time

import numpy as np

from mcflab import _kernels as K
from mcflab.flow_sim import dumbbell_profile


def _cases():
    p = dumbbell_profile(3, 0.005)
    z = np.linspace(-14, 14, 2801)
    u = 0.01 * np.exp(-z * z / 8)
    th = np.linspace(0, 2 * np.pi, 4000, endpoint=False)
    rad = 1 + 0.3 * np.cos(5 * th)
    rows = np.linspace(-1.2, 1.2, 2000)
    return {
        "flow_steps": (K.flow_steps, K.flow_steps_np, (p.v, p.dz, 3, 1e-6, 200, K.FREE, K.FREE)),
        "renorm_steps": (K.renorm_steps, K.renorm_steps_np, (u, z, z[1] - z[0], 1e-3, 200, 1.0, 2.0, 2.0, True)),
        "neutral_rk4": (K.neutral_rk4, K.neutral_rk4_np, (-1e-2, np.array([1e-3, 0.0, 0.0]), 0.29, 0.01, 10000, 100)),
        "scanline": (K.scanline, K.scanline_np, (rad * np.cos(th), rad * np.sin(th), rows)),
    }


def _time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"backend: {K.backend()}")
    print(f"{'kernel':<14}{'first call s':>14}{'compiled s':>14}{'numpy s':>12}{'speedup':>10}")
    for name, (fast, slow, a) in _cases().items():
        t = time.perf_counter()
        fast(*a)
        first = time.perf_counter() - t
        tf = _time(fast, a, args.repeat)
        ts = _time(slow, a, max(1, args.repeat // 2))
        print(f"{name:<14}{first:>14.4f}{tf:>14.5f}{ts:>12.5f}{ts / tf:>10.1f}")


if __name__ == "__main__":
    main()
