"""Compare the compiled and pure-Python SIC-family kernels.

Usage: python benchmarks/bench_kernels.py [--users 10] [--spreading 16] [--symbols 2000]

The Python backend is timed on a slice of the block (it is two orders of
magnitude slower); both backends are checked for identical decisions on
that slice.
"""

import argparse
import time

import numpy as np

from coopcdma import kernels
from coopcdma.sysmodel import SystemConfig, effective_signatures, generate_channels, generate_codes


def per_symbol(fn, Y, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(Y)
        best = min(best, time.perf_counter() - t0)
    return best / len(Y), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=10)
    ap.add_argument("--spreading", type=int, default=16)
    ap.add_argument("--symbols", type=int, default=2000)
    ap.add_argument("--snr", type=float, default=8.0)
    args = ap.parse_args(argv)

    cfg = SystemConfig(K=args.users, L=0, N=args.spreading)
    rng = np.random.default_rng(0)
    E = effective_signatures(generate_codes(cfg, rng), generate_channels(cfg, rng).sd)
    pts = cfg.constellation.points
    s2 = 10 ** (-args.snr / 10)
    idx = rng.integers(0, 2, size=(args.symbols, cfg.K))
    noise = rng.standard_normal((args.symbols, cfg.M)) + 1j * rng.standard_normal((args.symbols, cfg.M))
    Y = pts[idx] @ E + np.sqrt(s2 / 2) * noise

    backends = {name: kernels.get_backend(name) for name in kernels.available_backends()}
    calls = {
        "sic": lambda m: (lambda Y: m.sic_block(Y, E, pts, 1)),
        "glsic": lambda m: (lambda Y: m.glsic_block(Y, E, pts, cfg.d_th, cfg.n_group)),
        "mbglsic": lambda m: (lambda Y: m.mbglsic_block(Y, E, pts, cfg.d_th, cfg.n_group)),
    }
    py_slice = Y[: max(1, args.symbols // 20)]
    print(f"K={cfg.K} N={cfg.N} Lp={cfg.Lp} symbols={args.symbols} backends={list(backends)}")
    print(f"{'kernel':<9}{'cython us/sym':>15}{'python us/sym':>15}{'speedup':>10}  agree")
    for name, make in calls.items():
        t_py, d_py = per_symbol(make(backends["python"]), py_slice, repeat=1)
        if "cython" in backends:
            t_cy, _ = per_symbol(make(backends["cython"]), Y)
            _, d_cy = per_symbol(make(backends["cython"]), py_slice, repeat=1)
            agree = np.array_equal(d_cy, d_py)
            print(f"{name:<9}{t_cy * 1e6:>15.2f}{t_py * 1e6:>15.1f}{t_py / t_cy:>9.0f}x  {agree}")
        else:
            print(f"{name:<9}{'n/a':>15}{t_py * 1e6:>15.1f}{'':>10}  -")


if __name__ == "__main__":
    main()
