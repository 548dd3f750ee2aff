"""Time the compiled matching kernel against the NumPy fallback.

    python benchmarks/bench_kernels.py [--slots N] [--repeat R]
"""

import argparse
import time

import numpy as np

from delaylt import _kernels_py
from delaylt.model import reference_rayleigh_channel, reference_source
from delaylt.strategies import _per_param, draws_from_rng, make_config

try:
    from delaylt import _kernels
except ImportError:
    _kernels = None


def inputs(d, blocks, seed=0):
    src, ch = reference_source(), reference_rayleigh_channel()
    cfg = make_config("LTSM", d, src, ch, mu=10.0)
    dr = draws_from_rng(src, ch, cfg.partition, np.random.default_rng(seed), (blocks, cfg.dbar))
    order = np.argsort(dr.req + dr.key, axis=1).astype(np.int64)
    starts = np.zeros((blocks, src.J + 1), dtype=np.int64)
    np.cumsum(_per_param(dr.req, src.J), axis=1, out=starts[:, 1:])
    return order, starts, dr.cset, dr.h, cfg.partition.midpoints


def best_of(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=1_000_000, help="channel uses per case")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'d':>5} {'soft':>5} {'numpy s':>10} {'cython s':>10} {'speedup':>8}")
    for d in (1, 9, 41, 201):
        for soft in (False, True):
            dbar = (d + 1) // 2
            a = (*inputs(d, max(1, args.slots // dbar)), soft)
            t_py, r_py = best_of(_kernels_py.select_slots, a, args.repeat)
            if _kernels is None:
                print(f"{d:5d} {soft!s:>5} {t_py:10.4f} {'n/a':>10} {'n/a':>8}")
                continue
            t_cy, r_cy = best_of(_kernels.select_slots, a, args.repeat)
            assert np.array_equal(r_py, r_cy), "backends disagree"
            print(f"{d:5d} {soft!s:>5} {t_py:10.4f} {t_cy:10.4f} {t_py / t_cy:8.1f}")


if __name__ == "__main__":
    main()
