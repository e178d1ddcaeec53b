"""Time the compiled and NumPy kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from relayauction import kernels
from relayauction.oracles import _simplex_points


def bid_inputs(rng, n_users=8, n_relays=4, slots=20000):
    coef = rng.uniform(0.05, 0.5, (n_users, n_relays))
    reserve = np.ones(n_relays)
    lower = np.full((n_users, n_relays), 1e-15)
    upper = np.full((n_users, n_relays), 1e6)
    active = (rng.random((slots, n_users)) < 0.3).astype(np.uint8)
    b0 = rng.uniform(0, 1, (n_users, n_relays))
    return coef, reserve, lower, upper, active, b0


def time_bids(mod, inputs, repeat):
    coef, reserve, lower, upper, active, b0 = inputs
    best = np.inf
    for _ in range(repeat):
        bids, out = b0.copy(), np.empty((active.shape[0],) + b0.shape)
        t = time.perf_counter()
        # tol of 0 keeps every run at full length
        mod.iterate_bids(bids, coef, reserve, lower, upper, active, 0.0, 1, 0, out)
        best = min(best, time.perf_counter() - t)
    return best, (out,)


def search_inputs(rng, n_users=2, n_relays=2, resolution=61):
    pts = _simplex_points(n_users, resolution - 1)
    snr = rng.uniform(0, 2, (n_relays, pts.shape[0], n_users)) * (pts > 0)
    active = (pts > 0).astype(np.uint8)[None].repeat(n_relays, axis=0)
    counts = np.full(n_relays, pts.shape[0], dtype=np.intp)
    return snr, active, counts, rng.uniform(0, 1, n_users)


def time_search(mod, inputs, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        res = mod.efficiency_search(*inputs, 1.0)
        best = min(best, time.perf_counter() - t)
    return best, res


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = {"python": kernels.load_backend("python")}
    try:
        backends["cython"] = kernels.load_backend("cython")
    except ImportError:
        print("compiled kernels not built; timing the NumPy backend only")
    cases = [("iterate_bids 8x4, 20000 slots", time_bids, bid_inputs(rng)),
             ("efficiency_search 2x2, 61 steps", time_search, search_inputs(rng))]
    for label, timer, inputs in cases:
        times, results = {}, {}
        for name, mod in backends.items():
            times[name], results[name] = timer(mod, inputs, args.repeat)
        line = f"{label:34s}" + "".join(f"  {n} {t * 1e3:9.2f} ms" for n, t in times.items())
        if len(times) == 2:
            same = all(np.array_equal(np.asarray(a), np.asarray(b))
                       for a, b in zip(results["python"], results["cython"]))
            line += f"  speedup {times['python'] / times['cython']:6.1f}x  identical={same}"
        print(line)


if __name__ == "__main__":
    main()
