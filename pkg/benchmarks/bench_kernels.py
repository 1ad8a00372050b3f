"""Time the per-group mixed-model kernels: numba against the numpy twin.

    python benchmarks/bench_kernels.py [--groups 300] [--repeat 50]

Both paths are called in-process through the ``use_numba`` switch, so the
comparison does not depend on ``CRITSCORE_NUMBA``. The first numba call
(compilation or cache load) is excluded.
"""

import argparse
import time

import numpy as np

from critscore import _accel
from critscore.lookalike import fev_lookalike
from critscore.models import _lmm_kernels as kern
from critscore.sim import SimConfig, gen_sim_data


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), float(np.median(times))


def bench(label, data, lam, psi, sigma, repeat):
    ld = np.asarray(lam, dtype=float)[data.scale_map]
    stats = data.stats
    rows = []
    for name, call in (
        ("profile_terms", lambda fast: kern.profile_terms(ld, sigma**2, stats, use_numba=fast)),
        ("group_terms", lambda fast: kern.group_terms(ld, sigma, psi, data.scale_map, data.d1, stats, use_numba=fast)),
    ):
        out = {}
        for fast in (False, True):
            if fast and not _accel.NUMBA_AVAILABLE:
                continue
            call(fast)
            out[fast] = best_of(lambda: call(fast), repeat)
        rows.append((name, out))
    print(f"\n{label}: {data.n} groups, {data.y.size} observations, q = {data.q}")
    print(f"{'kernel':<15}{'numpy best':>12}{'numba best':>12}{'speed-up':>10}")
    for name, out in rows:
        npb = out[False][0]
        nbb = out[True][0] if True in out else float("nan")
        print(f"{name:<15}{npb * 1e3:>10.3f}ms{nbb * 1e3:>10.3f}ms{npb / nbb:>9.1f}x")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--groups", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    if not _accel.NUMBA_AVAILABLE:
        print("numba is not installed; only the numpy path is timed")
    sim = gen_sim_data(SimConfig(n=args.groups, r=10), 0, (0.2, 0.3))
    bench("simulation design (r = 10)", sim, (0.2, 0.3), np.ones(2), 1.0, args.repeat)
    fev = fev_lookalike(seed=1, n=args.groups)
    bench("unbalanced look-alike panel (r = 1..12)", fev, (0.0, 0.02), np.zeros(5), 0.156, args.repeat)


if __name__ == "__main__":
    main()
