"""Time the numba kernels against their numpy / plain-Python counterparts.

    python benchmarks/bench_backends.py [--repeat 3]

Both paths are called directly, so GTRIE_BACKEND does not need to be set.
"""
import argparse
import time

import numpy as np

from gtries import montecarlo, recurrence
from gtries.model import validate_params


def best_of(func, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        func()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    params = validate_params([0.5, 0.3, 0.2], 2)
    logp, log1mp = recurrence._log_probs(params)
    N = 2048
    lg = recurrence._lgamma_table(N)
    toll = np.ones(N + 1)
    mu = recurrence.exact_mean_table(params, N).mean
    _, _, _, means, cond = recurrence._conditional_tables(params, mu)
    tables = montecarlo.law_tables(params, montecarlo.DEFAULT_K0)
    p = params.p_array
    series_lg = recurrence._lgamma_table(4000)
    series_args = (64, toll[:65].copy(), logp, np.log(2.0), series_lg, 2 * params.q2, 1e-10,
                   4000, 1.0)
    series_args[1][:2] = 0.0

    def sim(kernel, trials=50):
        def run():
            for t in range(trials):
                kernel(montecarlo.trial_stream(1, t), 1024, p, 2, tables.k0, tables.cdf,
                       tables.lengths, 1024, 10**7)
        return run

    cases = [
        ("mean recurrence, N=2048",
         lambda: recurrence._mix_solve_numba(logp, log1mp, 2.0, toll, lg, np.zeros(N + 1)),
         lambda: recurrence._mix_solve_numpy(logp, log1mp, 2.0, toll, lg, np.zeros(N + 1))),
        ("variance toll, N=2048",
         lambda: recurrence._var_toll_numba(logp, log1mp, 2.0, lg, mu, means, cond, np.zeros(N + 1)),
         lambda: recurrence._var_toll_numpy(logp, log1mp, 2.0, lg, mu, means, cond, np.zeros(N + 1))),
        ("series solution, n=64",
         lambda: recurrence._series_numba(*series_args),
         lambda: recurrence._series_numpy(*series_args)),
        ("simulate S_1024, 50 trials",
         sim(montecarlo._simulate_size_kernel),
         sim(getattr(montecarlo._simulate_size_kernel, "py_func", montecarlo._simulate_size_kernel))),
    ]
    print(f"{'kernel':32s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, fast, slow in cases:
        fast()  # compile
        tf, ts = best_of(fast, args.repeat), best_of(slow, args.repeat)
        print(f"{name:32s} {tf:10.4f} {ts:10.4f} {ts / tf:8.1f}")


if __name__ == "__main__":
    main()
