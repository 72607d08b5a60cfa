"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_backends.py [--repeat 3]

Times one hilbert(1000) run of 10^4 projections (stride 5) and a batch of
10^5 hilbert(6) runs of 50 steps, checks that both backends agree, and
prints a small table.
"""
import argparse
import time

import numpy as np

from kaczmarz_approx import _backend
from kaczmarz_approx.engine import LinearSystem, MaxSteps, run, run_batch
from kaczmarz_approx.matrix import hilbert


def best_of(repeat, fn):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3, help="timing repetitions, best is reported")
    args = ap.parse_args(argv)

    backends = _backend.available()
    big = LinearSystem.from_truth(hilbert(1000), np.ones(1000))
    small = LinearSystem.from_truth(hilbert(6), np.ones(6))
    cases = {
        "single hilbert(1000), 10^4 steps": lambda b: run(big, np.zeros(1000), MaxSteps(10_000), seed=1,
                                                          stride=5, backend=b).x,
        "batch hilbert(6), 10^5 x 50 steps": lambda b: run_batch(small, np.zeros(6), 50, 100_000, seed=1,
                                                                  backend=b).x,
    }
    print(f"{'case':<38}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        times, results = [], []
        for b in backends:
            t, x = best_of(args.repeat, lambda: fn(b))
            times.append(t)
            results.append(x)
        line = f"{name:<38}" + "".join(f"{t:>11.3f}s" for t in times)
        if len(backends) > 1:
            line += f"{times[1] / times[0]:>11.1f}x"
            np.testing.assert_allclose(results[0], results[1], rtol=1e-12, atol=1e-13)
        print(line)


if __name__ == "__main__":
    main()
