"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from transfer_risk import _kernels_py

try:
    from transfer_risk import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    a = rng.standard_normal((8, 8))
    spd = a @ a.T + np.eye(8)
    inc = 0.1 * rng.standard_normal((20, 3))
    mu = rng.uniform(0.02, 0.15, 5)
    b = rng.standard_normal((5, 5))
    sigma = 0.01 * (b @ b.T) + 0.01 * np.eye(5)
    anchor = np.full(5, 0.2)
    start = np.eye(5)[0]
    return {
        "jacobi_eigh 8x8": lambda k: k.jacobi_eigh(spd),
        "signature 20 pts d=3 M=3": lambda k: k.signature_from_increments(inc, 3),
        "project_simplex d=5": lambda k: k.project_simplex(mu - 0.5),
        "pga_maximize d=5": lambda k: k.pga_maximize(mu, sigma, anchor, 0.2, start, 0.1, 1e-8, 10000),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.Generator(np.random.Philox(0))
    backends = [("python", _kernels_py)] + ([("compiled", _kernels)] if _kernels else [])
    if _kernels is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':28s}" + "".join(f"{name:>14s}" for name, _ in backends) + ("     speedup" if _kernels else ""))
    for label, fn in cases(rng).items():
        times = []
        for _, mod in backends:
            number = 20
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            times.append(best)
        row = f"{label:28s}" + "".join(f"{t * 1e6:12.1f}us" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
