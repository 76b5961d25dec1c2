"""Time the compiled kernels against the pure-Python/numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from heavylocal import kernels


def cases(rng):
    g = rng.random(20_000)
    g /= g.sum() * 1.05
    f = rng.random(20_000) * 1e-4
    hm = rng.random(201) * 1e-3
    hp = np.zeros(20_200)
    inc = rng.exponential(1.0, (20_000, 64)) - 2.0
    inc2 = rng.normal(0.0, 1.0, (20_000, 64))

    def walk(b):
        S, M, alive = np.zeros(20_000), np.zeros(20_000), np.ones(20_000, bool)
        b.walk_sup_chunk(inc, S, M, alive, 50.0)

    def exit_(b):
        S, st = np.zeros(20_000), np.zeros(20_000, np.uint8)
        b.first_exit_chunk(inc2, S, st, -5.0, 5.0)

    return {
        "panjer_geometric (20k cells)": lambda b: b.panjer_geometric(g, 0.5),
        "ladder_backward (20k cells, 201 taps)": lambda b: b.ladder_backward(f, hm, hp.copy()),
        "walk_sup_chunk (20k paths x 64 steps)": walk,
        "first_exit_chunk (20k paths x 64 steps)": exit_,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.COMPILED is None:
        print("compiled extension not built; only the fallback is timed")
    backends = [kernels.PURE] + ([kernels.COMPILED] if kernels.COMPILED is not None else [])
    rng = np.random.default_rng(0)
    print(f"{'kernel':44s}" + "".join(f"{b.name:>14s}" for b in backends) + "    speed-up")
    for name, fn in cases(rng).items():
        times = [min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) for b in backends]
        speed = f"{times[0] / times[1]:10.1f}x" if len(times) == 2 else ""
        print(f"{name:44s}" + "".join(f"{t * 1e3:12.2f}ms" for t in times) + "  " + speed)


if __name__ == "__main__":
    main()
