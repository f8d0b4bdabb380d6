"""Time the compiled kernels against their pure-Python twins.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends receive identical inputs; outputs are checked for bitwise
equality before any timing is reported.
"""

import argparse
import timeit

import numpy as np

from gdgr import _kernels_py as py
from gdgr.envs import four_rooms_layout

try:
    from gdgr import _ckernels as ck
except ImportError:  # extension not built
    ck = None


def qlearn_case(backend):
    rng = np.random.default_rng(0)
    u = rng.random((64, 324, 3))
    lava = np.zeros((9, 9), dtype=np.uint8)
    lava[4, 2:7] = 1

    def run():
        q = np.zeros((9 * 9 * 4, 4))
        backend.qlearn_grid(q, lava, 9, 9, 1, 1, 1, 8, 8, 324, 0.5, 0.9, 0.3, u)
        return q

    return run


def value_iteration_case(backend):
    lava = np.zeros((9, 9), dtype=np.uint8)
    lava[4, 2:7] = 1
    return lambda: backend.grid_value_iteration(lava, 9, 9, 8, 8, 0.9, 1e-12, 10_000)[0]


def maze_case(backend):
    rng = np.random.default_rng(0)
    walls = np.asarray(four_rooms_layout(11), dtype=np.uint8)
    states = np.column_stack([rng.uniform(1.1, 4.9, 512), rng.uniform(1.1, 4.9, 512), rng.normal(0, 1, (512, 2))])
    force = rng.uniform(-1, 1, (512, 2))
    return lambda: backend.maze_step(states, force, walls, 0.1, 0.1)


CASES = {
    "qlearn_grid (64 episodes, 9x9)": qlearn_case,
    "grid_value_iteration (9x9)": value_iteration_case,
    "maze_step (512 states, 11x11)": maze_case,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if ck is None:
        print("compiled extension not built; run `pip install --no-build-isolation -e .` first")
        return
    print(f"{'kernel':34s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, make in CASES.items():
        fp, fc = make(py), make(ck)
        if fp().tobytes() != fc().tobytes():
            raise SystemExit(f"{name}: backends disagree")
        tp = min(timeit.repeat(fp, number=1, repeat=args.repeat)) * 1e3
        tc = min(timeit.repeat(fc, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:34s} {tp:10.2f} {tc:10.3f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
