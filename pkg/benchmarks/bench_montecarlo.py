"""Compare the compiled and numpy Monte Carlo kernels.

    python benchmarks/bench_montecarlo.py [--trials N] [--repeat R]

Times the whole estimate (random draws included) and, separately, the
evaluation kernel alone on a fixed block of uniforms.
"""

import argparse
import random
import time
from pathlib import Path

import numpy as np

from evasiontree import formats, montecarlo
from evasiontree.engine import compute_ap
from evasiontree.generate import random_tree

SAMPLES = Path(montecarlo.__file__).parent / "samples"


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def trees():
    yield "micro", formats.read_tree(SAMPLES / "micro.at4ea")
    yield "item", formats.read_tree(Path(__file__).resolve().parents[1] / "tests" / "golden" / "item.at4ea")
    rng = random.Random(0)
    big = max((random_tree(rng, max_scenarios=6, gate_rate=0.3) for _ in range(50)),
              key=lambda t: len(montecarlo.compile_tree(t, compute_ap(t)).kind))
    yield "random-large", big


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=1_000_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = montecarlo.AVAILABLE
    print(f"backends: {', '.join(backends)}; trials={args.trials}; best of {args.repeat}")
    print(f"{'tree':<14}{'nodes':>6}  {'backend':<8}{'end-to-end s':>14}{'kernel s':>10}{'counts':>10}")
    for name, tree in trees():
        program = montecarlo.compile_tree(tree, compute_ap(tree))
        u = np.random.default_rng(0).random((montecarlo.BLOCK_ROWS, program.width))
        counts = {}
        for backend in backends:
            total = best_of(lambda: montecarlo.simulate(program, args.trials, 1, backend=backend), args.repeat)
            kernel_fn = montecarlo._kernel(backend)
            kernel = best_of(lambda: kernel_fn(program, u), args.repeat)
            counts[backend] = montecarlo.simulate(program, args.trials, 1, backend=backend)
            print(f"{name:<14}{len(program.kind):>6}  {backend:<8}{total:>14.3f}{kernel:>10.4f}{counts[backend]:>10}")
        if len(set(counts.values())) != 1:
            raise SystemExit(f"backends disagree on {name}: {counts}")


if __name__ == "__main__":
    main()
