"""Compare the compiled and numpy convolution backends.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--steps 5]

Times im2col/col2im on typical feature-map shapes, then one full training
step of the default width-8 model, under each available backend.
"""

import argparse
import time

import numpy as np

from cmfnet import kernels
from cmfnet.data import PairSource, synthetic_pairs
from cmfnet.losses import LossConfig
from cmfnet.model import CmfnetConfig
from cmfnet.train import Schedule, Trainer

SHAPES = [(2, 8, 64, 64), (2, 16, 32, 32), (2, 32, 16, 16), (1, 8, 128, 128)]


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for shape in SHAPES:
        x = rng.standard_normal(shape).astype(np.float32)
        cols = kernels.im2col(x, 3, 3, 1, 1)
        row = {}
        for backend in kernels.available_backends():
            kernels.use_backend(backend)
            row[backend] = (
                best_of(lambda: kernels.im2col(x, 3, 3, 1, 1), repeat),
                best_of(lambda: kernels.col2im(cols, shape, 3, 3, 1, 1), repeat),
            )
        rows.append((shape, row))
    return rows


def bench_step(steps):
    source = PairSource(synthetic_pairs("haze", 2, 64, seed=0), patch=64, augment=False)
    out = {}
    for backend in kernels.available_backends():
        kernels.use_backend(backend)
        trainer = Trainer(CmfnetConfig(), LossConfig(), Schedule(total_iters=steps + 1), source, batch_size=1)
        trainer.train_step()
        t = time.perf_counter()
        for _ in range(steps):
            trainer.train_step()
        out[backend] = (time.perf_counter() - t) / steps
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20, help="timing repetitions per kernel (best is kept)")
    parser.add_argument("--steps", type=int, default=5, help="training steps timed per backend")
    args = parser.parse_args()
    original = kernels.BACKEND
    backends = kernels.available_backends()
    if len(backends) == 1:
        print("compiled extension not built; only the numpy backend is available")
    try:
        print(f"{'shape':<20}" + "".join(f"{b + ' im2col':>16}{b + ' col2im':>16}" for b in backends))
        for shape, row in bench_kernels(args.repeat):
            cells = "".join(f"{row[b][0] * 1e3:>13.3f} ms{row[b][1] * 1e3:>13.3f} ms" for b in backends)
            print(f"{str(shape):<20}{cells}")
        step = bench_step(args.steps)
        print("\ntraining step, width 8, 3 branches, 1x64x64:")
        for b, sec in step.items():
            print(f"  {b:<8} {sec * 1e3:8.1f} ms/step")
        if "cython" in step:
            print(f"  speedup  {step['python'] / step['cython']:.2f}x")
    finally:
        kernels.use_backend(original)


if __name__ == "__main__":
    main()
