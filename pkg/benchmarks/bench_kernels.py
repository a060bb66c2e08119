"""Benchmark the compiled CG kernel against the pure-numpy fallback.

The operator is the time-step matrix (lumped_mass/tau + stiffness) that every
forward and adjoint step solves, exercised over a warm-started sequence of
right-hand sides like a real trajectory sweep.

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from phasetrack.kernels import available_backends  # noqa: E402
from phasetrack.linsolve import SpdOperator, default_max_iter  # noqa: E402
from phasetrack.mesh import Rectangle, build_mesh  # noqa: E402


def sweep(kernel, op, rhs_sequence, rtol=1e-10):
    K = op.stiffness
    x = np.zeros(op.n)
    total_iters = 0
    start = time.perf_counter()
    for rhs in rhs_sequence:
        iters, _, converged = kernel(
            op.diag_mass_over_tau,
            K.indptr,
            K.indices,
            K.data,
            op.inv_precond(),
            rhs,
            x,  # warm start carried across the sweep
            rtol,
            default_max_iter(op.n),
        )
        assert converged
        total_iters += iters
    return time.perf_counter() - start, total_iters


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--steps", type=int, default=40, help="solves per sweep")
    args = parser.parse_args(argv)

    backends = available_backends()
    print(f"backends: {', '.join(sorted(backends))}")
    print(f"{'grid':>10} {'dofs':>7} | " + " | ".join(f"{name:>14}" for name in sorted(backends)) + " | speedup")

    rng = np.random.default_rng(0)
    for n in (32, 64, 128, 256):
        mesh = build_mesh(Rectangle(-3.0, -3.0, 6.0, 3.0), n, n)
        op = SpdOperator(mesh.lumped_mass / 1e-3, mesh.stiffness)
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        base = np.exp(-((x - 0.3) ** 2 + y**2))
        rhs_sequence = [
            op.apply(base * np.cos(0.1 * k) + 0.05 * rng.standard_normal(op.n))
            for k in range(args.steps)
        ]
        timings = {}
        for name, kernel in backends.items():
            best = min(
                sweep(kernel, op, rhs_sequence)[0] for _ in range(args.repeats)
            )
            timings[name] = best
        row = f"{n + 1}x{n + 1:<6} {op.n:>7} | " + " | ".join(
            f"{timings[name] * 1e3:>11.2f} ms" for name in sorted(timings)
        )
        if len(timings) == 2:
            row += f" | {timings['python'] / timings['compiled']:.2f}x"
        print(row)


if __name__ == "__main__":
    main()
