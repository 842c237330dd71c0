"""Time the numba and numpy flavours of each hot kernel on realistic sizes.

    python benchmarks/bench_kernels.py [--repeat 200]

Each row reports the median call time of both flavours and the largest
absolute difference between their outputs.
"""

import argparse
import timeit

import numpy as np

from slicewatch import kernels


def cases(rng):
    D, p, N = 100, 6, 3
    omega = rng.normal(0.0, 0.1, (D, p))
    phase = rng.uniform(0.0, 2 * np.pi, D)
    X = rng.normal(size=(N, p))
    Z = np.sqrt(2.0 / D) * np.cos(X @ omega.T + phase)
    W = rng.normal(0.0, 0.1, (N, D))
    rho = rng.normal(size=N)
    alpha = rng.normal(0.0, 0.1, (N, D))
    beta = rng.normal(size=N)

    V, q = 25, 6
    counts = rng.integers(10, 500, V)
    mu = rng.normal(size=(V, q))
    my = rng.normal(size=(V, q))
    A = rng.normal(size=(V, q, q))
    suu = A @ np.swapaxes(A, 1, 2)
    syy = suu.copy()
    suy = rng.normal(size=(V, q, q))
    U = rng.normal(size=(V, q))
    Y = rng.normal(size=(V, q))
    return [
        ("rff_map (3x6 -> 100)", kernels.rff_map_numpy, kernels.rff_map_numba, (omega, phase, X)),
        (
            "admm_round (3 agents, D=100)",
            kernels.admm_round_numpy,
            kernels.admm_round_numba,
            (W, rho, alpha, beta, Z, 10.0, 5.0, True),
        ),
        (
            "scatter_update (p=d=6)",
            kernels.scatter_update_numpy,
            kernels.scatter_update_numba,
            (100, mu[0], my[0], suu[0], syy[0], suy[0], U[0], Y[0]),
        ),
        (
            "scatter_update_stack (25 VLs)",
            kernels.scatter_update_stack_numpy,
            kernels.scatter_update_stack_numba,
            (counts, mu, my, suu, syy, suy, U, Y),
        ),
    ]


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def median_us(fn, args, repeat):
    times = timeit.repeat(lambda: fn(*args), number=1, repeat=repeat)
    return 1e6 * float(np.median(times))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<32}{'numpy us':>10}{'numba us':>10}{'speedup':>9}{'max diff':>11}")
    for name, slow, fast, inputs in cases(rng):
        t_np = median_us(slow, inputs, args.repeat)
        if fast is None:
            print(f"{name:<32}{t_np:>10.1f}{'n/a':>10}{'':>9}{'':>11}")
            continue
        fast(*inputs)  # compile
        t_nb = median_us(fast, inputs, args.repeat)
        diff = max_diff(slow(*inputs), fast(*inputs))
        print(f"{name:<32}{t_np:>10.1f}{t_nb:>10.1f}{t_np / t_nb:>8.1f}x{diff:>11.1e}")


if __name__ == "__main__":
    main()
