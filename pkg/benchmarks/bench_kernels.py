#!/usr/bin/env python3
"""Time the numpy kernel lane against the compiled one on realistic loads.

Run from the repository root after an editable install:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --rays 500000 --repeat 5

The three entry points cover the hot paths of a scan: `raycast` dominates
simulation, `classify_stack` dominates decoding and `intersect_pairs`
dominates reconstruction. Each workload is checked for agreement between
the lanes before timing, so a speedup next to a silent mismatch cannot
happen.
"""

import argparse
import time

import numpy as np

from slscan._kernels import available_backends


def best_of(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def raycast_workload(n_rays, rng):
    origins = np.zeros((n_rays, 3))
    dirs = rng.normal(size=(n_rays, 3))
    dirs[:, 2] = np.abs(dirs[:, 2]) + 0.5
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    plane_point = np.array([[0.0, 0.0, 500.0], [50.0, 0.0, 700.0],
                            [0.0, -30.0, 900.0]])
    plane_normal = np.tile([0.0, 0.0, -1.0], (3, 1))
    plane_u = np.tile([1.0, 0.0, 0.0], (3, 1))
    plane_v = np.tile([0.0, 1.0, 0.0], (3, 1))
    plane_half = np.tile([220.0, 220.0], (3, 1))

    a = np.radians(30.0)
    rot = np.array([[np.cos(a), 0.0, np.sin(a)],
                    [0.0, 1.0, 0.0],
                    [-np.sin(a), 0.0, np.cos(a)]])
    box_center = np.array([[0.0, 0.0, 350.0], [-80.0, 40.0, 450.0]])
    box_rot = np.stack([np.eye(3), rot])
    box_half = np.tile([55.0, 55.0, 55.0], (2, 1))

    tri_v0 = rng.uniform(-150.0, 150.0, size=(8, 3)) + [0.0, 0.0, 600.0]
    tri_v1 = tri_v0 + rng.uniform(10.0, 80.0, size=(8, 3))
    tri_v2 = tri_v0 + rng.uniform(-80.0, -10.0, size=(8, 3))

    return (origins, dirs, plane_point, plane_normal, plane_u, plane_v,
            plane_half, box_center, box_rot, box_half, tri_v0, tri_v1, tri_v2)


def intersect_workload(n_pairs, rng):
    p = rng.uniform(-100.0, 100.0, size=(n_pairs, 3))
    q = rng.uniform(-100.0, 100.0, size=(n_pairs, 3))
    u = rng.normal(size=(n_pairs, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v = rng.normal(size=(n_pairs, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return p, u, q, v


def classify_workload(side, rng):
    n_bits = 10
    stack = rng.integers(0, 256, size=(2 + 2 * n_bits, side, side), dtype=np.uint8)
    direct = np.arange(2, 2 + 2 * n_bits, 2, dtype=np.intp)
    inverse = direct + 1
    return stack, direct, inverse, 10


def check_agreement(results_a, results_b, what):
    for got, want in zip(results_a, results_b):
        got = np.asarray(got)
        want = np.asarray(want)
        if got.dtype.kind in "fc":
            same = np.allclose(got, want, atol=1e-9, equal_nan=True)
        else:
            same = np.array_equal(got, want)
        if not same:
            raise SystemExit(f"kernel lanes disagree on {what}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rays", type=int, default=200_000,
                        help="rays cast per raycast call")
    parser.add_argument("--pairs", type=int, default=1_000_000,
                        help="ray pairs per intersect_pairs call")
    parser.add_argument("--side", type=int, default=1024,
                        help="square image side for classify_stack")
    parser.add_argument("--repeat", type=int, default=3,
                        help="timed repetitions; best of N is reported")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = available_backends()
    if "native" not in backends:
        print("compiled kernel lane is not built; showing the numpy lane only")

    rng = np.random.default_rng(args.seed)
    workloads = [
        ("raycast", "raycast", raycast_workload(args.rays, rng),
         f"{args.rays} rays vs 3 planes + 2 boxes + 8 triangles"),
        ("intersect_pairs", "intersect_pairs",
         intersect_workload(args.pairs, rng), f"{args.pairs} ray pairs"),
        ("classify_stack", "classify_stack", classify_workload(args.side, rng),
         f"10 bits over {args.side}x{args.side} px"),
    ]

    rows = []
    for label, attr, work, desc in workloads:
        outputs = {name: getattr(mod, attr)(*work) for name, mod in backends.items()}
        if len(outputs) == 2:
            check_agreement(outputs["pure"], outputs["native"], label)
        times = {name: best_of(getattr(mod, attr), work, args.repeat)
                 for name, mod in backends.items()}
        rows.append((label, desc, times))

    print(f"\nbest of {args.repeat} runs")
    header = f"{'kernel':<17}{'workload':<50}{'pure':>10}"
    if "native" in backends:
        header += f"{'native':>10}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for label, desc, times in rows:
        line = f"{label:<17}{desc:<50}{times['pure'] * 1e3:>8.1f}ms"
        if "native" in times:
            ratio = times["pure"] / times["native"]
            line += f"{times['native'] * 1e3:>8.1f}ms{ratio:>8.2f}x"
        print(line)


if __name__ == "__main__":
    main()
