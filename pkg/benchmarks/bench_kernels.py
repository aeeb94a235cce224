"""Time the numba and numpy flavour of each hot kernel on representative sizes.

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from faultvote import kernels


def cases(rng):
    X = rng.random((270, 2))
    DL, DS = rng.random((270, 270)), rng.random((270, 270))
    s, m = 10, 270
    sm = (rng.random(s), rng.random(s), rng.random((s, m)), rng.random((s, m)),
          rng.standard_normal((s, m)), rng.uniform(1, 20, s), rng.uniform(1, 20, s))
    boxes = rng.integers(-60, 0, (64, 10))
    F = rng.random((64, 10))
    scan = (boxes, F, 40, boxes[0] + 1, F[0] + 0.01)
    dom = (F[:40], F[0] + 0.01, np.ones(10))
    bi = (rng.random(10), float(np.log(1.05)), 1e-12)
    return {
        "se_cross 270x270": ("se_cross", (X, X, 1.0, 5.0, 2.0)),
        "se_from_sqdist 270x270": ("se_from_sqdist", (DL, DS, 1.0, 5.0, 2.0)),
        "stack_mean 10x270": ("stack_mean", sm),
        "archive_scan 40x10": ("archive_scan", scan),
        "domination_amounts 40x10": ("domination_amounts", dom),
        "box_index 10": ("box_index", bi),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)

    rows = []
    for label, (name, a) in cases(np.random.default_rng(0)).items():
        fast = getattr(kernels, f"{name}_numba")
        slow = getattr(kernels, f"{name}_numpy")
        fast(*a)  # compile outside the timing
        number = max(1, 2000 // a[0].size) if hasattr(a[0], "size") else 100
        t_fast = min(timeit.repeat(lambda: fast(*a), number=number, repeat=args.repeat)) / number
        t_slow = min(timeit.repeat(lambda: slow(*a), number=number, repeat=args.repeat)) / number
        rows.append({"kernel": label, "numba_us": t_fast * 1e6, "numpy_us": t_slow * 1e6,
                     "speedup": t_slow / t_fast})

    print(f"{'kernel':<28}{'numba (us)':>12}{'numpy (us)':>12}{'speedup':>10}")
    for r in rows:
        print(f"{r['kernel']:<28}{r['numba_us']:>12.2f}{r['numpy_us']:>12.2f}{r['speedup']:>9.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
