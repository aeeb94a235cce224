"""Shared fixtures: an exhaustively enumerable two-objective toy problem and
a brute-force epsilon-Pareto oracle, plus random archive generators."""

from __future__ import annotations

import math

import numpy as np

from faultvote import emosar

GRID = 50
SMAX = 1.0


def _quantize(sev: float) -> int:
    # 50 severity bins over [0, SMAX]; the top edge falls into the last bin
    return min(int(sev / SMAX * GRID), GRID - 1)


def toy_objectives(seg: int, sev: float) -> np.ndarray:
    """Two conflicting objectives on a 50 x 50 decision grid.

    Location x runs over 50 segments, severity is binned into 50 levels y.
    The Pareto front is the y = 0 row.
    """
    x = (seg - 1) / (GRID - 1)
    y = _quantize(sev) / (GRID - 1)
    f1 = 0.05 + x * x + y * (1.0 + 0.5 * math.sin(7.0 * x))
    f2 = 0.05 + (1.0 - x) ** 2 + y * (1.0 + 0.5 * math.cos(5.0 * x))
    return np.array([f1, f2])


def toy_objective_set() -> emosar.ObjectiveSet:
    return emosar.ObjectiveSet(toy_objectives, 2, GRID, SMAX)


def enumerate_toy() -> np.ndarray:
    centers = (np.arange(GRID) + 0.5) / GRID * SMAX
    return np.array([toy_objectives(seg, s) for seg in range(1, GRID + 1) for s in centers])


def pareto_front(F: np.ndarray) -> np.ndarray:
    """Non-dominated rows of ``F`` by direct pairwise comparison."""
    keep = []
    for i in range(len(F)):
        dominated = False
        for j in range(len(F)):
            if np.all(F[j] <= F[i]) and np.any(F[j] < F[i]):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return F[keep]


def epsilon_pareto_boxes(F: np.ndarray, epsilon: float) -> set:
    """Boxes of the Pareto front that no other front box dominates."""
    front = pareto_front(F)
    boxes = {tuple(int(math.floor(math.log(v) / math.log(1 + epsilon) + 1e-9)) for v in f)
             for f in front}
    minimal = set()
    for b in boxes:
        if not any(all(o <= x for o, x in zip(other, b)) and other != b for other in boxes):
            minimal.add(b)
    return minimal


def random_archives(rng: np.random.Generator, m: int, n_segments: int = 25, max_size: int = 12,
                    shared_pool: int = 30):
    """Random archives drawing keys from a small pool so that keys repeat across runs."""
    pool = [(int(rng.integers(1, n_segments + 1)), round(float(rng.uniform(0, 0.1)), 4))
            for _ in range(shared_pool)]
    archives = []
    for _ in range(m):
        k = int(rng.integers(1, max_size + 1))
        idx = rng.choice(len(pool), size=k, replace=False) if k <= len(pool) else rng.integers(0, len(pool), k)
        archives.append([pool[i] for i in idx])
    return archives
