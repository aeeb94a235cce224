"""M seeded annealing runs over random N-subsets of calibrated surfaces."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import emosar
from .voting import select_objective_subset

# Named substreams of the master seed.
STREAM_SAMPLING = 1
STREAM_MEASUREMENT = 2
STREAM_CALIBRATION = 3
STREAM_SUBSET = 4
STREAM_ANNEAL = 5


def substream(master_seed: int, stream: int, index: int | None = None) -> np.random.Generator:
    key = (stream,) if index is None else (stream, index)
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def substream_seed(master_seed: int, stream: int, index: int | None = None) -> int:
    key = (stream,) if index is None else (stream, index)
    return int(np.random.SeedSequence(master_seed, spawn_key=key).generate_state(1)[0])


@dataclass(frozen=True)
class EnsembleConfig:
    m_runs: int = 30
    n_objectives: int = 10
    seed: int = 0
    severity_digits: int = 4
    range_digits: int = 3

    def __post_init__(self):
        if self.m_runs < 1:
            raise ValueError("m_runs must be at least 1")
        if self.n_objectives < 1:
            raise ValueError("n_objectives must be at least 1")


@dataclass
class EnsembleResult:
    archives: list
    subsets: list
    seeds: list


def _one_run(args):
    stack, measured, subset, n_segments, severity_max, schedule, epsilon, move, seed = args
    sub = stack.subset(subset)
    labels = [str(stack.surfaces[i].frequency_index) for i in subset]
    objectives = emosar.ObjectiveSet.from_surfaces(sub, measured[subset], n_segments,
                                                   severity_max, labels=labels)
    return emosar.run(objectives, schedule, epsilon, seed, move)


def run_ensemble(stack, measured, n_segments: int, severity_max: float = 0.1,
                 config: EnsembleConfig = EnsembleConfig(),
                 schedule: emosar.AnnealSchedule = emosar.AnnealSchedule(),
                 epsilon: float = emosar.DEFAULT_EPSILON,
                 move: emosar.MoveParams = emosar.MoveParams(),
                 workers: int = 1) -> EnsembleResult:
    """Run ``config.m_runs`` independent annealers, each on a fresh random subset.

    Run ``i`` draws its subset and its annealing seed from substreams keyed by
    ``(config.seed, i)``, so results do not depend on scheduling order.
    """
    measured = np.asarray(measured, dtype=float)
    l = len(stack)
    if measured.shape != (l,):
        raise ValueError(f"{l} surfaces but {measured.size} measurements")
    if config.n_objectives > l:
        raise ValueError(f"cannot select {config.n_objectives} objectives out of {l}")
    subsets, seeds, tasks = [], [], []
    for i in range(config.m_runs):
        subset = select_objective_subset(l, config.n_objectives, substream(config.seed, STREAM_SUBSET, i))
        seed = substream_seed(config.seed, STREAM_ANNEAL, i)
        subsets.append(subset)
        seeds.append(seed)
        tasks.append((stack, measured, subset, n_segments, severity_max, schedule, epsilon, move, seed))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            archives = list(pool.map(_one_run, tasks))
    else:
        archives = [_one_run(t) for t in tasks]
    return EnsembleResult(archives, subsets, seeds)
