import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from faultvote import emosar
from faultvote.emosar import (AnnealSchedule, Archive, CandidateSolution, MoveParams, ObjectiveSet,
                              Relation)

from helpers import enumerate_toy, epsilon_pareto_boxes, toy_objective_set

vectors = st.lists(st.floats(0, 10), min_size=3, max_size=3)


def sol(f, seg=1, sev=0.0):
    return CandidateSolution(seg, sev, np.asarray(f, dtype=float))


# --------------------------------------------------------------------------
# dominance and boxes
# --------------------------------------------------------------------------

def test_dominates_examples():
    assert emosar.dominates((1, 2), (2, 3))
    assert not emosar.dominates((1, 2), (1, 2))
    assert not emosar.dominates((1, 3), (2, 2))
    assert not emosar.dominates((2, 2), (1, 3))


def test_dominates_length_mismatch():
    with pytest.raises(ValueError):
        emosar.dominates((1, 2), (1, 2, 3))


@settings(max_examples=200)
@given(vectors, vectors)
def test_dominance_antisymmetric(a, b):
    assert not (emosar.dominates(a, b) and emosar.dominates(b, a))


@pytest.mark.parametrize("eps", [0.01, 0.05, 0.1, 0.5])
def test_box_exact_power(eps):
    assert emosar.box_index([(1 + eps) ** 3], eps)[0] == 3
    assert emosar.box_index([(1 + eps) ** -2], eps)[0] == -2


def test_box_two_solution_example():
    eps = 0.5
    a = emosar.box_index([1.5, 3.5], eps)
    b = emosar.box_index([1.6, 2.5], eps)
    assert a.tolist() == [1, 3] and b.tolist() == [1, 2]
    # (1.5, 3.5) is Pareto optimal against (1.6, 2.5) ...
    assert not emosar.dominates([1.6, 2.5], [1.5, 3.5])
    # ... but its box is dominated, so it leaves the epsilon-Pareto set
    assert emosar.epsilon_relation([1.6, 2.5], [1.5, 3.5], eps) is Relation.A_DOMINATES
    arch = Archive(2, eps)
    arch.update(sol([1.5, 3.5]))
    arch.update(sol([1.6, 2.5]))
    assert [m.objectives.tolist() for m in arch] == [[1.6, 2.5]]


def test_box_zero_clamped():
    idx = emosar.box_index([0.0], 0.05, 1e-12)[0]
    assert idx == math.floor(math.log(1e-12) / math.log(1.05))


def test_epsilon_relation_examples():
    eps = 0.1
    p = lambda k: (1 + eps) ** (k + 0.5)  # noqa: E731  lands in the middle of box k
    assert emosar.epsilon_relation([2.0, 3.0], [2.0, 3.0], eps) is Relation.SAME_BOX
    assert emosar.epsilon_relation([p(1), p(1)], [p(2), p(2)], eps) is Relation.A_DOMINATES
    assert emosar.epsilon_relation([p(2), p(2)], [p(1), p(1)], eps) is Relation.B_DOMINATES
    assert emosar.epsilon_relation([p(1), p(3)], [p(2), p(1)], eps) is Relation.NON_DOMINANT


@settings(max_examples=200)
@given(vectors, vectors, st.sampled_from([0.01, 0.05, 0.1]))
def test_same_box_iff_equal_index(a, b, eps):
    rel = emosar.epsilon_relation(a, b, eps)
    same = np.array_equal(emosar.box_index(a, eps), emosar.box_index(b, eps))
    assert (rel is Relation.SAME_BOX) == same


# --------------------------------------------------------------------------
# amount of domination and acceptance probabilities
# --------------------------------------------------------------------------

def test_domination_amount_examples():
    assert emosar.amount_of_domination((1, 2), (2, 4), (1, 1)) == 2.0
    assert emosar.amount_of_domination((1, 2), (1, 2), (1, 1)) == 1.0
    assert emosar.amount_of_domination((1, 2), (2, 4), (2, 2)) == 0.5
    # equal components are skipped rather than contributing a zero factor
    assert emosar.amount_of_domination((1, 2), (1, 5), (1, 1)) == 3.0


def test_domination_amount_rejects_bad_ranges():
    with pytest.raises(ValueError):
        emosar.amount_of_domination((1, 2), (2, 4), (1, 0))


def test_sa_probability_limits():
    dom = [0.3, 1.2, 4.0]
    assert emosar.sa_probability(dom, 1e12) == pytest.approx(0.5, abs=1e-12)
    assert emosar.sa_probability(dom, 1e-9) == 0.0
    temps = [1e-3, 1e-1, 1, 10, 1e3]
    probs = [emosar.sa_probability(dom, t) for t in temps]
    assert probs == sorted(probs)


def test_reseed_probability():
    # T below 1 is floored at 1
    assert emosar.reseed_probability(2.0, 0.01) == pytest.approx(1 / (1 + math.exp(-2.0)))
    assert emosar.reseed_probability(2.0, 4.0) == pytest.approx(1 / (1 + math.exp(-0.5)))


# --------------------------------------------------------------------------
# neighbour proposals
# --------------------------------------------------------------------------

def _flat_objectives(n=10, smax=0.1):
    return ObjectiveSet(lambda seg, sev: np.array([1.0 + seg, 1.0 + sev]), 2, n, smax)


def test_proposal_fixed_when_moves_disabled():
    obj = _flat_objectives()
    cur = obj.evaluate(4, 0.037)
    rng = np.random.default_rng(0)
    for _ in range(100):
        new = emosar.propose_neighbor(cur, obj, rng, MoveParams(0.0, 1e-300))
        assert new.segment == 4
        assert new.severity == pytest.approx(0.037, abs=1e-200)
    new = emosar.propose_neighbor(cur, obj, rng, MoveParams(0.0, 0.0))
    assert new.key == cur.key


def test_proposal_reflection_keeps_bounds():
    obj = _flat_objectives()
    cur = obj.evaluate(5, 0.05)
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        new = emosar.propose_neighbor(cur, obj, rng, MoveParams(0.0, 0.2))
        assert 0.0 <= new.severity <= 0.1


def test_proposal_location_uniform_over_others():
    n = 10
    obj = _flat_objectives(n)
    cur = obj.evaluate(4, 0.05)
    rng = np.random.default_rng(2)
    segs = [emosar.propose_neighbor(cur, obj, rng, MoveParams(1.0)).segment for _ in range(10_000)]
    assert 4 not in segs
    counts = np.array([segs.count(s) for s in range(1, n + 1) if s != 4])
    assert stats.chisquare(counts).pvalue > 1e-3


@settings(max_examples=200)
@given(st.floats(-10, 10), st.floats(0.01, 1))
def test_reflect_in_range(x, upper):
    assert 0.0 <= emosar._reflect(x, upper) <= upper


# --------------------------------------------------------------------------
# archive update
# --------------------------------------------------------------------------

def test_archive_empty_insert():
    arch = Archive(2)
    assert arch.update(sol([1.0, 1.0]))
    assert len(arch) == 1


def test_archive_new_dominates_all():
    arch = Archive(2, 0.1)
    for f in ([2.0, 9.0], [5.0, 5.0], [9.0, 2.0]):
        arch.update(sol(f))
    assert len(arch) == 3
    arch.update(sol([1.0, 1.0]))
    assert [m.objectives.tolist() for m in arch] == [[1.0, 1.0]]


def test_archive_same_box_dominated_new_rejected():
    arch = Archive(2, 0.5)
    arch.update(sol([1.55, 2.3]))
    assert not arch.update(sol([1.6, 2.4]))
    assert [m.objectives.tolist() for m in arch] == [[1.55, 2.3]]


def test_archive_same_box_dominating_new_replaces():
    arch = Archive(2, 0.5)
    arch.update(sol([1.6, 2.4]))
    assert arch.update(sol([1.55, 2.3]))
    assert [m.objectives.tolist() for m in arch] == [[1.55, 2.3]]


def test_archive_same_box_corner_tiebreak():
    eps = 0.5
    arch = Archive(2, eps)
    far = sol([2.2, 2.3])     # box (1, 2); corner (1.5, 2.25)
    near = sol([2.0, 2.4])    # same box, mutually non-dominant, closer to the corner
    assert arch.update(far)
    assert arch.update(near)
    assert [m.objectives.tolist() for m in arch] == [[2.0, 2.4]]
    assert not arch.update(far)


def test_archive_rejects_box_dominated():
    arch = Archive(2, 0.1)
    arch.update(sol([1.0, 1.0]))
    assert not arch.update(sol([3.0, 3.0]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.floats(1e-6, 100), min_size=3, max_size=3), min_size=1, max_size=60),
       st.sampled_from([0.01, 0.05, 0.1]))
def test_archive_invariants_under_random_updates(points, eps):
    arch = Archive(3, eps, capacity=2)
    for p in points:
        arch.update(sol(p))
        assert emosar.check_archive(arch) == []
    # every offered point is epsilon-dominated by, or shares a box with, some member
    B = arch.boxes
    for p in points:
        b = emosar.box_index(p, eps)
        assert any(np.all(m <= b) for m in B)


# --------------------------------------------------------------------------
# schedule
# --------------------------------------------------------------------------

def test_default_schedule_levels():
    s = AnnealSchedule()
    expected = math.ceil(math.log(1e-4 / 100) / math.log(0.8))
    assert expected == 62
    assert s.n_levels == 62
    t = s.temperatures()
    assert t[0] == 100 and t[-1] > 1e-4 and t[-1] * 0.8 <= 1e-4


def test_schedule_budget_split():
    s = AnnealSchedule(total_budget=100_000)
    its = s.iterations_per_level()
    assert its.sum() == 100_000
    assert its.max() - its.min() <= 1
    assert AnnealSchedule(total_budget=20_000).iterations_per_level().sum() == 20_000


def test_schedule_validation():
    with pytest.raises(ValueError):
        AnnealSchedule(t_max=1, t_min=2)
    with pytest.raises(ValueError):
        AnnealSchedule(cooling_rate=1.0)


# --------------------------------------------------------------------------
# full runs
# --------------------------------------------------------------------------

def test_zero_budget_keeps_initial_solution():
    obj = toy_objective_set()
    arch = emosar.run(obj, AnnealSchedule(total_budget=0), 0.05, rng_seed=3)
    rng = np.random.default_rng(3)
    seg = int(rng.integers(1, obj.n_segments + 1))
    sev = float(rng.uniform(0, obj.severity_max))
    assert [m.key for m in arch] == [(seg, sev)]


def test_convex_bowl_converges():
    target = 0.0371
    obj = ObjectiveSet(lambda seg, sev: np.array([(sev - target) ** 2 + 1e-9,
                                                  abs(sev - target) + 1e-9]), 2, 1, 0.1)
    grid = np.linspace(0, 0.1, 100_001)
    best = grid[np.argmin((grid - target) ** 2)]
    arch = emosar.run(obj, AnnealSchedule(total_budget=5000), 0.05, rng_seed=0)
    for m in arch:
        assert abs(m.severity - best) < 1e-2


def test_run_deterministic():
    obj = toy_objective_set()
    sched = AnnealSchedule(total_budget=2000)
    a = emosar.run(obj, sched, 0.05, rng_seed=7)
    b = emosar.run(obj, sched, 0.05, rng_seed=7)
    assert [m.key for m in a] == [m.key for m in b]


def test_run_containment_small():
    F = enumerate_toy()
    obj = toy_objective_set()
    for eps in (0.05, 0.1):
        allowed = epsilon_pareto_boxes(F, eps)
        for seed in range(3):
            arch = emosar.run(obj, AnnealSchedule(total_budget=10_000), eps, rng_seed=seed)
            boxes = {tuple(b.tolist()) for b in arch.boxes}
            assert boxes <= allowed


def test_trace_and_archive_export(tmp_path):
    obj = toy_objective_set()
    trace = emosar.RunTrace()
    arch = emosar.run(obj, AnnealSchedule(total_budget=300), 0.05, rng_seed=1, trace=trace)
    trace.write_csv(tmp_path / "trace.csv")
    with open(tmp_path / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 300
    assert set(rows[0]) == {"iteration", "temperature", "archive_size", "accepted_flag"}
    emosar.export_archive_csv(arch, tmp_path / "a.csv", labels=["3", "7"])
    with open(tmp_path / "a.csv") as fh:
        assert next(csv.reader(fh)) == ["segment", "severity", "J_3", "J_7"]
    assert emosar.read_archive_csv(tmp_path / "a.csv") == [m.key for m in arch]


def test_grid_ranges_positive():
    obj = ObjectiveSet(lambda seg, sev: np.array([2.0, seg * 1.0]), 2, 5, 0.1)
    assert obj.ranges[0] > 0 and obj.ranges[1] == 4.0
