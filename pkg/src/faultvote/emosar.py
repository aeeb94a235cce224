"""epsilon-dominance many-objective simulated annealing with re-seeding.

Decision space is a single fault: an integer segment in ``1..n_segments`` and a
continuous severity in ``[0, severity_max]``. All objectives are minimized.

The archive keeps at most one solution per epsilon-box, where the box of an
objective vector ``f`` is ``floor(log(max(f_i, f_floor)) / log(1 + eps))``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kernels import REL_MEMBER_DOMINATES, REL_NEW_DOMINATES, REL_SAME_BOX

F_FLOOR = 1e-12
DEFAULT_EPSILON = 0.05


class Relation(enum.Enum):
    A_DOMINATES = "a_dominates"
    B_DOMINATES = "b_dominates"
    NON_DOMINANT = "non_dominant"
    SAME_BOX = "same_box"


def dominates(f_a, f_b) -> bool:
    """Pareto dominance for minimization."""
    f_a = np.asarray(f_a)
    f_b = np.asarray(f_b)
    if f_a.shape != f_b.shape:
        raise ValueError(f"objective vectors differ in length: {f_a.shape} vs {f_b.shape}")
    return bool(np.all(f_a <= f_b) and np.any(f_a < f_b))


def box_index(f, epsilon: float = DEFAULT_EPSILON, f_floor: float = F_FLOOR) -> np.ndarray:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    f = np.atleast_1d(np.asarray(f, dtype=float))
    return kernels.box_index(f, math.log1p(epsilon), f_floor)


def amount_of_domination(f_a, f_b, ranges) -> float:
    """Product of normalized gaps over the objectives where ``f_a`` and ``f_b`` differ.

    Returns 1.0 when the vectors are identical (empty product).
    """
    f_a = np.asarray(f_a, dtype=float)
    f_b = np.asarray(f_b, dtype=float)
    ranges = np.asarray(ranges, dtype=float)
    if np.any(ranges <= 0):
        raise ValueError("ranges must be positive")
    return float(kernels.domination_amounts(f_a[None, :], f_b, ranges)[0])


@dataclass(frozen=True)
class CandidateSolution:
    segment: int
    severity: float
    objectives: np.ndarray = field(repr=False)

    @property
    def key(self) -> tuple[int, float]:
        return self.segment, self.severity


def epsilon_relation(a, b, epsilon: float = DEFAULT_EPSILON, f_floor: float = F_FLOOR) -> Relation:
    """Compare two solutions (or objective vectors) on their epsilon-boxes."""
    fa = a.objectives if isinstance(a, CandidateSolution) else a
    fb = b.objectives if isinstance(b, CandidateSolution) else b
    ba = box_index(fa, epsilon, f_floor)
    bb = box_index(fb, epsilon, f_floor)
    if ba.shape != bb.shape:
        raise ValueError("solutions have different objective counts")
    if np.array_equal(ba, bb):
        return Relation.SAME_BOX
    if dominates(ba, bb):
        return Relation.A_DOMINATES
    if dominates(bb, ba):
        return Relation.B_DOMINATES
    return Relation.NON_DOMINANT


class ObjectiveSet:
    """Vector objective over single-fault scenarios.

    ``func(segment, severity)`` must return all objective values as a 1-D
    array. ``ranges`` are the per-objective normalization ranges used by the
    amount of domination; when omitted they are estimated as ``max - min`` over
    a grid of every segment and ``grid_points`` severities.
    """

    def __init__(self, func, n_objectives: int, n_segments: int, severity_max: float = 0.1,
                 ranges=None, grid_points: int = 21, labels=None):
        if n_objectives < 1:
            raise ValueError("need at least one objective")
        if n_segments < 1 or severity_max <= 0:
            raise ValueError("invalid decision domain")
        self.func = func
        self.n_objectives = n_objectives
        self.n_segments = n_segments
        self.severity_max = float(severity_max)
        self.labels = list(labels) if labels is not None else [str(i + 1) for i in range(n_objectives)]
        if ranges is None:
            ranges = self._grid_ranges(grid_points)
        ranges = np.asarray(ranges, dtype=float)
        if ranges.shape != (n_objectives,):
            raise ValueError("ranges must have one entry per objective")
        if np.any(ranges <= 0) or not np.all(np.isfinite(ranges)):
            raise ValueError("ranges must be positive and finite")
        self.ranges = ranges

    def _grid_ranges(self, grid_points: int) -> np.ndarray:
        sev = np.linspace(0.0, self.severity_max, grid_points)
        F = np.array([self(seg, s) for seg in range(1, self.n_segments + 1) for s in sev])
        r = F.max(axis=0) - F.min(axis=0)
        # constant objectives still need a positive normalizer
        scale = np.maximum(np.abs(F).max(axis=0), 1.0)
        return np.where(r > 0, r, scale)

    def __call__(self, segment: int, severity: float) -> np.ndarray:
        return np.asarray(self.func(segment, severity), dtype=float)

    def evaluate(self, segment: int, severity: float) -> CandidateSolution:
        return CandidateSolution(int(segment), float(severity), self(segment, severity))

    @classmethod
    def from_callables(cls, evaluators, n_segments: int, severity_max: float = 0.1, **kw):
        evaluators = list(evaluators)

        def func(seg, sev):
            return np.array([e(seg, sev) for e in evaluators])

        return cls(func, len(evaluators), n_segments, severity_max, **kw)

    @classmethod
    def from_surfaces(cls, stack, measured, n_segments: int, severity_max: float = 0.1, **kw):
        """``J_i = |surface_i(segment, severity) - measured_i|`` for a stacked surface set."""
        measured = np.asarray(measured, dtype=float)
        if measured.shape != (len(stack),):
            raise ValueError(f"{len(stack)} surfaces but {measured.size} measurements")

        def func(seg, sev):
            return np.abs(stack.means(float(seg), sev) - measured)

        return cls(func, len(stack), n_segments, severity_max, **kw)


@dataclass(frozen=True)
class MoveParams:
    p_location: float = 0.3
    sigma_step: float | None = None  # default 0.05 * severity_max

    def step_for(self, severity_max: float) -> float:
        return 0.05 * severity_max if self.sigma_step is None else self.sigma_step


def _reflect(x: float, upper: float) -> float:
    if upper <= 0:
        return 0.0
    period = 2.0 * upper
    x = math.fmod(x, period)
    if x < 0:
        x += period
    return period - x if x > upper else x


def propose_neighbor(current: CandidateSolution, objectives: ObjectiveSet,
                     rng: np.random.Generator, move: MoveParams = MoveParams()) -> CandidateSolution:
    """Switch segment with probability ``p_location``, else take a reflected Gaussian severity step."""
    n = objectives.n_segments
    seg, sev = current.segment, current.severity
    if n > 1 and rng.random() < move.p_location:
        other = int(rng.integers(1, n))
        seg = other if other < seg else other + 1
    else:
        sigma = move.step_for(objectives.severity_max)
        if sigma > 0:
            sev = _reflect(sev + sigma * rng.standard_normal(), objectives.severity_max)
    return objectives.evaluate(seg, sev)


class Archive:
    """epsilon-Pareto archive, one member per box, stored as growable arrays."""

    def __init__(self, n_objectives: int, epsilon: float = DEFAULT_EPSILON,
                 f_floor: float = F_FLOOR, capacity: int = 64):
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.n_objectives = n_objectives
        self.epsilon = epsilon
        self.f_floor = f_floor
        self._log_base = math.log1p(epsilon)
        self.size = 0
        self._F = np.empty((capacity, n_objectives))
        self._B = np.empty((capacity, n_objectives), dtype=np.int64)
        self._members: list[CandidateSolution] = []

    def __len__(self):
        return self.size

    def __iter__(self):
        return iter(self._members)

    @property
    def members(self) -> list[CandidateSolution]:
        return list(self._members)

    @property
    def objectives(self) -> np.ndarray:
        return self._F[: self.size].copy()

    @property
    def boxes(self) -> np.ndarray:
        return self._B[: self.size].copy()

    def box_of(self, sol: CandidateSolution) -> np.ndarray:
        return kernels.box_index(sol.objectives, self._log_base, self.f_floor)

    def scan(self, sol: CandidateSolution, box=None):
        """Box and plain dominance codes of ``sol`` against every member."""
        if box is None:
            box = self.box_of(sol)
        return kernels.archive_scan(self._B, self._F, self.size, box, sol.objectives)

    def _append(self, sol, box):
        if self.size == self._F.shape[0]:
            self._F = np.concatenate([self._F, np.empty_like(self._F)])
            self._B = np.concatenate([self._B, np.empty_like(self._B)])
        self._F[self.size] = sol.objectives
        self._B[self.size] = box
        self._members.append(sol)
        self.size += 1

    def _remove(self, mask: np.ndarray):
        if not mask.any():
            return
        keep = np.flatnonzero(~mask)
        n = keep.size
        self._F[:n] = self._F[keep]
        self._B[:n] = self._B[keep]
        self._members = [self._members[i] for i in keep]
        self.size = n

    def _replace(self, mask: np.ndarray, sol, box):
        self._remove(mask)
        self._append(sol, box)

    def _corner_distance(self, f, box) -> float:
        corner = (1.0 + self.epsilon) ** box.astype(float)
        return float(np.linalg.norm(np.maximum(f, self.f_floor) - corner))

    def update(self, sol: CandidateSolution) -> bool:
        """Offer ``sol`` to the archive; return True if it was inserted.

        Members epsilon-dominated by ``sol`` are dropped. Within a shared box the
        Pareto-dominating solution wins; mutually non-dominant box mates are
        resolved in favour of the one closer to the box's lower corner.
        """
        box = self.box_of(sol)
        if self.size == 0:
            self._append(sol, box)
            return True
        box_rel, plain_rel = self.scan(sol, box)
        if np.any(box_rel == REL_MEMBER_DOMINATES):
            return False
        same = box_rel == REL_SAME_BOX
        if same.any():
            i = int(np.flatnonzero(same)[0])
            if plain_rel[i] == REL_MEMBER_DOMINATES:
                return False
            if plain_rel[i] != REL_NEW_DOMINATES:
                mate = self._members[i]
                if self._corner_distance(sol.objectives, box) >= self._corner_distance(mate.objectives, box):
                    return False
        self._replace((box_rel == REL_NEW_DOMINATES) | same, sol, box)
        return True


def archive_update(archive: Archive, new: CandidateSolution) -> Archive:
    archive.update(new)
    return archive


def check_archive(archive: Archive) -> list[str]:
    """Exhaustive pairwise check of the archive invariants; returns violations.

    Also verifies that every stored box matches the member's objective values.
    """
    problems = []
    B = archive.boxes
    if len(B) == 0:
        return problems
    recomputed = np.array([archive.box_of(m) for m in archive.members])
    for i in np.flatnonzero(np.any(recomputed != B, axis=1)):
        problems.append(f"member {i} stores box {B[i].tolist()} but its objectives map to "
                        f"{recomputed[i].tolist()}")
    le = np.all(B[:, None, :] <= B[None, :, :], axis=2)
    lt = np.any(B[:, None, :] < B[None, :, :], axis=2)
    eq = np.all(B[:, None, :] == B[None, :, :], axis=2)
    upper = np.triu(np.ones(eq.shape, dtype=bool), k=1)
    for i, j in zip(*np.nonzero(eq & upper)):
        problems.append(f"members {i} and {j} share box {B[i].tolist()}")
    for i, j in zip(*np.nonzero(le & lt)):
        problems.append(f"member {i} epsilon-dominates member {j}")
    return problems


@dataclass(frozen=True)
class AnnealSchedule:
    t_max: float = 100.0
    t_min: float = 1e-4
    cooling_rate: float = 0.8
    total_budget: int = 100_000

    def __post_init__(self):
        if not self.t_max > self.t_min > 0:
            raise ValueError("need t_max > t_min > 0")
        if not 0 < self.cooling_rate < 1:
            raise ValueError("cooling rate must lie in (0, 1)")
        if self.total_budget < 0:
            raise ValueError("budget must be non-negative")

    @property
    def n_levels(self) -> int:
        """Number of temperatures ``t_max * rate**k`` strictly above ``t_min``."""
        n = math.ceil(math.log(self.t_min / self.t_max) / math.log(self.cooling_rate))
        # guard the float edge where t_max * rate**n lands exactly on t_min
        while n > 0 and self.t_max * self.cooling_rate ** (n - 1) <= self.t_min:
            n -= 1
        while self.t_max * self.cooling_rate ** n > self.t_min:
            n += 1
        return n

    def temperatures(self) -> np.ndarray:
        return self.t_max * self.cooling_rate ** np.arange(self.n_levels)

    def iterations_per_level(self) -> np.ndarray:
        """Budget split over the ladder; the first ``budget % levels`` get one extra."""
        n = self.n_levels
        base, extra = divmod(self.total_budget, n)
        its = np.full(n, base, dtype=np.int64)
        its[:extra] += 1
        return its


@dataclass
class RunTrace:
    iteration: list = field(default_factory=list)
    temperature: list = field(default_factory=list)
    archive_size: list = field(default_factory=list)
    accepted: list = field(default_factory=list)

    def record(self, it, temp, size, accepted):
        self.iteration.append(it)
        self.temperature.append(temp)
        self.archive_size.append(size)
        self.accepted.append(bool(accepted))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "temperature", "archive_size", "accepted_flag"])
            for row in zip(self.iteration, self.temperature, self.archive_size, self.accepted):
                w.writerow([row[0], repr(float(row[1])), row[2], int(row[3])])


def sa_probability(dom, temperature: float) -> float:
    """Simulated-annealing acceptance ``1 / (1 + exp(mean(dom) / T))``."""
    dom = np.asarray(dom, dtype=float)
    x = float(dom.sum()) / dom.size / temperature
    return 0.0 if x > 700 else 1.0 / (1.0 + math.exp(x))


def reseed_probability(dom_selected: float, temperature: float) -> float:
    """Re-seed acceptance ``1 / (1 + exp(-dom / max(T, 1)))``."""
    x = -dom_selected / max(temperature, 1.0)
    return 1.0 / (1.0 + math.exp(x))


def _sa_accept(dom: np.ndarray, temperature: float, rng) -> bool:
    return sa_probability(dom, temperature) > rng.random()


def run(objectives: ObjectiveSet, schedule: AnnealSchedule = AnnealSchedule(),
        epsilon: float = DEFAULT_EPSILON, rng_seed=0, move: MoveParams = MoveParams(),
        f_floor: float = F_FLOOR, trace: RunTrace | None = None, callback=None) -> Archive:
    """Anneal over single-fault scenarios and return the final epsilon-Pareto archive.

    Each step draws a neighbour of the current solution and classifies it
    against the archive: same box (update only if it Pareto-dominates the box
    mate), epsilon-dominating members (update), epsilon-dominated (action),
    otherwise mutually non-dominant (update). The action step moves to the new
    solution if no member Pareto-dominates it; otherwise it re-seeds from the
    least-dominating member when the current solution dominates the new one,
    or falls back to a simulated-annealing acceptance test.

    ``callback(iteration, archive)`` is invoked after every step.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    ranges = objectives.ranges
    archive = Archive(objectives.n_objectives, epsilon, f_floor)
    seg0 = int(rng.integers(1, objectives.n_segments + 1))
    sev0 = float(rng.uniform(0.0, objectives.severity_max))
    initial = objectives.evaluate(seg0, sev0)
    archive.update(initial)
    current = archive.members[int(rng.integers(len(archive)))]

    it = 0
    for temperature, n_iter in zip(schedule.temperatures(), schedule.iterations_per_level()):
        temperature = float(temperature)
        for _ in range(int(n_iter)):
            new = propose_neighbor(current, objectives, rng, move)
            box = archive.box_of(new)
            box_rel, plain_rel = archive.scan(new, box)
            accepted = False
            if REL_SAME_BOX in box_rel:
                if REL_NEW_DOMINATES in plain_rel:
                    archive.update(new)
                    current, accepted = new, True
                else:
                    current, accepted = _action(new, current, archive, plain_rel,
                                                ranges, temperature, rng)
            elif REL_NEW_DOMINATES in box_rel:
                archive.update(new)
                current, accepted = new, True
            elif REL_MEMBER_DOMINATES in box_rel:
                current, accepted = _action(new, current, archive, plain_rel,
                                            ranges, temperature, rng)
            else:
                archive.update(new)
                current, accepted = new, True
            if trace is not None:
                trace.record(it, temperature, len(archive), accepted)
            if callback is not None:
                callback(it, archive)
            it += 1
    return archive


def _action(new, current, archive, plain_rel, ranges, temperature, rng):
    dominators = np.flatnonzero(plain_rel == REL_MEMBER_DOMINATES)
    if dominators.size == 0:
        return new, True
    dom = kernels.domination_amounts(archive._F[dominators], new.objectives, ranges)
    if kernels.pareto_dominates(current.objectives, new.objectives):
        # re-seed from the dominator closest to the new solution
        sel = int(np.argmin(dom))
        if reseed_probability(float(dom[sel]), temperature) > rng.random() * rng.random():
            return archive._members[int(dominators[sel])], False
    if _sa_accept(dom, temperature, rng):
        return new, True
    return current, False


def export_archive_csv(archive: Archive, path, labels=None) -> None:
    """Rows of ``(segment, severity, J_1..J_l)``."""
    labels = labels or [str(i + 1) for i in range(archive.n_objectives)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["segment", "severity"] + [f"J_{lab}" for lab in labels])
        for m in archive:
            w.writerow([m.segment, repr(float(m.severity))] + [repr(float(v)) for v in m.objectives])


def read_archive_csv(path) -> list[tuple[int, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [(int(r["segment"]), float(r["severity"])) for r in reader]
