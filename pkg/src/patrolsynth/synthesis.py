"""Modular strategy synthesis by decomposition into basic sets.

Vertices of equal attack length ``D`` and cost are cut into basic sets of at
most ``D`` vertices. Each basic set runs a circular-token schedule for the
number of patrollers it receives in a round, and a two-valued assignment
(``K`` or ``K + 1`` patrollers, the latter with probability ``lambda``) spreads
the ``k`` patrollers so that all retained sets are protected equally.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import GameStructure, PatrolError, check_patrollers


class InfeasiblePatrollerCount(PatrolError):
    pass


@dataclass(frozen=True, order=True)
class BasicSet:
    attack_length: int
    cost: int
    size: int
    multiplicity: int = 1

    def __post_init__(self):
        if not 1 <= self.size <= self.attack_length:
            raise ValueError(f"basic set size {self.size} outside [1, {self.attack_length}]")
        if self.multiplicity < 1:
            raise ValueError("multiplicity must be positive")

    @property
    def circular_phases(self) -> int:
        return (self.attack_length // self.size) * self.size


def decompose(gs: GameStructure) -> list[BasicSet]:
    sets = []
    for g in gs.groups:
        full, rest = divmod(g.count, g.attack_length)
        if full:
            sets.append(BasicSet(g.attack_length, g.cost, g.attack_length, full))
        if rest:
            sets.append(BasicSet(g.attack_length, g.cost, rest, 1))
    return sets


def basic_set_visit_schedule(q: int, D: int, n: int, phase: int) -> np.ndarray:
    """Visit probability of each of the ``q`` vertices at ``phase`` with ``n`` patrollers."""
    if not 0 <= n <= q <= D:
        raise ValueError(f"need 0 <= n <= q <= D, got n={n}, q={q}, D={D}")
    phase %= D
    probs = np.zeros(q)
    if phase < (D // q) * q:
        probs[(phase + np.arange(n)) % q] = 1.0
    else:
        probs[:] = n / q
    return probs


# ---------------------------------------------------------------------------
# Expression for the protection of a basic set with E expected patrollers


def _log_factor(base: float, exponent: float) -> float:
    """``exponent * log(base)`` with ``0 ** 0 == 1``."""
    if exponent == 0:
        return 0.0
    if base <= 0.0:
        return -math.inf
    return exponent * math.log(base)


def log_set_damage(E: float, size: int, attack_length: int, cost: float, p: float) -> float:
    """Log of the worst expected damage inside a basic set receiving ``E`` patrollers on average.

    For ``E < 0`` the first segment is continued analytically; the value is
    only used to detect sets that need no patrollers at all.
    """
    a, b = divmod(attack_length, size)
    if E < 0:
        return math.log(cost) + _log_factor(1 - p * E, a) + _log_factor(1 - p * E / size, b)
    K = math.floor(E)
    lam = E - K
    if K > size or (K == size and lam > 0):
        raise ValueError(f"E={E} exceeds set size {size}")
    return (
        math.log(cost)
        + _log_factor(1 - p, K * a)
        + _log_factor(1 - p * lam, a)
        + _log_factor(1 - p * E / size, b)
    )


def set_damage(E: float, size: int, attack_length: int, cost: float, p: float) -> float:
    """Worst expected damage in a basic set receiving ``E`` patrollers on average."""
    a, b = divmod(attack_length, size)
    if E < 0:
        return cost * (1 - p * E) ** a * (1 - p * E / size) ** b
    K = math.floor(E)
    lam = E - K
    # Python evaluates 0.0 ** 0 as 1.0
    return cost * (1 - p) ** (K * a) * (1 - p * lam) ** a * (1 - p * E / size) ** b


def set_protection(E, size, attack_length, cost, p, alpha_max) -> float:
    return alpha_max - set_damage(E, size, attack_length, cost, p)


def invert_set_damage(target: float, size: int, attack_length: int, cost: float, p: float) -> tuple[float, bool]:
    """Smallest ``E`` whose set damage is at most ``target``.

    Returns ``(E, feasible)``. ``E`` is negative when the set beats ``target``
    without patrollers; an unreachable target yields ``(size, False)``.
    """
    a, b = divmod(attack_length, size)
    if target >= cost:
        ratio = target / cost
        if b == 0:
            return (1.0 - ratio ** (1.0 / a)) / p, True
        log_t = math.log(target)
        f = lambda e: log_set_damage(e, size, attack_length, cost, p) - log_t
        lo = -1.0
        while f(lo) < 0:
            lo *= 2.0
        return brentq(f, lo, 0.0, xtol=1e-15, rtol=4 * np.finfo(float).eps), True
    if target <= 0.0:
        if p >= 1.0:
            return 1.0, True
        return float(size), False
    log_t = math.log(target)
    if log_set_damage(float(size), size, attack_length, cost, p) > log_t + 1e-12:
        return float(size), False
    # largest K with damage(K) >= target
    lo_k, hi_k = 0, size
    while hi_k - lo_k > 1:
        mid = (lo_k + hi_k) // 2
        if log_set_damage(float(mid), size, attack_length, cost, p) >= log_t:
            lo_k = mid
        else:
            hi_k = mid
    K = lo_k
    # remaining log-damage budget for the fractional patroller
    rest = log_t - math.log(cost) - _log_factor(1 - p, K * a)
    if b == 0:
        lam = (1.0 - math.exp(rest / a)) / p
        return K + min(max(lam, 0.0), 1.0), True

    def g(lam):
        val = _log_factor(1 - p * lam, a) + _log_factor(1 - p * (K + lam) / size, b) - rest
        return max(val, -1e300)

    if g(1.0) >= 0:
        return K + 1.0, True
    # target within rounding of the segment start
    if g(0.0) <= 0:
        return float(K), True
    return K + brentq(g, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps), True


# ---------------------------------------------------------------------------
# Assignment


@dataclass(frozen=True)
class SetAssignment:
    basic_set: BasicSet
    E: float

    @property
    def K(self) -> int:
        return math.floor(self.E)

    @property
    def lam(self) -> float:
        return self.E - math.floor(self.E)


@dataclass(frozen=True)
class Assignment:
    sets: tuple[SetAssignment, ...]
    common_protection: float
    alpha_max: float
    detection_prob: float
    k: int
    removed_sets: tuple[BasicSet, ...] = ()
    saturated: bool = False
    # removed sets whose unvisited protection ends below the common level
    flagged_removals: tuple[BasicSet, ...] = ()

    @property
    def total(self) -> float:
        return sum(s.basic_set.multiplicity * s.E for s in self.sets)

    def protections(self) -> list[float]:
        return [
            set_protection(s.E, s.basic_set.size, s.basic_set.attack_length, s.basic_set.cost,
                           self.detection_prob, self.alpha_max)
            for s in self.sets
        ]


def max_common_protection(sets, p, alpha_max) -> float:
    worst = max(set_damage(float(s.size), s.size, s.attack_length, s.cost, p) for s in sets)
    return alpha_max - worst


def _solve_active(sets, k, p, alpha_max, tol):
    """Common protection and per-set ``E`` with ``sum(mult * E) == k`` (negative ``E`` counted)."""

    def expected(rho):
        return [invert_set_damage(alpha_max - rho, s.size, s.attack_length, s.cost, p)[0] for s in sets]

    def excess(rho):
        return sum(s.multiplicity * e for s, e in zip(sets, expected(rho))) - k

    hi = max_common_protection(sets, p, alpha_max)
    if excess(hi) <= 0:
        return hi, expected(hi), True
    lo = 0.0
    if excess(lo) >= 0:
        # k small enough that nobody needs visits; cannot happen for k >= 1
        return lo, expected(lo), False
    # solve for the damage target with relative precision: near full protection the
    # patroller counts are steep in the target and an absolute tolerance on rho is too coarse
    target = brentq(lambda t: excess(alpha_max - t), alpha_max - hi, alpha_max - lo,
                    xtol=1e-300, rtol=max(tol, 4 * np.finfo(float).eps), maxiter=500)
    rho = alpha_max - target
    return rho, [invert_set_damage(target, s.size, s.attack_length, s.cost, p)[0] for s in sets], False


def _fill(sets, es, k):
    """Spread patrollers left over at maximal protection proportionally to spare capacity."""
    base = [max(e, 0.0) for e in es]
    used = sum(s.multiplicity * e for s, e in zip(sets, base))
    spare = sum(s.multiplicity * (s.size - e) for s, e in zip(sets, base))
    if k > used + spare * (1 + 1e-12):
        raise InfeasiblePatrollerCount(f"{k} patrollers exceed {used + spare:.0f} available vertices")
    theta = 0.0 if spare == 0 else min(1.0, (k - used) / spare)
    return [e + theta * (s.size - e) for s, e in zip(sets, base)]


def solve_assignment(basic_sets, k: int, p: float, alpha_max: float, tol: float = 1e-13) -> Assignment:
    """Equal-protection assignment of ``k`` patrollers to ``basic_sets``.

    Sets that would need a non-positive number of patrollers are dropped and
    the system is solved again until every retained set gets ``E > 0``.
    ``tol`` is the relative precision of the common damage target.
    """
    capacity = sum(s.size * s.multiplicity for s in basic_sets)
    if k > capacity:
        raise InfeasiblePatrollerCount(f"{k} patrollers exceed {capacity} vertices")
    active = list(basic_sets)
    removed: list[BasicSet] = []
    while True:
        rho, es, saturated = _solve_active(active, k, p, alpha_max, tol)
        dropped = [s for s, e in zip(active, es) if e <= 0]
        kept = [s for s, e in zip(active, es) if e > 0]
        # the remaining sets must still be able to absorb every patroller
        if dropped and sum(s.size * s.multiplicity for s in kept) >= k:
            removed.extend(dropped)
            active = kept
            continue
        if saturated:
            es = _fill(active, es, k)
            removed.extend(s for s, e in zip(active, es) if e <= 0)
            active, es = map(list, zip(*[(s, e) for s, e in zip(active, es) if e > 0]))
        break
    flagged = tuple(s for s in removed if alpha_max - s.cost < rho - tol * alpha_max)
    if flagged:
        warnings.warn(f"{len(flagged)} removed basic set(s) end below the common protection", stacklevel=2)
    return Assignment(
        sets=tuple(SetAssignment(s, e) for s, e in zip(active, es)),
        common_protection=rho,
        alpha_max=float(alpha_max),
        detection_prob=p,
        k=k,
        removed_sets=tuple(removed),
        saturated=saturated,
        flagged_removals=flagged,
    )


# ---------------------------------------------------------------------------
# Allocation sampling


def interval_order(sets) -> list[int]:
    """Deterministic order in which set instances are laid on the sampling circle."""
    return sorted(range(len(sets)), key=lambda i: (-sets[i].E, sets[i].basic_set.attack_length,
                                                   sets[i].basic_set.cost, sets[i].basic_set.size))


@dataclass(frozen=True)
class AllocationSample:
    # per retained record, patroller count of each instance
    counts: tuple[np.ndarray, ...]

    @property
    def total(self) -> int:
        return int(sum(c.sum() for c in self.counts))


class SystematicSampler:
    """Systematic sampling over the fractional parts of an assignment.

    Instance intervals of length ``lambda`` are laid end to end on a circle
    of integer circumference; one uniform offset picks exactly that many
    instances, each with probability equal to its ``lambda``.
    """

    def __init__(self, assignment: Assignment):
        self.assignment = assignment
        sets = assignment.sets
        self.order = interval_order(sets)
        base = sum(s.basic_set.multiplicity * s.K for s in sets)
        self.extra = assignment.k - base
        raw = sum(s.basic_set.multiplicity * s.lam for s in sets)
        if abs(raw - self.extra) > 1e-6 * max(1, assignment.k):
            raise ValueError(f"fractional parts sum to {raw}, expected {self.extra}")
        scale = self.extra / raw if raw > 0 else 0.0
        self.starts = np.zeros(len(sets))
        self.widths = np.zeros(len(sets))
        pos = 0.0
        for i in self.order:
            s = sets[i]
            self.starts[i] = pos
            self.widths[i] = s.lam * scale
            pos += s.basic_set.multiplicity * self.widths[i]

    def _hits(self, i, offset, instances):
        start = self.starts[i] + instances * self.widths[i]
        end = start + self.widths[i]
        if self.widths[i] == 0:
            return np.zeros(np.broadcast(offset, instances).shape)
        return np.ceil(end - offset) - np.ceil(start - offset)

    def extra_for(self, i: int, instance: int, offset):
        """Whether instance ``instance`` of record ``i`` gets the extra patroller for ``offset``."""
        return self._hits(i, np.asarray(offset, dtype=float), np.asarray(instance, dtype=float)) > 0

    def sample(self, rng: np.random.Generator) -> AllocationSample:
        return self.allocation(rng.random())

    def allocation(self, offset: float) -> AllocationSample:
        counts = []
        for i, s in enumerate(self.assignment.sets):
            inst = np.arange(s.basic_set.multiplicity, dtype=float)
            counts.append((s.K + self._hits(i, offset, inst)).astype(np.int64))
        return AllocationSample(tuple(counts))

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` independent allocations as an ``(n, instances)`` array, records in assignment order."""
        offsets = rng.random(n)[:, None]
        cols = []
        for i, s in enumerate(self.assignment.sets):
            inst = np.arange(s.basic_set.multiplicity, dtype=float)[None, :]
            cols.append(s.K + self._hits(i, offsets, inst).astype(np.int64))
        return np.concatenate(cols, axis=1)


def sample_allocation(assignment: Assignment, rng: np.random.Generator, round_index: int = 0) -> AllocationSample:
    """One eligible allocation; draws are independent of the round index."""
    return SystematicSampler(assignment).sample(rng)


# ---------------------------------------------------------------------------
# Composed strategy


@dataclass(frozen=True)
class ModularStrategy:
    assignment: Assignment
    seed: int | None = None

    @property
    def sets(self) -> tuple[SetAssignment, ...]:
        return self.assignment.sets

    @property
    def period(self) -> int:
        return math.lcm(*(s.basic_set.attack_length for s in self.sets)) if self.sets else 1

    @property
    def k(self) -> int:
        return self.assignment.k

    product_form = True

    def sampler(self) -> SystematicSampler:
        return SystematicSampler(self.assignment)

    def draw_round(self, ell: int, rng: np.random.Generator, sampler: SystematicSampler | None = None):
        """Visited vertices in round ``ell`` as ``(record, instance, vertex)`` triples."""
        sampler = sampler or self.sampler()
        alloc = sampler.sample(rng)
        visited = []
        for r, (s, counts) in enumerate(zip(self.sets, alloc.counts)):
            bs = s.basic_set
            phase = ell % bs.attack_length
            for inst, n in enumerate(counts):
                n = int(n)
                if phase < bs.circular_phases:
                    idx = (phase + np.arange(n)) % bs.size
                else:
                    idx = rng.choice(bs.size, size=n, replace=False)
                visited.extend((r, inst, int(j)) for j in np.sort(idx))
        return visited


def compose(basic_sets, assignment: Assignment, seed: int | None = None) -> ModularStrategy:
    retained = {s.basic_set for s in assignment.sets}
    unknown = retained - set(basic_sets)
    if unknown:
        raise ValueError(f"assignment refers to sets outside the decomposition: {sorted(unknown)}")
    return ModularStrategy(assignment, seed)


def synthesize(gs: GameStructure, k: int, seed: int | None = None) -> ModularStrategy:
    """Decompose, assign and compose in one call."""
    k = check_patrollers(gs, k)
    sets = decompose(gs)
    assignment = solve_assignment(sets, k, gs.detection_prob, float(gs.alpha_max))
    return compose(sets, assignment, seed)


# ---------------------------------------------------------------------------
# Naive baseline


@dataclass(frozen=True)
class NaiveStrategy:
    """Round-independent strategy visiting each vertex of a group with a fixed probability."""

    gs: GameStructure
    k: int
    rates: tuple[float, ...]  # per group, in GameStructure order
    common_damage: float

    product_form = True

    @property
    def level(self) -> float:
        return self.gs.alpha_max - self.common_damage


def _naive_rate(target, cost, D, p):
    if target >= cost:
        return 0.0
    if target <= 0:
        return 1.0
    return min(1.0, (1.0 - (target / cost) ** (1.0 / D)) / p)


def naive_strategy(gs: GameStructure, k: int) -> NaiveStrategy:
    """Equal-protection marginals ``r_v`` with ``sum(r_v) == k``."""
    k = check_patrollers(gs, k)
    p = gs.detection_prob
    groups = gs.groups

    def rates(target):
        return [_naive_rate(target, g.cost, g.attack_length, p) for g in groups]

    def excess(target):
        return sum(g.count * r for g, r in zip(groups, rates(target))) - k

    floor_damage = max(g.cost * (1 - p) ** g.attack_length for g in groups)
    if excess(floor_damage) <= 0:
        target = floor_damage
        rs = rates(target)
        used = sum(g.count * r for g, r in zip(groups, rs))
        spare = sum(g.count * (1.0 - r) for g, r in zip(groups, rs))
        theta = 0.0 if spare == 0 else (k - used) / spare
        rs = [r + theta * (1.0 - r) for r in rs]
    else:
        # relative tolerance only: rates of long attacks are steep in the target near zero damage
        target = brentq(excess, floor_damage, float(gs.alpha_max),
                        xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        rs = rates(target)
    worst = max(g.cost * (1 - p * r) ** g.attack_length for g, r in zip(groups, rs))
    return NaiveStrategy(gs, k, tuple(rs), worst)
