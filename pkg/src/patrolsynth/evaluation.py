"""Exact and empirical protection levels of product-form strategies.

A strategy is *product form* when the vertices visited in different rounds
are independent given the round index. For such strategies an attacker who
watches the patrollers learns nothing beyond the phase, so the worst attack
is found by enumerating (vertex, start phase) pairs and multiplying the
per-round survival factors over the attack window.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bounds import protection_upper_bound
from .model import GameStructure, PatrolError, damage
from .synthesis import ModularStrategy, NaiveStrategy, SystematicSampler

DEFAULT_TRIALS = 100_000
# profiles of sets with at most this many (vertex, phase) cells are evaluated for every vertex
FULL_PROFILE_CELLS = 200_000


class NonProductStrategy(PatrolError):
    pass


class WindowTooLarge(PatrolError):
    pass


class DegenerateLevel(PatrolError):
    pass


@dataclass(frozen=True)
class VisitProfile:
    attack_length: int
    cost: float
    vertices: np.ndarray  # vertex indices within the set
    probs: np.ndarray  # shape (len(vertices), attack_length); probs[i, phase]


@dataclass(frozen=True)
class ProtectionReport:
    level: float
    worst_attack: tuple  # (record label, vertex index, start phase)
    upper_bound: float
    relative_deviation: float

    @property
    def absolute_gap(self) -> float:
        return self.upper_bound - self.level


def _circular_column(q, D, n, vertex):
    """Visit probability of ``vertex`` with ``n`` tokens, for every phase of the circular part."""
    phases = np.arange((D // q) * q)
    return (((vertex - phases) % q) < n).astype(float)


def schedule_profile(q: int, D: int, E: float, vertices=None) -> np.ndarray:
    """Per-phase visit probabilities in a basic set receiving ``K`` or ``K + 1`` patrollers."""
    K = math.floor(E)
    lam = E - K
    if vertices is None:
        vertices = np.arange(q)
    vertices = np.atleast_1d(vertices)
    out = np.empty((len(vertices), D))
    circ = (D // q) * q
    for row, v in enumerate(vertices):
        col = (1 - lam) * _circular_column(q, D, K, v)
        if lam > 0:
            col = col + lam * _circular_column(q, D, K + 1, v)
        out[row, :circ] = col
        out[row, circ:] = E / q
    return out


def _require_product(strategy):
    if not getattr(strategy, "product_form", False):
        raise NonProductStrategy(f"{type(strategy).__name__} has no round-independence guarantee")


def visit_profile(strategy, record: int, vertices=None) -> VisitProfile:
    """Marginal visit probabilities for one record of ``strategy`` (modular or naive)."""
    _require_product(strategy)
    if isinstance(strategy, NaiveStrategy):
        g = strategy.gs.groups[record]
        probs = np.full((1, g.attack_length), strategy.rates[record])
        return VisitProfile(g.attack_length, g.cost, np.array([0]), probs)
    sa = strategy.sets[record]
    bs = sa.basic_set
    if vertices is None:
        vertices = np.arange(bs.size) if bs.size * bs.attack_length <= FULL_PROFILE_CELLS else np.array([0])
    probs = schedule_profile(bs.size, bs.attack_length, sa.E, vertices)
    return VisitProfile(bs.attack_length, bs.cost, np.atleast_1d(vertices), probs)


def window_damages(profile: VisitProfile, p: float) -> np.ndarray:
    """Expected damage for each (vertex row, start phase) of a profile.

    Entry ``[i, j]`` is ``cost * prod_{t < D} (1 - p * probs[i, (j + t) % D])``.
    """
    D = profile.attack_length
    factors = 1.0 - p * profile.probs
    zero = factors <= 0.0
    logs = np.where(zero, 0.0, np.log(np.where(zero, 1.0, factors)))
    # doubled arrays give every cyclic window of length D as a difference of prefix sums
    logs2 = np.concatenate([logs, logs], axis=1)
    zero2 = np.concatenate([zero, zero], axis=1).astype(np.int64)
    csum = np.concatenate([np.zeros((logs.shape[0], 1)), np.cumsum(logs2, axis=1)], axis=1)
    zsum = np.concatenate([np.zeros((logs.shape[0], 1), dtype=np.int64), np.cumsum(zero2, axis=1)], axis=1)
    win_log = csum[:, D:2 * D] - csum[:, :D]
    win_zero = zsum[:, D:2 * D] - zsum[:, :D]
    return np.where(win_zero > 0, 0.0, profile.cost * np.exp(win_log))


def product_window_damage(profile: VisitProfile, p: float, row: int, phase: int) -> float:
    """Direct product over one attack window; reference for :func:`window_damages`."""
    D = profile.attack_length
    out = float(profile.cost)
    for t in range(D):
        out *= 1.0 - p * profile.probs[row, (phase + t) % D]
    return out


def _records(strategy):
    if isinstance(strategy, NaiveStrategy):
        return [(i, f"group(D={g.attack_length},cost={g.cost})") for i, g in enumerate(strategy.gs.groups)]
    return [
        (i, f"set(D={s.basic_set.attack_length},cost={s.basic_set.cost},q={s.basic_set.size})")
        for i, s in enumerate(strategy.sets)
    ]


def _uncovered(strategy, gs: GameStructure):
    """Groups of ``gs`` with vertices the strategy never visits, as ``(label, cost)``."""
    if isinstance(strategy, NaiveStrategy):
        return [
            (f"group(D={g.attack_length},cost={g.cost})", g.cost)
            for g, r in zip(strategy.gs.groups, strategy.rates) if r <= 0
        ]
    covered: dict[tuple[int, int], int] = {}
    for s in strategy.sets:
        key = (s.basic_set.attack_length, s.basic_set.cost)
        covered[key] = covered.get(key, 0) + s.basic_set.size * s.basic_set.multiplicity
    out = []
    for g in gs.groups:
        if covered.get((g.attack_length, g.cost), 0) < g.count:
            out.append((f"unvisited(D={g.attack_length},cost={g.cost})", g.cost))
    return out


def worst_attack(strategy, gs: GameStructure, workers: int = 1):
    """Largest expected damage over all (record, vertex, start phase) and where it occurs."""
    _require_product(strategy)
    p = gs.detection_prob
    worst = (-1.0, None)
    for label, cost in _uncovered(strategy, gs):
        if cost > worst[0]:
            worst = (float(cost), (label, 0, 0))

    def one(item):
        idx, label = item
        prof = visit_profile(strategy, idx)
        dmg = window_damages(prof, p)
        row, phase = np.unravel_index(np.argmax(dmg), dmg.shape)
        return float(dmg[row, phase]), (label, int(prof.vertices[row]), int(phase))

    records = _records(strategy)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, records))
    else:
        results = [one(r) for r in records]
    for res in results:
        if res[0] > worst[0]:
            worst = res
    return worst


def relative_deviation(level: float, bound: float) -> float:
    """Relative gap of ``level`` below ``bound`` (an upper estimate of the true deviation)."""
    if level <= 0:
        raise DegenerateLevel(f"relative deviation undefined for level {level}")
    return (bound - level) / level


def best_response_level(strategy, gs: GameStructure, k: int | None = None, workers: int = 1) -> ProtectionReport:
    """Exact protection level of a product-form strategy against a best-responding attacker."""
    dmg, where = worst_attack(strategy, gs, workers)
    level = gs.alpha_max - dmg
    k = strategy.k if k is None else k
    bound = protection_upper_bound(gs, k).rho
    dev = relative_deviation(level, bound) if level > 0 else math.inf
    return ProtectionReport(level, where, bound, dev)


def level(strategy, gs: GameStructure) -> float:
    return gs.alpha_max - worst_attack(strategy, gs)[0]


# ---------------------------------------------------------------------------
# Markov (positional) strategies: used for the history-aware baselines


def markov_level(states, transition, initial, costs, attack_lengths, p: float) -> float:
    """Protection level of a positional strategy given as a Markov chain over visited sets.

    ``states`` are frozensets of vertex indices, ``transition[i][j]`` the
    probability of moving from state ``i`` to ``j`` and ``initial`` the
    distribution of the first round. The attacker sees the current state and
    may also strike before the first round.
    """
    P = np.asarray(transition, dtype=float)
    init = np.asarray(initial, dtype=float)
    n_states = len(states)
    reach = init > 0
    frontier = reach.copy()
    while frontier.any():
        nxt = (P[frontier].sum(axis=0) > 0) & ~reach
        reach |= nxt
        frontier = nxt
    worst = 0.0
    for v, (cost, D) in enumerate(zip(costs, attack_lengths)):
        keep = np.array([1.0 - p if v in s else 1.0 for s in states])
        # survive[s]: chance of D - 1 further rounds without detection starting in state s
        survive = np.ones(n_states)
        for _ in range(D - 1):
            survive = P @ (keep * survive)
        after_state = P @ (keep * survive)
        before_start = init @ (keep * survive)
        worst = max(worst, cost * after_state[reach].max(), cost * before_start)
    return max(costs) - worst


# ---------------------------------------------------------------------------
# Brute-force oracle


def brute_force_window_damage(strategy: ModularStrategy, record: int, vertex: int, phase: int,
                              p: float | None = None) -> float:
    """Exact expected damage by enumerating every realization of one attack window.

    Each round draws ``K`` or ``K + 1`` patrollers for the set and, in tail
    phases, a uniformly random subset of that size.
    """
    sa = strategy.sets[record]
    bs = sa.basic_set
    q, D = bs.size, bs.attack_length
    if q > 4 or D > 6:
        raise WindowTooLarge(f"enumeration limited to q <= 4 and D <= 6, got q={q}, D={D}")
    p = strategy.assignment.detection_prob if p is None else p
    K, lam = sa.K, sa.lam
    counts = [(K, 1.0 - lam)] + ([(K + 1, lam)] if lam > 0 else [])
    circ = (D // q) * q
    per_round = []
    for t in range(D):
        ph = (phase + t) % D
        outcomes = []
        for n, pn in counts:
            if ph < circ:
                visited = {(ph + i) % q for i in range(n)}
                outcomes.append((pn, vertex in visited))
            else:
                subsets = list(itertools.combinations(range(q), n))
                for sub in subsets:
                    outcomes.append((pn / len(subsets), vertex in sub))
        per_round.append(outcomes)
    total = 0.0
    for realization in itertools.product(*per_round):
        prob = 1.0
        c = 0
        for pr, hit in realization:
            prob *= pr
            c += hit
        total += prob * damage(p, bs.cost, c)
    return total


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class SimulationResult:
    mean: float
    stderr: float
    trials: int
    exact: float | None = None

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr)


def _visit_counts_modular(strategy, sampler, record, instance, vertex, phase, n_trials, rng):
    bs = strategy.sets[record].basic_set
    K = strategy.sets[record].K
    q, D = bs.size, bs.attack_length
    circ = bs.circular_phases
    phases = (phase + np.arange(D)) % D
    offsets = rng.random((n_trials, D))
    n = K + sampler.extra_for(record, instance, offsets).astype(np.int64)
    in_circle = phases < circ
    circular_hit = ((vertex - phases) % q) < n
    tail_hit = rng.random((n_trials, D)) < n / q
    visits = np.where(in_circle, circular_hit, tail_hit)
    return visits.sum(axis=1)


def _visit_counts_naive(strategy, record, n_trials, rng):
    g = strategy.gs.groups[record]
    return (rng.random((n_trials, g.attack_length)) < strategy.rates[record]).sum(axis=1)


def simulate(strategy, attack, gs: GameStructure, trials: int = DEFAULT_TRIALS, seed: int = 0,
             workers: int = 1, chunk_cells: int = 4_000_000) -> SimulationResult:
    """Monte Carlo estimate of the expected damage of one attacker strategy.

    ``attack`` is ``None`` for an attacker who never strikes, otherwise
    ``(record, vertex, start_phase)`` or ``(record, vertex, start_phase, instance)``.
    Each chunk of trials draws from its own child of ``SeedSequence(seed)``,
    so results depend only on the seed and ``chunk_cells``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if attack is None:
        return SimulationResult(0.0, 0.0, trials, 0.0)
    _require_product(strategy)
    record, vertex, phase, *rest = attack
    instance = rest[0] if rest else 0
    p = gs.detection_prob
    if isinstance(strategy, NaiveStrategy):
        D = strategy.gs.groups[record].attack_length
        cost = strategy.gs.groups[record].cost
        sampler = None
    else:
        D = strategy.sets[record].basic_set.attack_length
        cost = strategy.sets[record].basic_set.cost
        sampler = SystematicSampler(strategy.assignment)
    per_chunk = max(1, chunk_cells // D)
    sizes = [per_chunk] * (trials // per_chunk) + ([trials % per_chunk] if trials % per_chunk else [])
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(args):
        size, ss = args
        rng = np.random.default_rng(ss)
        if sampler is None:
            c = _visit_counts_naive(strategy, record, size, rng)
        else:
            c = _visit_counts_modular(strategy, sampler, record, instance, vertex, phase, size, rng)
        dmg = np.where(c == 0, float(cost), cost * (1.0 - p) ** c)
        return dmg.sum(), (dmg * dmg).sum()

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, zip(sizes, streams)))
    else:
        parts = [run(a) for a in zip(sizes, streams)]
    s1 = sum(a for a, _ in parts)
    s2 = sum(b for _, b in parts)
    mean = s1 / trials
    var = max(0.0, s2 / trials - mean * mean) * trials / max(1, trials - 1)
    prof = visit_profile(strategy, record, vertices=np.array([vertex]))
    exact = product_window_damage(prof, p, 0, phase)
    return SimulationResult(mean, math.sqrt(var / trials), trials, exact)
