"""Comparisons and parameter sweeps behind the CLI."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .bounds import max_bounded_rho, min_patrollers
from .evaluation import best_response_level, level
from .model import GameStructure, Infeasible
from .synthesis import naive_strategy, synthesize

LEVEL_TOL = 1e-9  # relative to alpha_max, when testing level >= target


@dataclass(frozen=True)
class Comparison:
    k: int
    bound: float
    level_eta: float
    level_sigma: float

    @property
    def gap_eta(self) -> float:
        return self.bound - self.level_eta

    @property
    def gap_sigma(self) -> float:
        return self.bound - self.level_sigma


def compare(gs: GameStructure, k: int) -> Comparison:
    eta = synthesize(gs, k)
    sigma = naive_strategy(gs, k)
    report = best_response_level(eta, gs)
    return Comparison(k, report.upper_bound, report.level, level(sigma, gs))


def eta_level(gs: GameStructure, k: int) -> float:
    return level(synthesize(gs, k), gs)


def sigma_level(gs: GameStructure, k: int) -> float:
    return level(naive_strategy(gs, k), gs)


def smallest_k(level_of, target: float, gs: GameStructure, start: int = 1) -> int:
    """Smallest ``k >= start`` with ``level_of(gs, k) >= target``, by galloping then bisection."""
    if target <= 0:
        return 0
    n = gs.n_vertices
    slack = LEVEL_TOL * gs.alpha_max

    def ok(k):
        return level_of(gs, k) >= target - slack

    lo = max(1, start)
    if ok(lo):
        return lo
    step = 1
    hi = lo + step
    while hi < n and not ok(hi):
        lo = hi
        step *= 2
        hi = lo + step
    hi = min(hi, n)
    if not ok(hi):
        raise Infeasible(f"protection {target} unreachable with {n} patrollers")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class PatrollerCounts:
    protection: float
    k_bound: int
    k_eta: int
    k_sigma: int


def patrollers(gs: GameStructure, protection: float) -> PatrollerCounts:
    """Patrollers needed for ``protection``: lower bound, synthesized and naive strategies."""
    if protection > max_bounded_rho(gs) * (1 + LEVEL_TOL):
        raise Infeasible(f"protection {protection} unreachable for any number of patrollers")
    kb = min_patrollers(gs, protection)
    if kb == 0:
        return PatrollerCounts(protection, 0, 0, 0)
    ke = smallest_k(eta_level, protection, gs, kb)
    ks = smallest_k(sigma_level, protection, gs, kb)
    return PatrollerCounts(protection, kb, ke, ks)


def grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive arithmetic grid with ``floor((stop - start) / step) + 1`` points."""
    if step <= 0:
        raise ValueError("step must be positive")
    if stop < start:
        raise ValueError("stop must not be below start")
    n = math.floor((stop - start) / step + 1e-9) + 1
    return [round(start + i * step, 10) for i in range(n)]


SCALE_COLUMNS = ("x", "bound", "level_eta", "level_sigma")
PROTECTION_COLUMNS = ("protection", "k_bound", "k_eta", "k_sigma")


def _scale_row(args):
    gs, x, k = args
    c = compare(gs.scaled(x), k)
    return (x, c.bound, c.level_eta, c.level_sigma)


def _protection_row(args):
    gs, tau = args
    r = patrollers(gs, tau)
    return (tau, r.k_bound, r.k_eta, r.k_sigma)


def _run(fn, jobs, workers):
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def scale_sweep(gs: GameStructure, xs, k: int, workers: int = 1) -> list[tuple]:
    """Rows ``(x, bound, level_eta, level_sigma)`` with group counts scaled by ``x``."""
    return _run(_scale_row, [(gs, x, k) for x in xs], workers)


def protection_sweep(gs: GameStructure, targets, workers: int = 1) -> list[tuple]:
    """Rows ``(protection, k_bound, k_eta, k_sigma)``."""
    return _run(_protection_row, [(gs, t) for t in targets], workers)


# defaults reproducing the two surveillance experiments
SURVEILLANCE_PATROLLERS = 6000
SURVEILLANCE_SCALE = (1.0, 3.0, 0.01)
SURVEILLANCE_PROTECTION = (1000.0, 270000.0, 1000.0)
