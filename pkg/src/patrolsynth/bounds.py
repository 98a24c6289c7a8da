"""Upper bound on achievable protection and lower bound on patroller count.

Every vertex ``v`` gets an unknown ``Q_v`` (expected visits during one
attack window) tied to a common protection value ``rho`` by

    rho = alpha_max - cost * (1 - p) ** floor(Q) * (1 - p * frac(Q))

and the bound is the ``rho`` at which the positive ``Q_v / d(v)`` sum to ``k``.
Inversion of the per-vertex equation is closed form on each integer segment
of ``Q``; the outer equation is a monotone root find in ``alpha_max - rho``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import GameStructure, Infeasible, check_patrollers

DEFAULT_TOL = 1e-12  # relative precision of the damage target alpha_max - rho
MAX_ITER = 200


class InfeasibleTarget(Infeasible):
    def __init__(self, message: str, cap: float):
        super().__init__(message)
        self.cap = cap


def q_cap(attack_length: int, p: float) -> float:
    """Largest meaningful expected visit count in one attack window."""
    return 1.0 if p >= 1.0 else float(attack_length)


def forward_rho(cost: float, p: float, alpha_max: float, q: float) -> float:
    """Protection of a vertex expecting ``q`` visits per window (inverse of :func:`invert_vertex_q`)."""
    if q < 0 or p >= 1.0:
        return alpha_max - cost * (1.0 - p * q)
    m = math.floor(q)
    return alpha_max - cost * (1.0 - p) ** m * (1.0 - p * (q - m))


def _invert(cost, attack_length, p, alpha_max, rho):
    """Return ``(Q, feasible)``; infeasible targets come back clamped to the cap."""
    target = alpha_max - rho
    if target < 0:
        raise ValueError(f"protection {rho} exceeds alpha_max {alpha_max}")
    cap = q_cap(attack_length, p)
    ratio = target / cost
    if ratio >= 1.0:
        # over-protected without any visit; negative extension of the first segment
        return (1.0 - ratio) / p, True
    if p >= 1.0:
        return 1.0 - ratio, True
    log_keep = math.log1p(-p)
    # relative slack so that a target exactly at the cap stays feasible
    if ratio <= 0.0 or math.log(ratio) < attack_length * log_keep - 1e-12:
        return cap, False
    m = max(0, math.ceil(math.log(ratio) / log_keep) - 1)
    scaled = math.exp(math.log(ratio) - m * log_keep)
    # float noise at segment edges
    if scaled > 1.0:
        m -= 1
        scaled = math.exp(math.log(ratio) - m * log_keep)
    q = m + (1.0 - scaled) / p
    return min(q, cap), True


def invert_vertex_q(cost: float, attack_length: int, p: float, alpha_max: float, rho: float) -> float:
    """Expected visits per attack window a vertex needs to reach protection ``rho``.

    Negative results mean the vertex is protected better than ``rho`` even
    without visits. Raises :class:`InfeasibleTarget` when no ``Q`` up to the
    cap (``attack_length``, or 1 when ``p == 1``) suffices.
    """
    q, feasible = _invert(cost, attack_length, p, alpha_max, rho)
    if not feasible:
        raise InfeasibleTarget(
            f"cost {cost}, attack length {attack_length}: protection {rho} unreachable", cap=q
        )
    return q


@dataclass(frozen=True)
class BoundSolution:
    rho: float
    q_values: tuple[float, ...]  # per group, in GameStructure order
    effective_k: float
    saturated: bool = False


def _effective_k(gs: GameStructure, rho: float, amax: float) -> tuple[float, list[float]]:
    total = 0.0
    qs = []
    for g in gs.groups:
        q, _ = _invert(g.cost, g.attack_length, gs.detection_prob, amax, rho)
        qs.append(q)
        if q > 0:
            total += g.count * q / g.attack_length
    return total, qs


def max_bounded_rho(gs: GameStructure) -> float:
    """Highest protection for which every vertex stays within its visit cap."""
    amax = gs.alpha_max
    p = gs.detection_prob
    if p >= 1.0:
        return float(amax)
    worst = max(g.cost * math.exp(g.attack_length * math.log1p(-p)) for g in gs.groups)
    return amax - worst


def protection_upper_bound(gs: GameStructure, k: int, tol: float = DEFAULT_TOL) -> BoundSolution:
    """Upper bound on the protection any strategy with ``k`` patrollers achieves."""
    k = check_patrollers(gs, k)
    amax = float(gs.alpha_max)
    hi = max_bounded_rho(gs)
    eff_hi, qs_hi = _effective_k(gs, hi, amax)
    if eff_hi <= k:
        return BoundSolution(hi, tuple(qs_hi), eff_hi, saturated=eff_hi < k)
    # root in the damage target t = alpha_max - rho, to relative precision ``tol``;
    # near full protection the patroller count is steep in t
    target = brentq(lambda t: _effective_k(gs, amax - t, amax)[0] - k, amax - hi, amax,
                    xtol=1e-300, rtol=max(tol, 4 * np.finfo(float).eps), maxiter=MAX_ITER)
    rho = amax - target
    eff, qs = _effective_k(gs, rho, amax)
    return BoundSolution(rho, tuple(qs), eff)


def patrollers_lower_bound(gs: GameStructure, protection: float) -> float:
    """Real-valued sum of positive ``Q_v / d(v)`` needed for ``protection``."""
    amax = float(gs.alpha_max)
    if protection > amax:
        raise Infeasible(f"protection {protection} exceeds alpha_max {amax}")
    protection = max(0.0, float(protection))
    total = 0.0
    for g in gs.groups:
        q = invert_vertex_q(g.cost, g.attack_length, gs.detection_prob, amax, protection)
        if q > 0:
            total += g.count * q / g.attack_length
    return total


def min_patrollers(gs: GameStructure, protection: float) -> int:
    """Lower bound on the patrollers needed to reach ``protection``.

    Raises :class:`Infeasible` when the level is out of reach for any number
    of patrollers.
    """
    try:
        total = patrollers_lower_bound(gs, protection)
    except InfeasibleTarget as exc:
        raise Infeasible(str(exc)) from exc
    # absorb rounding noise so that e.g. 1.0000000002 counts as 1
    return max(0, math.ceil(total - 1e-9 * max(1.0, total)))
