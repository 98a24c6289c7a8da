"""Game structures for fully connected patrolling games.

Targets are kept grouped by ``(attack_length, cost)``; nothing in the
library needs per-vertex records, and the instances of interest have tens
of millions of vertices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable


class PatrolError(Exception):
    """Base class for all library errors."""


class ValidationError(PatrolError, ValueError):
    pass


class NonPositiveParameter(ValidationError):
    pass


class InvalidProbability(ValidationError):
    pass


class TooManyPatrollers(ValidationError):
    pass


class Infeasible(PatrolError):
    """A requested protection level cannot be reached."""


@dataclass(frozen=True, order=True)
class VertexGroup:
    attack_length: int
    cost: int
    count: int

    def __post_init__(self):
        for name in ("attack_length", "cost", "count"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise NonPositiveParameter(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))


@dataclass(frozen=True)
class GameStructure:
    groups: tuple[VertexGroup, ...]
    detection_prob: float

    def __post_init__(self):
        p = self.detection_prob
        if not (isinstance(p, (int, float)) and 0.0 < p <= 1.0):
            raise InvalidProbability(f"detection probability must lie in (0, 1], got {p!r}")
        object.__setattr__(self, "detection_prob", float(p))
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.groups:
            raise NonPositiveParameter("a game structure needs at least one vertex")
        keys = [(g.attack_length, g.cost) for g in self.groups]
        if len(set(keys)) != len(keys):
            raise ValidationError("groups must have distinct (attack_length, cost) pairs")

    @property
    def n_vertices(self) -> int:
        return sum(g.count for g in self.groups)

    @property
    def alpha_max(self) -> int:
        return alpha_max(self)

    @property
    def period(self) -> int:
        """Least common multiple of all attack lengths."""
        return math.lcm(*(g.attack_length for g in self.groups))

    def scaled(self, factor: float) -> "GameStructure":
        """Counts multiplied by ``factor`` and rounded to the nearest integer (at least 1)."""
        groups = [
            VertexGroup(g.attack_length, g.cost, max(1, int(round(g.count * factor))))
            for g in self.groups
        ]
        return GameStructure(tuple(groups), self.detection_prob)


def _as_group(item) -> VertexGroup:
    if isinstance(item, VertexGroup):
        return item
    if isinstance(item, dict):
        return VertexGroup(item["attack_length"], item["cost"], item["count"])
    count, attack_length, cost = item
    return VertexGroup(attack_length, cost, count)


def validate(groups: Iterable, p: float, k: int | None = None) -> GameStructure:
    """Build a canonical :class:`GameStructure`.

    ``groups`` holds :class:`VertexGroup` objects, dicts with ``count``,
    ``attack_length`` and ``cost`` keys, or ``(count, attack_length, cost)``
    tuples. Groups sharing ``(attack_length, cost)`` are merged. When ``k`` is
    given it must satisfy ``1 <= k <= |V|``.
    """
    merged: dict[tuple[int, int], int] = {}
    for item in groups:
        g = _as_group(item)
        key = (g.attack_length, g.cost)
        merged[key] = merged.get(key, 0) + g.count
    canonical = tuple(VertexGroup(d, c, n) for (d, c), n in sorted(merged.items()))
    gs = GameStructure(canonical, p)
    if k is not None:
        check_patrollers(gs, k)
    return gs


def check_patrollers(gs: GameStructure, k: int) -> int:
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise NonPositiveParameter(f"patroller count must be a positive integer, got {k!r}")
    if k > gs.n_vertices:
        raise TooManyPatrollers(f"{k} patrollers for {gs.n_vertices} vertices")
    return int(k)


def alpha_max(gs: GameStructure) -> int:
    return max(g.cost for g in gs.groups)


def damage(p: float, cost: float, visit_count: int) -> float:
    """Expected loss of an attack that met ``visit_count`` patroller visits."""
    if visit_count < 0:
        raise ValueError("visit_count must be non-negative")
    if visit_count == 0:
        return float(cost)
    return (1.0 - p) ** visit_count * cost
