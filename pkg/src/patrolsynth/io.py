"""JSON game specs and strategy files."""
from __future__ import annotations

import json
from pathlib import Path

from .model import GameStructure, ValidationError, validate
from .synthesis import Assignment, BasicSet, ModularStrategy, SetAssignment

STRATEGY_FORMAT = "patrolsynth-strategy/1"
_SPEC_KEYS = {"detection_prob", "groups", "label"}
_GROUP_KEYS = {"count", "attack_length", "cost"}

# seconds per round in the surveillance scenario
SECONDS_PER_ROUND = 0.1


def seconds_to_rounds(seconds: float, round_length: float = SECONDS_PER_ROUND) -> int:
    return int(round(seconds / round_length))


BUILTIN_SPECS = {
    "example1": {
        "label": "three equal vertices, one patroller",
        "detection_prob": 1.0,
        "groups": [{"count": 3, "attack_length": 2, "cost": 1}],
    },
    "example2": {
        "label": "six vertices in three cost classes",
        "detection_prob": 1.0,
        "groups": [
            {"count": 2, "attack_length": 2, "cost": 6},
            {"count": 2, "attack_length": 2, "cost": 3},
            {"count": 2, "attack_length": 2, "cost": 2},
        ],
    },
    "surveillance": {
        "label": "camera surveillance, 0.1 s per image, x = 1",
        "detection_prob": 0.7,
        "groups": [
            {"count": 7_000_000, "attack_length": seconds_to_rounds(20), "cost": 100_000},
            {"count": 500_000, "attack_length": seconds_to_rounds(120), "cost": 130_000},
            {"count": 300_000, "attack_length": seconds_to_rounds(900), "cost": 400_000},
        ],
    },
}


def parse_game_spec(doc: dict) -> tuple[GameStructure, str | None]:
    if not isinstance(doc, dict):
        raise ValidationError("game spec must be a JSON object")
    unknown = set(doc) - _SPEC_KEYS
    if unknown:
        raise ValidationError(f"unknown game spec field(s): {sorted(unknown)}")
    if "detection_prob" not in doc or "groups" not in doc:
        raise ValidationError("game spec needs 'detection_prob' and 'groups'")
    groups = doc["groups"]
    if not isinstance(groups, list):
        raise ValidationError("'groups' must be an array")
    for g in groups:
        if not isinstance(g, dict):
            raise ValidationError("each group must be an object")
        bad = set(g) ^ _GROUP_KEYS
        if bad:
            raise ValidationError(f"group fields must be exactly {sorted(_GROUP_KEYS)}, got {sorted(g)}")
    return validate(groups, doc["detection_prob"]), doc.get("label")


def load_game_spec(source) -> tuple[GameStructure, str | None]:
    """Read a game spec from a path, or ``builtin:<name>`` for the shipped scenarios."""
    if isinstance(source, str) and source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        if name not in BUILTIN_SPECS:
            raise ValidationError(f"unknown builtin spec {name!r}; choose from {sorted(BUILTIN_SPECS)}")
        return parse_game_spec(BUILTIN_SPECS[name])
    try:
        doc = json.loads(Path(source).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{source}: invalid JSON ({exc})") from exc
    return parse_game_spec(doc)


def game_spec_dict(gs: GameStructure, label: str | None = None) -> dict:
    doc = {
        "detection_prob": gs.detection_prob,
        "groups": [{"count": g.count, "attack_length": g.attack_length, "cost": g.cost} for g in gs.groups],
    }
    if label is not None:
        doc["label"] = label
    return doc


def _set_dict(bs: BasicSet) -> dict:
    return {"attack_length": bs.attack_length, "cost": bs.cost, "size": bs.size, "multiplicity": bs.multiplicity}


def _set_from(d: dict) -> BasicSet:
    return BasicSet(d["attack_length"], d["cost"], d["size"], d["multiplicity"])


def strategy_dict(strategy: ModularStrategy, report=None) -> dict:
    a = strategy.assignment
    doc = {
        "format": STRATEGY_FORMAT,
        "detection_prob": a.detection_prob,
        "alpha_max": a.alpha_max,
        "patrollers": a.k,
        "period": strategy.period,
        "common_protection": a.common_protection,
        "saturated": a.saturated,
        "sets": [dict(_set_dict(s.basic_set), E=s.E, K=s.K, **{"lambda": s.lam}) for s in a.sets],
        "removed_sets": [_set_dict(s) for s in a.removed_sets],
        "flagged_removals": [_set_dict(s) for s in a.flagged_removals],
        "sampler": {
            "method": "systematic",
            "interval_order": "descending E, then attack_length, cost, size; instances consecutive",
            "seed": strategy.seed,
            "streams": "numpy SeedSequence(seed).spawn(n), one child per consumer",
        },
    }
    if report is not None:
        doc["report"] = {
            "level": report.level,
            "upper_bound": report.upper_bound,
            "relative_deviation": report.relative_deviation,
            "worst_attack": list(report.worst_attack),
        }
    return doc


def strategy_from_dict(doc: dict) -> ModularStrategy:
    if doc.get("format") != STRATEGY_FORMAT:
        raise ValidationError(f"not a strategy file (format {doc.get('format')!r})")
    assignment = Assignment(
        sets=tuple(SetAssignment(_set_from(s), s["E"]) for s in doc["sets"]),
        common_protection=doc["common_protection"],
        alpha_max=doc["alpha_max"],
        detection_prob=doc["detection_prob"],
        k=doc["patrollers"],
        removed_sets=tuple(_set_from(s) for s in doc["removed_sets"]),
        saturated=doc["saturated"],
        flagged_removals=tuple(_set_from(s) for s in doc.get("flagged_removals", [])),
    )
    return ModularStrategy(assignment, doc["sampler"].get("seed"))


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def save_strategy(path, strategy: ModularStrategy, report=None) -> None:
    Path(path).write_text(dumps(strategy_dict(strategy, report)))


def load_strategy(path) -> ModularStrategy:
    try:
        return strategy_from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed strategy file ({exc})") from exc
