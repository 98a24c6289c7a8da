"""Command-line interface: ``patrolsynth <command> <spec> [flags]``.

Exit codes: 0 success, 2 validation error, 3 infeasible, 4 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys
from pathlib import Path

from . import experiments
from .bounds import protection_upper_bound
from .evaluation import DEFAULT_TRIALS, best_response_level, simulate
from .io import (dumps, game_spec_dict, load_game_spec, load_strategy, parse_game_spec, save_strategy,
                 strategy_dict)
from .model import Infeasible, PatrolError, ValidationError
from .synthesis import synthesize

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3, 4


def _emit(args, text: str) -> None:
    if args.output and args.command != "synthesize":
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _csv(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _render(args, fields: dict, text_lines: list[str]) -> str:
    if args.format == "json":
        return dumps(fields)
    if args.format == "csv":
        flat = {k: v for k, v in fields.items() if not isinstance(v, (list, dict))}
        return _csv(list(flat), [list(flat.values())])
    return "\n".join(text_lines) + "\n"


def cmd_bound(args) -> str:
    gs, _ = load_game_spec(args.spec)
    sol = protection_upper_bound(gs, args.patrollers, tol=args.tolerance)
    fields = {
        "patrollers": args.patrollers,
        "rho": sol.rho,
        "effective_k": sol.effective_k,
        "saturated": sol.saturated,
        "groups": [
            {"attack_length": g.attack_length, "cost": g.cost, "count": g.count, "Q": q}
            for g, q in zip(gs.groups, sol.q_values)
        ],
    }
    lines = [f"upper bound on protection with k={args.patrollers}: {sol.rho:.6f}",
             f"effective k: {sol.effective_k:.6f}" + (" (saturated)" if sol.saturated else "")]
    lines += [f"  D={g.attack_length} cost={g.cost} count={g.count}: Q={q:.6f}" for g, q in zip(gs.groups, sol.q_values)]
    return _render(args, fields, lines)


def cmd_synthesize(args) -> str:
    gs, _ = load_game_spec(args.spec)
    strategy = synthesize(gs, args.patrollers, seed=args.seed)
    report = best_response_level(strategy, gs)
    if args.output:
        save_strategy(args.output, strategy, report)
    fields = {
        "patrollers": args.patrollers,
        "level": report.level,
        "upper_bound": report.upper_bound,
        "absolute_gap": report.absolute_gap,
        "relative_deviation": report.relative_deviation,
        "worst_attack": list(report.worst_attack),
        "strategy": strategy_dict(strategy)["sets"],
        "removed_sets": len(strategy.assignment.removed_sets),
    }
    lines = [f"level of protection: {report.level:.6f}",
             f"upper bound:         {report.upper_bound:.6f}",
             f"gap: {report.absolute_gap:.6g}  relative deviation: {report.relative_deviation:.3e}",
             f"worst attack: {report.worst_attack}",
             f"period: {strategy.period}"]
    for s in strategy.sets:
        b = s.basic_set
        lines.append(f"  D={b.attack_length} cost={b.cost} q={b.size} x{b.multiplicity}: "
                     f"E={s.E:.6f} K={s.K} lambda={s.lam:.6f}")
    if strategy.assignment.removed_sets:
        lines.append(f"removed sets: {len(strategy.assignment.removed_sets)}")
    if args.output:
        lines.append(f"strategy written to {args.output}")
    return _render(args, fields, lines)


def cmd_patrollers(args) -> str:
    gs, _ = load_game_spec(args.spec)
    r = experiments.patrollers(gs, args.protection)
    fields = {"protection": r.protection, "k_bound": r.k_bound, "k_eta": r.k_eta, "k_sigma": r.k_sigma}
    lines = [f"protection {r.protection}:",
             f"  lower bound:  {r.k_bound}",
             f"  synthesized:  {r.k_eta}",
             f"  naive:        {r.k_sigma}"]
    if r.k_bound == 0:
        lines.append("  note: reached without any patroller")
    return _render(args, fields, lines)


def cmd_compare(args) -> str:
    gs, _ = load_game_spec(args.spec)
    c = experiments.compare(gs, args.patrollers)
    fields = {"patrollers": c.k, "bound": c.bound, "level_eta": c.level_eta, "level_sigma": c.level_sigma,
              "gap_eta": c.gap_eta, "gap_sigma": c.gap_sigma}
    lines = [f"k={c.k}",
             f"  bound:        {c.bound:.6f}",
             f"  synthesized:  {c.level_eta:.6f}  (gap {c.gap_eta:.6g})",
             f"  naive:        {c.level_sigma:.6f}  (gap {c.gap_sigma:.6g})"]
    return _render(args, fields, lines)


def _load_sweep(args):
    """Game plus sweep settings, from flags or a sweep file holding a ``game`` object."""
    source = args.spec
    settings = {}
    if not source.startswith("builtin:"):
        doc = json.loads(Path(source).read_text())
        if "game" in doc:
            allowed = {"game", "scale", "patrollers", "protection"}
            unknown = set(doc) - allowed
            if unknown:
                raise ValidationError(f"unknown sweep field(s): {sorted(unknown)}")
            gs, _ = parse_game_spec(doc["game"])
            settings = doc
            return gs, settings
    gs, _ = load_game_spec(source)
    return gs, settings


def cmd_sweep(args) -> str:
    gs, settings = _load_sweep(args)
    protection = args.protection_range or (
        [settings["protection"][key] for key in ("start", "stop", "step")] if "protection" in settings else None
    )
    if protection:
        targets = experiments.grid(*protection)
        rows = experiments.protection_sweep(gs, targets, workers=args.workers)
        header = experiments.PROTECTION_COLUMNS
    else:
        scale = args.scale or (
            [settings["scale"][key] for key in ("start", "stop", "step")] if "scale" in settings else None
        )
        k = args.patrollers or settings.get("patrollers")
        if scale is None or k is None:
            raise ValidationError("scale sweeps need --scale START STOP STEP and --patrollers")
        xs = experiments.grid(*scale)
        rows = experiments.scale_sweep(gs, xs, int(k), workers=args.workers)
        header = experiments.SCALE_COLUMNS
        if args.output:
            meta = {"game": game_spec_dict(gs), "patrollers": int(k), "scale": list(scale),
                    "count_rounding": "scaled counts rounded to the nearest integer, at least 1"}
            Path(str(args.output) + ".meta.json").write_text(dumps(meta))
    if args.format == "json":
        return dumps([dict(zip(header, r)) for r in rows])
    return _csv(header, rows)


def cmd_simulate(args) -> str:
    strategy = load_strategy(args.strategy)
    gs, _ = load_game_spec(args.spec)
    seed = args.seed if args.seed is not None else (strategy.seed or 0)
    attack = None if args.no_attack else (args.set, args.vertex, args.phase, args.instance)
    res = simulate(strategy, attack, gs, trials=args.trials, seed=seed, workers=args.workers)
    lo, hi = res.ci95
    fields = {"mean_damage": res.mean, "stderr": res.stderr, "ci95_low": lo, "ci95_high": hi,
              "trials": res.trials, "exact_damage": res.exact, "seed": seed,
              "empirical_level": gs.alpha_max - res.mean}
    lines = [f"mean damage {res.mean:.6f} +- {1.96 * res.stderr:.6f} (95% CI, {res.trials} trials, seed {seed})",
             f"exact damage {res.exact:.6f}",
             f"empirical level {gs.alpha_max - res.mean:.6f}"]
    return _render(args, fields, lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patrolsynth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec_help="game spec JSON file or builtin:<name>"):
        p.add_argument("spec", help=spec_help)
        p.add_argument("--format", choices=("text", "json", "csv"), default="text")
        p.add_argument("--output", "-o")
        p.add_argument("--tolerance", type=float, default=1e-12)
        return p

    p = common(sub.add_parser("bound", help="upper bound on protection for k patrollers"))
    p.add_argument("--patrollers", "-k", type=int, required=True)

    p = common(sub.add_parser("synthesize", help="build a modular strategy"))
    p.add_argument("--patrollers", "-k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)

    p = common(sub.add_parser("patrollers", help="patrollers needed for a protection level"))
    p.add_argument("--protection", type=float, required=True)

    p = common(sub.add_parser("compare", help="synthesized vs naive vs bound"))
    p.add_argument("--patrollers", "-k", type=int, required=True)

    p = common(sub.add_parser("sweep", help="scale or protection sweep to CSV"),
               spec_help="game spec, sweep file with a 'game' object, or builtin:<name>")
    p.add_argument("--patrollers", "-k", type=int)
    p.add_argument("--scale", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    p.add_argument("--protection-range", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simulate", help="Monte Carlo check of one attack")
    p.add_argument("strategy", help="strategy file written by 'synthesize'")
    p.add_argument("spec")
    p.add_argument("--set", type=int, default=0, help="basic-set record index in the strategy file")
    p.add_argument("--vertex", type=int, default=0)
    p.add_argument("--phase", type=int, default=0)
    p.add_argument("--instance", type=int, default=0)
    p.add_argument("--no-attack", action="store_true")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.add_argument("--output", "-o")
    return parser


COMMANDS = {
    "bound": cmd_bound,
    "synthesize": cmd_synthesize,
    "patrollers": cmd_patrollers,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _emit(args, COMMANDS[args.command](args))
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (PatrolError, ArithmeticError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
