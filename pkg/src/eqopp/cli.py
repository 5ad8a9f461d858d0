"""Command-line front end: ``eqopp {generate,audit,decide,impossibility,simulate}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 infeasible fit (e.g. an unreachable TPR target).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import ColumnMapping, atomic_write_text, load_csv, population_to_csv, rows_to_csv
from .errors import ConfigError, DataError, InfeasibleFitError
from .impossibility import (
    DEFAULT_CORNER_MARGIN, DEFAULT_GRID_STEP, _ppv_grid, empirical_tradeoff, feasibility_search,
    tradeoff_to_csv,
)
from .lifecourse import DynamicsSpec, compare_doctrines
from .metrics import DEFAULT_BINS, DEFAULT_TOLERANCE, Tolerances, audit
from .population import summarize
from .procedures import (
    Formal, FormalPlus, LuckEgalitarian, Rawlsian, ResourceResponse, decide_formal, decide_formal_plus,
    decide_luck_egalitarian, decide_rawlsian, fit_formal_plus,
)
from .synthetic import PRESET_NAMES, generate_synthetic, load_scenario, preset

OUT_ENV = "EQOPP_OUT_DIR"
DEFAULT_OUT = "eqopp-out"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3

DOCTRINE_ALIASES = {
    "formal": "formal",
    "formal-plus": "formal-plus",
    "luck": "luck",
    "luck-egalitarian": "luck",
    "rawlsian": "rawlsian",
    "rawls": "rawlsian",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p, tolerance_default=DEFAULT_TOLERANCE):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", default=None,
                   help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--tolerance", type=float, default=tolerance_default,
                   help=f"pass tolerance on gaps (default {tolerance_default})")


def _add_input(p, required=True):
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument("--input", help="population CSV")
    src.add_argument("--preset", choices=PRESET_NAMES, help="embedded synthetic scenario")
    p.add_argument("--size", type=int, default=None, help="per-group size override for --preset")
    p.add_argument("--group-col", default="group")
    p.add_argument("--score-col", default="score")
    p.add_argument("--label-col", default="label")


def _add_rule_flags(p):
    p.add_argument("--p", type=float, help="formal score threshold (decision: score > p)")
    p.add_argument("--target-tpr", type=float, help="formal-plus common TPR target")
    p.add_argument("--q", type=float, help="within-group quantile cut in [0, 1]")
    p.add_argument("--budget", type=float, help="Rawlsian resource budget")
    p.add_argument("--response", default=str(ResourceResponse()),
                   help="Rawlsian resource response knots 'x:y,x:y,...' (default %(default)s)")
    p.add_argument("--reference", help="Rawlsian benchmark group label (default: highest mean score)")


def build_parser():
    parser = _Parser(prog="eqopp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic population CSV")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESET_NAMES)
    src.add_argument("--spec", help="YAML/JSON scenario file")
    g.add_argument("--size", type=int, default=None, help="per-group size override")
    _add_common(g)

    a = sub.add_parser("audit", help="audit a labelled population against the fairness criteria")
    _add_input(a)
    dec = a.add_mutually_exclusive_group()
    dec.add_argument("--threshold", type=float, help="decision threshold p")
    dec.add_argument("--decisions", help="decisions CSV (columns id, decision) aligned to the input")
    a.add_argument("--bins", type=int, default=DEFAULT_BINS, help="calibration bins (default %(default)s)")
    a.add_argument("--min-bin-count", type=int, default=1,
                   help="members a group needs in a calibration bin to enter its gap (default 1)")
    a.add_argument("--blind", action="store_true", help="drop the group column before auditing")
    _add_common(a)

    d = sub.add_parser("decide", help="apply one doctrine's allocation procedure")
    _add_input(d)
    d.add_argument("--doctrine", required=True, choices=sorted(DOCTRINE_ALIASES))
    _add_rule_flags(d)
    _add_common(d)

    i = sub.add_parser("impossibility", help="PPV parity vs error-rate balance under unequal base rates")
    i.add_argument("--prev-a", type=float, required=True)
    i.add_argument("--prev-b", type=float, required=True)
    i.add_argument("--grid-step", type=float, default=DEFAULT_GRID_STEP)
    i.add_argument("--margin", type=float, default=DEFAULT_CORNER_MARGIN,
                   help="exclusion margin around the degenerate fpr=0 / tpr=0 edges")
    i.add_argument("--include-corners", action="store_true")
    _add_input(i, required=False)
    i.add_argument("--sweep-points", type=int, default=200)
    _add_common(i, tolerance_default=0.01)

    s = sub.add_parser("simulate", help="multi-round opportunity dynamics")
    _add_input(s)
    s.add_argument("--doctrine", required=True, choices=sorted(DOCTRINE_ALIASES) + ["all"])
    s.add_argument("--rounds", type=int, default=20)
    s.add_argument("--capacity", type=float, default=0.2, help="selected share per round")
    s.add_argument("--win-boost", type=float, default=0.02)
    s.add_argument("--privilege-boost", action="append", default=[], metavar="GROUP=VALUE",
                   help="pre-contest score gain for a group; repeatable")
    s.add_argument("--noise", type=float, default=0.0, help="std. dev. of per-round score noise")
    s.add_argument("--budget", type=float, help="Rawlsian per-round budget")
    s.add_argument("--response", default=str(ResourceResponse()))
    s.add_argument("--reference")
    _add_common(s)
    return parser


# -- helpers -----------------------------------------------------------------------


def _out_dir(args):
    return Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _write(out, name, text):
    path = out / name
    atomic_write_text(path, text)
    return path


def _load_population(args):
    """Population plus the preset spec it came from (``None`` for CSV input)."""
    if args.preset:
        spec = preset(args.preset, args.size)
        return generate_synthetic(spec, args.seed), spec
    schema = ColumnMapping(group=args.group_col, score=args.score_col, label=args.label_col)
    try:
        return load_csv(args.input, schema), None
    except FileNotFoundError:
        raise UsageError(f"input file not found: {args.input}") from None


def _load_decisions(path, n):
    import csv

    try:
        fh = open(path, encoding="utf-8", newline="")
    except FileNotFoundError:
        raise UsageError(f"decisions file not found: {path}") from None
    with fh:
        reader = csv.DictReader(fh)
        if "decision" not in (reader.fieldnames or []):
            raise DataError(f"{path}: missing 'decision' column")
        values = []
        for row_no, row in enumerate(reader, start=1):
            raw = (row["decision"] or "").strip()
            if raw not in ("0", "1"):
                raise DataError(f"decision must be 0 or 1, got {raw!r}", row=row_no)
            values.append(int(raw))
    if len(values) != n:
        raise DataError(f"decision vector has length {len(values)}, population has {n}")
    return np.asarray(values, dtype=np.int8)


def _parse_boosts(items):
    boosts = {}
    for item in items:
        for chunk in item.split(","):
            if not chunk.strip():
                continue
            label, sep, value = chunk.partition("=")
            if not sep:
                raise UsageError(f"--privilege-boost expects GROUP=VALUE, got {chunk!r}")
            try:
                boosts[label.strip()] = float(value)
            except ValueError:
                raise UsageError(f"--privilege-boost value for {label!r} is not a number") from None
    return boosts


def _require(args, *names, doctrine):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"doctrine {doctrine!r} requires {' and '.join(missing)}")


# -- subcommands ---------------------------------------------------------------------


def cmd_generate(args):
    spec = preset(args.preset, args.size) if args.preset else load_scenario(args.spec)
    if args.spec and args.size is not None:
        spec = spec.resized(args.size)
    pop = generate_synthetic(spec, args.seed)
    out = _out_dir(args)
    path = _write(out, "population.csv", population_to_csv(pop))
    print(f"scenario {spec.name!r}, seed {args.seed}: {len(pop)} individuals -> {path}")
    for s in summarize(pop):
        rate = "n/a" if s.base_rate is None else f"{s.base_rate:.4f}"
        print(f"  group {s.group.label}: size {s.size}, base rate {rate}")
    return EXIT_OK


def cmd_audit(args):
    pop, spec = _load_population(args)
    decisions = threshold = None
    if args.decisions:
        decisions = _load_decisions(args.decisions, len(pop))
    elif args.threshold is not None:
        threshold = args.threshold
    elif spec is not None and spec.audit_threshold is not None:
        threshold = spec.audit_threshold
    else:
        raise UsageError("audit needs --threshold or --decisions")
    report = audit(pop, threshold=threshold, decisions=decisions,
                   tolerances=Tolerances.uniform(args.tolerance), bins=args.bins, blind=args.blind,
                   min_bin_count=args.min_bin_count)
    out = _out_dir(args)
    text = report.to_text()
    _write(out, "audit_report.txt", text)
    _write(out, "audit_metrics.csv", report.to_csv())
    sys.stdout.write(text)
    return EXIT_OK


def cmd_decide(args):
    doctrine = DOCTRINE_ALIASES[args.doctrine]
    response = ResourceResponse.parse(args.response)
    pop, _ = _load_population(args)
    if doctrine == "formal":
        _require(args, "p", doctrine=doctrine)
        outcome = decide_formal(pop, Formal(args.p).p)
    elif doctrine == "formal-plus":
        if args.target_tpr is None and args.p is None:
            raise UsageError("doctrine 'formal-plus' requires --target-tpr or --p")
        params = fit_formal_plus(pop, target_rate=args.target_tpr, p=args.p)
        outcome = decide_formal_plus(pop, params, args.seed)
    elif doctrine == "luck":
        _require(args, "q", doctrine=doctrine)
        outcome = decide_luck_egalitarian(pop, LuckEgalitarian(args.q).q)
    else:
        _require(args, "q", "budget", doctrine=doctrine)
        rule = Rawlsian(args.q, args.budget, response, args.reference)
        outcome = decide_rawlsian(pop, rule.q, rule.budget, rule.response, rule.reference)
    out = _out_dir(args)
    _write(out, "decisions.csv", outcome.to_csv(pop))
    _write(out, "rationale.json", outcome.rationale_json())
    print(f"{outcome.doctrine.value}: selected {int(outcome.decisions.sum())} of {len(pop)}")
    for label, entry in outcome.rationale.items():
        if label.startswith("_"):
            continue
        print(f"  group {label}: {entry['selected']} of {entry['size']} selected")
    return EXIT_OK


def cmd_impossibility(args):
    result = feasibility_search(args.prev_a, args.prev_b, tolerance=args.tolerance,
                                grid_step=args.grid_step, exclude_corners=not args.include_corners,
                                corner_margin=args.margin)
    out = _out_dir(args)
    text = result.to_text()

    n = int(round(1.0 / result.grid_step))
    axis = np.linspace(0.0, 1.0, n + 1)
    tpr, fpr = np.meshgrid(axis, axis, indexing="ij")
    ppv_a, ppv_b = _ppv_grid(args.prev_a, tpr, fpr), _ppv_grid(args.prev_b, tpr, fpr)
    rows = (
        (repr(float(t)), repr(float(f)), "" if np.isnan(a) else repr(float(a)),
         "" if np.isnan(b) else repr(float(b)), "" if np.isnan(a) else repr(float(abs(a - b))))
        for t, f, a, b in zip(tpr.ravel(), fpr.ravel(), ppv_a.ravel(), ppv_b.ravel())
    )
    _write(out, "impossibility_grid.csv", rows_to_csv(["tpr", "fpr", "ppv_a", "ppv_b", "ppv_gap"], rows))

    if args.input or args.preset:
        pop, _ = _load_population(args)
        sweep = empirical_tradeoff(pop, n_points=args.sweep_points, seed=args.seed)
        _write(out, "tradeoff.csv", tradeoff_to_csv(sweep))
        hits = sum(r.achieves(0.02) for r in sweep)
        rates = ", ".join(
            f"{s.group.label}={s.base_rate:.4f}" for s in summarize(pop) if s.base_rate is not None
        )
        text += (f"empirical sweep: {len(sweep)} formal thresholds, base rates {rates}; "
                 f"{hits} with ppv gap < 0.02 and fpr gap < 0.02\n")
    _write(out, "impossibility.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args):
    pop, spec = _load_population(args)
    response = ResourceResponse.parse(args.response)
    doctrines = ["formal", "formal-plus", "luck", "rawlsian"] if args.doctrine == "all" \
        else [DOCTRINE_ALIASES[args.doctrine]]
    rules = []
    for doctrine in doctrines:
        if doctrine == "formal":
            rules.append(Formal(0.0))
        elif doctrine == "formal-plus":
            rules.append(FormalPlus())
        elif doctrine == "luck":
            rules.append(LuckEgalitarian(0.0))
        else:
            _require(args, "budget", doctrine="rawlsian")
            rules.append(Rawlsian(0.0, args.budget, response, args.reference))
    dyn = DynamicsSpec(
        rounds=args.rounds, selection_rule=rules[0], capacity=args.capacity,
        win_boost=args.win_boost, privilege_boost=_parse_boosts(args.privilege_boost),
        noise_scale=args.noise, outcome=spec.outcome if spec is not None else None,
    )
    comparison = compare_doctrines(pop, dyn, rules, seed=args.seed)
    tidy = [(t.doctrine.value,) + row for t in comparison.traces for row in t.tidy_rows()]
    out = _out_dir(args)
    _write(out, "trace.csv", rows_to_csv(["doctrine", "round", "group", "metric", "value"], tidy))
    _write(out, "summary.csv", comparison.to_csv())
    for t in comparison.traces:
        print(f"{t.doctrine.value}: score gap {t.initial_gap:.4f} -> {t.next_round_gap:.4f} (round 1) "
              f"-> {t.final_gap:.4f} (round {t.rounds})")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "audit": cmd_audit,
    "decide": cmd_decide,
    "impossibility": cmd_impossibility,
    "simulate": cmd_simulate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"eqopp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleFitError as exc:
        print(f"eqopp {args.command}: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"eqopp {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"eqopp {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"eqopp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
