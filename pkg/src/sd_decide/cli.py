"""Command-line interface: ``sd-decide <subcommand> ...``.

Exit codes: 0 success, 1 invalid input, 2 refused for capacity (an
enumeration larger than its configured bound).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, schemas
from .core import DecisionProblem, DecisionRule, Prior, iter_deterministic_rules
from .criteria import CriterionKind, CriterionSpec, solve
from .dominance import mean_admissible_set, sd_admissible_set
from .errors import CapacityError, SDDecideError, ValidationError
from .report import RunManifest, dumps, monotone_csv, stein_csv, stein_svg

EXIT_OK, EXIT_INVALID, EXIT_CAPACITY = 0, 1, 2

FORMATS_HELP = """\
input file formats (print the full JSON Schema with `sd-decide validate --schema NAME`):
  problem     {"states": [..], "sample_points": [..], "actions": [..],
               "loss": [[state][action]], "sampling": [[state][sample_point]]}
  rules       one rule [[sample_point][action]] or an array of such matrices
  criterion   {"kind": "MinimaxRisk|MinimaxRegret|BayesRisk|QuantileMinimax|
               QuantileMinimaxRegret|HybridQuantileBayes|BayesQuantile",
               "lambda": 0.25, "prior": [..]}
  treatment   {"states": [{"label", "alpha", "beta"}, ..],
               "sampling": [[state][sample_point]] | {"binomial": {"n", "p_by_state"}},
               "metric": [[..]] (optional), "approximation": ".." (optional)}
  test-rules  [{"accept_b": [sample point indices]}, ..]
  family      {"normal_family": {"mus": [..], "sigma": 1.0, "reference": k},
               "grid": {"points": 2001, "span": 8, "spacing": "quantile|uniform"}}
              or {"grid": [..], "densities": [[state][point]], "cell_widths": [..], "reference": k}
  payoff      {"bounds": [a_l, a_h], "linear": {"b": [per state], "c": c}}
              or {"bounds": [..], "tabulated": {"actions": [..], "values": [[state][action]]}}
  dose-rule   {"values": [[grid point][v point]]} or {"scrambled": {"seed": 0, "v_points": 101}}

output reports (schemas: validate-report, admissibility-report, criteria-report,
treatment-report, monotone-report, stein-report) embed a run manifest. Reals are
written with 17 significant digits.

environment: SD_DECIDE_THREADS caps worker threads (0 = one per CPU).
"""


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the input-validation code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def load_json(path: str, schema: str | None = None):
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if schema is not None:
        schemas.check(obj, schema, source=path)
    return obj


def _parse_rules(obj) -> list[DecisionRule]:
    arr = obj if isinstance(obj[0][0], list) else [obj]
    return [DecisionRule(r) for r in arr]


def _load_rules(path: str, problem: DecisionProblem) -> list[DecisionRule]:
    rules = _parse_rules(load_json(path, "rules"))
    issues = []
    for i, r in enumerate(rules):
        if r.allocation.shape != (problem.n_sample_points, problem.n_actions):
            issues.append(
                f"{path}: $[{i}]: rule has shape {list(r.allocation.shape)}, "
                f"problem needs [{problem.n_sample_points}, {problem.n_actions}]"
            )
    if issues:
        raise ValidationError(issues)
    return rules


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from None


def _emit(report: dict, schema: str, out: str | None) -> None:
    text = dumps(report)
    schemas.check(json.loads(text), schema)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _manifest(args, inputs: dict, parameters: dict) -> RunManifest:
    return RunManifest(args.command, list(args.argv), inputs, parameters)


# ---------------------------------------------------------------------------
# validate


def _detect_kind(obj) -> str:
    if isinstance(obj, dict):
        if "loss" in obj:
            return "problem"
        if "kind" in obj:
            return "criterion"
        if "normal_family" in obj or "densities" in obj:
            return "family"
        if "linear" in obj or "tabulated" in obj:
            return "payoff"
        if "values" in obj or "scrambled" in obj:
            return "dose-rule"
        if "states" in obj:
            return "treatment"
    if isinstance(obj, list) and obj and isinstance(obj[0], dict):
        return "test-rules"
    if isinstance(obj, list):
        return "rules"
    raise ValidationError("cannot tell what kind of file this is; pass --kind")


def _dimensions(kind: str, obj) -> dict:
    from .monotone import DosePayoff, GridFamily
    from .treatment import TreatmentProblem, TestRule

    if kind == "problem":
        p = DecisionProblem.from_json(obj)
        return {"states": p.n_states, "sample_points": p.n_sample_points, "actions": p.n_actions}
    if kind == "rules":
        rules = _parse_rules(obj)
        return {"rules": len(rules), "sample_points": rules[0].allocation.shape[0], "actions": rules[0].allocation.shape[1]}
    if kind == "criterion":
        spec = CriterionSpec.from_json(obj)
        return {"kind": spec.kind.value, "needs_lambda": spec.kind.needs_lambda, "needs_prior": spec.kind.needs_prior}
    if kind == "treatment":
        tp = TreatmentProblem.from_json(obj)
        return {"states": tp.n_states, "sample_points": tp.n_sample_points}
    if kind == "test-rules":
        return {"rules": len([TestRule(r["accept_b"]) for r in obj])}
    if kind == "family":
        fam = GridFamily.from_json(obj)
        return {"states": fam.n_states, "grid_points": fam.n_points, "reference": fam.reference}
    if kind == "payoff":
        pay = DosePayoff.from_json(obj)
        return {"states": pay.n_states, "bounds": list(pay.bounds)}
    if kind == "dose-rule":
        if "values" in obj:
            vals = np.asarray(obj["values"], dtype=float)
            return {"grid_points": vals.shape[0], "v_points": vals.shape[1] if vals.ndim == 2 else 1}
        return {"scrambled": True}
    raise ValidationError(f"unknown kind {kind!r}")


def cmd_validate(args) -> int:
    if args.schema:
        sys.stdout.write(json.dumps(schemas.ALL[args.schema], indent=2) + "\n")
        return EXIT_OK
    if not args.file:
        raise ValidationError("validate needs a FILE (or --schema NAME)")
    obj = load_json(args.file)
    kind = args.kind or _detect_kind(obj)
    schemas.check(obj, kind, source=args.file)
    dims = _dimensions(kind, obj)
    if args.problem and kind == "rules":
        _load_rules(args.file, DecisionProblem.from_json(load_json(args.problem, "problem")))
    inputs = {"file": args.file} | ({"problem": args.problem} if args.problem else {})
    report = {
        "manifest": _manifest(args, inputs, {"kind": kind}),
        "kind": kind,
        "valid": True,
        "dimensions": dims,
    }
    _emit(report, "validate-report", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# admissibility / criteria (loss orientation)


def _problem_and_rules(args) -> tuple[DecisionProblem, list[DecisionRule], dict]:
    problem = DecisionProblem.from_json(load_json(args.problem, "problem"))
    inputs = {"problem": args.problem}
    if args.rules:
        rules = _load_rules(args.rules, problem)
        inputs["rules"] = args.rules
    elif getattr(args, "all_deterministic", False):
        rules = list(iter_deterministic_rules(problem, limit=args.max_rules))
    else:
        raise ValidationError("give a RULES file or --all-deterministic")
    return problem, rules, inputs


def cmd_admissibility(args) -> int:
    problem, rules, inputs = _problem_and_rules(args)
    fn = sd_admissible_set if args.mode == "sd" else mean_admissible_set
    report = {
        "manifest": _manifest(args, inputs, {"mode": args.mode, "all_deterministic": bool(args.all_deterministic)}),
        "n_rules": len(rules),
        "report": fn(problem, rules),
    }
    _emit(report, "admissibility-report", args.out)
    return EXIT_OK


def _criterion_spec(args) -> tuple[CriterionSpec, dict]:
    if args.spec:
        return CriterionSpec.from_json(load_json(args.spec, "criterion")), {"spec": args.spec}
    if not args.kind:
        raise ValidationError("give --spec FILE or --kind")
    prior = Prior(_floats(args.prior)) if args.prior else None
    return CriterionSpec(CriterionKind(args.kind), args.lam, prior), {}


def cmd_criteria(args) -> int:
    problem, rules, inputs = _problem_and_rules(args)
    spec, extra = _criterion_spec(args)
    report = {
        "manifest": _manifest(args, inputs | extra, spec.to_json()),
        "criterion": spec,
        "result": solve(problem, rules, spec),
    }
    _emit(report, "criteria-report", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# treatment (welfare orientation)


def cmd_treatment(args) -> int:
    from . import treatment as tr

    tp = tr.TreatmentProblem.from_json(load_json(args.problem, "treatment"))
    inputs = {"problem": args.problem}
    lam = args.lam
    params = {"criterion": args.criterion, "lambda": lam, "enumerate": bool(args.enumerate),
              "scan_regret": bool(args.scan_regret), "max_points": args.max_points}
    report: dict = {
        "problem": {
            "labels": list(tp.labels),
            "n_states": tp.n_states,
            "n_sample_points": tp.n_sample_points,
            "approximation": tp.approximation,
        },
    }
    if args.scan_regret:
        if lam is None:
            raise ValidationError("--scan-regret needs --lambda")
        report["scan"] = tr.quantile_regret_scan(tp, lam, max_points=args.max_points)
    rules = None
    if args.rules:
        rules = [tr.TestRule(r["accept_b"]) for r in load_json(args.rules, "test-rules")]
        for i, r in enumerate(rules):
            if r.accept_b and max(r.accept_b) >= tp.n_sample_points:
                raise ValidationError(f"{args.rules}: $[{i}].accept_b: index {max(r.accept_b)} exceeds "
                                      f"{tp.n_sample_points} sample points")
        inputs["rules"] = args.rules
    elif args.enumerate:
        rules = tr.all_test_rules(tp.n_sample_points, max_points=args.max_points)
    elif not args.scan_regret:
        raise ValidationError("give --rules FILE, --enumerate, or --scan-regret")
    if rules is not None:
        rows = []
        for r in rules:
            row = {
                "accept_b": sorted(r.accept_b),
                "error_probabilities": tr.error_probabilities(tp, r),
                "expected_welfare": [tr.expected_welfare(tp, r, s) for s in range(tp.n_states)],
            }
            if lam is not None:
                row["quantile_welfare"] = [tr.quantile_welfare(tp, r, s, lam) for s in range(tp.n_states)]
            rows.append(row)
        report["rules"] = rows
        if args.criterion == "admissibility":
            report["admissibility"] = tr.test_rule_admissibility(tp, rules)
        elif args.criterion in ("maximin", "minimax-regret"):
            fn = tr.maximin if args.criterion == "maximin" else tr.minimax_regret
            result = fn(tp, rules, lam)
            report["criterion"] = {
                "name": args.criterion,
                "lambda": lam,
                "result": result,
                "optimal_accept_b": [sorted(rules[i].accept_b) for i in result.optimal_rules],
            }
    report = {"manifest": _manifest(args, inputs, params)} | report
    _emit(report, "treatment-report", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# monotone


def cmd_monotone(args) -> int:
    from .monotone import (
        DEFAULT_V_POINTS,
        DosePayoff,
        GridFamily,
        RandomizedDoseRule,
        check_prop7,
        monotone_rearrange,
        rearrangement_discrepancy,
        verify_mlr,
    )

    family = GridFamily.from_json(load_json(args.family, "family"))
    payoff = DosePayoff.from_json(load_json(args.payoff, "payoff"))
    inputs = {"family": args.family, "payoff": args.payoff}
    if args.rule:
        obj = load_json(args.rule, "dose-rule")
        inputs["rule"] = args.rule
    else:
        obj = {"scrambled": {"seed": args.scramble_seed}}
    if "scrambled" in obj:
        sc = obj["scrambled"]
        rule = RandomizedDoseRule.scrambled(family, payoff.bounds, int(sc.get("seed", 0)), int(sc.get("v_points", DEFAULT_V_POINTS)))
    else:
        rule = RandomizedDoseRule(obj["values"], payoff.bounds)
    rearranged = monotone_rearrange(rule, family)
    vals = rule.values
    report = {
        "manifest": _manifest(args, inputs, {"scramble_seed": args.scramble_seed, "grid_points": family.n_points,
                                             "v_points": rule.n_v}),
        "mlr": verify_mlr(family, payoff),
        "checks": check_prop7(rule, family, payoff),
        "discrepancy": rearrangement_discrepancy(rule, family),
        "rules": {
            "psi": family.grid,
            "delta_mean": vals.mean(axis=1),
            "delta_min": vals.min(axis=1),
            "delta_max": vals.max(axis=1),
            "rearranged": rearranged,
        },
    }
    prefix = args.out
    if prefix:
        _emit(report, "monotone-report", f"{prefix}_report.json")
        Path(f"{prefix}_rules.csv").write_text(monotone_csv(json.loads(dumps(report))), encoding="utf-8")
    else:
        _emit(report, "monotone-report", None)
    return EXIT_OK


# ---------------------------------------------------------------------------
# stein


def cmd_stein(args) -> int:
    from .stein import FULL_SCALE_DRAWS, SteinConfig, study

    draws = FULL_SCALE_DRAWS if args.full_scale else args.draws
    config = SteinConfig(tuple(_floats(args.theta)), draws, args.seed)
    result = study(config)
    report = {"manifest": _manifest(args, {}, config.to_json())} | result.to_json()
    text = dumps(report)
    schemas.check(json.loads(text), "stein-report")
    plain = json.loads(text)
    prefix = args.out
    Path(f"{prefix}_report.json").write_text(text, encoding="utf-8")
    Path(f"{prefix}_cdf.csv").write_text(stein_csv(plain), encoding="utf-8")
    Path(f"{prefix}_figure.svg").write_text(stein_svg(plain), encoding="utf-8")
    summary = {
        "files": [f"{prefix}_report.json", f"{prefix}_cdf.csv", f"{prefix}_figure.svg"],
        "means": plain["means"],
        "crossings": plain["crossings"],
        "verdicts": {k: v["relation"] for k, v in plain["verdicts"].items()},
    }
    sys.stdout.write(dumps(summary))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="sd-decide",
        description="Evaluate decision rules by their state-dependent loss distributions.",
        epilog=FORMATS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text, epilog=None):
        return sub.add_parser(name, help=help_text, description=help_text, epilog=epilog,
                              formatter_class=argparse.RawDescriptionHelpFormatter)

    p = add("validate", "Check an input file against its schema and invariants.", FORMATS_HELP)
    p.add_argument("file", nargs="?", help="JSON file to check")
    p.add_argument("--kind", choices=sorted(schemas.INPUTS), help="file kind (detected when omitted)")
    p.add_argument("--problem", help="problem file to check a rules file's dimensions against")
    p.add_argument("--schema", choices=sorted(schemas.ALL), help="print a JSON Schema and exit")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_validate)

    rule_help = "rules file: one [sample_point][action] matrix or an array of them"
    p = add("admissibility", "SD- or mean-admissibility of a finite rule set (loss orientation).", FORMATS_HELP)
    p.add_argument("problem", help="problem JSON")
    p.add_argument("rules", nargs="?", help=rule_help)
    p.add_argument("--mode", choices=["sd", "mean"], default="sd")
    p.add_argument("--all-deterministic", action="store_true", help="use every deterministic rule instead of a file")
    p.add_argument("--max-rules", type=int, default=1 << 16, help="bound for --all-deterministic (default 65536)")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_admissibility)

    p = add("criteria", "Optimal rules under a mean or quantile criterion (loss orientation).", FORMATS_HELP)
    p.add_argument("problem", help="problem JSON")
    p.add_argument("rules", nargs="?", help=rule_help)
    p.add_argument("--all-deterministic", action="store_true", help="use every deterministic rule instead of a file")
    p.add_argument("--max-rules", type=int, default=1 << 16)
    p.add_argument("--spec", help="criterion JSON file")
    p.add_argument("--kind", choices=[k.value for k in CriterionKind])
    p.add_argument("--lambda", dest="lam", type=float, help="quantile level in (0, 1)")
    p.add_argument("--prior", help="comma-separated prior weights over states")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_criteria)

    p = add("treatment", "Test rules for a two-treatment choice (welfare orientation).", FORMATS_HELP)
    p.add_argument("problem", help="treatment problem JSON")
    p.add_argument("--rules", help="test-rules JSON")
    p.add_argument("--enumerate", action="store_true", help="evaluate all 2^|sample space| test rules")
    p.add_argument("--criterion", choices=["welfare", "admissibility", "maximin", "minimax-regret"], default="welfare",
                   help="with --lambda, maximin and minimax-regret use the lambda-quantile of welfare")
    p.add_argument("--lambda", dest="lam", type=float, help="quantile level in (0, 1)")
    p.add_argument("--scan-regret", action="store_true",
                   help="minimum over all test rules of the maximum lambda-quantile regret")
    p.add_argument("--max-points", type=int, default=22, help="largest sample space to enumerate (default 22)")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_treatment)

    p = add("monotone", "Monotone rearrangement of a dose rule and per-state payoff dominance checks.", FORMATS_HELP)
    p.add_argument("family", help="family JSON")
    p.add_argument("payoff", help="payoff JSON")
    p.add_argument("--rule", help="dose-rule JSON; default is a scrambled rule")
    p.add_argument("--scramble-seed", type=int, default=0)
    p.add_argument("--out", help="prefix for <prefix>_report.json and <prefix>_rules.csv")
    p.set_defaults(func=cmd_monotone)

    p = add("stein", "Monte Carlo loss distributions of the MLE and James-Stein estimators.")
    p.add_argument("--theta", default="0,0,0", help="true mean as x,y,z (default 0,0,0)")
    p.add_argument("--draws", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--full-scale", action="store_true", help="use 10^8 draws")
    p.add_argument("--out", default="stein", help="prefix for _cdf.csv, _figure.svg and _report.json")
    p.set_defaults(func=cmd_stein)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"sd-decide: capacity refused: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ValidationError as exc:
        print("sd-decide: invalid input:", file=sys.stderr)
        for issue in exc.issues:
            print(f"  - {issue}", file=sys.stderr)
        return EXIT_INVALID
    except (SDDecideError, ValueError, IndexError, KeyError) as exc:
        print(f"sd-decide: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
