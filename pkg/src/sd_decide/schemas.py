"""JSON Schemas for every file the CLI reads or writes."""

from __future__ import annotations

import jsonschema

from .errors import ValidationError

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_VEC = {"type": "array", "items": _NUM}
_MATRIX = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _NUM}}
_LABELS = {"type": "array", "minItems": 1, "items": {"type": "string"}}
_INDEX = {"type": "integer", "minimum": 0}
_INDEX_LIST = {"type": "array", "items": _INDEX}
_GROUPS = {"type": "array", "items": _INDEX_LIST}

PROBLEM = {
    "title": "DecisionProblem",
    "description": "Finite decision problem: loss[state][action], sampling[state][sample_point].",
    "type": "object",
    "required": ["states", "sample_points", "actions", "loss", "sampling"],
    "properties": {
        "states": _LABELS,
        "sample_points": _LABELS,
        "actions": _LABELS,
        "loss": _MATRIX,
        "sampling": _MATRIX,
    },
}

RULES = {
    "title": "DecisionRules",
    "description": "One rule as a matrix [sample_point][action], or an array of such matrices.",
    "oneOf": [_MATRIX, {"type": "array", "minItems": 1, "items": _MATRIX}],
}

CRITERION = {
    "title": "CriterionSpec",
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {
            "enum": [
                "MinimaxRisk",
                "MinimaxRegret",
                "BayesRisk",
                "QuantileMinimax",
                "QuantileMinimaxRegret",
                "HybridQuantileBayes",
                "BayesQuantile",
            ]
        },
        "lambda": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "prior": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
    },
    "additionalProperties": False,
}

TREATMENT = {
    "title": "TreatmentProblem",
    "description": "Two-treatment problem with state means alpha (treatment a) and beta (treatment b).",
    "type": "object",
    "required": ["states", "sampling"],
    "properties": {
        "states": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["label", "alpha", "beta"],
                "properties": {"label": {"type": "string"}, "alpha": _NUM, "beta": _NUM},
            },
        },
        "sample_points": _LABELS,
        "sampling": {
            "oneOf": [
                _MATRIX,
                {
                    "type": "object",
                    "required": ["binomial"],
                    "properties": {
                        "binomial": {
                            "type": "object",
                            "required": ["n", "p_by_state"],
                            "properties": {
                                "n": _INDEX,
                                "p_by_state": {"type": "array", "minItems": 1, "items": _PROB},
                            },
                        }
                    },
                },
            ]
        },
        "metric": _MATRIX,
        "coordinates": {"type": "array", "items": {"oneOf": [_NUM, _VEC]}},
        "approximation": {"type": ["string", "null"]},
    },
}

TEST_RULES = {
    "title": "TestRules",
    "description": "Test rules given by the sample points at which treatment b is chosen.",
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "object",
        "required": ["accept_b"],
        "properties": {"accept_b": _INDEX_LIST},
    },
}

FAMILY = {
    "title": "GridFamily",
    "description": "Normal location family on a generated grid, or explicit densities[state][grid point].",
    "oneOf": [
        {
            "type": "object",
            "required": ["normal_family"],
            "properties": {
                "normal_family": {
                    "type": "object",
                    "required": ["mus"],
                    "properties": {
                        "mus": {"type": "array", "minItems": 2, "items": _NUM},
                        "sigma": {"type": "number", "exclusiveMinimum": 0},
                        "reference": _INDEX,
                    },
                },
                "grid": {
                    "type": "object",
                    "properties": {
                        "points": {"type": "integer", "minimum": 3},
                        "span": {"type": "number", "exclusiveMinimum": 0},
                        "lo": _NUM,
                        "hi": _NUM,
                        "spacing": {"enum": ["quantile", "uniform"]},
                    },
                    "additionalProperties": False,
                },
            },
        },
        {
            "type": "object",
            "required": ["grid", "densities", "cell_widths"],
            "properties": {
                "grid": {"type": "array", "minItems": 2, "items": _NUM},
                "densities": _MATRIX,
                "cell_widths": {"type": "array", "minItems": 2, "items": _NUM},
                "reference": _INDEX,
            },
        },
    ],
}

PAYOFF = {
    "title": "DosePayoff",
    "description": "u(a, s) = (b[s] - c) a, or values[state][action grid point] interpolated linearly.",
    "type": "object",
    "properties": {
        "bounds": {"type": "array", "minItems": 2, "maxItems": 2, "items": _NUM},
        "linear": {
            "type": "object",
            "required": ["b", "c"],
            "properties": {"b": {"type": "array", "minItems": 1, "items": _NUM}, "c": _NUM},
        },
        "tabulated": {
            "type": "object",
            "required": ["actions", "values"],
            "properties": {"actions": {"type": "array", "minItems": 2, "items": _NUM}, "values": _MATRIX},
        },
    },
    "oneOf": [{"required": ["linear"]}, {"required": ["tabulated"]}],
}

DOSE_RULE = {
    "title": "RandomizedDoseRule",
    "description": "values[grid point][v point] (or one value per grid point), or a seeded scrambled rule.",
    "type": "object",
    "properties": {
        "values": {"oneOf": [_MATRIX, {"type": "array", "minItems": 1, "items": _NUM}]},
        "scrambled": {
            "type": "object",
            "properties": {"seed": _INDEX, "v_points": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
    },
    "oneOf": [{"required": ["values"]}, {"required": ["scrambled"]}],
}

MANIFEST = {
    "type": "object",
    "required": ["subcommand", "argv", "inputs", "parameters", "version", "timestamp"],
    "properties": {
        "subcommand": {"type": "string"},
        "argv": {"type": "array", "items": {"type": "string"}},
        "inputs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["path", "sha256"],
                "properties": {"path": {"type": "string"}, "sha256": {"type": "string"}},
            },
        },
        "parameters": {"type": "object"},
        "version": {"type": "string"},
        "timestamp": {"type": "string"},
    },
}

_VERDICT = {
    "type": "object",
    "required": ["relation"],
    "properties": {
        "relation": {"enum": ["Equal", "FirstDominates", "SecondDominates", "Incomparable"]},
        "witness": _NUM_OR_NULL,
        "witness_kind": {"type": ["string", "null"]},
    },
}

_CERTIFICATE = {
    "type": "object",
    "required": ["rule", "dominated_by", "state", "witness"],
    "properties": {"rule": _INDEX, "dominated_by": _INDEX, "state": _INDEX, "witness": _NUM},
}

_ADMISSIBILITY = {
    "type": "object",
    "required": ["mode", "admissible", "inadmissible", "equivalence_groups"],
    "properties": {
        "mode": {"type": "string"},
        "admissible": _INDEX_LIST,
        "inadmissible": {"type": "array", "items": _CERTIFICATE},
        "equivalence_groups": _GROUPS,
        "risk_equivalence_groups": _GROUPS,
    },
}

_CRITERION_RESULT = {
    "type": "object",
    "required": ["optimal_rules", "value", "per_rule_values"],
    "properties": {
        "optimal_rules": _INDEX_LIST,
        "value": _NUM,
        "per_rule_values": _VEC,
    },
}

VALIDATE_REPORT = {
    "type": "object",
    "required": ["manifest", "kind", "valid"],
    "properties": {"manifest": MANIFEST, "kind": {"type": "string"}, "valid": {"type": "boolean"}, "dimensions": {"type": "object"}},
}

ADMISSIBILITY_REPORT = {
    "type": "object",
    "required": ["manifest", "n_rules", "report"],
    "properties": {"manifest": MANIFEST, "n_rules": _INDEX, "report": _ADMISSIBILITY},
}

CRITERIA_REPORT = {
    "type": "object",
    "required": ["manifest", "criterion", "result"],
    "properties": {"manifest": MANIFEST, "criterion": CRITERION, "result": _CRITERION_RESULT},
}

_TEST_RULE_ROW = {
    "type": "object",
    "required": ["accept_b", "error_probabilities", "expected_welfare"],
    "properties": {
        "accept_b": _INDEX_LIST,
        "error_probabilities": _VEC,
        "expected_welfare": _VEC,
        "quantile_welfare": _VEC,
    },
}

TREATMENT_REPORT = {
    "type": "object",
    "required": ["manifest", "problem"],
    "properties": {
        "manifest": MANIFEST,
        "problem": {"type": "object"},
        "rules": {"type": "array", "items": _TEST_RULE_ROW},
        "criterion": {
            "type": "object",
            "required": ["name", "result"],
            "properties": {
                "name": {"type": "string"},
                "lambda": _NUM_OR_NULL,
                "result": _CRITERION_RESULT,
                "optimal_accept_b": _GROUPS,
            },
        },
        "admissibility": _ADMISSIBILITY,
        "scan": {
            "type": "object",
            "required": ["lambda", "min_max_regret", "attaining_rules", "n_attaining", "n_rules"],
            "properties": {
                "lambda": _NUM,
                "min_max_regret": _NUM,
                "attaining_rules": {"type": "array", "items": TEST_RULES["items"]},
                "n_attaining": _INDEX,
                "n_rules": _INDEX,
                "approximation": {"type": ["string", "null"]},
            },
        },
    },
}

MONOTONE_REPORT = {
    "type": "object",
    "required": ["manifest", "mlr", "checks", "discrepancy", "rules"],
    "properties": {
        "manifest": MANIFEST,
        "mlr": {"type": "array", "items": {"type": "object", "required": ["state", "holds", "worst_violation"]}},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["state", "verdict", "max_violation", "slack", "within_slack", "label"],
                "properties": {"verdict": _VERDICT, "max_violation": _NUM, "slack": _NUM, "within_slack": {"type": "boolean"}},
            },
        },
        "discrepancy": _NUM,
        "rules": {
            "type": "object",
            "required": ["psi", "delta_mean", "delta_min", "delta_max", "rearranged"],
            "properties": {k: _VEC for k in ("psi", "delta_mean", "delta_min", "delta_max", "rearranged")},
        },
    },
}

_CROSSING = {
    "type": "object",
    "required": ["crossings", "signs"],
    "properties": {
        "crossings": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": _NUM}},
        "signs": {"type": "array", "items": {"enum": [-1, 0, 1]}},
    },
}

STEIN_REPORT = {
    "type": "object",
    "required": ["manifest", "config", "means", "std_errors", "histogram", "crossings", "verdicts"],
    "properties": {
        "manifest": MANIFEST,
        "config": {
            "type": "object",
            "required": ["theta", "draws", "seed", "estimators"],
            "properties": {"theta": {"type": "array", "minItems": 3, "maxItems": 3, "items": _NUM}, "draws": {"type": "integer", "minimum": 1}},
        },
        "means": {"type": "object", "additionalProperties": _NUM},
        "std_errors": {"type": "object", "additionalProperties": _NUM_OR_NULL},
        "histogram": {
            "type": "object",
            "required": ["edges", "counts"],
            "properties": {"counts": {"type": "object", "additionalProperties": _INDEX_LIST}},
        },
        "crossings": {"type": "object", "additionalProperties": _CROSSING},
        "exact_crossings": {"type": "object", "additionalProperties": _CROSSING},
        "verdicts": {"type": "object", "additionalProperties": _VERDICT},
        "dkw": {"type": "object"},
    },
}

INPUTS = {
    "problem": PROBLEM,
    "rules": RULES,
    "criterion": CRITERION,
    "treatment": TREATMENT,
    "test-rules": TEST_RULES,
    "family": FAMILY,
    "payoff": PAYOFF,
    "dose-rule": DOSE_RULE,
}

OUTPUTS = {
    "validate-report": VALIDATE_REPORT,
    "admissibility-report": ADMISSIBILITY_REPORT,
    "criteria-report": CRITERIA_REPORT,
    "treatment-report": TREATMENT_REPORT,
    "monotone-report": MONOTONE_REPORT,
    "stein-report": STEIN_REPORT,
}

ALL = INPUTS | OUTPUTS


def check(instance, name: str, source: str = "") -> None:
    """Validate ``instance`` against schema ``name``; raise ValidationError
    with one line per violation, each naming the offending JSON path."""
    schema = ALL[name]
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
    if errors:
        prefix = f"{source}: " if source else ""
        issues = []
        for err in errors:
            # oneOf failures are clearer when reported through their best sub-error
            best = jsonschema.exceptions.best_match([err]) if err.context else err
            issues.append(f"{prefix}{best.json_path}: {best.message}")
        raise ValidationError(issues)
