"""JSON Schemas for the command-line outputs."""

_number = {"type": "number"}
_numbers = {"type": "array", "items": _number}
_kind = {"enum": ["est", "pred-a", "pred-d"]}

CRITERION = {
    "type": "object",
    "required": ["criterion", "w", "value"],
    "properties": {
        "criterion": _kind,
        "w": _number,
        "value": _number,
        "oracle": {
            "type": "object",
            "required": ["n1", "n2", "closed_form", "oracle", "rel_deviation", "passed"],
        },
    },
}

OPTIMIZE = {
    "type": "object",
    "required": ["criterion", "w_star", "n1", "n2", "method", "criterion_value", "eff_balanced"],
    "properties": {
        "criterion": _kind,
        "w_star": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "n1": {"type": "integer", "minimum": 1},
        "n2": {"type": "integer", "minimum": 1},
        "method": {"enum": ["closed_form", "golden_section"]},
        "criterion_value": _number,
        "eff_balanced": {"type": "number", "exclusiveMinimum": 0, "maximum": 1.0000000001},
    },
}

ORACLE_CHECK = {
    "type": "object",
    "required": ["instances", "max_rel_deviation", "threshold", "passed"],
    "properties": {
        "instances": {"type": "integer", "minimum": 1},
        "max_rel_deviation": {
            "type": "object",
            "required": ["mse", "blue", "blup", "joint_mse", "trace"],
            "additionalProperties": _number,
        },
        "det_offset": {"type": "object", "required": ["mean", "max_abs", "spread"]},
        "threshold": _number,
        "passed": {"type": "boolean"},
    },
}

SIMULATE_SIDECAR = {
    "type": "object",
    "required": ["seed", "replicate_index", "params", "n1", "n2", "theta0", "alpha_true"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "replicate_index": {"type": "integer", "minimum": 0},
        "params": {"type": "object"},
        "n1": {"type": "integer", "minimum": 1},
        "n2": {"type": "integer", "minimum": 1},
        "theta0": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
        "alpha_true": _numbers,
    },
}

VALIDATE = {
    "type": "object",
    "required": ["replications", "z", "var_alpha0", "mse_diag", "flags", "passed"],
    "properties": {
        "replications": {"type": "integer", "minimum": 1},
        "z": _number,
        "var_alpha0": {"type": "object", "required": ["empirical", "theoretical", "se"]},
        "mse_diag": {"type": "object", "required": ["empirical", "theoretical", "se"]},
        "flags": {"type": "object", "additionalProperties": {"type": "boolean"}},
        "passed": {"type": "boolean"},
    },
}

ESTIMATE = {
    "type": "object",
    "required": ["n1", "n2", "K", "alpha0_hat", "alpha_hat"],
    "properties": {
        "n1": {"type": "integer"},
        "n2": {"type": "integer"},
        "K": {"type": "integer"},
        "alpha0_hat": _number,
        "alpha_hat": _numbers,
    },
}
