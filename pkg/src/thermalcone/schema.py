"""Versioned JSON schema for scenario reports."""

from __future__ import annotations

import json

SCHEMA_VERSION = 1

_number_or_null = {"type": ["number", "null"]}

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "thermalcone scenario report",
    "type": "object",
    "required": [
        "schema_version",
        "library_version",
        "scenario",
        "kind",
        "config",
        "config_hash",
        "conventions",
        "checks",
        "verdicts",
    ],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "library_version": {"type": "string"},
        "scenario": {"type": "string"},
        "kind": {"enum": ["vacuum", "kms", "divergence-diagnosis"]},
        "config": {"type": "object"},
        "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "conventions": {
            "type": "object",
            "required": ["fourier_sign", "frequency_transform"],
            "properties": {
                "fourier_sign": {"enum": [1, -1]},
                "frequency_transform": {"type": "string"},
                "slot_sign": {"enum": [1, -1, None]},
                "slot_source": {"type": ["string", "null"]},
            },
        },
        "checks": {
            "type": "object",
            "properties": {
                "car_sum_residual": _number_or_null,
                "detailed_balance_residual": _number_or_null,
                "pointwise_psd_min_ratio": _number_or_null,
                "gram": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["min_eig", "max_eig"],
                        "properties": {
                            "min_eig": {"type": "number"},
                            "max_eig": {"type": "number"},
                            "max_entry_error": {"type": "number"},
                        },
                    },
                },
                "crossing": {
                    "type": ["object", "null"],
                    "properties": {
                        "residual": {"type": "number"},
                        "n_checked": {"type": "integer"},
                        "one_signed": {"type": "boolean"},
                        "is_beta_kms": {"type": "boolean"},
                        "dt": {"type": "number"},
                        "n_t": {"type": "integer"},
                    },
                },
                "flow_invariance_residual": _number_or_null,
            },
        },
        "cone_scan": {
            "type": ["object", "null"],
            "properties": {
                "sigma_w": {"type": "number"},
                "lambdas": {"type": "array", "items": {"type": "number"}},
                "directions": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["khat", "is_null", "pairing", "classification"],
                        "properties": {
                            "khat": {
                                "type": "array",
                                "items": {"type": "number"},
                                "minItems": 4,
                                "maxItems": 4,
                            },
                            "is_null": {"type": "boolean"},
                            "causal_kind": {"type": "string"},
                            "orientation": {"type": "string"},
                            "pairing": {"type": "number"},
                            "slot_pairing": _number_or_null,
                            "classification": {
                                "enum": ["regular", "singular", "inconclusive"]
                            },
                            "model": {"type": ["string", "null"]},
                            "rate": _number_or_null,
                            "order": _number_or_null,
                            "margin": _number_or_null,
                            "fit_residual": _number_or_null,
                            "rule": {"type": "string"},
                            "h": {"type": "array", "items": {"type": "number"}},
                            "error": {"type": ["string", "null"]},
                        },
                    },
                },
                "n_singular_null": {"type": "integer"},
                "admissibility": {"type": ["object", "null"]},
                "containment": {"type": ["object", "null"]},
                "suppression_table": {"type": "array"},
            },
        },
        "divergence": {"type": ["object", "null"]},
        "verdicts": {"type": "object"},
        "expectations": {"type": "object"},
        "expectation_failures": {"type": "array", "items": {"type": "string"}},
        "expectations_met": {"type": ["boolean", "null"]},
    },
}


def schema_json() -> str:
    return json.dumps(REPORT_SCHEMA, indent=2, sort_keys=True) + "\n"
