"""Experiment configuration: JSON schema, defaults, caps and validation."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema

__all__ = ["SCHEMA_VERSION", "SCHEMA", "DEFAULTS", "CAPS", "ConfigError", "ExperimentSpec", "load_spec"]

SCHEMA_VERSION = 1

# hard limits; q = 1 kernels are vectors, so they get a larger cell budget
CAPS = {"max_q": 4, "max_cells": 64, "max_cells_q1": 4096, "max_n": 10_000_000}


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to exit code 2)."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_int2 = {"type": "integer", "minimum": 2}
_grid = {"type": "array", "items": _int1}
_family = {"enum": ["spread", "cycle", "signed"]}
_driver = {"enum": ["poisson", "gaussian", "rademacher", "uniform"]}
_component = {
    "type": "object",
    "properties": {"family": _family, "step": _int1, "seed": {"type": "integer", "minimum": 0}, "weight": _num},
    "required": ["family"],
    "additionalProperties": False,
}

PARAMS: dict[str, dict] = {
    "univariate_fmt": {
        "family": _family, "q": _int1, "intensity": _pos, "n_grid": _grid, "samples": _int2,
        "se_window": _pos, "family_seed": {"type": "integer", "minimum": 0}, "write_samples": {"type": "boolean"},
    },
    "multivariate_pt": {
        "n_cells": _int1, "intensity": _pos, "samples": _int2, "radii": {"type": "array", "items": _pos},
        "coordinates": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "properties": {"q": _int1, "components": {"type": "array", "minItems": 1, "items": _component}},
                "required": ["q", "components"], "additionalProperties": False,
            },
        },
        "write_samples": {"type": "boolean"},
    },
    "transfer": {
        "family": _family, "q": _int1, "intensity": _pos, "n_grid": _grid, "samples": _int2,
        "w1_final_max": _pos, "se_window": _pos, "family_seed": {"type": "integer", "minimum": 0},
    },
    "universality": {
        "orders": {"type": "array", "items": _int1, "minItems": 1},
        "family": _family, "family_seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "n_grid": _grid, "drivers": {"type": "array", "items": _driver, "minItems": 1},
        "pairwise_drivers": {"type": "array", "items": _driver}, "spacing": _pos, "samples": _int2,
        "w1_final_max": _pos, "radii": {"type": "array", "items": _pos},
        "contrapositive": {
            "type": ["object", "null"],
            "properties": {"family": _family, "q": _int1, "n_cells": _int1, "min_z": _pos},
            "additionalProperties": False,
        },
    },
    "lemma_sweep": {
        "n_cases": {"type": "integer", "minimum": 0}, "max_order": _int1, "max_cells": _int1,
        "lam_range": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
        "max_terms": _int1, "include_tight_cases": {"type": "boolean"},
    },
    "pair_limits": {
        "t_grid": {"type": "array", "items": _pos, "minItems": 2}, "order": {"type": "integer", "minimum": 0},
        "lam": _pos, "n_outer": _int2, "n_inner": _int2, "n_rho": _int2, "z_max": _pos,
        "mehler_t": {"type": "number", "minimum": 0}, "mehler_orders": {"type": "array", "items": _int1},
        "cells": _int1, "ks_orders": {"type": "array", "items": _int1},
        "ks_times": {"type": "array", "items": _pos}, "ks_samples": _int2, "ks_alpha": _pos,
    },
}

DEFAULTS: dict[str, dict] = {
    "univariate_fmt": {
        "family": "spread", "q": 1, "intensity": 1.0, "n_grid": [10, 100, 1000], "samples": 100_000,
        "se_window": 4.0, "family_seed": 0, "write_samples": False,
    },
    "multivariate_pt": {
        "n_cells": 64, "intensity": 1.0, "samples": 100_000, "radii": [0.5, 1.0, 2.0],
        "coordinates": [
            {"q": 1, "components": [{"family": "spread"}]},
            {"q": 2, "components": [{"family": "cycle", "step": 1}]},
            {"q": 2, "components": [{"family": "cycle", "step": 1}, {"family": "cycle", "step": 2}]},
        ],
        "write_samples": False,
    },
    "transfer": {
        "family": "cycle", "q": 2, "intensity": 1.0, "n_grid": [8, 16, 32, 64], "samples": 100_000,
        "w1_final_max": 0.05, "se_window": 4.0, "family_seed": 0,
    },
    "universality": {
        "orders": [2, 2], "family": "signed", "family_seeds": [0, 1], "n_grid": [16, 32, 64],
        "drivers": ["poisson", "gaussian", "rademacher", "uniform"],
        "pairwise_drivers": ["poisson", "gaussian", "rademacher"], "spacing": 1.0, "samples": 100_000,
        "w1_final_max": 0.05, "radii": [0.5, 1.0, 2.0],
        "contrapositive": {"family": "spread", "q": 2, "n_cells": 64, "min_z": 5.0},
    },
    "lemma_sweep": {
        "n_cases": 500, "max_order": 4, "max_cells": 6, "lam_range": [0.1, 100.0], "max_terms": 6,
        "include_tight_cases": True,
    },
    "pair_limits": {
        "t_grid": [0.2, 0.1, 0.05], "order": 2, "lam": 4.0, "n_outer": 200, "n_inner": 500,
        "n_rho": 100_000, "z_max": 4.0, "mehler_t": 0.1, "mehler_orders": [1, 2, 3], "cells": 3,
        "ks_orders": [1, 2], "ks_times": [0.1, 1.0], "ks_samples": 20_000, "ks_alpha": 0.01,
    },
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "poissonfmt experiment",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"enum": sorted(PARAMS)},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "seed": {"type": "integer", "minimum": 0},
        "params": {"type": "object"},
    },
    "required": ["kind"],
    "additionalProperties": False,
    "allOf": [
        {
            "if": {"properties": {"kind": {"const": k}}},
            "then": {"properties": {"params": {"type": "object", "properties": p, "additionalProperties": False}}},
        }
        for k, p in sorted(PARAMS.items())
    ],
}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    seed: int
    params: dict
    name: str

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": self.kind, "name": self.name,
                "seed": self.seed, "params": self.params}

    @property
    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _check_cells(q: int, n: int, what: str) -> None:
    if q > CAPS["max_q"]:
        raise ConfigError(f"{what}: order {q} exceeds the cap {CAPS['max_q']}")
    cap = CAPS["max_cells_q1"] if q == 1 else CAPS["max_cells"]
    if n > cap:
        raise ConfigError(f"{what}: {n} cells exceeds the cap {cap} for order {q}")


def _check_samples(n: int, what: str) -> None:
    if n > CAPS["max_n"]:
        raise ConfigError(f"{what}: {n} replications exceeds the cap {CAPS['max_n']}")


def _check_caps(kind: str, p: dict) -> None:
    if kind in ("univariate_fmt", "transfer"):
        for n in p["n_grid"]:
            _check_cells(p["q"], n, "n_grid")
            if n < p["q"]:
                raise ConfigError(f"n_grid: {n} cells cannot carry an order-{p['q']} off-diagonal kernel")
        _check_samples(p["samples"], "samples")
    elif kind == "multivariate_pt":
        for c in p["coordinates"]:
            _check_cells(c["q"], p["n_cells"], "coordinates")
        _check_samples(p["samples"], "samples")
    elif kind == "universality":
        if len(p["family_seeds"]) < len(p["orders"]):
            raise ConfigError("universality: need one family seed per coordinate")
        for q in p["orders"]:
            for n in p["n_grid"]:
                _check_cells(q, n, "n_grid")
        if p["contrapositive"]:
            _check_cells(p["contrapositive"]["q"], p["contrapositive"]["n_cells"], "contrapositive")
        _check_samples(p["samples"], "samples")
        if not set(p["pairwise_drivers"]) <= set(p["drivers"]):
            raise ConfigError("pairwise_drivers must be a subset of drivers")
    elif kind == "lemma_sweep":
        _check_cells(p["max_order"], p["max_cells"], "lemma_sweep")
        lo, hi = p["lam_range"]
        if lo > hi:
            raise ConfigError("lam_range must be increasing")
    elif kind == "pair_limits":
        for q in list(p["mehler_orders"]) + list(p["ks_orders"]):
            _check_cells(q, p["cells"], "pair_limits")
        _check_samples(p["n_outer"] * p["n_inner"], "n_outer * n_inner")
        _check_samples(p["n_rho"], "n_rho")
        _check_samples(p["ks_samples"], "ks_samples")
        if p["order"] >= len(p["t_grid"]):
            raise ConfigError("extrapolation order must be below the number of t-grid points")


def load_spec(source: str | Path | dict, seed: int | None = None) -> ExperimentSpec:
    """Validate a config (path, JSON text or dict), fill defaults and apply caps.

    ``seed`` overrides the seed in the config when given.
    """
    if isinstance(source, dict):
        data = copy.deepcopy(source)
    else:
        text = str(source)
        if isinstance(source, Path) or not text.lstrip().startswith("{"):
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(x) for x in exc.absolute_path)
        raise ConfigError(f"config invalid at '{path}': {exc.message}") from exc
    kind = data["kind"]
    params = copy.deepcopy(DEFAULTS[kind])
    params.update(data.get("params", {}))
    _check_caps(kind, params)
    return ExperimentSpec(
        kind=kind,
        seed=int(data.get("seed", 0) if seed is None else seed),
        params=params,
        name=data.get("name", kind),
    )
