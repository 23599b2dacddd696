"""Run configuration documents (JSON, schema-checked before any work)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from .dataset import GridConfig
from .evaluation import KnnSettings

RUN_FORMAT = "probetherm-run/1"

SCALES = {"desk": (300, 20), "full": (1000, 100)}

_num = {"type": "number"}
_count = {"type": "integer", "minimum": 1}
_range = {"type": "array", "prefixItems": [_num, _num, _count], "items": False, "minItems": 3}

RUN_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["format_version"],
    "properties": {
        "format_version": {"const": RUN_FORMAT},
        "name": {"type": "string"},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "model": {"enum": ["jc", "rabi"]},
                "T_range": _range,
                "gamma_range": _range,
                "schema": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["times", "observables"],
                    "properties": {
                        "times": {"type": "array", "items": _num, "minItems": 1},
                        "observables": {"type": "array", "minItems": 1,
                                        "items": {"enum": ["sx", "sy", "sz"]}},
                    },
                },
                "noise_rel_std": {"type": "number", "minimum": 0},
                "noise_target": {"enum": ["validation", "both", "none"]},
                "split_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "omega": {"type": "number", "exclusiveMinimum": 0},
                "qubit_gap": _num,
                "cutoff": {"type": ["integer", "null"], "minimum": 1},
                "n_bins": {"type": "integer", "minimum": 0},
                "probe": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                "tail_tol": {"type": "number", "exclusiveMinimum": 0},
                "check_truncation": {"type": "boolean"},
            },
        },
        "knn": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k": {"type": ["integer", "null"], "minimum": 1},
                "cv": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "folds": {"type": "integer", "minimum": 2},
                "standardize": {"type": "boolean"},
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_d": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 1}},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "dataset": {"type": "string"},
                "model": {"type": "string"},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    knn: KnnSettings = field(default_factory=KnnSettings)
    n_d: tuple[int, ...] | None = None
    output: dict = field(default_factory=dict)
    name: str = ""

    def to_json(self) -> dict:
        doc = {"format_version": RUN_FORMAT}
        if self.name:
            doc["name"] = self.name
        doc["grid"] = self.grid.to_json()
        doc["knn"] = self.knn.to_json()
        doc["evaluation"] = {"n_d": list(self.n_d) if self.n_d else None}
        if self.output:
            doc["output"] = dict(self.output)
        return doc


def _field_path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def parse_run_config(doc: dict) -> RunConfig:
    try:
        jsonschema.validate(doc, RUN_SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"{_field_path(err)}: {err.message}") from None
    try:
        grid = GridConfig.from_json(doc.get("grid", {}))
    except (ValueError, TypeError) as err:
        raise ConfigError(f"grid.{err}") from None
    knn_doc = doc.get("knn", {})
    knn = KnnSettings(
        k=knn_doc.get("k"),
        k_candidates=tuple(knn_doc.get("cv", KnnSettings.k_candidates)),
        folds=knn_doc.get("folds", KnnSettings.folds),
        standardize=knn_doc.get("standardize", False),
    )
    n_d = doc.get("evaluation", {}).get("n_d")
    return RunConfig(grid, knn, tuple(n_d) if n_d else None, doc.get("output", {}), doc.get("name", ""))


def load_run_config(path: str | Path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return parse_run_config(doc)


def save_run_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_json(), fh, indent=2)
        fh.write("\n")


def rescale(grid: GridConfig, scale: str) -> GridConfig:
    """Swap the grid point counts for a named scale; fixed-gamma grids stay fixed."""
    n_T, n_g = SCALES[scale]
    g_lo, g_hi, g_n = grid.gamma_range
    return replace(grid, T_range=(grid.T_range[0], grid.T_range[1], n_T),
                   gamma_range=(g_lo, g_hi, g_n if g_n == 1 else n_g))
