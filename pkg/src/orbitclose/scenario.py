"""Scenario files: a versioned TOML key-value tree, validated before any
computation runs. Unknown keys are errors."""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .catalog import catalog_field
from .errors import SchemaError
from .field import parse_field
from .geometry import make_manifold

PIPELINES = ("close", "perturb", "verify", "monodromy", "adjust", "homoclinic")

_TOP_KEYS = {"schema", "name", "pipeline", "manifold", "field", "params",
             "output"}
_MANIFOLD_KEYS = {"kind", "dimension", "periods", "radius"}
_FIELD_KEYS = {"catalog", "source", "dimension", "parameters", "coordinates",
               "r_max"}
_PARAM_KEYS = {
    # events and orbits
    "x0", "alpha", "alpha_max", "horizon", "t_min_filter", "T_ref", "refine",
    "r", "window",
    # tube and perturbation
    "epsilon", "amplitude", "mode", "sample_count", "seed", "tol",
    "alpha_family", "epsilon_family",
    # monodromy / adjuster
    "T0", "T1", "segments", "delta_req", "target_dir", "delta_win",
    # homoclinic
    "tau", "freeze_window", "slow_threshold", "t_settle",
}
_OUTPUT_KEYS = {"dir"}


@dataclass(frozen=True)
class Scenario:
    name: str
    pipeline: str
    field: object
    manifold: object
    params: dict
    out_dir: str
    digest: str


def _require(cond, msg):
    if not cond:
        raise SchemaError(msg)


def _check_keys(table, allowed, where):
    unknown = set(table) - allowed
    _require(not unknown,
             f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def load_scenario(path, overrides=None):
    """Parse and validate a scenario file; returns a Scenario."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as e:
        raise SchemaError(f"{path}: {e}") from e

    _check_keys(data, _TOP_KEYS, "scenario")
    _require(data.get("schema") == 1, "schema = 1 is required")
    _require("pipeline" in data, "missing 'pipeline'")
    pipeline = data["pipeline"]
    _require(pipeline in PIPELINES,
             f"pipeline {pipeline!r} not one of {', '.join(PIPELINES)}")

    fld = data.get("field", {})
    _check_keys(fld, _FIELD_KEYS, "[field]")
    man_tbl = data.get("manifold", {})
    _check_keys(man_tbl, _MANIFOLD_KEYS, "[manifold]")

    params = dict(data.get("params", {}))
    _check_keys(params, _PARAM_KEYS, "[params]")
    if overrides:
        params.update({k: v for k, v in overrides.items() if v is not None})

    r_max = int(fld.get("r_max", 3))
    if "catalog" in fld:
        _require("source" not in fld, "[field] takes catalog OR source")
        field, man = catalog_field(fld["catalog"], r_max=r_max,
                                   **fld.get("parameters", {}))
        if man_tbl:
            man = _manifold_from(man_tbl)
    else:
        _require("source" in fld and "dimension" in fld,
                 "[field] needs source and dimension (or catalog)")
        field = parse_field(fld["source"], int(fld["dimension"]),
                            name=data.get("name", "field"),
                            coord_names=fld.get("coordinates"),
                            parameters=fld.get("parameters"), r_max=r_max)
        _require(bool(man_tbl), "[manifold] is required with [field].source")
        man = _manifold_from(man_tbl)

    name = data.get("name") or path_stem(path)
    out_dir = data.get("output", {}).get("dir", "runs")
    return Scenario(name=name, pipeline=pipeline, field=field, manifold=man,
                    params=params, out_dir=out_dir,
                    digest=hashlib.sha256(raw).hexdigest())


def _manifold_from(tbl):
    kind = tbl.get("kind")
    _require(kind in ("euclidean", "flat_torus", "sphere2"),
             f"unknown manifold kind {kind!r}")
    if kind == "euclidean":
        _require("dimension" in tbl, "euclidean manifold needs dimension")
        return make_manifold("euclidean", dimension=int(tbl["dimension"]))
    if kind == "flat_torus":
        _require("periods" in tbl, "flat_torus needs periods")
        periods = [None if p == 0 else float(p) for p in tbl["periods"]]
        return make_manifold("flat_torus", periods=periods)
    return make_manifold("sphere2", radius=float(tbl.get("radius", 1.0)))


def path_stem(path):
    import os
    return os.path.splitext(os.path.basename(str(path)))[0]
