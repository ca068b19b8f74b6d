"""Experiment configuration: JSON schema, parsing and validation.

Top-level blocks (see README for the full schema):

    experiment: {kind, seed, output_dir?}
    grid:       {m, n, L, N}
    region:     {intervals1, intervals2, margin}        (geometry kinds)
    time:       {T, nt, rule?}                          (Gramian horizon)
    solver:     {dt?, epsilon?, s?, cg_tol?, ...}       (control kinds)
    xsb:        {s, b, bprime, r, bands?, nsamples?, ...}
    sweep:      [{name, overrides}, ...]                (optional driver)

Validation failures raise ConfigError with the offending field path.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

EXPERIMENT_KINDS = (
    "observability-sweep",
    "stationary-estimate",
    "linear-null-control",
    "nonlinear-null-control",
    "exact-control",
    "xsb-checks",
)

_REQUIRED_BLOCKS = {
    "observability-sweep": ("grid", "region", "time"),
    "stationary-estimate": ("grid", "region"),
    "linear-null-control": ("grid", "region", "time", "solver"),
    "nonlinear-null-control": ("grid", "region", "time", "solver"),
    "exact-control": ("grid", "region", "time", "solver"),
    "xsb-checks": ("grid", "xsb"),
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    raw: dict
    output_dir: str | None = None

    @property
    def grid(self) -> dict:
        return self.raw["grid"]

    @property
    def region(self) -> dict:
        return self.raw.get("region", {})

    @property
    def time(self) -> dict:
        return self.raw.get("time", {})

    @property
    def solver(self) -> dict:
        return self.raw.get("solver", {})

    @property
    def xsb(self) -> dict:
        return self.raw.get("xsb", {})

    @property
    def sweep(self) -> list[dict]:
        return self.raw.get("sweep", [])


def _need(block: dict, path: str, key: str, types, check=None, message=""):
    if key not in block:
        raise ConfigError(f"{path}.{key}", "missing required field")
    val = block[key]
    if not isinstance(val, types):
        tn = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"{path}.{key}", f"expected {tn}, got {type(val).__name__}")
    if check is not None and not check(val):
        raise ConfigError(f"{path}.{key}", message or "invalid value")
    return val


def _validate_intervals(block: dict, path: str, key: str, count: int):
    ivs = _need(block, path, key, list)
    if len(ivs) != count:
        raise ConfigError(f"{path}.{key}", f"need one interval list per direction ({count})")
    for j, per in enumerate(ivs):
        if not isinstance(per, list) or not per:
            raise ConfigError(f"{path}.{key}[{j}]", "expected a nonempty list of [lo, hi] pairs")
        for k, iv in enumerate(per):
            if not (isinstance(iv, list) and len(iv) == 2):
                raise ConfigError(f"{path}.{key}[{j}][{k}]", "expected [lo, hi]")


def validate(raw: dict) -> ExperimentConfig:
    exp = _need(raw, "config", "experiment", dict)
    kind = _need(exp, "experiment", "kind", str, lambda k: k in EXPERIMENT_KINDS,
                 f"must be one of {', '.join(EXPERIMENT_KINDS)}")
    seed = _need(exp, "experiment", "seed", int)
    for block in _REQUIRED_BLOCKS[kind]:
        if block not in raw:
            raise ConfigError(block, f'missing block required by experiment kind "{kind}"')

    g = raw["grid"]
    m = _need(g, "grid", "m", int, lambda v: v >= 1, "need m >= 1")
    n = _need(g, "grid", "n", int, lambda v: v >= 1, "need n >= 1")
    _need(g, "grid", "L", int, lambda v: v >= 1, "need integer L >= 1")
    N = _need(g, "grid", "N", list, lambda v: len(v) == m + n, f"need m+n={m + n} entries")
    for j, nj in enumerate(N):
        if not isinstance(nj, int) or nj < 4 or nj % 2:
            raise ConfigError(f"grid.N[{j}]", "entries must be even integers >= 4")

    if "region" in raw:
        r = raw["region"]
        _validate_intervals(r, "region", "intervals1", m)
        _validate_intervals(r, "region", "intervals2", n)
        _need(r, "region", "margin", (int, float), lambda v: v >= 0, "margin must be >= 0")

    if "time" in raw:
        t = raw["time"]
        _need(t, "time", "T", (int, float), lambda v: v > 0, "T must be positive")
        _need(t, "time", "nt", int, lambda v: v >= 8, "need nt >= 8")
        rule = t.get("rule", "gauss")
        if rule not in ("gauss", "midpoint"):
            raise ConfigError("time.rule", 'must be "gauss" or "midpoint"')

    if "solver" in raw:
        s = raw["solver"]
        if "epsilon" in s and s["epsilon"] not in (-1, 0, 1):
            raise ConfigError("solver.epsilon", "must be -1, 0 or 1")
        for key in ("dt", "cg_tol", "fp_tol", "rho", "delta", "eta", "target"):
            if key in s and not (isinstance(s[key], (int, float)) and s[key] > 0):
                raise ConfigError(f"solver.{key}", "must be a positive number")

    if "xsb" in raw:
        x = raw["xsb"]
        for key in ("b", "bprime"):
            if key in x and not isinstance(x[key], (int, float)):
                raise ConfigError(f"xsb.{key}", "must be a number")

    if "sweep" in raw:
        for i, entry in enumerate(raw["sweep"]):
            if not isinstance(entry, dict) or "name" not in entry:
                raise ConfigError(f"sweep[{i}]", 'entries need a "name" and optional "overrides"')

    return ExperimentConfig(kind, seed, raw, exp.get("output_dir"))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return validate(raw)


def apply_overrides(raw: dict, overrides: dict) -> dict:
    """Deep-merge sweep overrides into a copy of the base config."""
    out = copy.deepcopy(raw)

    def merge(dst, src):
        for k, v in src.items():
            if isinstance(v, dict) and isinstance(dst.get(k), dict):
                merge(dst[k], v)
            else:
                dst[k] = v

    merge(out, overrides)
    out.pop("sweep", None)
    return out
