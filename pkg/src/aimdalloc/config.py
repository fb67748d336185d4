"""JSON run-configuration ingestion.

Schema (all keys required unless noted):

    {
      "system":    {"n": int, "m": int, "T": int, "seed": int},
      "resources": [{"capacity": float, "alpha": float, "beta": float,
                     "gamma": float | "auto",
                     "lambda_min": float, "lambda_max": float}, ...m...],
      "agents":    [{"cost": {"family": "quadratic" | "exponential",
                              "params": {...}}}, ...n...],
      "engine":    {"average_mode": "windowed" | "cumulative",          (optional)
                    "initial": "interior-default" | [[...]] }           (optional)
    }

Quadratic params: c (length m, > 0), b (length m, > 0).
Exponential params: a (length m, > 0), d (length m, > 0).
``gamma: "auto"`` resolves the normalization factor from the cost functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import normalization_factors
from .model import (
    ConfigError,
    ExponentialCost,
    QuadraticCost,
    SystemConfig,
    default_initial_allocation,
)

__all__ = ["RunSetup", "parse_config", "load_config"]

_FAMILIES = {
    "quadratic": (QuadraticCost, ("c", "b")),
    "exponential": (ExponentialCost, ("a", "d")),
}


@dataclass
class RunSetup:
    """Validated configuration: system parameters, costs, and the initial point."""

    config: SystemConfig
    costs: list
    x0: np.ndarray
    raw: dict


def _require(doc: dict, key: str, errs: list, kind=dict):
    value = doc.get(key)
    if not isinstance(value, kind):
        errs.append(f"{key}: missing or not a {kind.__name__}")
        return None
    return value


def parse_config(doc: dict) -> RunSetup:
    """Build a :class:`RunSetup` from a parsed JSON document.

    Collects every violation before raising, so one round trip reports all
    problems.
    """
    errs: list[str] = []
    system = _require(doc, "system", errs)
    resources = _require(doc, "resources", errs, list)
    agents = _require(doc, "agents", errs, list)
    engine_opts = doc.get("engine", {})
    if not isinstance(engine_opts, dict):
        errs.append("engine: must be an object")
        engine_opts = {}
    if errs:
        raise ConfigError(errs)

    n = system.get("n")
    m = system.get("m")
    if not isinstance(n, int) or not isinstance(m, int):
        raise ConfigError(["system.n and system.m must be integers"])
    if len(resources) != m:
        errs.append(f"resources: expected {m} entries, got {len(resources)}")
    if len(agents) != n:
        errs.append(f"agents: expected {n} entries, got {len(agents)}")

    def column(key, default=None):
        out = []
        for k, res in enumerate(resources):
            v = res.get(key, default)
            if v is None:
                errs.append(f"resources[{k}].{key}: missing")
                v = 1.0
            out.append(v)
        return out

    gamma_raw = [res.get("gamma", "auto") for res in resources]
    auto_gamma = any(g == "auto" for g in gamma_raw)
    if auto_gamma and not all(g == "auto" for g in gamma_raw):
        errs.append("resources[].gamma: mix of 'auto' and numeric values is not supported")

    costs = []
    for k, agent in enumerate(agents):
        spec = agent.get("cost") if isinstance(agent, dict) else None
        if not isinstance(spec, dict):
            errs.append(f"agents[{k}].cost: missing object")
            continue
        family = spec.get("family")
        if family not in _FAMILIES:
            errs.append(f"agents[{k}].cost.family: unknown family {family!r}")
            continue
        cls, names = _FAMILIES[family]
        params = spec.get("params", {})
        try:
            cost = cls(*[params[name] for name in names])
        except KeyError as exc:
            errs.append(f"agents[{k}].cost.params: missing {exc}")
            continue
        except ValueError as exc:
            errs.append(f"agents[{k}].cost: {exc}")
            continue
        if cost.m != m:
            errs.append(f"agents[{k}].cost: parameters cover {cost.m} resources, expected {m}")
            continue
        costs.append(cost)

    mode = engine_opts.get("average_mode", "windowed")
    try:
        cfg = SystemConfig(
            n=n,
            m=m,
            capacity=column("capacity"),
            alpha=column("alpha"),
            beta=column("beta"),
            window=system.get("T", 1),
            gamma=None if auto_gamma else [float(g) for g in gamma_raw],
            lambda_min=column("lambda_min", 0.05),
            lambda_max=column("lambda_max", 0.95),
            average_mode=mode,
            seed=system.get("seed", 0),
        )
        errs.extend(cfg.violations())
    except ConfigError as exc:
        errs.extend(exc.violations)
        cfg = None

    if errs or cfg is None:
        raise ConfigError(errs)

    if auto_gamma:
        cfg = cfg.with_gamma(normalization_factors(cfg, costs))

    initial = engine_opts.get("initial", "interior-default")
    if initial == "interior-default":
        x0 = default_initial_allocation(cfg)
    else:
        x0 = np.asarray(initial, dtype=float)
        if x0.shape != (n, m):
            raise ConfigError([f"engine.initial: expected an {n}x{m} matrix"])
    return RunSetup(config=cfg, costs=costs, x0=x0, raw=doc)


def load_config(path) -> RunSetup:
    """Read and validate a JSON configuration file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["config root must be a JSON object"])
    return parse_config(doc)
