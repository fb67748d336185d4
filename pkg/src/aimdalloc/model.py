"""Domain types shared across the package: system parameters and agent costs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ConfigError",
    "SystemConfig",
    "validate_config",
    "default_initial_allocation",
    "CostFunction",
    "QuadraticCost",
    "ExponentialCost",
    "check_gradient",
]


class ConfigError(ValueError):
    """A configuration violates one or more invariants; all are listed."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid configuration")


def _per_resource(value, m: int, name: str) -> np.ndarray:
    """Coerce a scalar or length-m sequence to a read-only float array."""
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.size == 1 and m != 1:
        arr = np.full(m, arr[0])
    if arr.shape != (m,):
        raise ConfigError([f"{name}: expected a scalar or {m} values, got {arr.size}"])
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SystemConfig:
    """Immutable description of one multi-agent, multi-resource system.

    Per-resource fields accept a scalar (broadcast over resources) or a
    length-``m`` sequence.  ``gamma=None`` marks unresolved normalization
    factors; resolve them with :func:`aimdalloc.engine.normalization_factors`
    before running a simulation.

    Units: time in seconds, allocations in resource units, ``alpha`` in
    units/second.
    """

    n: int
    m: int
    capacity: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    window: int = 1
    gamma: np.ndarray | None = None
    lambda_min: np.ndarray = 0.05
    lambda_max: np.ndarray = 0.95
    average_mode: str = "windowed"
    seed: int = 0

    def __post_init__(self):
        m = int(self.m)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "window", int(self.window))
        object.__setattr__(self, "seed", int(self.seed))
        for name in ("capacity", "alpha", "beta", "lambda_min", "lambda_max"):
            object.__setattr__(self, name, _per_resource(getattr(self, name), m, name))
        if self.gamma is not None:
            object.__setattr__(self, "gamma", _per_resource(self.gamma, m, "gamma"))

    def violations(self) -> list[str]:
        """Return every violated invariant, empty when the config is valid."""
        errs = []
        if self.n < 1:
            errs.append("n: agent count must be >= 1")
        if self.m < 1:
            errs.append("m: resource count must be >= 1")
        if self.window < 1:
            errs.append("window: must be >= 1")
        if np.any(self.capacity <= 0):
            errs.append("capacity: every C^j must be > 0")
        if np.any(self.alpha <= 0):
            errs.append("alpha: every additive gain must be > 0")
        if np.any((self.beta <= 0) | (self.beta >= 1)):
            errs.append("beta: every multiplicative factor must lie in (0,1)")
        if self.gamma is not None and np.any(self.gamma <= 0):
            errs.append("gamma: normalization factors must be > 0")
        if np.any(self.lambda_min <= 0):
            errs.append("lambda_min: must be > 0")
        if np.any(self.lambda_max >= 1):
            errs.append("lambda_max: must be < 1")
        if np.any(self.lambda_min > self.lambda_max):
            errs.append("lambda bounds: need lambda_min <= lambda_max")
        if self.average_mode not in ("cumulative", "windowed"):
            errs.append("average_mode: must be 'cumulative' or 'windowed'")
        return errs

    @property
    def eps_floor(self) -> np.ndarray:
        """Per-resource floor substituted for vanishing average denominators."""
        return 1e-9 * self.capacity

    def with_gamma(self, gamma) -> "SystemConfig":
        return SystemConfig(
            n=self.n,
            m=self.m,
            capacity=self.capacity,
            alpha=self.alpha,
            beta=self.beta,
            window=self.window,
            gamma=gamma,
            lambda_min=self.lambda_min,
            lambda_max=self.lambda_max,
            average_mode=self.average_mode,
            seed=self.seed,
        )


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Return ``cfg`` unchanged, or raise :class:`ConfigError` listing every violation."""
    errs = cfg.violations()
    if errs:
        raise ConfigError(errs)
    return cfg


def default_initial_allocation(cfg: SystemConfig) -> np.ndarray:
    """Symmetric strictly interior start: x_i^j = C^j / (2n), shape (n, m)."""
    return np.tile(cfg.capacity / (2.0 * cfg.n), (cfg.n, 1))


class CostFunction:
    """Per-agent cost over m resources: C^1-smooth, strictly convex, strictly increasing.

    Subclasses provide closed-form values and gradients.  ``partial`` is the
    unchecked fast path used inside event loops; ``value``/``gradient``
    validate their domain.
    """

    m: int

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def partial(self, x, j: int) -> float:
        """d/dx_j at x, no domain checks."""
        return float(self.gradient(np.asarray(x, dtype=float))[j])

    @staticmethod
    def _domain(x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValueError(f"cost functions are defined on the nonnegative orthant, got {x}")
        return x


class QuadraticCost(CostFunction):
    """f(x) = sum_j (c_j * x_j^2 / 2 + b_j * x_j), with c_j > 0 and b_j > 0.

    Positive linear terms keep the gradient strictly positive at the origin,
    which keeps event back-off probabilities bounded away from zero.
    """

    def __init__(self, c, b):
        self.c = np.atleast_1d(np.asarray(c, dtype=float)).copy()
        self.b = np.atleast_1d(np.asarray(b, dtype=float)).copy()
        if self.c.shape != self.b.shape:
            raise ValueError("c and b must have matching shapes")
        if np.any(self.c <= 0):
            raise ValueError("quadratic coefficients c must be strictly positive")
        if np.any(self.b <= 0):
            raise ValueError("linear coefficients b must be strictly positive")
        self.c.setflags(write=False)
        self.b.setflags(write=False)
        self.m = self.c.size

    def value(self, x) -> float:
        x = self._domain(x)
        return float(np.sum(self.c * x * x / 2.0 + self.b * x))

    def gradient(self, x) -> np.ndarray:
        x = self._domain(x)
        return self.c * x + self.b

    def partial(self, x, j: int) -> float:
        return self.c[j] * x[j] + self.b[j]


class ExponentialCost(CostFunction):
    """f(x) = sum_j a_j * exp(d_j * x_j), with a_j > 0 and d_j > 0."""

    def __init__(self, a, d):
        self.a = np.atleast_1d(np.asarray(a, dtype=float)).copy()
        self.d = np.atleast_1d(np.asarray(d, dtype=float)).copy()
        if self.a.shape != self.d.shape:
            raise ValueError("a and d must have matching shapes")
        if np.any(self.a <= 0) or np.any(self.d <= 0):
            raise ValueError("exponential parameters a and d must be strictly positive")
        self.a.setflags(write=False)
        self.d.setflags(write=False)
        self.m = self.a.size

    def value(self, x) -> float:
        x = self._domain(x)
        return float(np.sum(self.a * np.exp(self.d * x)))

    def gradient(self, x) -> np.ndarray:
        x = self._domain(x)
        return self.a * self.d * np.exp(self.d * x)

    def partial(self, x, j: int) -> float:
        return self.a[j] * self.d[j] * math.exp(self.d[j] * x[j])


def check_gradient(cost: CostFunction, x, h: float = 1e-5) -> float:
    """Max absolute deviation between the analytic gradient and central differences.

    ``x`` must be interior to the positive orthant and ``h > 0``.  Returns the
    deviation; thresholding is the caller's business.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=float)
    g = np.asarray(cost.gradient(x), dtype=float)
    worst = 0.0
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        fd = (cost.value(x + e) - cost.value(x - e)) / (2.0 * h)
        worst = max(worst, abs(g[j] - fd))
    return worst
