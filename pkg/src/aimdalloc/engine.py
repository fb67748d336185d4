"""Event-driven simulator of the distributed allocation protocol.

Between capacity events every agent grows its demand for every resource
linearly at the resource's additive gain.  When aggregate demand for a
resource reaches its capacity, a capacity event fires: the at-capacity
allocations are recorded and pushed into per-agent running averages, each
agent independently backs off (multiplies its demand by the resource's beta
factor) with a probability proportional to its marginal cost at the averages
and inversely proportional to its own average share, and growth resumes.  If
nobody backs off the event recurs at the same instant with a fresh draw, the
event index still advancing.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .backends import UniformStream, kernel_module, select_backend
from .model import (
    CostFunction,
    ExponentialCost,
    QuadraticCost,
    SystemConfig,
    validate_config,
    default_initial_allocation,
)

__all__ = [
    "EventTrace",
    "run_simulation",
    "normalization_factors",
    "full_backoff_gap",
    "drop_probability",
    "next_event_gap",
    "advance_linear",
    "apply_backoff",
    "AverageTracker",
    "trace_violations",
]

TRACE_CSV_COLUMNS = ("event_index", "time", "resource", "agent", "pre_alloc", "lambda", "backoff", "post_alloc")


def full_backoff_gap(cfg: SystemConfig) -> np.ndarray:
    """Inter-event time per resource when every agent backs off: (1-beta) C / (n alpha)."""
    return (1.0 - cfg.beta) * cfg.capacity / (cfg.n * cfg.alpha)


def normalization_factors(cfg: SystemConfig, costs, grid: int = 33) -> np.ndarray:
    """Per-resource normalization factors keeping raw back-off probabilities <= lambda_max.

    Probes average allocations on the ray s * C/n for s in [1/4, 1] and scales
    lambda_max by the smallest share-to-marginal-cost ratio over agents and
    probe points, so the steepest agent pins the factor.
    """
    costs = list(costs)
    if len(costs) != cfg.n:
        raise ValueError(f"expected {cfg.n} cost functions, got {len(costs)}")
    scales = np.linspace(0.25, 1.0, grid)
    gamma = np.empty(cfg.m)
    for j in range(cfg.m):
        best = np.inf
        for s in scales:
            avg = s * cfg.capacity / cfg.n
            for cost in costs:
                g = float(cost.partial(avg, j))
                if not np.isfinite(g) or g <= 0.0:
                    raise ValueError(f"non-positive or non-finite marginal cost on the probe grid (resource {j})")
                best = min(best, avg[j] / g)
        gamma[j] = cfg.lambda_max[j] * best
    return gamma


def drop_probability(cost: CostFunction, averages, j: int, cfg: SystemConfig):
    """Clamped back-off probability of one agent at a capacity event of resource j.

    Raw value is gamma_j * (marginal cost at the averages) / (average share of
    resource j); denominators below the vanishing-average floor are replaced
    by the floor.  Returns (lam, raw, floored).
    """
    if cfg.gamma is None:
        raise ValueError("normalization factors are unresolved; call normalization_factors first")
    averages = np.asarray(averages, dtype=float)
    den = averages[j]
    floor = cfg.eps_floor[j]
    floored = bool(den < floor)
    if floored:
        den = floor
    g = cost.partial(averages, j)
    raw = cfg.gamma[j] * g / den
    lam = min(max(raw, cfg.lambda_min[j]), cfg.lambda_max[j])
    return float(lam), float(raw), floored


def next_event_gap(x: np.ndarray, cfg: SystemConfig, j: int) -> float:
    """Time until resource j's aggregate demand reaches capacity under linear growth.

    Zero when aggregate demand already sits at capacity (the all-keep case,
    which the simulator resolves by an immediate re-draw).
    """
    s = float(np.sum(x[:, j]))
    gap = (cfg.capacity[j] - s) / (cfg.n * cfg.alpha[j])
    if gap < -1e-9 * cfg.capacity[j]:
        raise ValueError(f"aggregate demand {s} exceeds capacity {cfg.capacity[j]} of resource {j}")
    return max(gap, 0.0)


def advance_linear(x: np.ndarray, cfg: SystemConfig, dt: float) -> np.ndarray:
    """Grow every allocation by alpha^j * dt; refuses to overshoot any capacity."""
    if dt < 0:
        raise ValueError("cannot advance backwards in time")
    out = x + cfg.alpha * dt
    sums = out.sum(axis=0)
    if np.any(sums > cfg.capacity * (1.0 + 1e-9)):
        j = int(np.argmax(sums - cfg.capacity))
        raise ValueError(f"advance overshoots capacity of resource {j}; bound the step with next_event_gap")
    return out


def apply_backoff(x: np.ndarray, cfg: SystemConfig, j: int, lam, rng) -> np.ndarray:
    """Draw the independent back-off mask for resource j and rescale in place."""
    lam = np.asarray(lam, dtype=float)
    mask = rng.random(cfg.n) < lam
    x[:, j] = np.where(mask, x[:, j] * cfg.beta[j], x[:, j])
    return mask


class AverageTracker:
    """Running event averages of one resource: cumulative and pre-filled window.

    The window ring starts filled with the initial sample, which stands in for
    the missing history until the window is warm (the same rule the lifted
    matrix recursion applies).
    """

    def __init__(self, first_sample, window: int):
        first = np.atleast_1d(np.asarray(first_sample, dtype=float))
        self.window = int(window)
        self.ring = np.tile(first, (self.window, 1))
        self.pos = 0
        self.count = 1
        self.cum = first.copy()

    def push(self, sample) -> None:
        sample = np.atleast_1d(np.asarray(sample, dtype=float))
        self.ring[self.pos] = sample
        self.pos = (self.pos + 1) % self.window
        self.count += 1
        self.cum += sample

    def cumulative(self) -> np.ndarray:
        return self.cum / self.count

    def windowed(self) -> np.ndarray:
        return self.ring.mean(axis=0)


@dataclass
class EventTrace:
    """Complete record of one simulation run, one row per capacity event."""

    config: SystemConfig
    x0: np.ndarray
    times: np.ndarray
    resources: np.ndarray
    gaps: np.ndarray
    pre: np.ndarray
    lam: np.ndarray
    backoff: np.ndarray
    post: np.ndarray
    event_count: np.ndarray
    clamp_low: np.ndarray
    clamp_high: np.ndarray
    floor_count: np.ndarray
    final_alloc: np.ndarray
    final_time: float
    backend: str
    seed: int
    average_mode: str
    lambda_overridden: bool = False

    @property
    def n_events(self) -> int:
        return self.times.shape[0]

    def events_of(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.resources == j)

    def event_average(self) -> np.ndarray:
        """Cumulative mean allocation over recorded at-capacity samples, (n, m).

        The initial allocation counts as sample zero of every resource.
        """
        cfg = self.config
        out = np.empty((cfg.n, cfg.m))
        for j in range(cfg.m):
            idx = self.events_of(j)
            out[:, j] = (self.x0[:, j] + self.pre[idx].sum(axis=0)) / (idx.size + 1)
        return out

    def windowed_average(self) -> np.ndarray:
        """Mean of each resource's last `window` samples (initial sample pre-fills)."""
        cfg = self.config
        T = cfg.window
        out = np.empty((cfg.n, cfg.m))
        for j in range(cfg.m):
            idx = self.events_of(j)
            take = idx[-T:]
            missing = T - take.size
            out[:, j] = (self.pre[take].sum(axis=0) + missing * self.x0[:, j]) / T
        return out

    def time_average(self) -> np.ndarray:
        """Time-weighted mean allocation over [0, final_time], (n, m)."""
        cfg = self.config
        if self.final_time <= 0.0:
            return self.x0.copy()
        out = np.empty((cfg.n, cfg.m))
        for j in range(cfg.m):
            idx = self.events_of(j)
            total = np.zeros(cfg.n)
            prev_post = self.x0[:, j]
            prev_t = 0.0
            for k in idx:
                total += 0.5 * (prev_post + self.pre[k]) * self.gaps[k]
                prev_post = self.post[k]
                prev_t = self.times[k]
            dt = self.final_time - prev_t
            if dt > 0.0:
                end = prev_post + cfg.alpha[j] * dt
                total += 0.5 * (prev_post + end) * dt
            out[:, j] = total / self.final_time
        return out

    def summary(self) -> dict:
        return {
            "schema": "aimdalloc.summary.v1",
            "n": self.config.n,
            "m": self.config.m,
            "window": self.config.window,
            "seed": self.seed,
            "backend": self.backend,
            "average_mode": self.average_mode,
            "events_total": int(self.n_events),
            "events_per_resource": self.event_count.tolist(),
            "clamp_low": self.clamp_low.tolist(),
            "clamp_high": self.clamp_high.tolist(),
            "floor_substitutions": self.floor_count.tolist(),
            "final_time": float(self.final_time),
            "event_average": self.event_average().tolist(),
            "windowed_average": self.windowed_average().tolist(),
            "time_average": self.time_average().tolist(),
        }

    def write_csv(self, fobj) -> None:
        """One row per (event, agent); floats are written with round-trip precision."""
        close = False
        if isinstance(fobj, (str, bytes)):
            fobj = open(fobj, "w", encoding="utf-8", newline="")
            close = True
        try:
            fobj.write(",".join(TRACE_CSV_COLUMNS) + "\n")
            beta = self.config.beta
            for k in range(self.n_events):
                j = int(self.resources[k])
                for i in range(self.config.n):
                    mult = float(beta[j]) if self.backoff[k, i] else 1.0
                    fobj.write(
                        f"{k},{float(self.times[k])!r},{j},{i},{float(self.pre[k, i])!r},"
                        f"{float(self.lam[k, i])!r},{mult!r},{float(self.post[k, i])!r}\n"
                    )
        finally:
            if close:
                fobj.close()

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _family_arrays(costs, m):
    """Family codes plus parameter matrices for the compiled kernel, or None."""
    fam = np.empty(len(costs), dtype=np.int64)
    p1 = np.empty((len(costs), m))
    p2 = np.empty((len(costs), m))
    for i, cost in enumerate(costs):
        if isinstance(cost, QuadraticCost):
            fam[i] = 0
            p1[i] = cost.c
            p2[i] = cost.b
        elif isinstance(cost, ExponentialCost):
            fam[i] = 1
            p1[i] = cost.a
            p2[i] = cost.d
        else:
            return None
    return fam, p1, p2


def run_simulation(cfg: SystemConfig, costs, n_events: int, *, seed=None, x0=None,
                   lambda_override=None, backend: str | None = None) -> EventTrace:
    """Run ``n_events`` capacity events and return the full trace.

    Deterministic for a fixed (config, seed): the two backends consume one
    uniform per agent per event from the same generator stream and perform
    identical arithmetic.  ``lambda_override`` freezes the per-agent,
    per-resource back-off probabilities (bypassing the cost models), which is
    useful for calibration checks.  Unresolved ``gamma`` is computed on entry.
    """
    cfg = validate_config(cfg)
    costs = list(costs)
    if len(costs) != cfg.n:
        raise ValueError(f"expected {cfg.n} cost functions, got {len(costs)}")
    for i, cost in enumerate(costs):
        if getattr(cost, "m", cfg.m) != cfg.m:
            raise ValueError(f"cost function {i} covers {cost.m} resources, config has {cfg.m}")
    if n_events < 0:
        raise ValueError("n_events must be >= 0")
    if cfg.gamma is None and lambda_override is None:
        cfg = cfg.with_gamma(normalization_factors(cfg, costs))

    n, m, T = cfg.n, cfg.m, cfg.window
    if x0 is None:
        x0 = default_initial_allocation(cfg)
    x0 = np.array(x0, dtype=float)
    if x0.shape != (n, m):
        raise ValueError(f"initial allocation must have shape ({n}, {m})")
    if np.any(x0 < 0) or np.any(x0.sum(axis=0) > cfg.capacity * (1 + 1e-12)):
        raise ValueError("initial allocation must be nonnegative with column sums within capacity")

    fam_arrays = _family_arrays(costs, m)
    use_fixed = lambda_override is not None
    name = select_backend(backend, family_only=(fam_arrays is not None) or use_fixed)

    if use_fixed:
        lam_fixed = np.broadcast_to(np.asarray(lambda_override, dtype=float), (n, m)).copy()
        if np.any((lam_fixed < 0) | (lam_fixed > 1)):
            raise ValueError("lambda_override entries must lie in [0, 1]")
    else:
        lam_fixed = np.zeros((n, m))

    N = int(n_events)
    times = np.empty(N)
    resources = np.empty(N, dtype=np.int32)
    gaps = np.empty(N)
    pre = np.empty((N, n))
    lam = np.empty((N, n))
    boff = np.zeros((N, n), dtype=np.uint8)
    post = np.empty((N, n))

    x = np.ascontiguousarray(x0, dtype=float).copy()
    win = np.empty((m, T, n))
    win[:] = x0.T[:, None, :]
    win_sum = win.sum(axis=1)
    win_pos = np.zeros(m, dtype=np.int64)
    cum_sum = np.ascontiguousarray(x0.T).copy()
    n_samples = np.ones(m, dtype=np.int64)
    gap_acc = np.zeros(m)
    event_count = np.zeros(m, dtype=np.int64)
    clamp_lo = np.zeros(m, dtype=np.int64)
    clamp_hi = np.zeros(m, dtype=np.int64)
    floor_count = np.zeros(m, dtype=np.int64)

    the_seed = cfg.seed if seed is None else int(seed)
    stream = UniformStream(np.random.default_rng(the_seed))
    avg_windowed = 1 if cfg.average_mode == "windowed" else 0
    gamma = cfg.gamma if cfg.gamma is not None else np.ones(m)

    common = (cfg.capacity, cfg.alpha, cfg.beta, gamma, cfg.lambda_min, cfg.lambda_max,
              cfg.eps_floor, T, win, win_pos, win_sum, cum_sum, n_samples, 0.0,
              gap_acc, event_count, clamp_lo, clamp_hi, floor_count, avg_windowed)
    outputs = (times, resources, gaps, pre, lam, boff, post)

    if name == "compiled":
        fam, p1, p2 = fam_arrays if fam_arrays is not None else (np.zeros(n, np.int64), np.ones((n, m)), np.ones((n, m)))
        mod = kernel_module("compiled")
        final_t, upos = mod.run_events(
            N, x, *common,
            fam, p1, p2, lam_fixed, 1 if use_fixed else 0,
            stream.buf, stream.refill, stream.pos, *outputs,
        )
        stream.pos = upos
    else:
        partials = [cost.partial for cost in costs]
        mod = kernel_module("python")
        final_t = mod.run_events(
            N, x, *common,
            partials, lam_fixed, 1 if use_fixed else 0,
            stream, *outputs,
        )

    return EventTrace(
        config=cfg,
        x0=x0,
        times=times,
        resources=resources,
        gaps=gaps,
        pre=pre,
        lam=lam,
        backoff=boff.astype(bool),
        post=post,
        event_count=event_count,
        clamp_low=clamp_lo,
        clamp_high=clamp_hi,
        floor_count=floor_count,
        final_alloc=x,
        final_time=float(final_t),
        backend=name,
        seed=the_seed,
        average_mode=cfg.average_mode,
        lambda_overridden=use_fixed,
    )


def trace_violations(trace: EventTrace) -> list[str]:
    """Check every trace invariant from first principles; returns violations.

    Event times within one resource must strictly increase except immediately
    after an all-keep record (the re-draw rule), recorded gaps must match the
    closed form from the previous post-back-off state, every event must sit at
    capacity, and back-off multipliers must be consistent.
    """
    cfg = trace.config
    errs: list[str] = []
    if trace.n_events == 0:
        return errs
    if np.any(np.diff(trace.times) < 0):
        errs.append("combined event times decrease")
    for j in range(cfg.m):
        idx = trace.events_of(j)
        if idx.size == 0:
            continue
        cap = cfg.capacity[j]
        sums = trace.pre[idx].sum(axis=1)
        worst = np.abs(sums - cap).max()
        if worst > 1e-9 * cap:
            errs.append(f"resource {j}: at-capacity deviation {worst:.3e} exceeds 1e-9*C")
        t = trace.times[idx]
        keep_all = ~trace.backoff[idx].any(axis=1)
        # time scale of a full ramp from empty to capacity, for rounding slack
        ramp = cap / (cfg.n * cfg.alpha[j])
        for k in range(1, idx.size):
            if t[k] < t[k - 1]:
                errs.append(f"resource {j}: event times decrease at its event {k}")
            elif t[k] == t[k - 1] and not keep_all[k - 1]:
                errs.append(f"resource {j}: repeated event time without an all-keep predecessor at its event {k}")
            elif keep_all[k - 1] and trace.gaps[idx[k]] > 1e-12 * ramp:
                errs.append(f"resource {j}: re-drawn event not at the same instant at its event {k}")
        # closed-form gaps from the previous post-back-off allocations; the
        # time to capacity is clamped at zero exactly as the engine does, and
        # the absolute slack covers summation rounding near zero
        prev_post = trace.x0[:, j]
        denom = cfg.n * cfg.alpha[j]
        for k in range(idx.size):
            expected = max((cap - prev_post.sum()) / denom, 0.0)
            got = trace.gaps[idx[k]]
            if abs(got - expected) > 1e-12 * expected + 1e-12 * ramp:
                errs.append(
                    f"resource {j}: recorded gap {got!r} differs from closed form {expected!r} at its event {k}"
                )
                break
            prev_post = trace.post[idx[k]]
        if not trace.lambda_overridden:
            lo, hi = cfg.lambda_min[j], cfg.lambda_max[j]
            lam = trace.lam[idx]
            if np.any((lam < lo) | (lam > hi)):
                errs.append(f"resource {j}: recorded probabilities leave [{lo}, {hi}]")
        mult = np.where(trace.backoff[idx], cfg.beta[j], 1.0)
        if not np.array_equal(trace.post[idx], trace.pre[idx] * mult):
            errs.append(f"resource {j}: post-event allocations are not pre * multiplier")
    # simultaneous events must be ordered by ascending resource index
    same = np.flatnonzero(np.diff(trace.times) == 0.0)
    for k in same:
        if trace.resources[k + 1] < trace.resources[k]:
            errs.append(f"simultaneous events out of resource order at event {k + 1}")
    return errs
