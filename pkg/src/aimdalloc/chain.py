"""Windowed chain of stacked partial averages driven by randomized event matrices.

The state stacks, per resource, the running means of the newest 1..T
at-capacity samples.  A capacity event of one resource multiplies that
resource's stack by the window lift of its event matrix and leaves the other
blocks alone; which resource fires next follows the same deterministic timing
as the event simulator, so the two models walk through identical event
sequences for the same seed.

Back-off patterns are drawn at each resource's event right after its window
push, from averages current at that instant; the drawn pattern fixes both the
gap to the resource's next event and the matrix applied there.  The first
event of each resource grows the strictly interior initial allocation
linearly to capacity (an affine ramp, not an event matrix) and is flagged so
product-form checks can skip it.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .backends import UniformStream
from .engine import normalization_factors
from .matrices import (
    aimd_matrix,
    block_max_l1,
    event_block_matrix,
    lift_window,
    pattern_vector,
    project_block_zero_sum,
)
from .model import SystemConfig, default_initial_allocation, validate_config

__all__ = [
    "WindowState",
    "StepRecord",
    "ChainRun",
    "init_state",
    "step_chain",
    "run_chain",
    "ergodic_average",
    "uniqueness_probe",
    "UniquenessReport",
    "contraction_on_average",
    "ContractionReport",
    "event_matrix_from_record",
    "consistency_error",
    "suggested_horizon",
]


@dataclass
class StepRecord:
    """One chain step: the push that happened and the pattern drawn afterwards."""

    index: int
    resource: int
    time: float
    gap: float
    ramp: bool
    applied_mask: np.ndarray | None
    drawn_mask: np.ndarray
    lam: np.ndarray
    sample: np.ndarray


@dataclass
class WindowState:
    """Stacked partial averages plus the bookkeeping that drives event timing."""

    xi: np.ndarray            # (m, T, n); row r holds the mean of the newest r+1 samples
    ring: np.ndarray          # (m, T, n) raw samples, pre-filled with the start
    ring_pos: np.ndarray      # (m,) next slot
    pushes: np.ndarray        # (m,) samples pushed, including the seed
    t: float
    last_event: np.ndarray    # (m,)
    next_event: np.ndarray    # (m,)
    pending: list             # per resource: back-off mask drawn at its last event, or None

    def vector(self) -> np.ndarray:
        """Flat stacked state (resource-major, then window row, then agent)."""
        return self.xi.reshape(-1).copy()

    def windowed_averages(self) -> np.ndarray:
        """(m, n) means over each resource's full window, the probability inputs."""
        return self.xi[:, -1, :]

    def clone(self) -> "WindowState":
        return WindowState(
            xi=self.xi.copy(),
            ring=self.ring.copy(),
            ring_pos=self.ring_pos.copy(),
            pushes=self.pushes.copy(),
            t=self.t,
            last_event=self.last_event.copy(),
            next_event=self.next_event.copy(),
            pending=[None if p is None else p.copy() for p in self.pending],
        )


def init_state(cfg: SystemConfig, x0=None) -> WindowState:
    """Seed the chain from a strictly interior allocation repeated through the window."""
    cfg = validate_config(cfg)
    if x0 is None:
        x0 = default_initial_allocation(cfg)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (cfg.n, cfg.m):
        raise ValueError(f"initial allocation must have shape ({cfg.n}, {cfg.m})")
    sums = x0.sum(axis=0)
    if np.any(x0 <= 0) or np.any(sums >= cfg.capacity):
        raise ValueError("initial allocation must be strictly interior (positive, column sums below capacity)")
    xi = np.empty((cfg.m, cfg.window, cfg.n))
    xi[:] = x0.T[:, None, :]
    return WindowState(
        xi=xi,
        ring=xi.copy(),
        ring_pos=np.zeros(cfg.m, dtype=np.int64),
        pushes=np.ones(cfg.m, dtype=np.int64),
        t=0.0,
        last_event=np.zeros(cfg.m),
        next_event=(cfg.capacity - sums) / (cfg.n * cfg.alpha),
        pending=[None] * cfg.m,
    )


def _lambda_vector(state: WindowState, cfg: SystemConfig, costs, j: int,
                   lambda_override) -> np.ndarray:
    """Clamped back-off probabilities for resource j at the current averages."""
    if lambda_override is not None:
        lam = np.broadcast_to(np.asarray(lambda_override, dtype=float), (cfg.n, cfg.m))
        return lam[:, j].astype(float)
    if cfg.gamma is None:
        raise ValueError("normalization factors are unresolved; call normalization_factors first")
    avgs = state.windowed_averages()  # (m, n)
    lo = cfg.lambda_min[j]
    hi = cfg.lambda_max[j]
    floor = cfg.eps_floor[j]
    out = np.empty(cfg.n)
    for i in range(cfg.n):
        avg_i = avgs[:, i]
        den = avg_i[j]
        if den < floor:
            den = floor
        g = costs[i].partial(avg_i, j)
        raw = cfg.gamma[j] * g / den
        out[i] = min(max(raw, lo), hi)
    return out


def step_chain(state: WindowState, cfg: SystemConfig, costs, stream: UniformStream,
               lambda_override=None, index: int = 0) -> StepRecord:
    """Fire the next capacity event, push its sample, and draw the next pattern.

    The pushed sample equals the event matrix of the pattern drawn at this
    resource's previous event applied to the previous sample (or the linear
    ramp from the interior start, for the resource's first event).  The stack
    update is the window-lift recursion of that matrix.
    """
    n, m, T = cfg.n, cfg.m, cfg.window
    j = int(np.argmin(state.next_event))  # ties resolve to the lowest index
    tau = float(state.next_event[j])
    state.t = tau
    base = state.xi[j, 0].copy()
    pending = state.pending[j]
    if pending is None:
        x_new = base + cfg.alpha[j] * (tau - state.last_event[j])
        applied = None
    else:
        b = np.where(pending, cfg.beta[j], 1.0)
        x_new = b * base + np.sum((1.0 - b) * base) / n
        applied = pending

    for r in range(T - 1, 0, -1):
        state.xi[j, r] = (x_new + r * state.xi[j, r - 1]) / (r + 1)
    state.xi[j, 0] = x_new
    pos = state.ring_pos[j]
    state.ring[j, pos] = x_new
    state.ring_pos[j] = (pos + 1) % T
    state.pushes[j] += 1

    gap = tau - float(state.last_event[j])
    state.last_event[j] = tau

    lam = _lambda_vector(state, cfg, costs, j, lambda_override)
    drawn = np.empty(n, dtype=bool)
    for i in range(n):
        drawn[i] = stream.next() < lam[i]
    b_new = np.where(drawn, cfg.beta[j], 1.0)
    gap_next = (cfg.capacity[j] - float(np.sum(b_new * x_new))) / (n * cfg.alpha[j])
    if gap_next < 0.0:
        gap_next = 0.0
    state.pending[j] = drawn
    state.next_event[j] = tau + gap_next

    return StepRecord(
        index=index,
        resource=j,
        time=tau,
        gap=gap,
        ramp=applied is None,
        applied_mask=None if applied is None else applied.copy(),
        drawn_mask=drawn.copy(),
        lam=lam,
        sample=x_new.copy(),
    )


@dataclass
class ChainRun:
    """Trajectory, per-step records, final state, and the Cesaro mean."""

    config: SystemConfig
    steps: int
    seed: int
    trajectory: np.ndarray | None
    records: list
    state: WindowState
    ergodic_mean: np.ndarray

    def agent_means(self) -> np.ndarray:
        """(n, m) long-run per-agent means from the full-window rows of the Cesaro mean."""
        cfg = self.config
        stacked = self.ergodic_mean.reshape(cfg.m, cfg.window, cfg.n)
        return stacked[:, -1, :].T.copy()

    def summary(self) -> dict:
        return {
            "schema": "aimdalloc.chain.v1",
            "steps": self.steps,
            "seed": self.seed,
            "agent_means": self.agent_means().tolist(),
            "events_per_resource": [int(p - 1) for p in self.state.pushes],
            "final_time": float(self.state.t),
        }

    def write_trajectory_csv(self, fobj) -> None:
        """Plain-text trajectory: one JSON metadata line, then one row per step.

        Columns are the step index, the resource that fired (-1 for the
        initial state), and the flattened stacked state.
        """
        if self.trajectory is None:
            raise ValueError("run was made with keep_trajectory=False")
        close = False
        if isinstance(fobj, (str, bytes)):
            fobj = open(fobj, "w", encoding="utf-8", newline="")
            close = True
        try:
            cfg = self.config
            meta = {"schema": "aimdalloc.trajectory.v1", "n": cfg.n, "m": cfg.m,
                    "window": cfg.window, "steps": self.steps, "seed": self.seed}
            fobj.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            names = [f"xi_{j}_{r}_{i}" for j in range(cfg.m)
                     for r in range(cfg.window) for i in range(cfg.n)]
            fobj.write(",".join(["step", "resource"] + names) + "\n")
            for k, row in enumerate(self.trajectory):
                res = self.records[k - 1].resource if k > 0 else -1
                fobj.write(f"{k},{res}," + ",".join(repr(float(v)) for v in row) + "\n")
        finally:
            if close:
                fobj.close()


def run_chain(cfg: SystemConfig, costs, steps: int, seed=None, x0=None,
              lambda_override=None, keep_trajectory: bool = True) -> ChainRun:
    """Run the chain for ``steps`` events; deterministic for a fixed seed."""
    cfg = validate_config(cfg)
    costs = list(costs)
    if cfg.gamma is None and lambda_override is None:
        cfg = cfg.with_gamma(normalization_factors(cfg, costs))
    if steps < 0:
        raise ValueError("steps must be >= 0")
    state = init_state(cfg, x0)
    the_seed = cfg.seed if seed is None else int(seed)
    stream = UniformStream(np.random.default_rng(the_seed))
    dim = cfg.m * cfg.window * cfg.n
    trajectory = np.empty((steps + 1, dim)) if keep_trajectory else None
    v = state.vector()
    if trajectory is not None:
        trajectory[0] = v
    running = v.copy()
    records = []
    for k in range(steps):
        rec = step_chain(state, cfg, costs, stream, lambda_override, index=k)
        records.append(rec)
        v = state.vector()
        if trajectory is not None:
            trajectory[k + 1] = v
        running += v
    return ChainRun(
        config=cfg,
        steps=steps,
        seed=the_seed,
        trajectory=trajectory,
        records=records,
        state=state,
        ergodic_mean=running / (steps + 1),
    )


def ergodic_average(trajectory: np.ndarray) -> np.ndarray:
    """Cesaro mean of a recorded trajectory (rows are states)."""
    trajectory = np.asarray(trajectory, dtype=float)
    if trajectory.ndim != 2 or trajectory.shape[0] == 0:
        raise ValueError("trajectory must be a non-empty 2-d array")
    return trajectory.mean(axis=0)


def consistency_error(state: WindowState) -> float:
    """Max deviation between the stack and partial means recomputed from the raw ring."""
    m, T, n = state.xi.shape
    worst = 0.0
    for j in range(m):
        pos = int(state.ring_pos[j])
        # newest sample sits at pos-1, older ones behind it
        order = [(pos - 1 - r) % T for r in range(T)]
        recent = state.ring[j, order]  # (T, n), newest first
        means = np.cumsum(recent, axis=0) / np.arange(1, T + 1)[:, None]
        worst = max(worst, float(np.abs(means - state.xi[j]).max()))
    return worst


def event_matrix_from_record(rec: StepRecord, cfg: SystemConfig) -> np.ndarray | None:
    """Rebuild the stacked event matrix a step applied; None for ramp steps."""
    if rec.applied_mask is None:
        return None
    A = aimd_matrix(pattern_vector(rec.applied_mask, cfg.beta[rec.resource]))
    return event_block_matrix(lift_window(A, cfg.window), rec.resource, cfg.m)


@dataclass
class UniquenessReport:
    distance: float
    steps: int
    mean_a: np.ndarray
    mean_b: np.ndarray

    def to_dict(self) -> dict:
        return {
            "schema": "aimdalloc.uniqueness.v1",
            "distance": self.distance,
            "steps": self.steps,
            "mean_a": self.mean_a.tolist(),
            "mean_b": self.mean_b.tolist(),
        }


def uniqueness_probe(cfg: SystemConfig, costs, steps: int, seed_a: int, seed_b: int,
                     x0_a=None, x0_b=None) -> UniquenessReport:
    """Distance between Cesaro means of two chains started differently.

    Small values support a unique attractive long-run distribution; the
    threshold is the caller's acceptance parameter.
    """
    run_a = run_chain(cfg, costs, steps, seed=seed_a, x0=x0_a, keep_trajectory=False)
    run_b = run_chain(cfg, costs, steps, seed=seed_b, x0=x0_b, keep_trajectory=False)
    d = block_max_l1(run_a.ergodic_mean - run_b.ergodic_mean, cfg.n)
    return UniquenessReport(distance=float(d), steps=steps,
                            mean_a=run_a.ergodic_mean, mean_b=run_b.ergodic_mean)


def suggested_horizon(cfg: SystemConfig) -> int:
    """Combined-event horizon long enough for every resource to fire.

    Uses the full-back-off recurrence times: with slowest recurrence Psi_max
    and fastest Psi_min, k = ceil(Psi_max / Psi_min) events of the fastest
    resource span the slowest one's cycle; doubled for slack.
    """
    psi = (1.0 - cfg.beta) * cfg.capacity / (cfg.n * cfg.alpha)
    k = int(math.ceil(float(psi.max() / psi.min())))
    return max(2 * (k + 1), 2 * cfg.m, 4)


@dataclass
class ContractionReport:
    """Monte Carlo estimate of the average norm ratio over sampled event products."""

    samples: int
    horizon: int
    mean_ratio: float
    se_ratio: float
    ci95_upper: float
    full_backoff_frequency: float
    full_backoff_bound: float
    full_backoff_se: float
    mu: float
    pair_mass: float
    distinct_products: int

    def to_dict(self) -> dict:
        return {
            "schema": "aimdalloc.contraction.v1",
            "samples": self.samples,
            "horizon": self.horizon,
            "mean_ratio": self.mean_ratio,
            "se_ratio": self.se_ratio,
            "ci95_upper": self.ci95_upper,
            "full_backoff_frequency": self.full_backoff_frequency,
            "full_backoff_bound": self.full_backoff_bound,
            "full_backoff_se": self.full_backoff_se,
            "mu": self.mu,
            "pair_mass": self.pair_mass,
            "distinct_products": self.distinct_products,
        }


def _draw_pending_all(state: WindowState, cfg: SystemConfig, costs, stream,
                      lambda_override) -> None:
    """Synchronize a bare state: draw every resource's pattern at the current instant."""
    for j in range(cfg.m):
        lam = _lambda_vector(state, cfg, costs, j, lambda_override)
        mask = np.empty(cfg.n, dtype=bool)
        for i in range(cfg.n):
            mask[i] = stream.next() < lam[i]
        b = np.where(mask, cfg.beta[j], 1.0)
        x = state.xi[j, 0]
        gap = (cfg.capacity[j] - float(np.sum(b * x))) / (cfg.n * cfg.alpha[j])
        state.pending[j] = mask
        state.last_event[j] = state.t
        state.next_event[j] = state.t + max(gap, 0.0)


def _sample_products(start: WindowState, cfg, costs, horizon, samples, seeds,
                     lambda_override):
    """Run ``samples`` independent paths from ``start``; return per-path products."""
    out = []
    for s in range(samples):
        state = start.clone()
        stream = UniformStream(np.random.default_rng(seeds[s]))
        _draw_pending_all(state, cfg, costs, stream, lambda_override)
        dim = cfg.m * cfg.window * cfg.n
        P = np.eye(dim)
        full = np.zeros(cfg.m, dtype=bool)
        for k in range(horizon):
            rec = step_chain(state, cfg, costs, stream, lambda_override, index=k)
            U = event_matrix_from_record(rec, cfg)
            P = U @ P
            if rec.applied_mask is not None and rec.applied_mask.all():
                full[rec.resource] = True
        # identity by the product itself; sub-resolution collisions coincide
        key = np.round(P, 12).tobytes()
        out.append((P, bool(full.all()), key))
    return out


def contraction_on_average(cfg: SystemConfig, costs, z: WindowState, w: WindowState,
                           horizon: int | None = None, samples: int = 200,
                           seed: int = 0, mu: float = 0.95,
                           lambda_override=None) -> ContractionReport:
    """Estimate the expected norm ratio of sampled event products on z - w.

    Paths start from ``z`` (and independently from ``w`` for the pair mass)
    with place-dependent probabilities, each contributing the stacked-norm
    ratio of its product applied to the difference vector.  Also reports the
    empirical frequency of products containing a full back-off event for
    every resource, whose theoretical floor is prod_j lambda_min_j^n, and the
    matched pair mass at contraction factor ``mu``.
    """
    cfg = validate_config(cfg)
    costs = list(costs)
    if cfg.gamma is None and lambda_override is None:
        cfg = cfg.with_gamma(normalization_factors(cfg, costs))
    if horizon is None:
        horizon = suggested_horizon(cfg)
    d = z.vector() - w.vector()
    block_sums = np.abs(d.reshape(-1, cfg.n).sum(axis=1)).max()
    if block_sums > 1e-9:
        d = project_block_zero_sum(d, cfg.n)
    nd = block_max_l1(d, cfg.n)
    if nd < 1e-12:
        raise ValueError("states coincide (difference vanishes after projection)")

    seeds = np.random.SeedSequence(seed).spawn(2 * samples)
    z_paths = _sample_products(z, cfg, costs, horizon, samples, seeds[:samples], lambda_override)
    w_paths = _sample_products(w, cfg, costs, horizon, samples, seeds[samples:], lambda_override)

    ratios = np.array([block_max_l1(P @ d, cfg.n) / nd for P, _, _ in z_paths])
    mean_ratio = float(ratios.mean())
    se = float(ratios.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    full_freq = float(np.mean([f for _, f, _ in z_paths]))
    bound = float(np.prod(cfg.lambda_min ** cfg.n))
    var = max(full_freq * (1 - full_freq), bound * (1 - bound))
    full_se = math.sqrt(var / samples)

    freq_z = Counter(k for _, _, k in z_paths)
    freq_w = Counter(k for _, _, k in w_paths)
    ratio_by_key = {}
    for (P, _, k) in z_paths + w_paths:
        if k not in ratio_by_key:
            ratio_by_key[k] = block_max_l1(P @ d, cfg.n) / nd
    pair_mass = 0.0
    for k, r in ratio_by_key.items():
        if r <= mu:
            pair_mass += (freq_z.get(k, 0) / samples) * (freq_w.get(k, 0) / samples)

    return ContractionReport(
        samples=samples,
        horizon=horizon,
        mean_ratio=mean_ratio,
        se_ratio=se,
        ci95_upper=mean_ratio + 1.96 * se,
        full_backoff_frequency=full_freq,
        full_backoff_bound=bound,
        full_backoff_se=full_se,
        mu=mu,
        pair_mass=float(pair_mass),
        distinct_products=len(ratio_by_key),
    )
