"""Pure-Python event loop, the reference twin of the compiled kernel.

Every arithmetic statement here mirrors ``_kernel.pyx`` operation for
operation (same expressions, same association, same iteration order) so both
backends produce bit-identical traces from the same uniform stream.  Keep the
two files in lockstep when editing either.
"""

from __future__ import annotations


def run_events(
    n_events,
    x,                # (n, m) current allocations, updated in place
    cap, alpha, beta, gamma, lam_lo, lam_hi, eps_floor,   # (m,)
    T,
    win,              # (m, T, n) ring of the last T at-capacity samples
    win_pos,          # (m,) int64 next slot per resource
    win_sum,          # (m, n) running sums of the ring
    cum_sum,          # (m, n) running sums of all samples
    n_samples,        # (m,) int64 samples pushed per resource (incl. the start)
    t,                # current time
    gap_acc,          # (m,) elapsed time since each resource's last event
    event_count,      # (m,) int64
    clamp_lo, clamp_hi, floor_count,                      # (m,) int64
    avg_windowed,     # 1 windowed, 0 cumulative
    partials,         # per-agent callables partial(avg_vector, j) -> float
    lam_fixed,        # (n, m) override probabilities
    use_fixed,        # 1 to use lam_fixed
    stream,           # UniformStream
    ev_time, ev_res, ev_gap,                              # (N,), int32 resources
    pre, lam_out, boff, post,                             # (N, n); boff uint8
):
    """Advance the system by ``n_events`` capacity events; returns the new time."""
    n = x.shape[0]
    m = x.shape[1]
    avg = [0.0] * m

    for ev in range(n_events):
        # Next capacity event: smallest time-to-capacity, lowest index on ties.
        best = 0
        best_tau = -1.0
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += x[i, j]
            tau = (cap[j] - s) / (n * alpha[j])
            if tau < 0.0:
                tau = 0.0
            if best_tau < 0.0 or tau < best_tau:
                best_tau = tau
                best = j
        j = best
        tau = best_tau

        # Linear growth of every allocation up to the event instant.
        if tau > 0.0:
            for jj in range(m):
                d = alpha[jj] * tau
                for i in range(n):
                    x[i, jj] += d
        t = t + tau
        for jj in range(m):
            gap_acc[jj] += tau

        ev_time[ev] = t
        ev_res[ev] = j
        ev_gap[ev] = gap_acc[j]
        gap_acc[j] = 0.0

        # Record the at-capacity sample and push it into the averages.
        p = win_pos[j]
        for i in range(n):
            xi = x[i, j]
            pre[ev, i] = xi
            win_sum[j, i] += xi - win[j, p, i]
            win[j, p, i] = xi
            cum_sum[j, i] += xi
        win_pos[j] = (p + 1) % T
        n_samples[j] += 1

        # Per-agent back-off probability, then the Bernoulli draw.
        for i in range(n):
            if use_fixed:
                lam = lam_fixed[i, j]
            else:
                if avg_windowed:
                    for jj in range(m):
                        avg[jj] = win_sum[jj, i] / T
                else:
                    for jj in range(m):
                        avg[jj] = cum_sum[jj, i] / n_samples[jj]
                den = avg[j]
                if den < eps_floor[j]:
                    den = eps_floor[j]
                    floor_count[j] += 1
                g = partials[i](avg, j)
                raw = gamma[j] * g / den
                if raw < lam_lo[j]:
                    lam = lam_lo[j]
                    clamp_lo[j] += 1
                elif raw > lam_hi[j]:
                    lam = lam_hi[j]
                    clamp_hi[j] += 1
                else:
                    lam = raw
            lam_out[ev, i] = lam
            u = stream.next()
            if u < lam:
                boff[ev, i] = 1
                x[i, j] = x[i, j] * beta[j]
            else:
                boff[ev, i] = 0
            post[ev, i] = x[i, j]
        event_count[j] += 1

    return t
