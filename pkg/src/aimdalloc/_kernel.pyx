# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled event loop for the built-in cost families.

This is a line-for-line transcription of ``_loop.run_events``: identical
expressions, association, and iteration order, so both backends emit
bit-identical traces from the same uniform buffer.  Keep the two files in
lockstep when editing either.

Family codes: 0 quadratic (grad = p1*x + p2), 1 exponential
(grad = p1*p2*exp(p2*x)).
"""

from libc.math cimport exp
from libc.stdint cimport int32_t, int64_t, uint8_t


def run_events(
    Py_ssize_t n_events,
    double[:, ::1] x,
    const double[::1] cap, const double[::1] alpha, const double[::1] beta,
    const double[::1] gamma, const double[::1] lam_lo, const double[::1] lam_hi,
    const double[::1] eps_floor,
    Py_ssize_t T,
    double[:, :, ::1] win,
    int64_t[::1] win_pos,
    double[:, ::1] win_sum,
    double[:, ::1] cum_sum,
    int64_t[::1] n_samples,
    double t,
    double[::1] gap_acc,
    int64_t[::1] event_count,
    int64_t[::1] clamp_lo, int64_t[::1] clamp_hi, int64_t[::1] floor_count,
    int avg_windowed,
    const int64_t[::1] fam,
    const double[:, ::1] p1, const double[:, ::1] p2,
    const double[:, ::1] lam_fixed,
    int use_fixed,
    double[::1] ubuf, object refill, Py_ssize_t upos,
    double[::1] ev_time, int32_t[::1] ev_res, double[::1] ev_gap,
    double[:, ::1] pre, double[:, ::1] lam_out,
    uint8_t[:, ::1] boff, double[:, ::1] post,
):
    """Advance the system by ``n_events`` capacity events; returns (time, upos)."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = x.shape[1]
    cdef Py_ssize_t ulen = ubuf.shape[0]
    cdef Py_ssize_t ev, i, j, jj, best
    cdef int64_t p
    cdef double s, tau, best_tau, d, xi, aj, den, g, raw, lam, u

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
        ev_res[ev] = <int32_t> j
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
                    aj = win_sum[j, i] / T
                else:
                    aj = cum_sum[j, i] / n_samples[j]
                den = aj
                if den < eps_floor[j]:
                    den = eps_floor[j]
                    floor_count[j] += 1
                if fam[i] == 0:
                    g = p1[i, j] * aj + p2[i, j]
                else:
                    g = p1[i, j] * p2[i, j] * exp(p2[i, j] * aj)
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
            if upos >= ulen:
                refill()
                upos = 0
            u = ubuf[upos]
            upos += 1
            if u < lam:
                boff[ev, i] = 1
                x[i, j] = x[i, j] * beta[j]
            else:
                boff[ev, i] = 0
            post[ev, i] = x[i, j]
        event_count[j] += 1

    return t, upos
