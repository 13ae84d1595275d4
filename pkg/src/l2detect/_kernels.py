"""Numba kernels for the streaming detector hot path."""
import numpy as np
from numba import njit


@njit(cache=True)
def detector_push_many(prefix, buf, t, syms, bounds, sigma, b, collect, scores_out):
    """Advance the detector over ``syms``; stop at the first score > b.

    prefix: (P, n) ring of cumulative count rows; row index is time mod P.
    buf:    (P - 1,) ring of raw symbols.
    bounds: (W, 6) per-window offsets (o0..o5) from the current time t; the
            four blocks are count differences between rows t-o0..t-o5, each of
            length M = bounds[w, 4].

    Returns (t, consumed, alarm_time, alarm_score, alarm_win, last_score).
    alarm_time is -1 when no alarm fired; last_score is NaN before any window
    is evaluable.
    """
    P = prefix.shape[0]
    n = prefix.shape[1]
    W = bounds.shape[0]
    cap = P - 1
    alarm_t = -1
    alarm_score = np.nan
    alarm_win = -1
    last = np.nan
    consumed = 0
    for idx in range(syms.shape[0]):
        s = syms[idx]
        tp = t % P
        tn = (t + 1) % P
        for i in range(n):
            prefix[tn, i] = prefix[tp, i]
        prefix[tn, s] += 1
        buf[t % cap] = s
        t += 1
        consumed += 1
        best = np.nan
        best_w = -1
        for w in range(W):
            o0 = bounds[w, 0]
            if t < o0:
                continue
            M = bounds[w, 4]
            r0 = prefix[(t - o0) % P]
            r1 = prefix[(t - bounds[w, 1]) % P]
            r2 = prefix[(t - bounds[w, 2]) % P]
            r3 = prefix[(t - bounds[w, 3]) % P]
            r4 = prefix[(t - M) % P]
            r5 = prefix[t % P]
            acc = 0.0
            for i in range(n):
                u = (r1[i] - r0[i]) - (r4[i] - r3[i])
                v = (r2[i] - r1[i]) - (r5[i] - r4[i])
                acc += sigma[i] * u * v
            score = acc / M
            if best_w < 0 or score > best:
                best = score
                best_w = w
        if best_w >= 0:
            last = best
        if collect:
            scores_out[idx] = best if best_w >= 0 else np.nan
        if best_w >= 0 and best > b:
            alarm_t = t
            alarm_score = best
            alarm_win = best_w
            break
    return t, consumed, alarm_t, alarm_score, alarm_win, last
