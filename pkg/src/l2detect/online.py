"""Streaming change detector with run-length / detection-delay analytics.

The detector scans, at each time t, candidate change ages win in [m0, m1].
For age win the newest 2M samples (M = floor(win/2)) form the two post-change
blocks and the 2M samples ending at t - win form the two reference blocks;
the score is the block-length-scaled weighted l2 statistic.  The stopping
time is the first t whose best score exceeds the threshold b.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from ._kernels import detector_push_many
from .divergence import as_pmf, as_weights, chi_statistic, chi_variance, empirical_pmf
from .twosample import kl_statistic, mmd_unbiased, separator

__all__ = [
    "DetectorConfig",
    "AlarmRecord",
    "Detector",
    "window_stat",
    "overshoot_nu",
    "arl_approx",
    "threshold_for_arl",
    "edd_approx",
    "mc_arl",
    "mc_edd",
    "online_baseline_stat",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class DetectorConfig:
    """Detector parameters: atom count, window-age bounds, threshold, weights."""

    n: int
    m0: int
    m1: int
    b: float
    sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two atoms")
        if not 2 <= self.m0 <= self.m1:
            raise ValueError("need 2 <= m0 <= m1")
        if self.b <= 0:
            raise ValueError("threshold must be positive")
        if self.sigma is not None:
            w = as_weights(self.sigma)
            if w.size != self.n:
                raise ValueError("weight length must equal atom count")

    @property
    def weights(self) -> np.ndarray:
        return np.ones(self.n) if self.sigma is None else np.asarray(self.sigma, float)


@dataclass(frozen=True)
class AlarmRecord:
    time: int
    score: float
    win: int


def _window_table(m0: int, m1: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-window offset table (o0..o5) and the window-age list.

    Offsets are subtracted from the current time to pick cumulative-count
    rows; block lengths are M = floor(win/2), and for odd ages the oldest
    sample of each of the two win-length segments goes unused.
    """
    rows, ages = [], []
    for win in range(m0, m1 + 1):
        M = win // 2
        rows.append((win + 2 * M, win + M, win, 2 * M, M, 0))
        ages.append(win)
    return np.array(rows, dtype=np.int64), np.array(ages, dtype=np.int64)


class Detector:
    """Single-writer streaming detector over discrete symbols.

    Keeps a ring of raw symbols (capacity 2*m1) and a ring of cumulative
    per-atom count rows, so every window score is O(n) per window and a push
    is O(n * (m1 - m0)).  Push after an alarm raises; call reset() first.
    """

    def __init__(self, cfg: DetectorConfig):
        self.cfg = cfg
        self._bounds, self._ages = _window_table(cfg.m0, cfg.m1)
        self._P = int(self._bounds[:, 0].max()) + 1
        self._sigma = cfg.weights
        self.reset()

    def reset(self):
        self._prefix = np.zeros((self._P, self.cfg.n), dtype=np.int64)
        self._buf = np.full(self._P - 1, -1, dtype=np.int64)
        self.t = 0
        self.last_score = math.nan
        self.alarmed_at: int | None = None
        self._alarm: AlarmRecord | None = None

    @property
    def alarm(self) -> AlarmRecord | None:
        return self._alarm

    def push(self, symbol: int) -> AlarmRecord | None:
        return self.push_many(np.array([symbol], dtype=np.int64))

    def push_many(self, symbols, collect_scores: bool = False):
        """Feed a batch of symbols; stops consuming at the first alarm.

        Returns the alarm record or None; with ``collect_scores`` returns
        (alarm, scores) where scores[j] is the max window score after the
        j-th consumed symbol (NaN while no window is evaluable).
        """
        if self._alarm is not None:
            raise RuntimeError("detector already stopped; reset() to reuse")
        syms = np.ascontiguousarray(symbols, dtype=np.int64)
        if syms.size and (syms.min() < 0 or syms.max() >= self.cfg.n):
            raise ValueError("symbol out of range")
        scores = np.empty(syms.size if collect_scores else 0)
        t, consumed, alarm_t, alarm_score, alarm_w, last = detector_push_many(
            self._prefix, self._buf, self.t, syms, self._bounds,
            self._sigma, self.cfg.b, collect_scores, scores,
        )
        self.t = t
        if not math.isnan(last):
            self.last_score = last
        if alarm_t >= 0:
            self._alarm = AlarmRecord(alarm_t, alarm_score, int(self._ages[alarm_w]))
            self.alarmed_at = alarm_t
        if collect_scores:
            return self._alarm, scores[:consumed]
        return self._alarm

    def window_stat(self, win: int) -> float:
        """Score of one window age at the current time, from the count rows."""
        return window_stat(self, win)

    def buffer_contents(self) -> np.ndarray:
        """The retained symbols, oldest first."""
        cap = self._P - 1
        k = min(self.t, cap)
        idx = (np.arange(self.t - k, self.t) % cap)
        return self._buf[idx]

    def counts_consistent(self) -> bool:
        """Recount the buffered symbols and compare against the count rows."""
        cap = self._P - 1
        k = min(self.t, cap)
        expect = np.bincount(self.buffer_contents(), minlength=self.cfg.n)
        rows = self._prefix[self.t % self._P] - self._prefix[(self.t - k) % self._P]
        return bool(np.array_equal(expect, rows))


def window_stat(state: Detector, win: int) -> float:
    """Block-length-scaled statistic for one window age at the current time."""
    cfg = state.cfg
    if not cfg.m0 <= win <= cfg.m1:
        raise ValueError("window age out of configured range")
    M = win // 2
    span = win + 2 * M
    if state.t < span:
        raise ValueError(f"insufficient history: window {win} needs {span} samples")
    P, t = state._P, state.t
    row = lambda off: state._prefix[(t - off) % P]
    r0, r1, r2 = row(win + 2 * M), row(win + M), row(win)
    r3, r4, r5 = row(2 * M), row(M), row(0)
    u = (r1 - r0) - (r4 - r3)
    v = (r2 - r1) - (r5 - r4)
    return float(np.sum(state._sigma * u * v) / M)


def overshoot_nu(x):
    """Boundary-crossing correction factor; x may be a scalar or array."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("argument must be positive")
    half = x / 2.0
    Phi = ndtr(half)
    phi = np.exp(-0.5 * half * half) / _SQRT2PI
    out = (2.0 / x) * (Phi - 0.5) / (half * Phi + phi)
    return float(out) if out.ndim == 0 else out


def _adaptive_simpson(f, a, b, rel_tol):
    """Adaptive Simpson quadrature to the given relative tolerance."""
    def simp(fa, fm, fb, h):
        return h / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, depth):
        m = 0.5 * (a + b)
        flm, frm = f(0.5 * (a + m)), f(0.5 * (m + b))
        left = simp(fa, flm, fm, m - a)
        right = simp(fm, frm, fb, b - m)
        err = left + right - whole
        if depth >= 50 or abs(err) <= 15.0 * rel_tol * (abs(left + right) + 1e-300):
            return left + right + err / 15.0
        return (
            rec(a, m, fa, flm, fm, left, depth + 1)
            + rec(m, b, fm, frm, fb, right, depth + 1)
        )

    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    return rec(a, b, fa, fm, fb, simp(fa, fm, fb, b - a), 0)


def arl_approx(b: float, m0: int, m1: int, sigma_p2: float) -> float:
    """Asymptotic average run length of the windowed detector at threshold b.

    The correction integral runs between sqrt(4 b^2 / (m sigma_p^2)) at
    m = m1 and m = m0 and is evaluated by adaptive Simpson quadrature to
    relative tolerance 1e-8.
    """
    if b <= 0:
        raise ValueError("threshold must be positive")
    if sigma_p2 <= 0:
        raise ValueError("variance must be positive")
    lo = math.sqrt(4.0 * b * b / (m1 * sigma_p2))
    hi = math.sqrt(4.0 * b * b / (m0 * sigma_p2))
    if not lo < hi:
        raise ValueError("empty integration interval: need m0 < m1")
    integral = _adaptive_simpson(
        lambda y: y * overshoot_nu(y) ** 2, lo, hi, rel_tol=1e-8
    )
    return 0.5 / b * math.exp(b * b / (2.0 * sigma_p2)) * math.sqrt(
        2.0 * math.pi * sigma_p2
    ) / integral


def threshold_for_arl(target: float, m0: int, m1: int, sigma_p2: float, b_grid) -> float:
    """Smallest grid threshold whose approximate ARL reaches the target.

    ``b_grid`` is (lo, hi, step) or an increasing array.  Raises if the grid
    does not bracket the solution, reporting the endpoint ARLs.
    """
    grid = np.arange(*b_grid) if isinstance(b_grid, tuple) else np.asarray(b_grid, float)
    if grid.size < 2:
        raise ValueError("grid must contain at least two points")
    a_lo = arl_approx(grid[0], m0, m1, sigma_p2)
    a_hi = arl_approx(grid[-1], m0, m1, sigma_p2)
    if not a_lo < target <= a_hi:
        raise ValueError(
            f"grid does not bracket the target: ARL({grid[0]:.4g})={a_lo:.4g}, "
            f"ARL({grid[-1]:.4g})={a_hi:.4g}, target={target:.4g}"
        )
    lo, hi = 0, grid.size - 1  # arl_approx is increasing in b
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if arl_approx(grid[mid], m0, m1, sigma_p2) >= target:
            hi = mid
        else:
            lo = mid
    return float(grid[hi])


def edd_approx(b: float, p, q, sigma=None) -> float:
    """First-order expected detection delay b / [(p-q)' Sigma (p-q) / 2]."""
    p, q = as_pmf(p), as_pmf(q)
    sigma = np.ones(p.size) if sigma is None else as_weights(sigma)
    drift = float(np.sum(sigma * (p - q) ** 2)) / 2.0
    if drift <= 0:
        raise ValueError("indistinguishable under weights")
    return b / drift


def _spawn_rng(seed, i):
    return np.random.default_rng([int(seed), int(i)])


def mc_arl(p, cfg: DetectorConfig, trials: int, horizon: int, seed: int = 0,
           chunk: int = 8192) -> dict:
    """Monte Carlo average run length under i.i.d. sampling from p.

    Censored runs count at the horizon and are reported separately; the
    horizon should be several times the expected run length.
    """
    p = as_pmf(p)
    det = Detector(cfg)
    times = np.empty(trials)
    censored = 0
    for i in range(trials):
        rng = _spawn_rng(seed, i)
        det.reset()
        stopped = None
        while det.t < horizon and stopped is None:
            m = min(chunk, horizon - det.t)
            stopped = det.push_many(rng.choice(cfg.n, m, p=p))
        if stopped is None:
            censored += 1
            times[i] = horizon
        else:
            times[i] = stopped.time
    return {
        "mean": float(times.mean()),
        "stderr": float(times.std(ddof=1) / math.sqrt(trials)),
        "censored_count": censored,
        "times": times,
    }


def mc_edd(p, q, cfg: DetectorConfig, trials: int, horizon: int = 5000,
           seed: int = 0) -> dict:
    """Monte Carlo detection delay with the change at time zero.

    Each trial seeds the detector with 2*m1 pre-change samples (the full
    buffer) and then streams post-change samples; the delay is the number of
    post-change pushes before the alarm.
    """
    p, q = as_pmf(p), as_pmf(q)
    det = Detector(cfg)
    hist = 2 * cfg.m1
    delays = np.empty(trials)
    censored = 0
    for i in range(trials):
        rng = _spawn_rng(seed, i)
        det.reset()
        while det.push_many(rng.choice(cfg.n, hist, p=p)) is not None:
            det.reset()  # false alarm while seeding history; redraw (rare)
        start = det.t
        stopped = None
        while det.t - start < horizon and stopped is None:
            m = min(4096, horizon - (det.t - start))
            stopped = det.push_many(rng.choice(cfg.n, m, p=q))
        if stopped is None:
            censored += 1
            delays[i] = horizon
        else:
            delays[i] = stopped.time - start
    return {
        "mean": float(delays.mean()),
        "stderr": float(delays.std(ddof=1) / math.sqrt(trials)),
        "censored_count": censored,
        "delays": delays,
    }


def online_baseline_stat(kind: str, state, **params) -> float:
    """Comparison statistics at the current time of a history array.

    kind='hotelling': state = (history, reference) real matrices; the last m0
        rows of history are compared against reference moments.
    kind='mmd': block-averaged unbiased MMD of the newest block against
        ``nblocks`` reference blocks.
    kind='kl': symbol history; max over window ages of the smoothed KL
        divergence between adjacent windows.
    kind='l1': symbol history; max over ages of the separator statistic with
        training/testing halves.
    """
    if kind == "hotelling":
        history, reference = state
        m0 = params.get("m0", 20)
        history = np.atleast_2d(np.asarray(history, float))
        if history.shape[0] < m0:
            raise ValueError("insufficient history")
        ref = np.atleast_2d(np.asarray(reference, float))
        mu = ref.mean(axis=0)
        cov = np.cov(ref, rowvar=False, ddof=1).reshape(ref.shape[1], ref.shape[1])
        xbar = history[-m0:].mean(axis=0)
        return float((xbar - mu) @ np.linalg.solve(cov, xbar - mu))
    if kind == "mmd":
        history, reference = state
        block = params.get("block", 20)
        nblocks = params.get("nblocks", 5)
        bandwidth = params.get("bandwidth")
        history = np.atleast_2d(np.asarray(history, float))
        reference = np.atleast_2d(np.asarray(reference, float))
        if history.shape[0] < block or reference.shape[0] < block * nblocks:
            raise ValueError("insufficient history")
        Y = history[-block:]
        vals = [
            mmd_unbiased(reference[j * block:(j + 1) * block], Y, bandwidth)
            for j in range(nblocks)
        ]
        return float(np.mean(vals))
    if kind in ("kl", "l1"):
        x = np.asarray(state)
        n = params["n"]
        m0, m1 = params.get("m0", 20), params.get("m1", 100)
        t = x.size
        best = -np.inf
        for win in range(m0, min(m1, t // 2) + 1):
            ref = x[t - 2 * win: t - win]
            post = x[t - win:]
            if kind == "kl":
                f1 = empirical_pmf(ref, n)
                f2 = empirical_pmf(post, n)
                best = max(best, kl_statistic(f1, f2, params.get("smoothing", 0.01)))
            else:
                h = win // 2
                d = empirical_pmf(ref[:h], n) - empirical_pmf(post[:h], n)
                e = separator(d, 1.0)
                stat = float(e @ (empirical_pmf(ref[h:], n) - empirical_pmf(post[h:], n)))
                best = max(best, stat)
        if best == -np.inf:
            raise ValueError("insufficient history")
        return best
    raise ValueError(f"unknown baseline kind: {kind!r}")


def null_variance(p, sigma=None) -> float:
    """Plug-in variance of the scaled window statistic for calibration."""
    p = as_pmf(p)
    sigma = np.ones(p.size) if sigma is None else as_weights(sigma)
    return chi_variance(p, sigma)
