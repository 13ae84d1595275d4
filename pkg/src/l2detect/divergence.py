"""Probability-vector arithmetic and the weighted l2 divergence statistic.

The statistic compares two pairs of empirical distributions through a
diagonal weight matrix: chi = (omega - zeta)' Sigma (omega' - zeta').
Under no change its mean is zero; under a distribution shift p -> q its
mean is sum_i sigma_i (p_i - q_i)^2.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Claim",
    "TestVerdict",
    "SplitSpec",
    "as_pmf",
    "as_weights",
    "empirical_pmf",
    "chi_statistic",
    "individual_test",
    "threshold_floor",
    "chi_variance",
    "chi_correlation",
]

PMF_ATOL = 1e-9


class Claim(enum.Enum):
    NO_CHANGE = "no_change"
    CHANGE = "change"


@dataclass(frozen=True)
class TestVerdict:
    """Outcome of a single test: claim plus the statistic/threshold pair.

    ``two_sided`` records the rejection rule: |statistic| > threshold for
    two-sided tests, statistic > threshold for one-sided scans.
    """

    claim: Claim
    statistic: float
    threshold: float
    two_sided: bool = True

    def __post_init__(self):
        lhs = abs(self.statistic) if self.two_sided else self.statistic
        want = Claim.CHANGE if lhs > self.threshold else Claim.NO_CHANGE
        if self.claim is not want:
            raise ValueError("verdict inconsistent with statistic/threshold")

    @classmethod
    def from_statistic(cls, statistic, threshold, two_sided=True):
        lhs = abs(statistic) if two_sided else statistic
        claim = Claim.CHANGE if lhs > threshold else Claim.NO_CHANGE
        return cls(claim, float(statistic), float(threshold), two_sided)

    @property
    def change(self) -> bool:
        return self.claim is Claim.CHANGE


@dataclass(frozen=True)
class SplitSpec:
    """Segment sizes for an individual test.

    L is the size of each of the two blocks drawn from the first sample,
    R the size of each of the two blocks from the second sample.
    """

    L: int
    R: int

    def __post_init__(self):
        if self.L < 1 or self.R < 1:
            raise ValueError("segment sizes must be positive")

    @property
    def gamma(self) -> float:
        return self.R / (self.L + self.R)

    @property
    def gamma_bar(self) -> float:
        return self.L / (self.L + self.R)

    @property
    def M(self) -> float:
        return 2.0 * self.L * self.R / (self.L + self.R)


def as_pmf(probs) -> np.ndarray:
    """Validate and return a probability mass vector as a float array.

    Entries must be nonnegative and sum to 1 within 1e-9.  Inputs violating
    this are rejected rather than renormalized.
    """
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise ValueError("pmf must be a nonempty 1-d vector")
    if np.any(p < 0):
        raise ValueError("pmf entries must be nonnegative")
    if abs(p.sum() - 1.0) > PMF_ATOL:
        raise ValueError(f"pmf entries must sum to 1 (got {p.sum()!r})")
    return p


def as_weights(sigma) -> np.ndarray:
    """Validate a nonnegative, not-all-zero weight vector."""
    w = np.asarray(sigma, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("weights must be a nonempty 1-d vector")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if not np.any(w > 0):
        raise ValueError("weights must not be all zero")
    return w


def empirical_pmf(symbols, n: int) -> np.ndarray:
    """Empirical distribution of a symbol sequence over atoms 0..n-1."""
    x = np.asarray(symbols)
    if x.size == 0:
        raise ValueError("empty sample")
    if x.min() < 0 or x.max() >= n:
        raise ValueError("atom out of range")
    return np.bincount(x, minlength=n) / x.size


def chi_statistic(omega, zeta, omega2, zeta2, sigma) -> float:
    """Weighted l2 divergence chi = sum_i sigma_i (omega_i - zeta_i)(omega2_i - zeta2_i)."""
    omega, zeta = np.asarray(omega, float), np.asarray(zeta, float)
    omega2, zeta2 = np.asarray(omega2, float), np.asarray(zeta2, float)
    sigma = np.asarray(sigma, float)
    if not (omega.shape == zeta.shape == omega2.shape == zeta2.shape == sigma.shape):
        raise ValueError("dimension mismatch")
    return float(np.sum(sigma * (omega - zeta) * (omega2 - zeta2)))


def individual_test(x1, x2, split: SplitSpec, sigma, ell: float) -> TestVerdict:
    """Two-sided individual test on two symbol sequences.

    The first sample supplies the two L-blocks (omega, omega'), the second
    the two R-blocks (zeta, zeta'); blocks are consecutive and disjoint.
    Claims a change iff |chi| > ell.
    """
    x1, x2 = np.asarray(x1), np.asarray(x2)
    sigma = as_weights(sigma)
    n = sigma.size
    L, R = split.L, split.R
    if x1.size < 2 * L or x2.size < 2 * R:
        raise ValueError(
            f"insufficient samples: need 2L={2*L} from x1 and 2R={2*R} from x2"
        )
    omega = empirical_pmf(x1[:L], n)
    omega2 = empirical_pmf(x1[L:2 * L], n)
    zeta = empirical_pmf(x2[:R], n)
    zeta2 = empirical_pmf(x2[R:2 * R], n)
    chi = chi_statistic(omega, zeta, omega2, zeta2, sigma)
    return TestVerdict.from_statistic(chi, ell, two_sided=True)


def threshold_floor(p, sigma, M: float, theta: float) -> float:
    """Smallest valid individual-test threshold: 2*sqrt(2)*theta/M * sqrt(sum sigma_i^2 p_i^2).

    With this threshold the individual test has type-I risk at most 1/theta^2.
    """
    if theta < 1:
        raise ValueError("theta must be >= 1")
    p = as_pmf(p)
    sigma = as_weights(sigma)
    if p.shape != sigma.shape:
        raise ValueError("dimension mismatch")
    return 2.0 * math.sqrt(2.0) * theta / M * math.sqrt(float(np.sum(sigma**2 * p**2)))


def chi_variance(p, sigma) -> float:
    """Variance of the block-length-scaled statistic under no change.

    Returns 4 [ sum_i s_i^2 p_i^2 (1-p_i)^2 + sum_{i != j} s_i s_j p_i^2 p_j^2 ].
    This is the variance of M*chi where each of the four blocks holds M
    samples; the unscaled chi of equal blocks has variance (this value)/M^2.
    """
    p = as_pmf(p)
    sigma = as_weights(sigma)
    if p.shape != sigma.shape:
        raise ValueError("dimension mismatch")
    sp2 = sigma * p * p
    diag = np.sum(sigma**2 * p**2 * (1.0 - p) ** 2)
    cross = np.sum(sp2) ** 2 - np.sum(sp2**2)
    return float(4.0 * (diag + cross))


def chi_correlation(M: int, dt: int, dk: int) -> float:
    """Correlation of two scan statistics whose windows (length M) are offset.

    dt shifts the newer endpoint, dk the older one; both must lie in [-M, M].
    """
    if abs(dt) > M or abs(dk) > M:
        raise ValueError("offsets must satisfy |dt| <= M and |dk| <= M")
    return 1.0 - 2.0 * abs(dt) / M - 2.0 * abs(dk) / M + (dt * dt + dk * dk) / (M * M)
