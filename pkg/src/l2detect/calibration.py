"""Training-step calibration: the norm-bound estimator and the vote counts S, K."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .divergence import empirical_pmf

__all__ = [
    "NormBoundResult",
    "binomial_tail",
    "compute_S",
    "solve_Pi",
    "stage_sample_requirement",
    "estimate_norm_bound",
    "compute_K",
]


@dataclass(frozen=True)
class NormBoundResult:
    """Output of the staged norm-bound estimator.

    varrho upper-bounds ||p||_2^2; success_flag is True when the run ended
    because the stage median cleared its 2*rho_i^2/3 bar (rather than by
    running out of stages or samples).  samples_used counts the consecutive
    observations consumed, so callers can hand the remainder to later tests.
    """

    varrho: float
    samples_used: int
    stage: int
    success_flag: bool


def binomial_tail(trials: int, head_prob: float, at_least: int) -> float:
    """P[Bin(trials, head_prob) >= at_least], summed stably in log space."""
    if not 0.0 <= head_prob <= 1.0:
        raise ValueError("head_prob must lie in [0, 1]")
    if not 0 <= at_least <= trials:
        raise ValueError("need 0 <= at_least <= trials")
    if at_least == 0:
        return 1.0
    if head_prob == 0.0:
        return 0.0
    if head_prob == 1.0:
        return 1.0
    k = np.arange(at_least, trials + 1)
    logpmf = (
        gammaln(trials + 1)
        - gammaln(k + 1)
        - gammaln(trials - k + 1)
        + k * math.log(head_prob)
        + (trials - k) * math.log1p(-head_prob)
    )
    m = logpmf.max()
    return float(min(1.0, math.exp(m) * np.exp(logpmf - m).sum()))


def compute_S(delta: float, n: int) -> int:
    """Smallest S with P[Bin(2S, 1/3) >= S] <= delta / ceil(log2 n)."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if n < 2:
        raise ValueError("need n >= 2")
    bar = delta / math.ceil(math.log2(n))
    S = 1
    while binomial_tail(2 * S, 1.0 / 3.0, S) > bar:
        S += 1
    return S


# Closed form for the stage sample size: substituting u = P^{-1/2} into
# 3[2^{7/4} P^{-1/2} rho^{3/2} + 2 P^{-1} rho] = rho^2/3 gives the quadratic
# 6 rho u^2 + 3*2^{7/4} rho^{3/2} u - rho^2/3 = 0, whose positive root is
# u = _U_COEF * sqrt(rho), so P = 1 / (_U_COEF^2 * rho).
_U_COEF = (-3.0 * 2**1.75 + math.sqrt(9.0 * 2**3.5 + 8.0)) / 12.0


def solve_Pi(rho_i: float) -> float:
    """Positive solution P of 3[2^{7/4} P^{-1/2} rho^{3/2} + 2 P^{-1} rho] = rho^2 / 3."""
    if rho_i <= 0:
        raise ValueError("rho must be positive")
    return 1.0 / (_U_COEF**2 * rho_i)


def stage_sample_requirement(n: int, delta: float, through_stage: int | None = None) -> int:
    """Total consecutive observations the estimator consumes through a stage."""
    m = math.ceil(math.log2(n))
    last = m if through_stage is None else min(through_stage, m)
    S = compute_S(delta, n)
    return sum(4 * S * math.ceil(solve_Pi(2.0 ** (-i / 2.0))) for i in range(1, last + 1))


def estimate_norm_bound(x1, n: int, delta: float) -> NormBoundResult:
    """Staged estimator of a tight upper bound on ||p||_2^2.

    Consumes consecutive disjoint segments of ``x1`` left to right.  At stage
    i it forms 2S pairs of empirical distributions from fresh Q_i-sized
    segments, takes the lower median of their inner products, and stops once
    that median reaches 2*rho_i^2/3 (or stages/samples run out).
    """
    x1 = np.asarray(x1)
    if x1.size == 0:
        raise ValueError("empty sample")
    m = math.ceil(math.log2(n))
    S = compute_S(delta, n)
    pos = 0
    for i in range(1, m + 1):
        rho = 2.0 ** (-i / 2.0)
        Q = math.ceil(solve_Pi(rho))
        need = 4 * S * Q
        if pos + need > x1.size:
            raise ValueError(
                f"insufficient training sample: stage {i} needs {pos + need}, have {x1.size}"
            )
        seg = np.asarray(x1[pos:pos + need]).reshape(4 * S, Q)
        pos += need
        pmfs = np.stack([empirical_pmf(row, n) for row in seg])
        theta = np.einsum("ij,ij->i", pmfs[0::2], pmfs[1::2])
        Theta = float(np.sort(theta)[S - 1])  # lower median of the 2S values
        varrho = Theta + rho * rho / 3.0
        success = Theta >= 2.0 * rho * rho / 3.0
        if success or i == m:
            return NormBoundResult(varrho, pos, i, success)
        Q_next = math.ceil(solve_Pi(2.0 ** (-(i + 1) / 2.0)))
        if x1.size - pos < 4 * S * Q_next:
            return NormBoundResult(varrho, pos, i, success)
    raise AssertionError("unreachable")


def compute_K(alpha: float, beta: float) -> int:
    """Smallest K whose majority vote meets both risk bounds.

    Requires P[Bin(K, 1/9) >= ceil(K/2)] <= alpha and
    P[Bin(K, 2/3) >= ceil(K/2)] >= 1 - beta.
    """
    if not (0.0 < alpha < 0.5 and 0.0 < beta < 0.5):
        raise ValueError("alpha and beta must lie in (0, 1/2)")
    K = 1
    while True:
        half = (K + 1) // 2
        if (
            binomial_tail(K, 1.0 / 9.0, half) <= alpha
            and binomial_tail(K, 2.0 / 3.0, half) >= 1.0 - beta
        ):
            return K
        K += 1
