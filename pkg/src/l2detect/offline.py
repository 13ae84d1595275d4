"""Fixed-horizon change detection: per-base scan tests and the max-statistic scan."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .divergence import (
    Claim,
    SplitSpec,
    TestVerdict,
    as_weights,
    empirical_pmf,
    individual_test,
    threshold_floor,
)

__all__ = ["Base", "ScanResult", "make_bases", "scan_offline", "offline_max_stat"]


@dataclass(frozen=True)
class Base:
    """One scan base: pre-change, middle, and post-change index ranges (1-based,
    inclusive) plus the false-alarm budget spent on its individual test.

    The middle range is the hypothesized change-location window; it plays no
    computational role in the test itself.
    """

    lf: tuple[int, int]
    md: tuple[int, int]
    rg: tuple[int, int]
    alpha: float

    def __post_init__(self):
        if self.lf[1] != self.md[0] or self.rg[0] != self.md[1] + 1:
            raise ValueError("base ranges must chain: lf meets md, rg follows md")
        if self.alpha <= 0:
            raise ValueError("alpha budget must be positive")

    @property
    def split_at(self) -> int:
        return self.lf[1]


@dataclass(frozen=True)
class ScanResult:
    claim: Claim
    max_stat: float
    argmax_t: int
    per_base_verdicts: list = field(default_factory=list)

    @property
    def change(self) -> bool:
        return self.claim is Claim.CHANGE


def make_bases(T: int, w: int, stride: int, alpha: float = 0.1) -> list[Base]:
    """Bases at candidate splits t in {w, w+stride, ..., T-w}, equal budgets.

    Each base has lf = [1, t], md = {t}, rg = [t+1, T], so the two outer parts
    cover the whole horizon.
    """
    if T < 2 * w:
        raise ValueError("horizon too short: need T >= 2w")
    if stride < 1:
        raise ValueError("stride must be positive")
    splits = list(range(w, T - w + 1, stride))
    J = len(splits)
    return [Base((1, t), (t, t), (t + 1, T), alpha / J) for t in splits]


def scan_offline(x, bases, n, sigma=None, theta_per_base=None) -> ScanResult:
    """Run one individual test per base, claiming on the first base that fires.

    Each base splits its pre-change range into two consecutive halves (the
    omega blocks) and its post-change range into two halves (the zeta blocks).
    Unless ``theta_per_base`` overrides it, base j uses theta_j = 1/sqrt(alpha_j)
    and the threshold floor evaluated at the empirical pre-change distribution.
    """
    x = np.asarray(x)
    sigma = np.ones(n) if sigma is None else as_weights(sigma)
    verdicts = []
    best, best_t = -np.inf, -1
    claim = Claim.NO_CHANGE
    claim_t = -1
    for base in bases:
        lf = x[base.lf[0] - 1: base.lf[1]]
        rg = x[base.rg[0] - 1: base.rg[1]]
        L, R = lf.size // 2, rg.size // 2
        if L < 1 or R < 1:
            raise ValueError(f"base at t={base.split_at} leaves an empty half")
        split = SplitSpec(L, R)
        theta = theta_per_base if theta_per_base is not None else 1.0 / np.sqrt(base.alpha)
        p_hat = empirical_pmf(lf, n)
        ell = threshold_floor(p_hat, sigma, split.M, max(theta, 1.0))
        v = individual_test(lf[-2 * L:], rg[:2 * R], split, sigma, ell)
        verdicts.append(v)
        if abs(v.statistic) > best:
            best, best_t = abs(v.statistic), base.split_at
        if v.change:
            claim = Claim.CHANGE
            claim_t = base.split_at
            break
    return ScanResult(
        claim=claim,
        max_stat=best,
        argmax_t=claim_t if claim is Claim.CHANGE else best_t,
        per_base_verdicts=verdicts,
    )


def offline_max_stat(x, n, sigma=None, margin: int = 20, threshold=None) -> ScanResult:
    """Max over t in [margin, T-margin] of the scaled statistic M*chi.

    At each candidate t the two omega blocks are the most recent halves
    before t (each of length floor(t/2)) and the zeta blocks are the
    earliest halves after t (each floor((T-t)/2)); M = 2LR/(L+R).  One-sided:
    with a threshold given, claims a change iff the max exceeds it.
    """
    x = np.asarray(x)
    T = x.size
    if T < 2 * margin:
        raise ValueError("need T >= 2*margin")
    sigma = np.ones(n) if sigma is None else as_weights(sigma)
    C = np.zeros((T + 1, n))
    np.add.at(C, (np.arange(1, T + 1), x), 1.0)
    C = np.cumsum(C, axis=0)
    best, best_t = -np.inf, -1
    for t in range(margin, T - margin + 1):
        L, R = t // 2, (T - t) // 2
        om = (C[t - L] - C[t - 2 * L]) / L
        om2 = (C[t] - C[t - L]) / L
        ze = (C[t + R] - C[t]) / R
        ze2 = (C[t + 2 * R] - C[t + R]) / R
        M = 2.0 * L * R / (L + R)
        s = M * float(np.sum(sigma * (om - ze) * (om2 - ze2)))
        if s > best:
            best, best_t = s, t
    if threshold is None:
        claim = Claim.NO_CHANGE
    else:
        claim = Claim.CHANGE if best > threshold else Claim.NO_CHANGE
    return ScanResult(claim=claim, max_stat=best, argmax_t=best_t)
