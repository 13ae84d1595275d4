"""Data adaptation: projections, quantile binning, synthetic scenario
generators, and CSV ingestion."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BinningRule",
    "ScenarioKind",
    "Scenario",
    "ScenarioData",
    "project_series",
    "quantile_bins",
    "normal_quantile_bins",
    "discretize",
    "gen_scenario",
    "load_csv",
    "drop_still_frames",
]


@dataclass(frozen=True)
class BinningRule:
    """Strictly increasing edges mapping reals to one of len(edges)+1 bins.

    Bins are left-closed: a value equal to an edge lands in the bin to its
    right; out-of-range values clamp to the end bins.
    """

    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 1:
            raise ValueError("need at least one edge")
        if np.any(np.diff(e) <= 0):
            raise ValueError("edges must be strictly increasing")
        object.__setattr__(self, "edges", e)

    @property
    def n_bins(self) -> int:
        return self.edges.size + 1


class ScenarioKind(enum.Enum):
    QUASI_UNIFORM = "quasi_uniform"
    OFFLINE_CASE1 = "offline_case1"
    OFFLINE_CASE2 = "offline_case2"
    OFFLINE_CASE3 = "offline_case3"
    OFFLINE_CASE4 = "offline_case4"
    ONLINE_CASE1 = "online_case1"
    ONLINE_CASE2 = "online_case2"
    ONLINE_CASE3 = "online_case3"
    ONLINE_CASE4 = "online_case4"
    GAUSSIAN_MEAN_COV = "gaussian_mean_cov"


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind
    seed: int
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioData:
    """Either a single stream with a change index, or a two-sample pair."""

    x: np.ndarray | None = None
    change: int | None = None
    x1: np.ndarray | None = None
    x2: np.ndarray | None = None
    n: int | None = None

    @property
    def is_pair(self) -> bool:
        return self.x1 is not None


# distribution tables for the discrete cases
OFFLINE_CASE1_Q = np.array([1, 2, 3, 4, 5, 5, 4, 3, 2, 1]) / 30.0
ONLINE_CASE1_Q = np.array([0.04, 0.14, 0.32, 0.0, 0.0, 0.0, 0.0, 0.32, 0.14, 0.04])

# two-dimensional mean/covariance pair used by the projection illustration
MEANCOV_MU1 = np.array([0.0, 0.0])
MEANCOV_MU2 = np.array([2.0, 0.0])
MEANCOV_SIGMA1 = np.array([[5.03, -2.41], [-2.41, 1.55]])
MEANCOV_SIGMA2 = np.array([[5.50, 3.30], [3.30, 2.53]])


def project_series(data, e) -> np.ndarray:
    """Project each row of a T x d matrix onto the unit direction e."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    e = np.asarray(e, dtype=float)
    if abs(np.linalg.norm(e) - 1.0) > 1e-8:
        raise ValueError("direction must have unit norm")
    if data.shape[1] != e.size:
        raise ValueError("dimension mismatch")
    return data @ e


def quantile_bins(training_values, n: int) -> BinningRule:
    """Edges at the i/n empirical quantiles (linear interpolation), i=1..n-1.

    Duplicate edges collapse; if fewer than n-1 distinct edges survive the
    sample cannot support n bins and this raises.
    """
    v = np.asarray(training_values, dtype=float)
    if np.unique(v).size < n:
        raise ValueError(f"need at least {n} distinct training values")
    edges = np.unique(np.quantile(v, np.arange(1, n) / n))
    if edges.size < n - 1:
        raise ValueError("too few distinct quantile edges for the requested bins")
    return BinningRule(edges)


def normal_quantile_bins(n: int) -> BinningRule:
    """Equiprobable bins under the standard normal."""
    from scipy.stats import norm

    return BinningRule(norm.ppf(np.arange(1, n) / n))


def discretize(values, rule: BinningRule) -> np.ndarray:
    """Map reals to bin indices by binary search (left-closed bins)."""
    return np.searchsorted(rule.edges, np.asarray(values, dtype=float), side="right")


def gen_scenario(s: Scenario, count: int) -> ScenarioData:
    """Deterministic synthetic data for the benchmark scenarios.

    Stream scenarios emit ``count`` samples with the change at index
    ``params['change']`` (default count // 2); pair scenarios emit two
    samples of ``count`` each.
    """
    rng = np.random.default_rng(s.seed)
    k = s.kind
    p = s.params
    if k is ScenarioKind.QUASI_UNIFORM:
        n = p.get("n", 64)
        null = p.get("null", False)
        omega1 = rng.permutation(n)[: n // 2]
        omega2 = omega1 if null else rng.permutation(n)[: n // 2]
        return ScenarioData(
            x1=rng.choice(omega1, count), x2=rng.choice(omega2, count), n=n
        )
    if k is ScenarioKind.GAUSSIAN_MEAN_COV:
        return ScenarioData(
            x1=rng.multivariate_normal(MEANCOV_MU1, MEANCOV_SIGMA1, count),
            x2=rng.multivariate_normal(MEANCOV_MU2, MEANCOV_SIGMA2, count),
        )
    change = p.get("change", count // 2)
    if not 0 <= change <= count:
        raise ValueError("change index out of range")
    pre_n, post_n = change, count - change
    if k in (ScenarioKind.OFFLINE_CASE1, ScenarioKind.ONLINE_CASE1):
        q = OFFLINE_CASE1_Q if k is ScenarioKind.OFFLINE_CASE1 else ONLINE_CASE1_Q
        x = np.concatenate([rng.integers(0, 10, pre_n), rng.choice(10, post_n, p=q)])
        return ScenarioData(x=x, change=change, n=10)
    if k in (ScenarioKind.OFFLINE_CASE2, ScenarioKind.ONLINE_CASE2):
        cov = np.outer([1.0, 0.7], [1.0, 0.7]) + np.outer([-1.0, 0.4], [-1.0, 0.4])
        pre = rng.multivariate_normal([0.0, 0.0], np.eye(2), pre_n)
        post = rng.multivariate_normal([0.5, 0.0], cov, post_n)
        return ScenarioData(x=np.vstack([pre, post]), change=change)
    if k in (ScenarioKind.OFFLINE_CASE3, ScenarioKind.ONLINE_CASE3):
        wt = 0.2 if k is ScenarioKind.OFFLINE_CASE3 else 0.6
        d = 20
        pre = rng.standard_normal((pre_n, d))
        small = rng.random(post_n) < wt
        post = rng.standard_normal((post_n, d))
        post[small] *= np.sqrt(0.1)
        return ScenarioData(x=np.vstack([pre, post]), change=change)
    if k in (ScenarioKind.OFFLINE_CASE4, ScenarioKind.ONLINE_CASE4):
        std = 0.8 if k is ScenarioKind.OFFLINE_CASE4 else 0.7
        pre = rng.standard_normal(pre_n)
        post = rng.laplace(0.0, std / np.sqrt(2.0), post_n)  # Laplace std = sqrt(2)*scale
        return ScenarioData(x=np.concatenate([pre, post]), change=change)
    raise ValueError(f"unknown scenario kind: {k!r}")


def load_csv(path, columns: int | None = None, has_header: bool = False,
             delimiter: str = ",") -> np.ndarray:
    """Parse a numeric CSV into a float matrix.

    Rejects ragged rows and non-numeric cells with the offending location;
    UTF-8, no quoting (numeric data only).
    """
    rows = []
    width = columns
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno == 1 and has_header:
                continue
            line = line.strip()
            if not line:
                continue
            cells = line.split(delimiter)
            if width is None:
                width = len(cells)
            if len(cells) != width:
                raise ValueError(
                    f"{path}:{lineno}: expected {width} columns, found {len(cells)}"
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(i for i, c in enumerate(cells) if not _is_float(c))
                raise ValueError(
                    f"{path}:{lineno}: non-numeric value {cells[bad]!r} in column {bad + 1}"
                ) from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def _is_float(c):
    try:
        float(c)
        return True
    except ValueError:
        return False


def drop_still_frames(data, eps_factor: float = 1e-4) -> np.ndarray:
    """Drop frames whose displacement from the previous frame is negligible.

    The cutoff is ``eps_factor`` times the median nonzero displacement norm;
    the first frame is always kept.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[0] < 2:
        return data
    disp = np.linalg.norm(np.diff(data, axis=0), axis=1)
    nonzero = disp[disp > 0]
    if nonzero.size == 0:
        return data[:1]
    cutoff = eps_factor * np.median(nonzero)
    keep = np.concatenate([[True], disp > cutoff])
    return data[keep]
