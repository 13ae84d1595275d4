"""Weight optimization and data projection via first-order splitting methods.

Everything here runs on elementary projection steps: eigenvalue clipping for
the semidefinite cone, sort-based simplex / l1-ball projections, and
closed-form affine and halfspace projections, combined by consensus ADMM with
a Dykstra polish.  No external solver is involved; exact couplings for the
projection objective come from the Hungarian assignment.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "ConstraintSet",
    "WeightOptResult",
    "ProjectionResult",
    "weight_g",
    "weight_f",
    "optimize_weights",
    "fit_min_ellipsoid",
    "phi_objective",
    "wasserstein_projection",
]

MAX_ATOMS = 256


@dataclass(frozen=True)
class ConstraintSet:
    """Quadratic prior constraints: the set {p : p' Q_k p <= 1 for all k}."""

    Qs: tuple

    def __post_init__(self):
        for Q in self.Qs:
            Q = np.asarray(Q, float)
            if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
                raise ValueError("each constraint matrix must be square")
            if np.max(np.abs(Q - Q.T)) > 1e-10:
                raise ValueError("constraint matrices must be symmetric")
            if np.linalg.eigvalsh(Q).min() < -1e-8:
                raise ValueError("constraint matrices must be positive semidefinite")

    @classmethod
    def of(cls, *Qs):
        return cls(tuple(np.asarray(Q, float) for Q in Qs))

    @property
    def n(self) -> int | None:
        return self.Qs[0].shape[0] if self.Qs else None


@dataclass(frozen=True)
class WeightOptResult:
    sigma: np.ndarray
    f_value: float
    g_value: float
    dual_lower: float
    outer_iterations: int
    stalled: bool


@dataclass(frozen=True)
class ProjectionResult:
    e: np.ndarray
    objective: float
    E_star: np.ndarray
    iterations: int


# ---------------------------------------------------------------------------
# elementary projections

def _proj_psd(A):
    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    if w[0] >= 0.0:
        return A
    w = np.clip(w, 0.0, None)
    return (V * w) @ V.T


def _proj_simplex_total(A, total=1.0):
    """Nearest matrix with nonnegative entries summing to ``total``."""
    x = A.ravel()
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - total
    idx = np.nonzero(u * np.arange(1, x.size + 1) > css)[0][-1]
    tau = css[idx] / (idx + 1.0)
    return np.clip(A - tau, 0.0, None)


def _proj_l1_total(A, radius):
    x = A.ravel()
    a = np.abs(x)
    if a.sum() <= radius:
        return A
    u = np.sort(a)[::-1]
    css = np.cumsum(u) - radius
    idx = np.nonzero(u * np.arange(1, x.size + 1) > css)[0][-1]
    tau = css[idx] / (idx + 1.0)
    return np.sign(A) * np.clip(np.abs(A) - tau, 0.0, None)


def _proj_sum_zero(A):
    return A - A.sum() / A.size


def _proj_trace_atleast(A, bound):
    n = A.shape[0]
    gap = bound - np.trace(A)
    if gap <= 0:
        return A
    return A + (gap / n) * np.eye(n)


def _halfspace_proj(A, Q, bound):
    v = float(np.sum(A * Q)) - bound
    if v <= 0:
        return A
    return A - (v / float(np.sum(Q * Q))) * Q


def _dykstra(Z, projs, iters=300, tol=1e-11):
    incs = [np.zeros_like(Z) for _ in projs]
    X = Z.copy()
    for _ in range(iters):
        prev = X.copy()
        for i, proj in enumerate(projs):
            Y = X + incs[i]
            X = proj(Y)
            incs[i] = Y - X
        if np.max(np.abs(X - prev)) < tol:
            break
    return X


def _consensus_admm(B, projs, Z0, sense, rho=1.0, iters=4000, tol=1e-9,
                    polish_iters=400):
    """Optimize the linear objective <B, X> over the intersection of ``projs``.

    sense=+1 maximizes, -1 minimizes.  Returns (value, X, info); X is the
    Dykstra-polished feasible point and value the objective there.
    """
    m = len(projs)
    Z = Z0.copy()
    Xs = [Z.copy() for _ in range(m)]
    Us = [np.zeros_like(Z) for _ in range(m)]
    scale = max(1.0, float(np.max(np.abs(B))))
    it = 0
    for it in range(iters):
        for j in range(m):
            Xs[j] = projs[j](Z - Us[j])
        Zp = (sum(Xs) + sum(Us)) / m + (sense * B) / (m * rho)
        r = max(np.max(np.abs(X - Zp)) for X in Xs)
        s = rho * np.max(np.abs(Zp - Z))
        Z = Zp
        for j in range(m):
            Us[j] = Us[j] + Xs[j] - Z
        if r < tol * scale and s < tol * scale:
            break
        if (it + 1) % 50 == 0:  # residual balancing
            if r > 10.0 * s:
                rho *= 2.0
                Us = [U / 2.0 for U in Us]
            elif s > 10.0 * r:
                rho /= 2.0
                Us = [U * 2.0 for U in Us]
    X = _dykstra(Z, projs, iters=polish_iters)
    value = float(np.sum(B * X))
    return value, X, {"iterations": it + 1, "rho": rho}


def _feasibility_gap(X, projs):
    return max(float(np.max(np.abs(X - proj(X)))) for proj in projs)


# ---------------------------------------------------------------------------
# the weight problem

def _g_projs(cs: ConstraintSet):
    projs = [_proj_psd, _proj_simplex_total]
    for Q in cs.Qs:
        projs.append(lambda A, Q=Q: _halfspace_proj(A, Q, 1.0))
    return projs


def _f_projs(cs: ConstraintSet, rho):
    projs = [
        _proj_psd,
        lambda A: _proj_l1_total(A, 4.0),
        _proj_sum_zero,
        lambda A: _proj_trace_atleast(A, rho * rho),
    ]
    for Q in cs.Qs:
        projs.append(lambda A, Q=Q: _halfspace_proj(A, Q, 4.0))
    return projs


def _solve_g(sigma, cs, Z0=None, iters=4000):
    n = sigma.size
    B = np.diag(sigma.astype(float) ** 2)
    Z0 = np.full((n, n), 1.0 / n**2) if Z0 is None else Z0
    value, P, info = _consensus_admm(B, _g_projs(cs), Z0, sense=+1, iters=iters)
    return value, P, info


def _solve_f(sigma, cs, rho, Z0=None, iters=4000):
    n = sigma.size
    B = np.diag(sigma.astype(float))
    projs = _f_projs(cs, rho)
    if Z0 is None:
        Z0 = np.zeros((n, n))
        Z0[0, 0] = Z0[1, 1] = rho * rho / 2.0
        Z0[0, 1] = Z0[1, 0] = -(rho * rho) / 2.0
    value, S, info = _consensus_admm(B, projs, Z0, sense=-1, iters=iters)
    gap = _feasibility_gap(S, projs)
    if gap > 1e-6:
        raise ValueError(
            f"difference set is infeasible at rho={rho:.4g} "
            f"(constraint residual {gap:.2e}); reduce rho"
        )
    return value, S, info


def weight_g(sigma, cs: ConstraintSet) -> float:
    """Convex upper bound on the worst-case null second moment sum s_i^2 p_i^2.

    Solved as max Tr(Diag(sigma^2) P) over doubly-constrained PSD matrices
    with unit total mass and Tr(P Q_k) <= 1.
    """
    sigma = _check_sigma(sigma, cs)
    value, P, _ = _solve_g(sigma, cs)
    return value


def weight_f(sigma, cs: ConstraintSet, rho: float) -> float:
    """Concave lower bound on the worst-case separated signal sum s_i (p_i-q_i)^2.

    Solved as min Tr(Diag(sigma) S) over the relaxed difference set; raises
    when no difference of l2 size rho fits the constraints.
    """
    if not 0.0 < rho <= 2.0:
        raise ValueError("rho must lie in (0, 2]")
    sigma = _check_sigma(sigma, cs)
    value, S, _ = _solve_f(sigma, cs, rho)
    return value


def _check_sigma(sigma, cs):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("weights must be nonnegative")
    if sigma.size > MAX_ATOMS:
        raise ValueError(f"solver supports up to {MAX_ATOMS} atoms")
    if cs.n is not None and cs.n != sigma.size:
        raise ValueError("weight / constraint dimension mismatch")
    return sigma


def _dual_lower_bound(sigma, rho):
    """Feasible dual value for the signal bound: lambda rho^2 with the
    remaining multipliers zero, feasible whenever lambda <= min sigma_i."""
    return float(np.min(sigma)) * rho * rho


def optimize_weights(cs: ConstraintSet, rho: float, n: int | None = None,
                     outer_iters: int = 60, inner_iters: int = 1500,
                     step0: float = 0.5, restarts: int = 2, seed: int = 0,
                     tol: float = 1e-7) -> WeightOptResult:
    """Maximize the signal bound subject to the noise bound g(sigma) <= 1.

    Projected supergradient ascent on the weights: the supergradient of the
    inner minimum is the diagonal of the minimizing difference matrix;
    feasibility is restored after each step by exact rescaling (g is
    2-homogeneous in sigma).  Ascent restarts from perturbed feasible points
    guard against stalls at symmetric iterates; the best feasible iterate is
    returned, flagged as stalled when no ascent step ever improved on its
    starting point.
    """
    if cs.n is None and n is None:
        raise ValueError("atom count required when the constraint set is empty")
    n = cs.n if cs.n is not None else n
    rng = np.random.default_rng(seed)

    best = None  # (f, sigma, g)
    improved_any = False
    total_outer = 0
    Zf = Zg = None

    for restart in range(restarts + 1):
        sigma = np.ones(n)
        if restart > 0:
            sigma = sigma * rng.uniform(0.5, 1.5, n)
        gval, Pg, _ = _solve_g(sigma, cs, Z0=Zg, iters=inner_iters)
        Zg = Pg
        sigma = sigma / math.sqrt(max(gval, 1e-300))
        f0 = None
        for k in range(outer_iters):
            total_outer += 1
            fval, S, _ = _solve_f(sigma, cs, rho, Z0=Zf, iters=inner_iters)
            Zf = S
            if f0 is None:
                f0 = fval
            if best is None or fval > best[0]:
                if best is not None and fval > best[0] + tol * max(1.0, abs(best[0])):
                    improved_any = True
                gcur, Pg, _ = _solve_g(sigma, cs, Z0=Zg, iters=inner_iters)
                Zg = Pg
                best = (fval, sigma.copy(), gcur)
            grad = np.clip(np.diag(S), 0.0, None)
            gnorm = float(np.linalg.norm(grad))
            if gnorm < 1e-14:
                break
            step = step0 / math.sqrt(k + 1.0) * float(np.linalg.norm(sigma)) / gnorm
            sigma = np.clip(sigma + step * grad, 0.0, None)
            gval, Pg, _ = _solve_g(sigma, cs, Z0=Zg, iters=inner_iters)
            Zg = Pg
            if gval > 1.0:
                sigma = sigma / math.sqrt(gval)

    fbest, sbest, gbest = best
    return WeightOptResult(
        sigma=sbest,
        f_value=fbest,
        g_value=gbest,
        dual_lower=_dual_lower_bound(sbest, rho),
        outer_iterations=total_outer,
        stalled=not improved_any,
    )


# ---------------------------------------------------------------------------
# minimum-volume origin-centered enclosing ellipsoid

def fit_min_ellipsoid(pmfs, tol: float = 1e-7, max_iter: int = 100000) -> ConstraintSet:
    """Khachiyan-style multiplicative updates for the origin-centered MVEE.

    Returns the single quadratic constraint Q with every ||Q^{1/2} p_i|| <= 1;
    a degenerate point set gets a small ridge and a warning.
    """
    P = np.atleast_2d(np.asarray(pmfs, dtype=float))
    m, d = P.shape
    u = np.full(m, 1.0 / m)
    ridge = 0.0
    V = P.T @ (u[:, None] * P)
    if np.linalg.matrix_rank(V, tol=1e-12) < d:
        ridge = 1e-8
        warnings.warn("degenerate span; ridge added to the ellipsoid fit")
    it = 0
    for it in range(max_iter):
        V = P.T @ (u[:, None] * P) + ridge * np.eye(d)
        g = np.einsum("ij,jk,ik->i", P, np.linalg.inv(V), P)
        j = int(np.argmax(g))
        if g[j] <= d * (1.0 + tol):
            break
        step = (g[j] - d) / (d * (g[j] - 1.0))
        u *= 1.0 - step
        u[j] += step
    V = P.T @ (u[:, None] * P) + ridge * np.eye(d)
    Q = np.linalg.inv(d * V)
    Q = 0.5 * (Q + Q.T)
    # exact containment: scale so the worst point sits on the boundary
    worst = float(np.einsum("ij,jk,ik->i", P, Q, P).max())
    return ConstraintSet.of(Q / worst)


# ---------------------------------------------------------------------------
# optimal one-dimensional projection

def phi_objective(E, X1, X2):
    """Exact balanced transport value between the two point sets under the
    metric induced by E, plus the optimal coupling (as a permutation).

    Costs are c_ij = sqrt((x_i - y_j)' E (x_i - y_j)); marginals are uniform,
    so the value is the mean matched cost.
    """
    X1 = np.atleast_2d(np.asarray(X1, float))
    X2 = np.atleast_2d(np.asarray(X2, float))
    if X1.shape != X2.shape:
        raise ValueError("training sets must have equal shapes")
    E = np.asarray(E, float)
    if np.linalg.eigvalsh(0.5 * (E + E.T)).min() < -1e-8:
        raise ValueError("E must be positive semidefinite")
    diff = X1[:, None, :] - X2[None, :, :]
    quad = np.einsum("ijk,kl,ijl->ij", diff, E, diff)
    cost = np.sqrt(np.clip(quad, 0.0, None))
    rows, cols = linear_sum_assignment(cost)
    value = float(cost[rows, cols].mean())
    return value, cols


def _proj_spectrahedron(E):
    """Eigenvalue clipping followed by trace renormalization."""
    E = 0.5 * (E + E.T)
    w, V = np.linalg.eigh(E)
    w = np.clip(w, 0.0, None)
    tr = w.sum()
    if tr <= 0:
        return np.eye(E.shape[0]) / E.shape[0]
    return (V * (w / tr)) @ V.T


def wasserstein_projection(X1, X2, iters: int = 500, step: float = 0.1,
                           tol: float = 1e-7) -> ProjectionResult:
    """Best separating direction by supergradient ascent on the relaxed
    transport objective over {E PSD, trace E = 1}.

    Each iterate solves the assignment exactly, ascends along the matched
    supergradient with backtracking, and projects back to the spectrahedron;
    the answer is the leading eigenvector of the final E, oriented so its
    first nonzero coordinate is positive.
    """
    X1 = np.atleast_2d(np.asarray(X1, float))
    X2 = np.atleast_2d(np.asarray(X2, float))
    if X1.shape != X2.shape:
        raise ValueError("training sets must have equal shapes")
    T, d = X1.shape
    E = np.eye(d) / d
    value, cols = phi_objective(E, X1, X2)
    it = 0
    for it in range(iters):
        diff = X1 - X2[cols]
        quad = np.einsum("ij,jk,ik->i", diff, E, diff)
        keep = quad > 1e-18
        if not np.any(keep):
            break
        grad = np.einsum(
            "i,ij,ik->jk", 1.0 / (2.0 * np.sqrt(quad[keep])), diff[keep], diff[keep]
        ) / T
        improved = False
        s = step
        for _ in range(20):
            E_new = _proj_spectrahedron(E + s * grad)
            v_new, cols_new = phi_objective(E_new, X1, X2)
            if v_new >= value - 1e-12:
                improved = v_new > value + tol * max(1.0, abs(value))
                E, cols = E_new, cols_new
                gain = v_new - value
                value = v_new
                break
            s /= 2.0
        else:
            break
        if not improved and gain <= tol * max(1.0, abs(value)):
            break
    w, V = np.linalg.eigh(E)
    e = V[:, -1]
    nz = np.nonzero(np.abs(e) > 1e-12)[0]
    if nz.size and e[nz[0]] < 0:
        e = -e
    return ProjectionResult(e=e, objective=value, E_star=E, iterations=it + 1)
