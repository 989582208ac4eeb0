"""Dominance relations and gradient-combination rules for multi-objective descent.

All functions are pure; randomness enters only through an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

LOSS_FLOOR = 1e-12
SIMPLEX_TOL = 1e-8


def _as_vector(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {x.shape}")
    return x


def check_preference(r, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Return ``r`` as an array, raising if it is not on the simplex."""
    r = _as_vector(r, "preference")
    if not np.all(np.isfinite(r)) or np.any(r < -tol) or abs(r.sum() - 1.0) > tol:
        raise ValueError(f"preference {r.tolist()} is not on the simplex")
    return r


# ---------------------------------------------------------------------------
# dominance
# ---------------------------------------------------------------------------

def dominates(a, b) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and better somewhere."""
    a, b = _as_vector(a, "a"), _as_vector(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"loss vectors differ in length: {a.size} vs {b.size}")
    return bool(np.all(a <= b) and np.any(a < b))


def non_dominated_filter(points) -> np.ndarray:
    """Sorted indices of the points no other point dominates.

    Equal points do not dominate each other, so duplicates on the front are
    all kept.  Points are visited in lexicographic order; a dominator always
    sorts before what it dominates, so each point only needs checking
    against the front found so far.
    """
    P = np.asarray(points, dtype=np.float64)
    if P.size == 0:
        return np.zeros(0, dtype=np.int64)
    if P.ndim != 2:
        raise ValueError(f"points must be (n, m), got shape {P.shape}")
    order = np.lexsort(P.T[::-1])
    front: list[int] = []
    for i in order:
        p = P[i]
        if front:
            F = P[front]
            if np.any(np.all(F <= p, axis=1) & np.any(F < p, axis=1)):
                continue
        front.append(int(i))
    return np.sort(np.asarray(front, dtype=np.int64))


def linear_scalarization(r, losses) -> float:
    r, losses = _as_vector(r, "r"), _as_vector(losses, "losses")
    if r.shape != losses.shape:
        raise ValueError(f"preference has {r.size} entries, loss vector {losses.size}")
    return float(r @ losses)


# ---------------------------------------------------------------------------
# min-norm point of the convex hull of gradients
# ---------------------------------------------------------------------------

def _check_gradients(G) -> np.ndarray:
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] < 1:
        raise ValueError(f"gradient set must be (m, n) with m >= 1, got shape {G.shape}")
    if not np.all(np.isfinite(G)):
        raise ValueError("gradient set contains non-finite entries")
    return G


def _min_norm_pair(M: np.ndarray) -> np.ndarray:
    # minimise |b g1 + (1-b) g2|^2 over b in [0, 1]
    denom = M[0, 0] - 2.0 * M[0, 1] + M[1, 1]
    if denom <= 0.0:
        return np.array([0.5, 0.5])
    b = (M[1, 1] - M[0, 1]) / denom
    b = min(1.0, max(0.0, b))
    return np.array([b, 1.0 - b])


def _frank_wolfe(M: np.ndarray, max_iter: int, tol: float) -> np.ndarray:
    """Away-step Frank-Wolfe for min b'Mb over the simplex, exact line search."""
    m = M.shape[0]
    beta = np.zeros(m)
    beta[int(np.argmin(np.diag(M)))] = 1.0
    Mb = M @ beta
    for _ in range(max_iter):
        q = float(beta @ Mb)
        t = int(np.argmin(Mb))
        gap = q - Mb[t]
        if gap <= tol:
            break
        support = np.flatnonzero(beta > 0)
        s = int(support[np.argmax(Mb[support])])
        away_gap = Mb[s] - q
        if gap >= away_gap:
            # toward vertex t
            d = -beta.copy()
            d[t] += 1.0
            gamma_max = 1.0
        else:
            # away from vertex s
            d = beta.copy()
            d[s] -= 1.0
            gamma_max = beta[s] / (1.0 - beta[s]) if beta[s] < 1.0 else np.inf
        Md = M @ d
        curv = float(d @ Md)
        slope = float(Mb @ d)
        if curv <= 0.0:
            gamma = gamma_max
        else:
            gamma = min(gamma_max, max(0.0, -slope / curv))
        if not np.isfinite(gamma):
            break
        beta = beta + gamma * d
        beta[beta < 1e-15] = 0.0
        beta /= beta.sum()
        Mb = M @ beta
    polished = _wolfe_polish(M, beta, tol)
    return polished if _gap(M, polished) < _gap(M, beta) else beta


def _gap(M: np.ndarray, beta: np.ndarray) -> float:
    Mb = M @ beta
    return float(beta @ Mb - Mb.min())


def _affine_min(M: np.ndarray, S: list[int]) -> np.ndarray:
    # minimise y'M_SS y subject to sum(y) = 1
    k = len(S)
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = M[np.ix_(S, S)]
    A[:k, k] = -1.0
    A[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    return np.linalg.lstsq(A, rhs, rcond=None)[0][:k]


def _wolfe_polish(M: np.ndarray, beta: np.ndarray, tol: float, max_iter: int = 200) -> np.ndarray:
    """Active-set (Wolfe corral) refinement; exact once the support is right.

    Frank-Wolfe converges slowly when the Gram matrix is near singular; this
    finishes the job from its support.
    """
    beta = beta.copy()
    S = [int(i) for i in np.flatnonzero(beta > 0)]
    for _ in range(max_iter):
        # minor cycle: move to the affine minimiser of the corral, dropping
        # vertices whose weight would turn negative
        while True:
            y = _affine_min(M, S)
            if not np.all(np.isfinite(y)):
                return beta
            if np.all(y > 0):
                beta = np.zeros_like(beta)
                beta[S] = y
                break
            cur = beta[S]
            neg = y <= 0
            theta = float(np.min(cur[neg] / (cur[neg] - y[neg])))
            beta[S] = cur + theta * (y - cur)
            S = [i for i in S if beta[i] > 1e-15]
            beta[[i for i in range(len(beta)) if i not in S]] = 0.0
            beta /= beta.sum()
        Mb = M @ beta
        t = int(np.argmin(Mb))
        if beta @ Mb - Mb[t] <= tol or t in S:
            break
        S.append(t)
    beta = np.clip(beta, 0.0, None)
    return beta / beta.sum()


def min_norm_weights(G, method: str = "auto", max_iter: int = 500, tol: float = 1e-9) -> np.ndarray:
    """Simplex weights ``beta`` minimising ``|G.T @ beta|``.

    ``method`` is ``"analytic"`` (m = 2 only), ``"frank_wolfe"`` or
    ``"auto"`` (analytic for two objectives, Frank-Wolfe otherwise).
    """
    G = _check_gradients(G)
    m = G.shape[0]
    if m == 1:
        return np.ones(1)
    M = G @ G.T
    if method == "auto":
        method = "analytic" if m == 2 else "frank_wolfe"
    if method == "analytic":
        if m != 2:
            raise ValueError("analytic min-norm solver needs exactly two gradients")
        return _min_norm_pair(M)
    if method == "frank_wolfe":
        return _frank_wolfe(M, max_iter, tol)
    raise ValueError(f"unknown method {method!r}")


def min_norm_direction(G, **kwargs) -> np.ndarray:
    G = _check_gradients(G)
    return G.T @ min_norm_weights(G, **kwargs)


# ---------------------------------------------------------------------------
# preference-aligned (EPO) weights
# ---------------------------------------------------------------------------

def normalized_weighted_losses(r, losses) -> np.ndarray:
    r = _as_vector(r, "r")
    rl = r * np.maximum(_as_vector(losses, "losses"), LOSS_FLOOR)
    total = rl.sum()
    if not total > 0:
        raise ValueError("weighted losses are all zero")
    return rl / total


def non_uniformity(r, losses) -> float:
    """KL divergence of the preference-weighted loss shares from uniform."""
    p = normalized_weighted_losses(r, losses)
    # sum_j p_j log(m p_j) written as sum_j u [(1+x) log(1+x) - x] with
    # x = m p_j - 1, u = 1/m: equal on the simplex, but every term is
    # non-negative and second order in x, so rounding in p cannot leave a
    # spurious positive divergence for balanced inputs
    x = p.size * p - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(x > -1.0, (1.0 + x) * np.log1p(x) - x, 1.0)
    return float(np.sum(terms) / p.size)


def epo_anchor(r, losses) -> np.ndarray:
    """Direction in loss space that pulls the loss vector onto the ray."""
    r = _as_vector(r, "r")
    p = normalized_weighted_losses(r, losses)
    mu = non_uniformity(r, losses)
    with np.errstate(divide="ignore"):
        logs = np.where(p > 0, np.log(p.size * np.where(p > 0, p, 1.0)), 0.0)
    return r * (logs - mu)


def epo_lp_objective(G, losses, r, beta) -> float:
    """Value of the balancing LP objective ``a' G G' beta``."""
    G = _check_gradients(G)
    return float(epo_anchor(r, losses) @ (G @ (G.T @ np.asarray(beta, dtype=np.float64))))


def epo_weights(G, losses, r, eps_bal: float = 1e-3) -> np.ndarray:
    """Simplex weights for a step that descends while moving onto the ray ``r``.

    When the loss shares are already uniform up to ``eps_bal`` this is the
    min-norm combination.  Otherwise it maximises ``a' C beta`` (``C = G G'``,
    ``a`` the anchor) over the simplex, subject to the most over-weighted
    losses not increasing to first order.
    """
    G = _check_gradients(G)
    r = check_preference(r)
    losses = np.maximum(_as_vector(losses, "losses"), LOSS_FLOOR)
    m = G.shape[0]
    if r.size != m or losses.size != m:
        raise ValueError(f"{m} gradients but {r.size} preferences and {losses.size} losses")
    if not np.any(G):
        raise ValueError("all gradients are zero")
    if non_uniformity(r, losses) <= eps_bal:
        return min_norm_weights(G)
    C = G @ G.T
    a = epo_anchor(r, losses)
    rl = r * losses
    worst = np.flatnonzero(rl >= rl.max())
    res = linprog(
        -(C @ a),
        A_ub=-C[worst],
        b_ub=np.zeros(worst.size),
        A_eq=np.ones((1, m)),
        b_eq=np.ones(1),
        bounds=[(0.0, None)] * m,
        method="highs",
    )
    if res.status != 0:
        beta = np.zeros(m)
        beta[worst[0]] = 1.0
        return beta
    beta = np.clip(res.x, 0.0, None)
    return beta / beta.sum()


# ---------------------------------------------------------------------------
# preference sampling
# ---------------------------------------------------------------------------

def _rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_preference(m: int, alpha: float, rng) -> np.ndarray:
    """One draw from the symmetric Dirichlet(alpha) on the m-simplex.

    Gamma(alpha) variates are formed in log space as
    ``log Gamma(alpha + 1) + log(U) / alpha`` so small ``alpha`` cannot
    underflow every coordinate to zero.
    """
    return sample_preferences(1, m, alpha, rng)[0]


def sample_preferences(n: int, m: int, alpha: float, rng) -> np.ndarray:
    if not alpha > 0:
        raise ValueError(f"Dirichlet concentration must be positive, got {alpha}")
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = _rng(rng)
    log_g = np.log(rng.standard_gamma(alpha + 1.0, size=(n, m)))
    log_g += np.log(rng.random(size=(n, m))) / alpha
    log_g -= log_g.max(axis=1, keepdims=True)
    w = np.exp(log_g)
    return w / w.sum(axis=1, keepdims=True)


def even_rays(k: int, m: int = 2) -> np.ndarray:
    """Evenly spread preferences on the simplex.

    For two objectives: ``(t, 1 - t)`` with ``t = 1/(k+1), ..., k/(k+1)``.
    For more, the interior points of the smallest simplex lattice holding at
    least ``k`` of them, truncated to ``k`` in lexicographic order.
    """
    if k < 1:
        raise ValueError("need at least one ray")
    if m == 2:
        t = np.arange(1, k + 1) / (k + 1)
        return np.stack([t, 1.0 - t], axis=1)
    if m == 1:
        return np.ones((k, 1))
    h = m
    while True:
        pts = _interior_lattice(m, h)
        if len(pts) >= k:
            break
        h += 1
    idx = np.round(np.linspace(0, len(pts) - 1, k)).astype(int)
    return pts[idx]


def _interior_lattice(m: int, h: int) -> np.ndarray:
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            if remaining >= 1:
                out.append(prefix + [remaining])
            return
        for v in range(1, remaining - slots + 2):
            rec(prefix + [v], remaining - v, slots - 1)

    rec([], h, m)
    return np.asarray(out, dtype=np.float64) / h
