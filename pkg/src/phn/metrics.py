"""Quality measures for a set of loss vectors: hypervolume and uniformity."""

from __future__ import annotations

import numpy as np

from .moo import LOSS_FLOOR, non_uniformity


def _bounded(points, ref) -> tuple[np.ndarray, np.ndarray]:
    ref = np.asarray(ref, dtype=np.float64).reshape(-1)
    P = np.asarray(points, dtype=np.float64)
    if P.size == 0:
        return np.zeros((0, ref.size)), ref
    P = P.reshape(-1, ref.size) if P.ndim == 1 else P
    if P.shape[1] != ref.size:
        raise ValueError(f"points have {P.shape[1]} objectives, reference point {ref.size}")
    # points touching or beyond the reference contribute nothing and are dropped
    keep = np.all(P < ref, axis=1)
    return P[keep], ref


def _hv2d(P: np.ndarray, ref: np.ndarray) -> float:
    order = np.lexsort((P[:, 1], P[:, 0]))
    vol = 0.0
    best_y = ref[1]
    for x, y in P[order]:
        if y < best_y:
            vol += (ref[0] - x) * (best_y - y)
            best_y = y
    return vol


def _hv_rec(P: np.ndarray, ref: np.ndarray) -> float:
    if len(P) == 0:
        return 0.0
    if P.shape[1] == 1:
        return float(ref[0] - P[:, 0].min())
    if P.shape[1] == 2:
        return _hv2d(P, ref)
    # slice along the last objective
    order = np.argsort(P[:, -1], kind="stable")
    P = P[order]
    z = P[:, -1]
    vol = 0.0
    for i in range(len(P)):
        top = z[i + 1] if i + 1 < len(P) else ref[-1]
        depth = top - z[i]
        if depth <= 0.0:
            continue
        vol += depth * _hv_rec(P[: i + 1, :-1], ref[:-1])
    return vol


def hypervolume(points, ref) -> float:
    """Volume of the union of boxes ``[p, ref]`` over points strictly below ``ref``.

    Exact: a sorted sweep for two objectives, recursive slicing along the last
    objective for more.  An empty (or fully excluded) set has volume 0.
    """
    P, ref = _bounded(points, ref)
    if ref.size < 1:
        raise ValueError("reference point is empty")
    if len(P) == 0:
        return 0.0
    return float(_hv_rec(P, ref))


def hypervolume_mc(points, ref, n_samples: int, rng, lower=None, chunk: int = 1_000_000):
    """Monte-Carlo estimate of :func:`hypervolume` and its standard error.

    Samples uniformly in the box ``[lower, ref]`` (``lower`` defaults to the
    componentwise minimum of the bounded points).
    """
    P, ref = _bounded(points, ref)
    if len(P) == 0:
        return 0.0, 0.0
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    lo = P.min(axis=0) if lower is None else np.minimum(np.asarray(lower, dtype=np.float64), P.min(axis=0))
    box = float(np.prod(ref - lo))
    hits = 0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        Q = lo + rng.random((n, ref.size)) * (ref - lo)
        covered = np.zeros(n, dtype=bool)
        for p in P:
            covered |= np.all(Q >= p, axis=1)
        hits += int(covered.sum())
        done += n
    f = hits / n_samples
    return box * f, box * np.sqrt(f * (1.0 - f) / n_samples)


def uniformity(r, losses) -> float:
    """``1 - KL(l_hat || uniform)`` with ``l_hat_j = r_j l_j / sum_i r_i l_i``.

    Losses are floored at 1e-12 first.  Equals 1 exactly when ``r * l`` is
    constant; can be negative for badly misaligned points.
    """
    r = np.asarray(r, dtype=np.float64)
    losses = np.maximum(np.asarray(losses, dtype=np.float64), LOSS_FLOOR)
    if r.shape != losses.shape:
        raise ValueError(f"preference has shape {r.shape}, losses {losses.shape}")
    return 1.0 - non_uniformity(r, losses)
