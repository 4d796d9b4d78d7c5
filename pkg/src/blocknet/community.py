"""Community recovery: normalized embeddings, K-means, split selection.

The embedding of node j stacks the unit-normalized final right-factor
rows from the two split directions; when the intercept and slope layers
share one membership the two layers' embeddings are concatenated as
well.  K-means (k-means++ seeding, Lloyd iterations, best of several
restarts) recovers the labels, and when several independent sample
splits are run, the split whose implied block model attains the highest
likelihood is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import expit

from .core import BlockMatrix, CovariateSet, Membership, Network, vech_position
from .errors import ConfigError

__all__ = [
    "SplitPlan",
    "KmeansResult",
    "CommunityFit",
    "build_embedding",
    "kmeans",
    "assign_membership",
    "split_loglik",
    "select_split",
    "align_labels",
]

ZERO_ROW_TOL = 1e-10


@dataclass(frozen=True)
class SplitPlan:
    """How many independent sample splits to run and how hard to refine."""

    R: int = 5
    H: int = 20
    kmeans_restarts: int = 10

    def __post_init__(self):
        if self.R < 1:
            raise ConfigError("need at least one split")
        if self.H < 0:
            raise ConfigError("H must be nonnegative")


@dataclass
class KmeansResult:
    centers: np.ndarray
    assignment: np.ndarray  # labels 1..K
    objective: float  # mean over points of squared distance to nearest center
    restart_objectives: np.ndarray


@dataclass
class CommunityFit:
    g_hat: Membership
    centers: np.ndarray
    r_star: int  # 1-based index of the selected split
    loglik_per_split: np.ndarray
    B1_per_split: list
    memberships: list


def build_embedding(v_split1: np.ndarray, v_split2: np.ndarray):
    """Row-normalize and stack the two directions' right-factor rows.

    Returns (embedding, zero_mask): rows whose norm falls below 1e-10 in
    either half are left as zero vectors there and flagged.
    """
    v1 = np.asarray(v_split1, dtype=float)
    v2 = np.asarray(v_split2, dtype=float)
    if v1.shape[0] != v2.shape[0]:
        raise ValueError("direction blocks must cover the same nodes")
    halves = []
    zero_mask = np.zeros(v1.shape[0], dtype=bool)
    for v in (v1, v2):
        norms = np.linalg.norm(v, axis=1)
        zero = norms <= ZERO_ROW_TOL
        safe = np.where(zero, 1.0, norms)
        out = v / safe[:, None]
        out[zero] = 0.0
        zero_mask |= zero
        halves.append(out)
    return np.concatenate(halves, axis=1), zero_mask


def _kmeans_pp_centers(points: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((K, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total <= 0:  # all remaining points coincide with a chosen center
            centers[k:] = points[int(rng.integers(n))]
            return centers
        probs = d2 / total
        centers[k] = points[int(rng.choice(n, p=probs))]
        d2 = np.minimum(d2, np.sum((points - centers[k]) ** 2, axis=1))
    return centers


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iter: int, tol: float):
    K = centers.shape[0]
    for _ in range(max_iter):
        d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for k in range(K):
            mask = labels == k
            if mask.any():
                new_centers[k] = points[mask].mean(axis=0)
            else:  # re-seed an empty cluster at the worst-fit point
                far = int(np.argmax(d2[np.arange(points.shape[0]), labels]))
                new_centers[k] = points[far]
        shift = float(np.max(np.abs(new_centers - centers)))
        centers = new_centers
        if shift <= tol:
            break
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)
    objective = float(d2[np.arange(points.shape[0]), labels].mean())
    return centers, labels, objective


def kmeans(
    points: np.ndarray,
    K: int,
    restarts: int = 10,
    seed: int | np.random.Generator = 0,
    max_iter: int = 300,
    tol: float = 1e-10,
) -> KmeansResult:
    """Best-of-restarts Lloyd K-means with k-means++ seeding.

    The objective is the mean squared distance of each point to its
    nearest center.  Ties in the final assignment go to the smallest
    center index.
    """
    points = np.asarray(points, dtype=float)
    distinct = np.unique(points, axis=0).shape[0]
    if K > distinct:
        raise ValueError(f"K={K} exceeds the number of distinct points ({distinct})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    best = None
    objs = []
    for _ in range(max(1, restarts)):
        centers0 = _kmeans_pp_centers(points, K, rng)
        centers, labels, obj = _lloyd(points, centers0, max_iter, tol)
        objs.append(obj)
        if best is None or obj < best[2] - 0.0:
            best = (centers, labels, obj)
    centers, labels, obj = best
    return KmeansResult(centers, labels + 1, obj, np.asarray(objs))


def assign_membership(points: np.ndarray, centers: np.ndarray) -> Membership:
    """Nearest-center labels (1-based); ties resolve to the smallest index."""
    points = np.asarray(points, dtype=float)
    centers = np.asarray(centers, dtype=float)
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    return Membership(np.argmin(d2, axis=1) + 1, centers.shape[0])


def assign_with_zero_rows(
    points: np.ndarray, centers: np.ndarray, zero_mask: np.ndarray, half_dims: tuple
) -> Membership:
    """Assignment that handles flagged zero-norm embedding halves.

    Regular rows take the nearest center.  A row with one vanished half
    is matched on its nonzero coordinates only; if every half vanished
    it falls into community 1.
    """
    base = assign_membership(points, centers)
    if not zero_mask.any():
        return base
    g = base.g.copy()
    edges = np.cumsum((0,) + half_dims)
    for i in np.flatnonzero(zero_mask):
        row = points[i]
        live = np.zeros(points.shape[1], dtype=bool)
        for b in range(len(half_dims)):
            sl = slice(edges[b], edges[b + 1])
            if np.linalg.norm(row[sl]) > ZERO_ROW_TOL:
                live[sl] = True
        if not live.any():
            g[i] = 1
            continue
        d2 = np.sum((centers[:, live] - row[live][None, :]) ** 2, axis=1)
        g[i] = int(np.argmin(d2)) + 1
    return Membership(g, centers.shape[0])


def split_loglik(
    Y: Network,
    covs: CovariateSet,
    g_r: Membership,
    theta0_hat: np.ndarray,
    tau_hat: float,
):
    """Maximized block-model likelihood of one split's membership estimate.

    Fits b (vech of the slope block matrix) by maximizing, over dyads
    i < j,  y log L(tau_hat + theta0_hat_ij + W_ij chi_ij' b) + ...,
    where chi_ij selects the block cell of (g_i, g_j).  The problem
    separates across cells, each solved by a damped scalar Newton.
    Returns (loglik, BlockMatrix, flags) with flags naming cells that
    needed a ridge or had no dyads.
    """
    if covs.p < 1:
        raise ConfigError("split likelihood needs a covariate layer")
    n = Y.n
    K = g_r.K
    d = K * (K + 1) // 2
    iu = np.triu_indices(n, k=1)
    pos_table = np.empty((K, K), dtype=np.int64)
    for a in range(1, K + 1):
        for b in range(a, K + 1):
            pos_table[a - 1, b - 1] = pos_table[b - 1, a - 1] = vech_position(K, a, b) - 1
    cell = pos_table[g_r.g[iu[0]] - 1, g_r.g[iu[1]] - 1]
    y = Y.adjacency[iu]
    w = covs.layers[0][iu]
    offset = tau_hat + np.asarray(theta0_hat)[iu]

    bvec = np.zeros(d)
    total = 0.0
    flags = {"empty_cells": [], "ridged_cells": []}
    for k in range(d):
        sel = cell == k
        if not sel.any():
            flags["empty_cells"].append(k + 1)
            continue
        yk, wk, ok = y[sel], w[sel], offset[sel]
        bk = 0.0
        ridge = 0.0
        for _ in range(100):
            idx = ok + wk * bk
            mu = expit(idx)
            gk = float(np.sum((yk - mu) * wk)) - ridge * bk
            if abs(gk) <= 1e-10:
                break
            hk = float(np.sum(mu * (1 - mu) * wk * wk)) + ridge
            if hk <= 1e-300:
                ridge = 1e-6
                flags["ridged_cells"].append(k + 1)
                continue
            step = gk / hk
            ll0 = float(np.sum(yk * idx - np.logaddexp(0.0, idx))) - 0.5 * ridge * bk * bk
            t = 1.0
            for _ in range(21):
                cand = bk + t * step
                idxc = ok + wk * cand
                llc = float(np.sum(yk * idxc - np.logaddexp(0.0, idxc))) - 0.5 * ridge * cand * cand
                if llc >= ll0 - 1e-12:
                    break
                t *= 0.5
            bk = cand
            if ridge == 0.0 and abs(bk) > 100.0:
                ridge = 1e-6
                flags["ridged_cells"].append(k + 1)
                bk = 0.0
        bvec[k] = bk
        idx = ok + wk * bk
        total += float(np.sum(yk * idx - np.logaddexp(0.0, idx)))
    return total, BlockMatrix(K, bvec), flags


def select_split(loglik_per_split: np.ndarray, memberships: list, extras: list | None = None):
    """Index (1-based) and membership of the highest-likelihood split.

    Ties resolve to the smallest split index.
    """
    ll = np.asarray(loglik_per_split, dtype=float)
    if ll.size < 1:
        raise ValueError("need at least one split")
    r_star = int(np.argmax(ll)) + 1
    chosen = memberships[r_star - 1]
    if extras is None:
        return r_star, chosen
    return r_star, chosen, extras[r_star - 1]


def align_labels(g_hat: Membership, g_ref: Membership) -> Membership:
    """Relabel ``g_hat`` to best match ``g_ref`` (max confusion-matrix trace)."""
    if g_hat.K != g_ref.K:
        raise ValueError(f"community counts differ: {g_hat.K} vs {g_ref.K}")
    if g_hat.n != g_ref.n:
        raise ValueError("memberships must cover the same nodes")
    K = g_hat.K
    table = np.zeros((K, K))
    np.add.at(table, (g_hat.g - 1, g_ref.g - 1), 1.0)
    rows, cols = linear_sum_assignment(-table)
    perm = np.empty(K, dtype=np.int64)
    perm[rows] = cols + 1
    return Membership(perm[g_hat.g - 1], K)
