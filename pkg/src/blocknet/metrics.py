"""Recovery and accuracy metrics: MSE, NMI, Rand index, PROP."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Membership

__all__ = ["mse_theta", "nmi", "rand_index", "prop_correct"]


def mse_theta(theta_hat: np.ndarray, theta_star: np.ndarray) -> float:
    """Mean squared error over off-diagonal cells: sum_{i!=j}(d_ij^2)/(n(n-1))."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_hat.shape != theta_star.shape:
        raise ValueError(f"shape mismatch {theta_hat.shape} vs {theta_star.shape}")
    n = theta_hat.shape[0]
    diff2 = (theta_hat - theta_star) ** 2
    return float((diff2.sum() - np.trace(diff2)) / (n * (n - 1)))


def _contingency(a: Membership, b: Membership) -> np.ndarray:
    if a.n != b.n:
        raise ValueError("memberships must have the same length")
    table = np.zeros((a.K, b.K))
    np.add.at(table, (a.g - 1, b.g - 1), 1.0)
    return table


def nmi(a: Membership, b: Membership) -> float:
    """Normalized mutual information I(a;b) / sqrt(H(a) H(b)).

    Two identical trivial partitions score 1; if exactly one partition
    is trivial the score is 0.
    """
    table = _contingency(a, b)
    n = a.n
    pxy = table / n
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    nz = pxy > 0
    outer = px[:, None] * py[None, :]
    info = float(np.sum(pxy[nz] * np.log(pxy[nz] / outer[nz])))
    hx = -float(np.sum(px[px > 0] * np.log(px[px > 0])))
    hy = -float(np.sum(py[py > 0] * np.log(py[py > 0])))
    if hx == 0.0 and hy == 0.0:
        return 1.0
    if hx == 0.0 or hy == 0.0:
        return 0.0
    return min(1.0, max(0.0, info / np.sqrt(hx * hy)))


def rand_index(a: Membership, b: Membership) -> float:
    """Unadjusted Rand index: share of node pairs on which the partitions agree."""
    table = _contingency(a, b)
    n = a.n
    if n < 2:
        raise ValueError("Rand index needs at least two nodes")
    same_both = float(np.sum(table * (table - 1)) / 2)
    same_a = float(np.sum(table.sum(axis=1) * (table.sum(axis=1) - 1)) / 2)
    same_b = float(np.sum(table.sum(axis=0) * (table.sum(axis=0) - 1)) / 2)
    total = n * (n - 1) / 2
    # agreements = pairs together in both + pairs separated in both
    return float((total + 2 * same_both - same_a - same_b) / total)


def prop_correct(a: Membership, b: Membership) -> float:
    """Largest fraction of exactly matching labels over relabelings of ``b``."""
    table = _contingency(a, b)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / a.n)
