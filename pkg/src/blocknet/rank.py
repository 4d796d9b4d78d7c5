"""Data-driven rank selection via the thresholded singular-value ratio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Network
from .errors import ConfigError

__all__ = ["RankConfig", "RankSelection", "mean_degree_stat", "select_rank"]


@dataclass(frozen=True)
class RankConfig:
    K_max: int = 10
    c: float = 0.1  # threshold constant

    def __post_init__(self):
        if self.K_max < 2:
            raise ConfigError("K_max must be at least 2")
        if self.c <= 0:
            raise ConfigError("threshold constant must be positive")


@dataclass(frozen=True)
class RankSelection:
    K_hat: int
    ratios: np.ndarray
    threshold: float
    eligible: np.ndarray  # boolean, sigma_k >= threshold for k < K_max
    no_pass: bool  # no candidate cleared the threshold; K_hat = 1 fallback


def mean_degree_stat(Y: Network) -> float:
    """Edge density 2/(n(n-1)) * #edges (estimates the link rate)."""
    if Y.n < 2:
        raise ValueError("need at least two nodes")
    return Y.edge_density


def select_rank(sigma: np.ndarray, n: int, Ybar: float, cfg: RankConfig) -> RankSelection:
    """Thresholded ratio rule on consecutive singular values.

    K_hat maximizes sigma_k / sigma_{k+1} over k in 1..K_max-1 among the
    k whose sigma_k clears c * (sqrt(log n / (n Ybar)) + log n / (n Ybar)).
    Ties go to the smallest k.  If no k clears the threshold the result
    is 1 with ``no_pass`` set.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape[0] < cfg.K_max:
        raise ValueError(f"need at least K_max={cfg.K_max} singular values")
    if np.all(sigma == 0):
        raise ValueError("all singular values are zero")
    deg = n * Ybar
    if deg <= 0:
        raise ValueError("empty network: cannot form the rank threshold")
    ratio_arg = np.log(n) / deg
    threshold = cfg.c * (np.sqrt(ratio_arg) + ratio_arg)

    head = sigma[: cfg.K_max - 1]
    tail = sigma[1 : cfg.K_max]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(tail > 0, head / np.where(tail > 0, tail, 1.0), np.inf)
    ratios = np.where(head == 0, 1.0, ratios)  # 0/0 gap carries no signal
    eligible = head >= threshold
    if not np.any(eligible):
        return RankSelection(1, ratios, float(threshold), eligible, True)
    masked = np.where(eligible, ratios, -np.inf)
    k_hat = int(np.argmax(masked)) + 1  # argmax takes the smallest tied index
    return RankSelection(k_hat, ratios, float(threshold), eligible, False)
