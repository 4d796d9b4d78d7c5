"""Synthetic data generation for the simulation designs.

Two designs are supported for the edge fixed effects:

* ``additive``: theta0_ij = alpha_i + alpha_j with alpha_i drawn
  uniformly on (-1/2, 1/2) and recentered to sum to zero exactly.
* ``block``: theta0 = Z B0 Z' sharing the membership Z of the slope
  matrix, recentered so the stored theta0 satisfies the sum-to-zero
  normalization (the subtracted mean is absorbed into tau; edge
  probabilities are unchanged).

The slope matrix is always blockwise constant, theta1 = Z B1 Z'.  The
single covariate is W1_ij = |X_i - X_j| with X_i standard normal.  The
sparsity intercept is tau = log(zeta_coeff * n^(-1/2) * log n).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._rng import stream_rng
from .core import BlockMatrix, CovariateSet, Membership, ModelParams, Network, link_probability_matrix
from .errors import ConfigError

__all__ = [
    "DgpConfig",
    "draw_membership",
    "make_additive_theta0",
    "make_block_theta",
    "zeta_n",
    "simulate",
]

THETA0_MODELS = ("additive", "block")


@dataclass(frozen=True)
class DgpConfig:
    """Configuration of one synthetic design."""

    n: int
    theta0_model: str  # "additive" | "block"
    K1: int
    B1: BlockMatrix
    membership_probs: tuple
    zeta_coeff: float
    seed: int
    B0: BlockMatrix | None = None  # required for the block theta0 model

    def __post_init__(self):
        if self.theta0_model not in THETA0_MODELS:
            raise ConfigError(f"theta0_model must be one of {THETA0_MODELS}")
        probs = tuple(float(q) for q in self.membership_probs)
        if len(probs) != self.K1 or any(q < 0 for q in probs):
            raise ConfigError("membership_probs must be a length-K1 simplex vector")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ConfigError("membership_probs must sum to 1")
        if self.zeta_coeff <= 0:
            raise ConfigError("zeta_coeff must be positive")
        if self.B1.K != self.K1:
            raise ConfigError("B1 dimension must equal K1")
        if self.theta0_model == "block":
            if self.B0 is None:
                raise ConfigError("block theta0 model requires B0")
            if self.B0.K != self.K1:
                raise ConfigError("B0 dimension must equal K1 (shared membership)")
        object.__setattr__(self, "membership_probs", probs)

    @property
    def K0(self) -> int:
        """Rank of theta0: 2 for the additive design, K1 for the block design."""
        return 2 if self.theta0_model == "additive" else self.K1

    def with_seed(self, seed: int) -> "DgpConfig":
        return replace(self, seed=seed)


def zeta_n(n: int, coeff: float) -> float:
    """Sparsity sequence coeff * n^(-1/2) * log n."""
    return coeff * np.log(n) / np.sqrt(n)


def draw_membership(config: DgpConfig, rng: np.random.Generator) -> Membership:
    """i.i.d. categorical labels 1..K1 with the configured probabilities."""
    labels = rng.choice(config.K1, size=config.n, p=np.asarray(config.membership_probs)) + 1
    return Membership(labels, config.K1)


def make_additive_theta0(alpha: np.ndarray) -> np.ndarray:
    """Additive fixed-effect matrix theta0_ij = alpha_i + alpha_j (diagonal kept)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    return alpha[:, None] + alpha[None, :]


def make_block_theta(Z: Membership, B: BlockMatrix) -> np.ndarray:
    """Blockwise-constant matrix theta_ij = B[g_i, g_j]."""
    if Z.g.max(initial=0) > B.K:
        raise ValueError(f"membership labels exceed block dimension {B.K}")
    full = B.to_matrix()
    idx = Z.g - 1
    return full[np.ix_(idx, idx)]


def simulate(config: DgpConfig):
    """Draw one realization: (Network, CovariateSet, ModelParams, Membership).

    Deterministic given ``config.seed``; each random component has its
    own named substream.
    """
    n = config.n
    membership = draw_membership(config, stream_rng(config.seed, "membership"))

    tau = float(np.log(zeta_n(n, config.zeta_coeff)))
    if config.theta0_model == "additive":
        alpha = stream_rng(config.seed, "alpha").uniform(-0.5, 0.5, size=n)
        alpha -= alpha.mean()  # exact sum-to-zero normalization
        theta0 = make_additive_theta0(alpha)
    else:
        theta0 = make_block_theta(membership, config.B0)
        grand_mean = float(theta0.mean())
        theta0 = theta0 - grand_mean  # normalization; mean absorbed into tau
        tau += grand_mean

    theta1 = make_block_theta(membership, config.B1)

    x = stream_rng(config.seed, "covariates").standard_normal(n)
    w1 = np.abs(x[:, None] - x[None, :])
    covs = CovariateSet((w1,))

    params = ModelParams(tau, (theta0, theta1))
    prob = link_probability_matrix(params, covs)
    u = stream_rng(config.seed, "edges").random((n, n))
    upper = np.triu(u < prob, k=1)
    adjacency = (upper | upper.T).astype(np.float64)
    return Network(adjacency), covs, params, membership
