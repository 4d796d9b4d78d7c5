"""Standard synthetic designs shared across the test suite."""

import numpy as np

from blocknet import BlockMatrix, DgpConfig

B_2x2_A = np.array([[0.6, 0.2], [0.2, 0.7]])
B_2x2_B = np.array([[0.6, 0.2], [0.2, 0.5]])
B_3x3_A = np.array([[0.8, 0.4, 0.3], [0.4, 0.7, 0.4], [0.3, 0.4, 0.8]])
B_3x3_INT = np.array([[0.7, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.7]])
B_3x3_SLOPE = np.array([[0.7, 0.3, 0.2], [0.3, 0.7, 0.2], [0.2, 0.2, 0.6]])


def additive_k2(n: int, seed: int) -> DgpConfig:
    """Additive fixed effects, two slope communities (40/60), sparse graph."""
    return DgpConfig(
        n=n,
        theta0_model="additive",
        K1=2,
        B1=BlockMatrix.from_matrix(B_2x2_A),
        membership_probs=(0.4, 0.6),
        zeta_coeff=0.7,
        seed=seed,
    )


def additive_k3(n: int, seed: int) -> DgpConfig:
    """Additive fixed effects, three slope communities (30/30/40)."""
    return DgpConfig(
        n=n,
        theta0_model="additive",
        K1=3,
        B1=BlockMatrix.from_matrix(B_3x3_A),
        membership_probs=(0.3, 0.3, 0.4),
        zeta_coeff=1.5,
        seed=seed,
    )


def block_k2(n: int, seed: int) -> DgpConfig:
    """Blockwise intercept and slope sharing one membership (30/70)."""
    return DgpConfig(
        n=n,
        theta0_model="block",
        K1=2,
        B0=BlockMatrix.from_matrix(B_2x2_A),
        B1=BlockMatrix.from_matrix(B_2x2_B),
        membership_probs=(0.3, 0.7),
        zeta_coeff=0.5,
        seed=seed,
    )


def block_k3(n: int, seed: int) -> DgpConfig:
    """Blockwise intercept and slope, three communities (30/30/40)."""
    return DgpConfig(
        n=n,
        theta0_model="block",
        K1=3,
        B0=BlockMatrix.from_matrix(B_3x3_INT),
        B1=BlockMatrix.from_matrix(B_3x3_SLOPE),
        membership_probs=(0.3, 0.3, 0.4),
        zeta_coeff=1.5,
        seed=seed,
    )
