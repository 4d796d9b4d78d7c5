"""Core domain types and logistic-link primitives.

Conventions used throughout the package:

* Networks are undirected binary graphs stored as dense symmetric 0/1
  matrices with a zero diagonal.
* Edge covariates are symmetric real matrices, one layer per covariate;
  the constant layer (intercept) is implicit and never stored.
* Symmetric K x K block matrices are carried in "vech" form, the vector
  of upper-triangular entries enumerated column by column:
  (B11, B12, B22, B13, B23, B33, ...).  Position of the unordered pair
  (a, b) is (max-1)*max/2 + min, 1-based.  The block-coefficient
  indicator vectors used by the inference routines index into the same
  layout, so chi' vech(B) = B[g_i, g_j] holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DegenerateCovariateError

__all__ = [
    "Network",
    "CovariateSet",
    "ModelParams",
    "LowRankFactors",
    "Membership",
    "BlockMatrix",
    "logistic",
    "log_likelihood",
    "edge_probability",
    "standardize_covariates",
    "vech_position",
    "vech_pair",
    "vech_to_matrix",
    "matrix_to_vech",
]

PROB_CLIP = 1e-12


def logistic(x):
    """Standard logistic function 1 / (1 + exp(-x)).

    Stable for scalar or array input of any magnitude (computed via the
    sign-split form, no overflow up to |x| ~ 700 and beyond).
    """
    return expit(x)


def log_likelihood(y, index):
    """Bernoulli log-likelihood sum(y*log(p) + (1-y)*log(1-p)), p = logistic(index).

    Evaluated as y*index - softplus(index), which never produces -inf.
    """
    y = np.asarray(y, dtype=float)
    index = np.asarray(index, dtype=float)
    return float(np.sum(y * index - np.logaddexp(0.0, index)))


def _check_symmetric(a: np.ndarray, name: str, tol: float = 0.0) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if tol == 0.0:
        ok = np.array_equal(a, a.T)
    else:
        ok = np.allclose(a, a.T, atol=tol, rtol=0.0)
    if not ok:
        raise ValueError(f"{name} must be symmetric")


@dataclass(frozen=True)
class Network:
    """Undirected binary network on n nodes.

    adjacency is symmetric with zero diagonal and entries in {0, 1};
    stored as float64 so solvers can consume it directly.  Treat as
    immutable after construction.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.float64)
        _check_symmetric(a, "adjacency")
        if np.trace(np.abs(a)) != 0.0:
            raise ValueError("adjacency must have a zero diagonal")
        vals = np.unique(a)
        if not np.all(np.isin(vals, (0.0, 1.0))):
            raise ValueError("adjacency entries must be 0 or 1")
        object.__setattr__(self, "adjacency", a)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edge_density(self) -> float:
        """Fraction of linked dyads, 2/(n(n-1)) * number of edges."""
        n = self.n
        return float(self.adjacency.sum() / (n * (n - 1)))


@dataclass(frozen=True)
class CovariateSet:
    """Edge covariates: p symmetric real n x n layers.

    ``standardized`` records whether the layers were rescaled to unit
    off-diagonal sample standard deviation; ``scales`` holds the factor
    each ORIGINAL layer was divided by (needed to map block estimates
    back to the original scale).
    """

    layers: tuple
    standardized: bool = False
    scales: tuple = ()

    def __post_init__(self):
        layers = tuple(np.asarray(w, dtype=np.float64) for w in self.layers)
        for k, w in enumerate(layers):
            _check_symmetric(w, f"covariate layer {k}", tol=1e-12)
            if not np.all(np.isfinite(w)):
                raise ValueError(f"covariate layer {k} has non-finite entries")
        object.__setattr__(self, "layers", layers)
        if self.scales:
            object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        else:
            object.__setattr__(self, "scales", tuple(1.0 for _ in layers))

    @property
    def p(self) -> int:
        return len(self.layers)

    @property
    def n(self) -> int:
        if not self.layers:
            raise ValueError("empty covariate set has no node count")
        return self.layers[0].shape[0]

    @property
    def max_abs(self) -> float:
        """Largest absolute covariate entry across layers (0 when p = 0)."""
        if not self.layers:
            return 0.0
        return max(float(np.max(np.abs(w))) for w in self.layers)


def _offdiag_sd(w: np.ndarray) -> float:
    n = w.shape[0]
    mask = ~np.eye(n, dtype=bool)
    return float(np.std(w[mask], ddof=1))


def standardize_covariates(covs: CovariateSet) -> CovariateSet:
    """Rescale every layer to unit off-diagonal sample standard deviation.

    The applied factors are recorded (composed with any earlier ones) so
    downstream estimates can be reported on the original scale.  A layer
    with zero off-diagonal variance is rejected.
    """
    new_layers = []
    new_scales = []
    for k, w in enumerate(covs.layers):
        sd = _offdiag_sd(w)
        if sd <= 1e-14:
            raise DegenerateCovariateError(
                f"covariate layer {k} has zero off-diagonal variance"
            )
        new_layers.append(w / sd)
        new_scales.append(covs.scales[k] * sd)
    return CovariateSet(tuple(new_layers), standardized=True, scales=tuple(new_scales))


@dataclass(frozen=True)
class ModelParams:
    """True model parameters: grand intercept tau and coefficient matrices.

    ``theta[0]`` is the edge fixed-effect matrix (normalized to sum to
    zero over all cells); ``theta[l]``, l >= 1, are the covariate
    coefficient matrices.  ``theta0_centered`` records whether the
    normalization holds for theta[0] as stored.
    """

    tau: float
    theta: tuple
    theta0_centered: bool = field(init=False, default=True)

    def __post_init__(self):
        theta = tuple(np.asarray(t, dtype=np.float64) for t in self.theta)
        if not theta:
            raise ValueError("theta must contain at least theta[0]")
        for l, t in enumerate(theta):
            _check_symmetric(t, f"theta[{l}]", tol=1e-10)
        n = theta[0].shape[0]
        centered = abs(float(theta[0].sum())) <= 1e-8 * n * n
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "theta0_centered", centered)

    @property
    def p(self) -> int:
        return len(self.theta) - 1

    @property
    def n(self) -> int:
        return self.theta[0].shape[0]


def edge_probability(params: ModelParams, covs: CovariateSet, i: int, j: int) -> float:
    """Link probability logistic(tau + theta0_ij + sum_l W_l,ij * theta_l,ij)."""
    if i == j:
        raise ValueError("edge probability is undefined for i == j")
    if covs.p != params.p:
        raise ValueError(f"covariate count {covs.p} != parameter count {params.p}")
    index = params.tau + params.theta[0][i, j]
    for l in range(1, params.p + 1):
        index += covs.layers[l - 1][i, j] * params.theta[l][i, j]
    return float(logistic(index))


def link_probability_matrix(params: ModelParams, covs: CovariateSet) -> np.ndarray:
    """All-pairs link probabilities (diagonal set to zero)."""
    index = params.tau + params.theta[0]
    for l in range(1, params.p + 1):
        index = index + covs.layers[l - 1] * params.theta[l]
    prob = logistic(index)
    np.fill_diagonal(prob, 0.0)
    return prob


@dataclass(frozen=True)
class LowRankFactors:
    """Scaled singular triplets of a coefficient matrix.

    For M (n_r x n) with SVD of M/n given by  U_hat S V_hat',
    sigma holds the leading singular values of M/n (nonincreasing),
    V = sqrt(n) * V_hat  (rows are the per-node right embeddings) and
    U = sqrt(n) * U_hat * S, so that U @ V.T reconstructs M.
    """

    sigma: np.ndarray
    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if np.any(np.diff(sigma) > 1e-12):
            raise ValueError("singular values must be nonincreasing")
        if np.any(sigma < -1e-15):
            raise ValueError("singular values must be nonnegative")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "U", np.asarray(self.U, dtype=np.float64))
        object.__setattr__(self, "V", np.asarray(self.V, dtype=np.float64))

    @property
    def rank(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.U @ self.V.T

    def truncate(self, k: int) -> "LowRankFactors":
        """Leading-k factors (nested truncation of the same SVD)."""
        if k > self.rank:
            raise ValueError(f"cannot truncate rank {self.rank} factors to {k}")
        return LowRankFactors(self.sigma[:k], self.U[:, :k], self.V[:, :k])


@dataclass(frozen=True)
class Membership:
    """Community labels g_i in 1..K for each node."""

    g: np.ndarray
    K: int

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.int64)
        if g.ndim != 1:
            raise ValueError("membership vector must be one-dimensional")
        if g.size and (g.min() < 1 or g.max() > self.K):
            raise ValueError(f"labels must lie in 1..{self.K}")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "K", int(self.K))

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def counts(self) -> np.ndarray:
        """Community sizes, length K."""
        return np.bincount(self.g - 1, minlength=self.K)

    def indicator(self) -> np.ndarray:
        """n x K one-hot membership matrix."""
        Z = np.zeros((self.n, self.K))
        Z[np.arange(self.n), self.g - 1] = 1.0
        return Z


# --- vech machinery ------------------------------------------------------
#
# Pair (a, b) with a, b in 1..K maps to 1-based position
# (max-1)*max/2 + min, i.e. the upper triangle enumerated column by
# column.  This is the layout every block-coefficient vector in the
# package uses.


def vech_position(K: int, a: int, b: int) -> int:
    """1-based vech position of the unordered label pair (a, b)."""
    if not (1 <= a <= K and 1 <= b <= K):
        raise ValueError(f"labels ({a}, {b}) out of range 1..{K}")
    hi, lo = (a, b) if a >= b else (b, a)
    return (hi - 1) * hi // 2 + lo


def vech_pair(K: int, pos: int) -> tuple:
    """Inverse of vech_position: the (lo, hi) pair stored at 1-based pos."""
    if not (1 <= pos <= K * (K + 1) // 2):
        raise ValueError(f"position {pos} out of range for K={K}")
    hi = int(np.ceil((np.sqrt(8.0 * pos + 1.0) - 1.0) / 2.0))
    while (hi - 1) * hi // 2 >= pos:
        hi -= 1
    while hi * (hi + 1) // 2 < pos:
        hi += 1
    lo = pos - (hi - 1) * hi // 2
    return lo, hi


def vech_to_matrix(vech: np.ndarray) -> np.ndarray:
    """Expand a length K(K+1)/2 vech vector into the symmetric K x K matrix."""
    vech = np.asarray(vech, dtype=np.float64)
    m = vech.shape[0]
    K = int(round((np.sqrt(8.0 * m + 1.0) - 1.0) / 2.0))
    if K * (K + 1) // 2 != m:
        raise ValueError(f"vector length {m} is not a triangular number")
    B = np.zeros((K, K))
    for pos in range(1, m + 1):
        lo, hi = vech_pair(K, pos)
        B[lo - 1, hi - 1] = vech[pos - 1]
        B[hi - 1, lo - 1] = vech[pos - 1]
    return B


def matrix_to_vech(B: np.ndarray) -> np.ndarray:
    """Inverse of vech_to_matrix for a symmetric matrix."""
    B = np.asarray(B, dtype=np.float64)
    _check_symmetric(B, "block matrix", tol=1e-10)
    K = B.shape[0]
    out = np.empty(K * (K + 1) // 2)
    for pos in range(1, out.shape[0] + 1):
        lo, hi = vech_pair(K, pos)
        out[pos - 1] = 0.5 * (B[lo - 1, hi - 1] + B[hi - 1, lo - 1])
    return out


@dataclass(frozen=True)
class BlockMatrix:
    """Symmetric K x K block-coefficient matrix stored in vech form."""

    K: int
    vech: np.ndarray

    def __post_init__(self):
        vech = np.asarray(self.vech, dtype=np.float64)
        if vech.shape != (self.K * (self.K + 1) // 2,):
            raise ValueError(
                f"vech length {vech.shape} inconsistent with K={self.K}"
            )
        object.__setattr__(self, "vech", vech)
        object.__setattr__(self, "K", int(self.K))

    @classmethod
    def from_matrix(cls, B) -> "BlockMatrix":
        B = np.asarray(B, dtype=np.float64)
        return cls(B.shape[0], matrix_to_vech(B))

    def to_matrix(self) -> np.ndarray:
        return vech_to_matrix(self.vech)

    def __getitem__(self, pair) -> float:
        a, b = pair
        return float(self.vech[vech_position(self.K, a, b) - 1])
