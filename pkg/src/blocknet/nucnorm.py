"""Nuclear-norm penalized logistic estimation of the coefficient matrices.

The convex program minimizes, over matrices (G_0, ..., G_p) restricted
to a box around a center tau0,

    Q(G) + lambda * sum_l ||G_l||_*

where Q is the average negative Bernoulli log-likelihood over the fitted
dyads (all rows, or a row subset for the split-sample variant).  It is
solved through the equivalent bilinear program G_l = U_l V_l' with
ridge-penalized factors, via an augmented-Lagrangian scheme:

  1. entrywise damped Newton update of G (likelihood + multiplier +
     proximity terms), clipped to the box;
  2. closed-form ridge updates of U_l then V_l;
  3. multiplier update  D_l += rho (G_l - U_l V_l');
  4. rho <- min(rho * mu, rho_cap).

``two_stage_fit`` runs the solver twice: first in the wide box
(0, log n) to locate the grand intercept, then in the refined box
(tau_tilde, C_M sqrt(log n)); it then symmetrizes, centers and clips the
coefficient estimates and extracts their scaled singular factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _alm_kernels as _k
from .core import CovariateSet, LowRankFactors, Network
from .errors import ConfigError

__all__ = [
    "AlmConfig",
    "AlmFit",
    "LowRankEstimate",
    "lambda_n",
    "alm_fit",
    "two_stage_fit",
    "truncated_svd",
    "convex_objective",
    "round_to_box",
]


@dataclass(frozen=True)
class AlmConfig:
    """Solver settings.

    ``r`` is the factorization rank (over-parameterize the true ranks);
    ``tol`` bounds the max entry change of G between sweeps and
    ``resid_tol`` the RMS factorization residual ||G - UV'||_F/sqrt(N)
    at convergence.  ``engine`` picks the sweep implementation: "numba"
    (p <= 1), "numpy" (any p), or "auto".
    """

    r: int = 10
    gamma: float = 1.0
    rho0: float = 1.0
    mu: float = 1.05
    rho_cap: float = 1e20
    max_outer: int = 500
    tol: float = 1e-5
    resid_tol: float = 1e-4
    C_lambda: float = 2.0
    M: float = 2.0
    C_M: float = 2.0
    engine: str = "auto"

    def __post_init__(self):
        if self.r < 1:
            raise ConfigError("factorization rank must be >= 1")
        if self.mu <= 1.0:
            raise ConfigError("rho growth factor mu must exceed 1")
        if self.tol <= 0 or self.resid_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.engine not in ("auto", "numba", "numpy"):
            raise ConfigError("engine must be auto, numba or numpy")


@dataclass
class AlmFit:
    """Raw solution of one box-constrained solve (one stage)."""

    Gamma: list
    U: list
    V: list
    Delta: list
    box: tuple
    lambda_norm: float
    rows: np.ndarray
    n: int
    n_iter: int
    converged: bool
    entry_change: float
    factor_resid: float
    objective_trace: np.ndarray

    def tau_mean(self) -> float:
        """Mean of the layer-0 entries over fitted off-diagonal cells."""
        g0 = self.Gamma[0]
        nr = g0.shape[0]
        diag = g0[np.arange(nr), self.rows].sum()
        return float((g0.sum() - diag) / (nr * (self.n - 1)))


@dataclass
class LowRankEstimate:
    """Output of the two-stage fit for one row block."""

    tau_hat: float
    theta_hat: list
    factors: list
    sigma: list
    rows: np.ndarray
    n: int
    lambda_used: float
    objective: float
    objective_trace: np.ndarray
    converged: bool
    tau_tilde: float
    diagnostics: dict = field(default_factory=dict)


def lambda_n(n_rows: int, n: int, mean_degree: float, C_lambda: float) -> float:
    """Penalty level C * (sqrt(n*Ybar) + sqrt(log n)) / (n_rows (n-1)).

    ``mean_degree`` is the expected-degree estimate n * Ybar.
    """
    if n < 3:
        raise ValueError("need n >= 3")
    return float(C_lambda * (np.sqrt(max(mean_degree, 0.0)) + np.sqrt(np.log(n))) / (n_rows * (n - 1)))


def round_to_box(u: np.ndarray, M: float) -> np.ndarray:
    """Clamp entries to [-M, M]."""
    return np.clip(u, -M, M)


def _covariate_stack(covs: CovariateSet | None, rows: np.ndarray, n: int) -> np.ndarray:
    """(p+1, nr, n) stack of covariate layers with the implicit constant first."""
    p = 0 if covs is None else covs.p
    W = np.empty((p + 1, rows.shape[0], n))
    W[0] = 1.0
    for l in range(1, p + 1):
        W[l] = covs.layers[l - 1][rows, :]
    return W


def _init_factors(Y_block: np.ndarray, rows: np.ndarray, r: int):
    """Warm start from the truncated SVD of the clamped empirical logit."""
    eps = 1e-3
    logit = np.log((Y_block + eps) / (1.0 - Y_block + eps))
    uu, ss, vvt = np.linalg.svd(logit, full_matrices=False)
    k = min(r, ss.shape[0])
    root = np.sqrt(ss[:k])
    U = np.zeros((Y_block.shape[0], r))
    V = np.zeros((Y_block.shape[1], r))
    U[:, :k] = uu[:, :k] * root
    V[:, :k] = vvt[:k].T * root
    return logit, U, V


def convex_objective(
    Gamma: list,
    Y: Network,
    covs: CovariateSet | None,
    lam: float,
    rows: np.ndarray | None = None,
) -> float:
    """Penalized convex objective Q(G) + lam * sum_l ||G_l||_*.

    Q is the average negative log-likelihood over fitted off-diagonal
    dyads (rows x [n]).
    """
    n = Y.n
    rows = np.arange(n) if rows is None else np.asarray(rows)
    nr = rows.shape[0]
    W = _covariate_stack(covs, rows, n)
    G = np.stack([np.asarray(g, dtype=float) for g in Gamma])
    idx = np.einsum("lij,lij->ij", W, G)
    yb = Y.adjacency[rows, :]
    ll = yb * idx - np.logaddexp(0.0, idx)
    ll[np.arange(nr), rows] = 0.0
    q = -float(ll.sum()) / (nr * (n - 1))
    pen = lam * sum(np.linalg.svd(g, compute_uv=False).sum() for g in Gamma)
    return q + float(pen)


def _pick_engine(engine: str, p: int) -> str:
    if engine == "numpy":
        return "numpy"
    if engine == "numba":
        if p > 1:
            raise ConfigError("numba engine supports at most one covariate layer")
        if not _k.HAVE_NUMBA:
            raise ConfigError("numba is not available")
        return "numba"
    return "numba" if (_k.HAVE_NUMBA and p <= 1) else "numpy"


def alm_fit(
    Y: Network,
    covs: CovariateSet | None,
    box: tuple,
    lam: float,
    cfg: AlmConfig,
    rows: np.ndarray | None = None,
    init: AlmFit | None = None,
) -> AlmFit:
    """Solve one box-constrained penalized problem on the given row block.

    ``box`` is (tau0, c_n): |G_0,ij - tau0| <= c_n and |G_l,ij| <= c_n
    for l >= 1.  ``lam`` is the normalized penalty (see lambda_n).
    ``init`` warm-starts from a previous fit on the same block.
    """
    tau0, cn = float(box[0]), float(box[1])
    if cn <= 0:
        raise ConfigError("box halfwidth must be positive")
    if lam < 0:
        raise ConfigError("penalty must be nonnegative")
    n = Y.n
    rows = np.arange(n) if rows is None else np.sort(np.asarray(rows, dtype=np.int64))
    nr = rows.shape[0]
    p = 0 if covs is None else covs.p
    engine = _pick_engine(cfg.engine, p)

    Yb = np.ascontiguousarray(Y.adjacency[rows, :])
    W = _covariate_stack(covs, rows, n)
    lam_total = lam * nr * (n - 1)  # penalty on the unnormalized likelihood scale

    if init is not None:
        G = [g.copy() for g in init.Gamma]
        G[0] = np.clip(G[0], tau0 - cn, tau0 + cn)
        for l in range(1, p + 1):
            G[l] = np.clip(G[l], -cn, cn)
        U = [u.copy() for u in init.U]
        V = [v.copy() for v in init.V]
    else:
        logit, U0, V0 = _init_factors(Yb, rows, cfg.r)
        G = [np.clip(logit, tau0 - cn, tau0 + cn)]
        G += [np.zeros((nr, n)) for _ in range(p)]
        U = [U0.copy() for _ in range(p + 1)]
        V = [V0.copy() for _ in range(p + 1)]
    D = [np.zeros((nr, n)) for _ in range(p + 1)]

    rho = cfg.rho0
    eye = np.eye(cfg.r)
    trace = []
    converged = False
    entry_change = np.inf
    resid = np.inf
    n_iter = 0

    for m in range(cfg.max_outer):
        n_iter = m + 1
        F = [U[l] @ V[l].T for l in range(p + 1)]

        if engine == "numba":
            if p == 1:
                entry_change, q_rows = _k.newton_sweep_p1(
                    G[0], G[1], W[1], Yb, F[0], F[1], D[0], D[1], rho, tau0, cn, rows
                )
            else:
                entry_change, q_rows = _k.newton_sweep_p0(
                    G[0], Yb, F[0], D[0], rho, tau0, cn, rows
                )
        else:
            Gs = np.stack(G)
            Fs = np.stack(F)
            Ds = np.stack(D)
            entry_change, q_rows = _k.newton_sweep_numpy(
                Gs, W, Yb, Fs, Ds, rho, tau0, cn, rows
            )
            for l in range(p + 1):
                G[l] = Gs[l]

        resid2 = 0.0
        fro_uv = 0.0
        for l in range(p + 1):
            A = D[l] + rho * G[l]
            U[l] = np.linalg.solve(
                (lam_total * cfg.gamma * eye + rho * V[l].T @ V[l]).T, (A @ V[l]).T
            ).T
            V[l] = np.linalg.solve(
                (lam_total * cfg.gamma * eye + rho * U[l].T @ U[l]).T, (A.T @ U[l]).T
            ).T
            R = G[l] - U[l] @ V[l].T
            D[l] += rho * R
            resid2 += float(np.sum(R * R))
            fro_uv += float(np.sum(U[l] * U[l]) + np.sum(V[l] * V[l]))
        resid = np.sqrt(resid2 / ((p + 1) * nr * n))

        q_total = float(q_rows.sum())
        trace.append((q_total + 0.5 * lam_total * cfg.gamma * fro_uv) / (nr * (n - 1)))

        rho = min(rho * cfg.mu, cfg.rho_cap)
        if entry_change < cfg.tol and resid < cfg.resid_tol:
            converged = True
            break

    return AlmFit(
        Gamma=G,
        U=U,
        V=V,
        Delta=D,
        box=(tau0, cn),
        lambda_norm=lam,
        rows=rows,
        n=n,
        n_iter=n_iter,
        converged=converged,
        entry_change=float(entry_change),
        factor_resid=float(resid),
        objective_trace=np.asarray(trace),
    )


def _symmetrize_round(
    Gamma_l: np.ndarray,
    rows: np.ndarray,
    n: int,
    tau_shift: float,
    M: float,
) -> np.ndarray:
    """Center, symmetrize where both orientations were fitted, clip, zero diagonal."""
    nr = Gamma_l.shape[0]
    T = Gamma_l - tau_shift
    block = T[:, rows]
    T[:, rows] = 0.5 * (block + block.T)
    T = round_to_box(T, M)
    T[np.arange(nr), rows] = 0.0
    return T


def truncated_svd(theta_hat: np.ndarray, K: int) -> LowRankFactors:
    """Leading-K scaled singular factors of theta_hat (SVD taken of theta_hat/n).

    Sign convention: the largest-magnitude entry of each right singular
    vector is made positive.  n is the column count (full node set).
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    n = theta_hat.shape[1]
    if K > min(theta_hat.shape):
        raise ValueError(f"rank {K} exceeds matrix dimensions {theta_hat.shape}")
    uu, ss, vvt = np.linalg.svd(theta_hat / n, full_matrices=False)
    vv = vvt.T
    for k in range(K):
        j = int(np.argmax(np.abs(vv[:, k])))
        if vv[j, k] < 0:
            vv[:, k] = -vv[:, k]
            uu[:, k] = -uu[:, k]
    sigma = ss[:K]
    V = np.sqrt(n) * vv[:, :K]
    U = np.sqrt(n) * uu[:, :K] * sigma[None, :]
    return LowRankFactors(sigma, U, V)


def two_stage_fit(
    Y: Network,
    covs: CovariateSet | None,
    cfg: AlmConfig,
    rows: np.ndarray | None = None,
) -> LowRankEstimate:
    """Two-stage penalized fit with intercept recentering and SVD extraction.

    Stage 1 solves in the wide box (0, log n); the intercept estimate
    tau_tilde is the mean fitted layer-0 entry.  Stage 2 re-solves in
    (tau_tilde, C_M sqrt(log n)), warm-started from stage 1.  The final
    coefficient estimates subtract tau_hat from layer 0, average the two
    orientations wherever both were fitted, clip to [-M, M], zero the
    diagonal, and carry their scaled singular factors.
    """
    n = Y.n
    if n < 10:
        raise ValueError("two-stage fit needs n >= 10")
    rows = np.arange(n) if rows is None else np.sort(np.asarray(rows, dtype=np.int64))
    nr = rows.shape[0]
    p = 0 if covs is None else covs.p

    lam = lambda_n(nr, n, n * Y.edge_density, cfg.C_lambda)
    fit1 = alm_fit(Y, covs, (0.0, np.log(n)), lam, cfg, rows=rows)
    tau_tilde = fit1.tau_mean()
    fit2 = alm_fit(
        Y, covs, (tau_tilde, cfg.C_M * np.sqrt(np.log(n))), lam, cfg, rows=rows, init=fit1
    )
    tau_hat = fit2.tau_mean()

    theta_hat = []
    factors = []
    sigma = []
    for l in range(p + 1):
        shift = tau_hat if l == 0 else 0.0
        T = _symmetrize_round(fit2.Gamma[l].copy(), rows, n, shift, cfg.M)
        theta_hat.append(T)
        k_cut = min(cfg.r, nr, n)
        fac = truncated_svd(T, k_cut)
        factors.append(fac)
        sigma.append(np.linalg.svd(T / n, compute_uv=False))

    objective = convex_objective(fit2.Gamma, Y, covs, lam, rows=rows)
    bound_frac = _box_binding_fraction(fit2)
    diagnostics = {
        "stage1": {
            "n_iter": fit1.n_iter,
            "converged": fit1.converged,
            "entry_change": fit1.entry_change,
            "factor_resid": fit1.factor_resid,
        },
        "stage2": {
            "n_iter": fit2.n_iter,
            "converged": fit2.converged,
            "entry_change": fit2.entry_change,
            "factor_resid": fit2.factor_resid,
        },
        "box_binding_fraction": bound_frac,
    }
    return LowRankEstimate(
        tau_hat=float(tau_hat),
        theta_hat=theta_hat,
        factors=factors,
        sigma=sigma,
        rows=rows,
        n=n,
        lambda_used=lam,
        objective=objective,
        objective_trace=fit2.objective_trace,
        converged=fit1.converged and fit2.converged,
        tau_tilde=float(tau_tilde),
        diagnostics=diagnostics,
    )


def _box_binding_fraction(fit: AlmFit) -> float:
    """Share of fitted entries pinned at the box boundary."""
    tau0, cn = fit.box
    total = 0
    bound = 0
    for l, g in enumerate(fit.Gamma):
        center = tau0 if l == 0 else 0.0
        bound += int(np.sum(np.abs(np.abs(g - center) - cn) < 1e-12))
        total += g.size
    return bound / total
