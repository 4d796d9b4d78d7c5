"""Row- and column-wise logistic refinement of the singular-vector estimates.

Each node's left factor row u_i solves a small logistic regression of
its incident edges on the current right factor rows (and vice versa),
with the grand intercept supplied as a fixed offset:

    index_ij = tau_hat + sum_l  u_{i,l}' v_{j,l} W_{l,ij},   W_0 = 1.

``newton_logistic`` is the scalar solver used wherever a single
regression is needed; the sweep routines batch all n per-node problems
into vectorized Newton iterations with per-node step damping, which is
what makes the full-sample iteration affordable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import CovariateSet, Network

__all__ = [
    "NewtonResult",
    "EmbeddingSet",
    "newton_logistic",
    "row_regression",
    "column_regression",
    "initial_split_embedding",
    "full_sample_iterate",
    "pseudo_loglik",
]

GRAD_TOL = 1e-9
RIDGE = 1e-6
SEPARATION_BOUND = 50.0
MAX_NEWTON_ITER = 80


@dataclass(frozen=True)
class NewtonResult:
    beta: np.ndarray
    converged: bool
    ridged: bool
    grad_norm: float
    n_iter: int
    loglik: float


def _loglik(y, index):
    return float(np.sum(y * index - np.logaddexp(0.0, index)))


def newton_logistic(y: np.ndarray, X: np.ndarray, offset: float = 0.0) -> NewtonResult:
    """Damped Newton MLE of a logistic regression with fixed offset.

    Maximizes sum_i y_i log L(offset + x_i'b) + (1-y_i) log(1-L(.)).
    On separation (coefficients escaping past a bound) or a singular
    Hessian, a ridge of 1e-6 is added and the fit is flagged; the
    returned gradient (of the possibly ridged objective) has max-norm
    below 1e-9 whenever ``converged`` is set.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    k = X.shape[1]
    beta = np.zeros(k)
    ridged = False
    grad = np.zeros(k)
    it = 0
    for it in range(1, MAX_NEWTON_ITER + 1):
        index = offset + X @ beta
        mu = expit(index)
        grad = X.T @ (y - mu)
        if ridged:
            grad = grad - RIDGE * beta
        if np.max(np.abs(grad)) <= GRAD_TOL:
            return NewtonResult(beta, True, ridged, float(np.max(np.abs(grad))), it, _loglik(y, index))
        s = mu * (1.0 - mu)
        H = (X * s[:, None]).T @ X
        if ridged:
            H = H + RIDGE * np.eye(k)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            if not ridged:
                ridged = True
                continue
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        ll0 = _loglik(y, index) - (0.5 * RIDGE * beta @ beta if ridged else 0.0)
        t = 1.0
        for _ in range(21):
            cand = beta + t * step
            llc = _loglik(y, offset + X @ cand) - (0.5 * RIDGE * cand @ cand if ridged else 0.0)
            if llc >= ll0 - 1e-12:
                break
            t *= 0.5
        beta = cand
        if not ridged and np.max(np.abs(beta)) > SEPARATION_BOUND:
            ridged = True
            beta = np.zeros(k)  # restart on the regularized objective
    return NewtonResult(beta, False, ridged, float(np.max(np.abs(grad))), it, _loglik(y, offset + X @ beta))


def _design_blocks(factors: list) -> np.ndarray:
    """Stack per-layer factor matrices column-wise: (n, sum K_l)."""
    return np.concatenate([np.asarray(f, dtype=float) for f in factors], axis=1)


def _node_design(covs: CovariateSet | None, factors: list, node: int, others: np.ndarray) -> np.ndarray:
    cols = [np.asarray(factors[0], dtype=float)[others]]
    p = 0 if covs is None else covs.p
    for l in range(1, p + 1):
        w = covs.layers[l - 1][node, others]
        cols.append(np.asarray(factors[l], dtype=float)[others] * w[:, None])
    return np.concatenate(cols, axis=1)


def row_regression(
    Y: Network,
    covs: CovariateSet | None,
    V_hat: list,
    tau_hat: float,
    i: int,
    restrict: np.ndarray,
) -> np.ndarray:
    """Left-factor row for node i regressed on the given right factors.

    Only edges (i, j) with j in ``restrict`` (and j != i) enter.  Returns
    the stacked coefficient vector (u_{i,0}, ..., u_{i,p}).
    """
    others = np.asarray(sorted(set(int(j) for j in restrict) - {int(i)}), dtype=np.int64)
    X = _node_design(covs, V_hat, i, others)
    y = Y.adjacency[i, others]
    return newton_logistic(y, X, offset=tau_hat).beta


def column_regression(
    Y: Network,
    covs: CovariateSet | None,
    U_hat: list,
    tau_hat: float,
    j: int,
    restrict: np.ndarray,
) -> np.ndarray:
    """Right-factor row for node j regressed on the given left factors."""
    others = np.asarray(sorted(set(int(i) for i in restrict) - {int(j)}), dtype=np.int64)
    X = _node_design(covs, U_hat, j, others)
    y = Y.adjacency[others, j]
    return newton_logistic(y, X, offset=tau_hat).beta


# --- batched sweeps -------------------------------------------------------


def _batched_fit(
    Ysub: np.ndarray,
    Wsub: list,
    factors: list,
    tau_hat: float,
    targets: np.ndarray,
    others: np.ndarray,
):
    """Solve all per-target logistic regressions of one half-sweep at once.

    ``Ysub`` is adjacency[targets][:, others]; ``Wsub`` the same slices
    of the covariate layers.  Self-edges (same global node) are masked
    out.  Returns (B, flags) where row t of B is the coefficient vector
    of target t and flags marks ridged/unconverged targets.
    """
    fstack = [np.asarray(f, dtype=float)[others] for f in factors]
    K_list = [f.shape[1] for f in fstack]
    K = sum(K_list)
    nt = targets.shape[0]

    mask = (targets[:, None] != others[None, :]).astype(float)

    B = np.zeros((nt, K))
    ridge = np.zeros(nt)
    flags = np.zeros(nt, dtype=bool)
    eyeK = np.eye(K)
    blocks = np.cumsum([0] + K_list)

    def index_of(Bcur):
        idx = np.full(Ysub.shape, tau_hat)
        for l, f in enumerate(fstack):
            part = Bcur[:, blocks[l] : blocks[l + 1]] @ f.T
            if l > 0:
                part = part * Wsub[l - 1]
            idx += part
        return idx

    def loglik_rows(idx):
        return np.sum(mask * (Ysub * idx - np.logaddexp(0.0, idx)), axis=1)

    for _ in range(MAX_NEWTON_ITER):
        idx = index_of(B)
        mu = expit(idx)
        resid = (Ysub - mu) * mask
        g_parts = []
        for l, f in enumerate(fstack):
            r = resid if l == 0 else resid * Wsub[l - 1]
            g_parts.append(r @ f)
        grad = np.concatenate(g_parts, axis=1) - ridge[:, None] * B
        gmax = np.max(np.abs(grad), axis=1)
        if np.all(gmax <= GRAD_TOL):
            break

        s = mu * (1.0 - mu) * mask
        H = np.empty((nt, K, K))
        for la in range(len(fstack)):
            wa = s if la == 0 else s * Wsub[la - 1]
            for lb in range(la, len(fstack)):
                w = wa if lb == 0 else wa * Wsub[lb - 1]
                blk = np.einsum("tj,ja,jb->tab", w, fstack[la], fstack[lb])
                H[:, blocks[la] : blocks[la + 1], blocks[lb] : blocks[lb + 1]] = blk
                if lb != la:
                    H[:, blocks[lb] : blocks[lb + 1], blocks[la] : blocks[la + 1]] = blk.transpose(0, 2, 1)
        H += ridge[:, None, None] * eyeK

        dets = np.linalg.det(H)
        bad = ~np.isfinite(dets) | (np.abs(dets) < 1e-300)
        if np.any(bad):
            ridge[bad] = RIDGE
            flags[bad] = True
            H[bad] += RIDGE * eyeK

        step = np.linalg.solve(H, grad)

        ll0 = loglik_rows(idx) - 0.5 * ridge * np.sum(B * B, axis=1)
        t = np.ones(nt)
        pending = np.ones(nt, dtype=bool)
        cand = B.copy()
        for _ in range(21):
            trial = B[pending] + t[pending, None] * step[pending]
            tmp = cand.copy()
            tmp[pending] = trial
            idx_t = index_of(tmp)
            ll_t = loglik_rows(idx_t) - 0.5 * ridge * np.sum(tmp * tmp, axis=1)
            ok = pending & (ll_t >= ll0 - 1e-12)
            cand[ok] = tmp[ok]
            pending = pending & ~ok
            if not pending.any():
                break
            t[pending] *= 0.5
        if pending.any():
            cand[pending] = B[pending] + t[pending, None] * step[pending]
        B = cand

        sep = (ridge == 0) & (np.max(np.abs(B), axis=1) > SEPARATION_BOUND)
        if np.any(sep):
            ridge[sep] = RIDGE
            flags[sep] = True
            B[sep] = 0.0
    else:
        flags |= gmax > GRAD_TOL
    return B, flags


def _split_blocks(B: np.ndarray, K_list: list) -> list:
    blocks = np.cumsum([0] + list(K_list))
    return [B[:, blocks[l] : blocks[l + 1]].copy() for l in range(len(K_list))]


def _half_sweep(
    Y: Network,
    covs: CovariateSet | None,
    factors: list,
    tau_hat: float,
    targets: np.ndarray,
    others: np.ndarray,
):
    """All row regressions (or column regressions, by symmetry) of one step."""
    Ysub = Y.adjacency[np.ix_(targets, others)]
    p = 0 if covs is None else covs.p
    Wsub = [covs.layers[l][np.ix_(targets, others)] for l in range(p)]
    K_list = [np.asarray(f).shape[1] for f in factors]
    B, flags = _batched_fit(Ysub, Wsub, factors, tau_hat, targets, others)
    return _split_blocks(B, K_list), flags


@dataclass
class EmbeddingSet:
    """Per-node factor estimates after h refinement sweeps in one direction."""

    direction: int  # 1: first subset used for the low-rank step; 2: swapped
    iteration: int
    U_dot: list  # per layer, (n, K_l)
    V_dot: list
    tau_hat: float
    flagged_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    flagged_cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def initial_split_embedding(
    Y: Network,
    covs: CovariateSet | None,
    V_hat: list,
    tau_hat: float,
    estimation_rows: np.ndarray,
    direction: int,
) -> EmbeddingSet:
    """Independence-preserving initial estimates after a split low-rank fit.

    ``V_hat`` comes from a fit on rows I_1 = [n] \\ I_2 where
    I_2 = ``estimation_rows``.  Left rows are estimated for i in I_2
    using columns j in I_2 only; right rows are then re-estimated for
    every j in [n] using i in I_2.
    """
    n = Y.n
    I2 = np.sort(np.asarray(estimation_rows, dtype=np.int64))
    U_blocks, uflags = _half_sweep(Y, covs, V_hat, tau_hat, I2, I2)
    K_list = [f.shape[1] for f in U_blocks]
    U_full = [np.zeros((n, k)) for k in K_list]
    for l in range(len(K_list)):
        U_full[l][I2] = U_blocks[l]
    allnodes = np.arange(n)
    U_sub = [u[I2] for u in U_full]
    V_blocks, vflags = _half_sweep(Y, covs, U_sub, tau_hat, allnodes, I2)
    return EmbeddingSet(
        direction=direction,
        iteration=0,
        U_dot=U_full,
        V_dot=V_blocks,
        tau_hat=tau_hat,
        flagged_rows=I2[uflags],
        flagged_cols=allnodes[vflags],
    )


def full_sample_iterate(
    Y: Network,
    covs: CovariateSet | None,
    v0: list,
    tau_hat: float,
    H: int,
    direction: int = 1,
    tol: float = 1e-8,
    return_history: bool = False,
):
    """Alternate full-sample row and column regressions for up to H sweeps.

    Stops early once the largest factor-row change falls below ``tol``.
    Returns the final EmbeddingSet, or the list of all iterates when
    ``return_history`` is set (entry h is the state after sweep h).
    """
    if H < 0:
        raise ValueError("H must be nonnegative")
    n = Y.n
    allnodes = np.arange(n)
    V = [np.asarray(v, dtype=float).copy() for v in v0]
    K_list = [v.shape[1] for v in V]
    U = [np.zeros((n, k)) for k in K_list]
    history = []
    flr = np.zeros(0, dtype=np.int64)
    flc = np.zeros(0, dtype=np.int64)
    h_done = 0
    for h in range(1, H + 1):
        U_new, uflags = _half_sweep(Y, covs, V, tau_hat, allnodes, allnodes)
        V_new, vflags = _half_sweep(Y, covs, U_new, tau_hat, allnodes, allnodes)
        change = 0.0
        for l in range(len(K_list)):
            change = max(change, float(np.max(np.abs(U_new[l] - U[l]))))
            change = max(change, float(np.max(np.abs(V_new[l] - V[l]))))
        U, V = U_new, V_new
        flr, flc = allnodes[uflags], allnodes[vflags]
        h_done = h
        if return_history:
            history.append(
                EmbeddingSet(direction, h, [u.copy() for u in U], [v.copy() for v in V], tau_hat, flr, flc)
            )
        if change < tol:
            break
    final = EmbeddingSet(direction, h_done, U, V, tau_hat, flr, flc)
    if return_history:
        return history if history else [final]
    return final


def pseudo_loglik(
    Y: Network,
    covs: CovariateSet | None,
    U_dot: list,
    V_dot: list,
    tau_hat: float,
) -> float:
    """Sum over ordered pairs i != j of the edge log-likelihood at (U_dot, V_dot)."""
    n = Y.n
    idx = np.full((n, n), tau_hat)
    p = 0 if covs is None else covs.p
    for l in range(p + 1):
        part = np.asarray(U_dot[l]) @ np.asarray(V_dot[l]).T
        if l > 0:
            part = part * covs.layers[l - 1]
        idx += part
    ll = Y.adjacency * idx - np.logaddexp(0.0, idx)
    np.fill_diagonal(ll, 0.0)
    return float(ll.sum())
