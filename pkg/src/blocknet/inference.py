"""Post-classification inference for the block coefficient matrices.

Two estimators are provided, matching the two supported structures of
the edge fixed effects:

* ``fit_block_logistic``: when both the intercept and slope layers are
  blockwise constant, the model reduces (given the recovered labels) to
  a logistic regression on block-cell dummies.  The index of dyad (i,j)
  is  chi0_ij' b0 + W_ij chi1_ij' b1, where chi selects the vech cell of
  the label pair; b0 estimates the intercept-inclusive block matrix
  B0 + tau * 11'.  Standard errors come from the inverse observed
  information.

* ``fit_tetrad``: when the fixed effects are additive (a_i + a_j), a
  conditional likelihood over 4-node configurations differences them
  out.  For dyad pairs (x,y),(z,w),

      S = Y_xy Y_zw (1-Y_xz)(1-Y_yw) - (1-Y_xy)(1-Y_zw) Y_xz Y_yw

  identifies the slope block vector through the regressor difference
  wtil = w_xy + w_zw - w_xz - w_yw, w_ij = W_ij chi1_ij.  Each sorted
  quadruple contributes the mean of three pairings; the variance is the
  sandwich built from the quadruple Hessian and per-dyad averaged
  scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import expit

from .core import CovariateSet, Membership, Network, vech_pair, vech_position
from .errors import ConfigError, NumericalError

__all__ = [
    "InferenceResult",
    "chi_index",
    "fit_block_logistic",
    "tetrad_score",
    "fit_tetrad",
]

GRAD_TOL = 1e-9


def chi_index(K: int, gi: int, gj: int) -> int:
    """1-based vech position selected by the label pair (gi, gj)."""
    return vech_position(K, gi, gj)


@dataclass
class InferenceResult:
    estimate: np.ndarray
    se: np.ndarray
    vcov: np.ndarray
    method: str
    labels: list  # per-coordinate names like "B1[1,2]"
    converged: bool = True
    flags: dict = field(default_factory=dict)

    def table(self) -> list:
        """Rows (label, estimate, se, z, lo95, hi95)."""
        rows = []
        for k, name in enumerate(self.labels):
            est, se = float(self.estimate[k]), float(self.se[k])
            z = est / se if se > 0 else np.nan
            rows.append((name, est, se, z, est - 1.959963984540054 * se, est + 1.959963984540054 * se))
        return rows


def _coord_labels(prefix: str, K: int) -> list:
    out = []
    for pos in range(1, K * (K + 1) // 2 + 1):
        lo, hi = vech_pair(K, pos)
        out.append(f"{prefix}[{lo},{hi}]")
    return out


def _cell_table(K: int) -> np.ndarray:
    table = np.empty((K, K), dtype=np.int64)
    for a in range(1, K + 1):
        for b in range(a, K + 1):
            table[a - 1, b - 1] = table[b - 1, a - 1] = vech_position(K, a, b) - 1
    return table


def fit_block_logistic(
    Y: Network,
    covs: CovariateSet,
    g0: Membership,
    g1: Membership,
) -> InferenceResult:
    """Joint logistic MLE of the intercept and slope block matrices.

    Estimates are reported on the original covariate scale when the
    covariates were standardized.  Cells without any dyad are flagged
    non-identified (NaN estimate and standard error); a singular
    information matrix falls back to the pseudo-inverse with a warning
    flag.
    """
    if covs.p < 1:
        raise ConfigError("block logistic inference needs a covariate layer")
    n = Y.n
    if g0.n != n or g1.n != n:
        raise ValueError("memberships must cover all nodes")
    K0, K1 = g0.K, g1.K
    d0 = K0 * (K0 + 1) // 2
    d1 = K1 * (K1 + 1) // 2
    iu = np.triu_indices(n, k=1)
    c0 = _cell_table(K0)[g0.g[iu[0]] - 1, g0.g[iu[1]] - 1]
    c1 = _cell_table(K1)[g1.g[iu[0]] - 1, g1.g[iu[1]] - 1]
    y = Y.adjacency[iu]
    w = covs.layers[0][iu]

    counts0 = np.bincount(c0, minlength=d0)
    counts1 = np.bincount(c1, minlength=d1)
    live = np.concatenate([counts0 > 0, counts1 > 0])
    empty = np.flatnonzero(~live)

    b = np.zeros(d0 + d1)

    def index_of(bv):
        return bv[c0] + w * bv[d0 + c1]

    def loglik(idx):
        return float(np.sum(y * idx - np.logaddexp(0.0, idx)))

    def grad_hess(bv):
        idx = index_of(bv)
        mu = expit(idx)
        resid = y - mu
        g = np.concatenate(
            [np.bincount(c0, weights=resid, minlength=d0),
             np.bincount(c1, weights=resid * w, minlength=d1)]
        )
        s = mu * (1.0 - mu)
        H = np.zeros((d0 + d1, d0 + d1))
        H[np.arange(d0), np.arange(d0)] = np.bincount(c0, weights=s, minlength=d0)
        H[d0 + np.arange(d1), d0 + np.arange(d1)] = np.bincount(
            c1, weights=s * w * w, minlength=d1
        )
        cross = np.bincount(c0 * d1 + c1, weights=s * w, minlength=d0 * d1).reshape(d0, d1)
        H[:d0, d0:] = cross
        H[d0:, :d0] = cross.T
        return idx, g, H

    converged = False
    flags = {}
    live_ix = np.flatnonzero(live)
    for _ in range(100):
        idx, g, H = grad_hess(b)
        if np.max(np.abs(g[live_ix])) <= 1e-8:
            converged = True
            break
        Hl = H[np.ix_(live_ix, live_ix)]
        try:
            step = np.linalg.solve(Hl, g[live_ix])
        except np.linalg.LinAlgError:
            step = np.linalg.pinv(Hl) @ g[live_ix]
            flags["singular_hessian"] = True
        ll0 = loglik(idx)
        t = 1.0
        for _ in range(21):
            cand = b.copy()
            cand[live_ix] += t * step
            if loglik(index_of(cand)) >= ll0 - 1e-12:
                break
            t *= 0.5
        b = cand

    idx, g, H = grad_hess(b)
    Hl = H[np.ix_(live_ix, live_ix)]
    try:
        vcov_live = np.linalg.inv(Hl)
    except np.linalg.LinAlgError:
        vcov_live = np.linalg.pinv(Hl)
        flags["singular_information"] = True
    vcov = np.full((d0 + d1, d0 + d1), np.nan)
    vcov[np.ix_(live_ix, live_ix)] = vcov_live
    estimate = b.copy()
    estimate[empty] = np.nan
    if empty.size:
        flags["non_identified"] = [int(k) + 1 for k in empty]

    # map the slope block back to the original covariate scale
    scale = np.ones(d0 + d1)
    if covs.standardized:
        scale[d0:] = 1.0 / covs.scales[0]
    estimate = estimate * scale
    vcov = vcov * np.outer(scale, scale)
    se = np.sqrt(np.where(np.diag(vcov) >= 0, np.diag(vcov), np.nan))

    labels = _coord_labels("B0", K0) + _coord_labels("B1", K1)
    return InferenceResult(estimate, se, vcov, "block_logistic", labels, converged, flags)


# --- tetrad logit ---------------------------------------------------------

# Configuration roles within a sorted quadruple (a < b < c < d): the six
# ways to pair the four nodes into two dyads with a cross-matching.
# Each entry is (x, y, z, w) positions into (a, b, c, d) for the
# configuration S_{(xy),(zw)} with cross dyads (x,z), (y,w).
_CONFIGS = (
    (0, 1, 2, 3),  # (ab),(cd) cross (ac),(bd)
    (0, 1, 3, 2),  # (ab),(dc) cross (ad),(bc)
    (0, 2, 1, 3),  # (ac),(bd) cross (ab),(cd)
    (0, 2, 3, 1),  # (ac),(db) cross (ad),(cb)
    (0, 3, 1, 2),  # (ad),(bc) cross (ab),(dc)
    (0, 3, 2, 1),  # (ad),(cb) cross (ac),(db)
)
# The symmetrized contribution for first dyad (x,y) given quadruple
# (x, y, z, w) averages configurations (xy, zw), (xy, wz), (xz, wy).
# Expressed in the sorted frame: role of dyad pairing determines which
# three configuration indices enter.
_ROLE_CONFIGS = {
    "P1": (0, 1, 3),  # dyads (a,b) & (c,d)
    "P2": (2, 3, 1),  # dyads (a,c) & (b,d)
    "P3": (4, 5, 0),  # dyads (a,d) & (b,c)
}


def _omega_params(covs: CovariateSet, g1: Membership):
    K = g1.K
    d = K * (K + 1) // 2
    cell = _cell_table(K)[g1.g[:, None] - 1, g1.g[None, :] - 1]
    w = covs.layers[0]
    return cell, w, d


def _config_terms(Y, cell, w, d, a, b, c_, d_, x, y, z, v):
    """S and omega-tilde for configurations S_{(xy),(zw)} of quad arrays.

    (a, b, c_, d_) are index arrays; (x, y, z, v) pick the roles.
    Returns (S, OmT) with S in {-1, 0, 1} (float) and OmT (m, d).
    """
    nodes = (a, b, c_, d_)
    X, Yn, Z, W_ = nodes[x], nodes[y], nodes[z], nodes[v]
    A = Y.adjacency
    y_xy = A[X, Yn]
    y_zw = A[Z, W_]
    y_xz = A[X, Z]
    y_yw = A[Yn, W_]
    S = y_xy * y_zw * (1 - y_xz) * (1 - y_yw) - (1 - y_xy) * (1 - y_zw) * y_xz * y_yw
    m = X.shape[0]
    OmT = np.zeros((m, d))
    rows = np.arange(m)
    np.add.at(OmT, (rows, cell[X, Yn]), w[X, Yn])
    np.add.at(OmT, (rows, cell[Z, W_]), w[Z, W_])
    np.add.at(OmT, (rows, cell[X, Z]), -w[X, Z])
    np.add.at(OmT, (rows, cell[Yn, W_]), -w[Yn, W_])
    return S, OmT


def tetrad_score(
    Y: Network,
    covs: CovariateSet,
    g1: Membership,
    B: np.ndarray,
    quad: tuple,
):
    """Symmetrized conditional log-likelihood and gradient of one quadruple.

    ``quad`` = (i, i2, j, j2) names four distinct nodes; the first dyad
    is (i, j) and the second (i2, j2).  Configurations with S = 0
    contribute nothing.
    """
    i, i2, j, j2 = quad
    if len({i, i2, j, j2}) != 4:
        raise ValueError("quadruple must name four distinct nodes")
    cell, w, d = _omega_params(covs, g1)
    B = np.asarray(B, dtype=float)
    arr = lambda v: np.asarray([v], dtype=np.int64)
    a_, b_, c_, d_ = arr(i), arr(i2), arr(j), arr(j2)
    # pairings of lbar_{(i,j),(i2,j2)}: (ij, i2j2), (ij, j2i2), (ii2, j2j)
    roles = ((0, 2, 1, 3), (0, 2, 3, 1), (0, 1, 3, 2))
    total = 0.0
    grad = np.zeros(d)
    for x, y, z, v in roles:
        S, OmT = _config_terms(Y, cell, w, d, a_, b_, c_, d_, x, y, z, v)
        s = float(S[0])
        if s == 0.0:
            continue
        zlin = s * float(OmT[0] @ B)
        total += zlin - np.logaddexp(0.0, zlin)
        grad += s * OmT[0] * expit(-zlin)
    return total / 3.0, grad / 3.0


def _quad_chunks(n: int, chunk: int):
    """Yield sorted-quadruple index arrays (a, b, c, d) in blocks."""
    buf = np.empty((chunk, 4), dtype=np.int64)
    fill = 0
    for combo in combinations(range(n), 4):
        buf[fill] = combo
        fill += 1
        if fill == chunk:
            yield buf[:fill].copy()
            fill = 0
    if fill:
        yield buf[:fill].copy()


def fit_tetrad(
    Y: Network,
    covs: CovariateSet,
    g1: Membership,
    n_cap: int = 200,
    chunk: int = 500_000,
) -> InferenceResult:
    """Tetrad conditional-logit estimate of the slope block vector.

    Scans all C(n, 4) quadruples (n capped: the scan does not scale),
    maximizes the symmetrized conditional likelihood by Newton, and
    reports the sandwich variance from the quadruple-level Hessian and
    per-dyad averaged scores.
    """
    if covs.p < 1:
        raise ConfigError("tetrad inference needs a covariate layer")
    n = Y.n
    if n > n_cap:
        raise ConfigError(f"n={n} exceeds the tetrad scan cap {n_cap}")
    if n < 8:
        raise ConfigError("tetrad variance needs n >= 8")
    cell, w, d = _omega_params(covs, g1)

    # one enumeration pass: keep (S, omega-tilde, quad nodes) of the
    # identifying configurations only
    S_keep = []
    Om_keep = []
    cfg_of = []  # which of the six configurations each kept row is
    nodes_of = []  # the sorted quadruple the row came from
    skipped_quads = 0
    total_quads = 0
    for block in _quad_chunks(n, chunk):
        a, b, c_, dd = block.T
        m = a.shape[0]
        any_live = np.zeros(m, dtype=bool)
        for ci, (x, y, z, v) in enumerate(_CONFIGS):
            S, OmT = _config_terms(Y, cell, w, d, a, b, c_, dd, x, y, z, v)
            live = S != 0
            any_live |= live
            if live.any():
                S_keep.append(S[live])
                Om_keep.append(OmT[live])
                cfg_of.append(np.full(int(live.sum()), ci, dtype=np.int64))
                nodes_of.append(block[live])
        skipped_quads += int(m - any_live.sum())
        total_quads += m
    if not S_keep:
        raise NumericalError("no identifying tetrad configurations in the network")

    S_all = np.concatenate(S_keep)
    Om_all = np.vstack(Om_keep)
    cfg_all = np.concatenate(cfg_of)
    nodes_all = np.vstack(nodes_of)

    # likelihood term weights: a configuration enters the objective when
    # its index appears in the P2 role (first dyad (a,c), second (b,d)).
    obj_mask = np.isin(cfg_all, _ROLE_CONFIGS["P2"])

    B = np.zeros(d)
    converged = False
    for _ in range(100):
        zlin = S_all * (Om_all @ B)
        g_rows = (S_all * expit(-zlin))[:, None] * Om_all
        grad = g_rows[obj_mask].sum(axis=0) / 3.0
        if np.max(np.abs(grad)) <= 1e-9:
            converged = True
            break
        sgm = expit(zlin)
        hw = (sgm * (1 - sgm))[obj_mask]
        Ho = (Om_all[obj_mask] * hw[:, None]).T @ Om_all[obj_mask] / 3.0
        try:
            step = np.linalg.solve(Ho, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.pinv(Ho) @ grad
        ll0 = float(np.sum((zlin - np.logaddexp(0.0, zlin))[obj_mask]))
        t = 1.0
        for _ in range(21):
            cand = B + t * step
            zl = S_all * (Om_all @ cand)
            if float(np.sum((zl - np.logaddexp(0.0, zl))[obj_mask])) >= ll0 - 1e-12:
                break
            t *= 0.5
        B = cand

    # quadruple-level Hessian of the symmetrized likelihood, P1 role
    zlin = S_all * (Om_all @ B)
    sgm = expit(zlin)
    hvar = sgm * (1 - sgm)
    h_mask = np.isin(cfg_all, _ROLE_CONFIGS["P1"])
    Hbar = -(Om_all[h_mask] * hvar[h_mask][:, None]).T @ Om_all[h_mask] / 3.0
    n_choose4 = n * (n - 1) * (n - 2) * (n - 3) / 24.0
    Hbar /= n_choose4

    # per-dyad averaged scores: every quadruple donates its role-specific
    # mean gradient to each of its six dyads, accumulated from the kept
    # configuration rows directly
    g_rows = (S_all * expit(-zlin))[:, None] * Om_all / 3.0
    dyad_scores = np.zeros((n, n, d))
    role_dyads = {
        "P1": ((0, 1), (2, 3)),
        "P2": ((0, 2), (1, 3)),
        "P3": ((0, 3), (1, 2)),
    }
    for role, cfgs in _ROLE_CONFIGS.items():
        rows = np.isin(cfg_all, cfgs)
        if not rows.any():
            continue
        gr = g_rows[rows]
        nd = nodes_all[rows]
        for u, v in role_dyads[role]:
            np.add.at(dyad_scores, (nd[:, u], nd[:, v]), gr)
    norm = n * (n - 1) / 2.0 - 2.0 * (n - 1) + 1.0
    iu = np.triu_indices(n, k=1)
    sbar = dyad_scores[iu] / norm
    Delta2 = 2.0 / (n * (n - 1)) * (sbar.T @ sbar)

    Hinv = np.linalg.pinv(Hbar)
    vcov = 72.0 / ((n - 1) * n) * (Hinv @ Delta2 @ Hinv)

    scale = np.ones(d)
    if covs.standardized:
        scale[:] = 1.0 / covs.scales[0]
    estimate = B * scale
    vcov = vcov * np.outer(scale, scale)
    se = np.sqrt(np.where(np.diag(vcov) >= 0, np.diag(vcov), np.nan))

    flags = {
        "skipped_quadruples": skipped_quads,
        "total_quadruples": total_quads,
        "contributing_terms": int(S_all.shape[0]),
    }
    labels = _coord_labels("B1", g1.K)
    return InferenceResult(estimate, se, vcov, "tetrad", labels, converged, flags)
