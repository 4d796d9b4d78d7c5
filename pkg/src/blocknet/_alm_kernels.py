"""Entrywise Newton kernels for the augmented-Lagrangian solver.

Given the current factorization targets F_l = U_l V_l', multipliers D_l
and penalty rho, the entries of the coefficient matrices decouple: each
(i, j) solves a small convex problem

    softplus(idx_ij) - y_ij * idx_ij            (skipped on the diagonal)
    + sum_l [ D_l,ij (G_l,ij - F_l,ij) + rho/2 (G_l,ij - F_l,ij)^2 ]

with idx_ij = sum_l W_l,ij G_l,ij (W_0 = 1).  One damped Newton step is
taken per entry per outer iteration: the step is halved (at most 20
times) until that entry's objective does not increase, then the iterate
is clipped to the box |G_0 - tau0| <= cn, |G_l| <= cn.

The numba kernels (p = 0 and p = 1) update G in place and return the
maximum absolute entry change plus per-row sums of the likelihood term
(softplus(idx) - y*idx at the accepted iterate), accumulated row-serially
so results are bit-reproducible.  A pure-numpy implementation of the
same update handles arbitrary p and serves as a cross-check.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap if not (args and callable(args[0])) else args[0]

MAX_HALVINGS = 20


@njit(cache=True, nogil=True)
def newton_sweep_p1(G0, G1, W1, Y, F0, F1, D0, D1, rho, tau0, cn, diag_col):
    """One damped Newton sweep for two layers.  Returns (max_change, q_rows)."""
    nr, n = G0.shape
    maxchg = 0.0
    q_rows = np.zeros(nr)
    for i in range(nr):
        qi = 0.0
        dj = diag_col[i]
        for j in range(n):
            g0 = G0[i, j]
            g1 = G1[i, j]
            w = W1[i, j]
            y = Y[i, j]
            f0 = F0[i, j]
            f1 = F1[i, j]
            d0 = D0[i, j]
            d1 = D1[i, j]
            dlik = 0.0 if j == dj else 1.0

            idx = g0 + w * g1
            mu = 1.0 / (1.0 + np.exp(-idx))
            r = (mu - y) * dlik
            gr0 = r + d0 + rho * (g0 - f0)
            gr1 = r * w + d1 + rho * (g1 - f1)
            s = mu * (1.0 - mu) * dlik
            a = s + rho
            b = s * w
            c = s * w * w + rho
            det = a * c - b * b
            st0 = (c * gr0 - b * gr1) / det
            st1 = (a * gr1 - b * gr0) / det

            if idx > 0.0:
                sp = idx + np.log1p(np.exp(-idx))
            else:
                sp = np.log1p(np.exp(idx))
            lik_b = sp - y * idx
            obj_b = (
                dlik * lik_b
                + d0 * (g0 - f0)
                + d1 * (g1 - f1)
                + 0.5 * rho * ((g0 - f0) ** 2 + (g1 - f1) ** 2)
            )

            t = 1.0
            n0 = g0
            n1 = g1
            lik_a = lik_b
            for _ in range(MAX_HALVINGS + 1):
                n0 = g0 - t * st0
                n1 = g1 - t * st1
                if n0 > tau0 + cn:
                    n0 = tau0 + cn
                elif n0 < tau0 - cn:
                    n0 = tau0 - cn
                if n1 > cn:
                    n1 = cn
                elif n1 < -cn:
                    n1 = -cn
                idx2 = n0 + w * n1
                if idx2 > 0.0:
                    sp2 = idx2 + np.log1p(np.exp(-idx2))
                else:
                    sp2 = np.log1p(np.exp(idx2))
                lik_a = sp2 - y * idx2
                obj_a = (
                    dlik * lik_a
                    + d0 * (n0 - f0)
                    + d1 * (n1 - f1)
                    + 0.5 * rho * ((n0 - f0) ** 2 + (n1 - f1) ** 2)
                )
                if obj_a <= obj_b + 1e-12:
                    break
                t *= 0.5

            c0 = abs(n0 - g0)
            c1 = abs(n1 - g1)
            if c0 > maxchg:
                maxchg = c0
            if c1 > maxchg:
                maxchg = c1
            G0[i, j] = n0
            G1[i, j] = n1
            qi += dlik * lik_a
        q_rows[i] = qi
    return maxchg, q_rows


@njit(cache=True, nogil=True)
def newton_sweep_p0(G0, Y, F0, D0, rho, tau0, cn, diag_col):
    """Single-layer variant of newton_sweep_p1."""
    nr, n = G0.shape
    maxchg = 0.0
    q_rows = np.zeros(nr)
    for i in range(nr):
        qi = 0.0
        dj = diag_col[i]
        for j in range(n):
            g0 = G0[i, j]
            y = Y[i, j]
            f0 = F0[i, j]
            d0 = D0[i, j]
            dlik = 0.0 if j == dj else 1.0

            mu = 1.0 / (1.0 + np.exp(-g0))
            gr0 = (mu - y) * dlik + d0 + rho * (g0 - f0)
            h = mu * (1.0 - mu) * dlik + rho
            st0 = gr0 / h

            if g0 > 0.0:
                sp = g0 + np.log1p(np.exp(-g0))
            else:
                sp = np.log1p(np.exp(g0))
            lik_b = sp - y * g0
            obj_b = dlik * lik_b + d0 * (g0 - f0) + 0.5 * rho * (g0 - f0) ** 2

            t = 1.0
            n0 = g0
            lik_a = lik_b
            for _ in range(MAX_HALVINGS + 1):
                n0 = g0 - t * st0
                if n0 > tau0 + cn:
                    n0 = tau0 + cn
                elif n0 < tau0 - cn:
                    n0 = tau0 - cn
                if n0 > 0.0:
                    sp2 = n0 + np.log1p(np.exp(-n0))
                else:
                    sp2 = np.log1p(np.exp(n0))
                lik_a = sp2 - y * n0
                obj_a = dlik * lik_a + d0 * (n0 - f0) + 0.5 * rho * (n0 - f0) ** 2
                if obj_a <= obj_b + 1e-12:
                    break
                t *= 0.5

            c0 = abs(n0 - g0)
            if c0 > maxchg:
                maxchg = c0
            G0[i, j] = n0
            qi += dlik * lik_a
        q_rows[i] = qi
    return maxchg, q_rows


def newton_sweep_numpy(G, W, Y, F, D, rho, tau0, cn, diag_col):
    """Vectorized reference sweep for any number of layers.

    ``G``, ``F``, ``D`` are (p+1, nr, n) stacks; ``W`` is the matching
    covariate stack with W[0] = 1.  Updates G in place; returns
    (max_change, q_rows) like the numba kernels.
    """
    L, nr, n = G.shape
    lik_mask = np.ones((nr, n))
    rows_i = np.arange(nr)
    has_diag = diag_col >= 0
    lik_mask[rows_i[has_diag], diag_col[has_diag]] = 0.0

    idx = np.einsum("lij,lij->ij", W, G)
    mu = 1.0 / (1.0 + np.exp(-np.clip(idx, -700, 700)))
    resid = (mu - Y) * lik_mask
    grad = resid[None] * W + D + rho * (G - F)
    s = mu * (1.0 - mu) * lik_mask
    hess = np.einsum("ij,aij,bij->ijab", s, W, W) + rho * np.eye(L)
    step = np.linalg.solve(hess, np.moveaxis(grad, 0, -1))
    step = np.moveaxis(step, -1, 0)

    softplus = np.logaddexp(0.0, idx)
    lik_b = softplus - Y * idx
    obj_b = lik_b * lik_mask + np.einsum(
        "lij,lij->ij", D, G - F
    ) + 0.5 * rho * np.einsum("lij,lij->ij", G - F, G - F)

    lo = np.full(L, -cn)
    hi = np.full(L, cn)
    lo[0] += tau0
    hi[0] += tau0

    t = np.ones((nr, n))
    new = np.empty_like(G)
    lik_a = np.empty_like(lik_b)
    pending = np.ones((nr, n), dtype=bool)
    for _ in range(MAX_HALVINGS + 1):
        cand = G - t[None] * step
        cand = np.clip(cand, lo[:, None, None], hi[:, None, None])
        idx2 = np.einsum("lij,lij->ij", W, cand)
        sp2 = np.logaddexp(0.0, idx2)
        la = sp2 - Y * idx2
        obj_a = la * lik_mask + np.einsum(
            "lij,lij->ij", D, cand - F
        ) + 0.5 * rho * np.einsum("lij,lij->ij", cand - F, cand - F)
        ok = obj_a <= obj_b + 1e-12
        write = pending & ok
        new[:, write] = cand[:, write]
        lik_a[write] = la[write]
        pending = pending & ~ok
        if not pending.any():
            break
        t[pending] *= 0.5
    if pending.any():  # exhausted halvings: take the last (tiny) candidate
        new[:, pending] = cand[:, pending]
        lik_a[pending] = la[pending]

    maxchg = float(np.max(np.abs(new - G))) if G.size else 0.0
    G[...] = new
    q_rows = (lik_a * lik_mask).sum(axis=1)
    return maxchg, q_rows
