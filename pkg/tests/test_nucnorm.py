import numpy as np
import pytest

import blocknet as bn
from blocknet.core import CovariateSet, Network
from blocknet.nucnorm import (
    AlmConfig,
    alm_fit,
    convex_objective,
    lambda_n,
    round_to_box,
    truncated_svd,
    two_stage_fit,
)
from blocknet._alm_kernels import newton_sweep_numpy

from cases import additive_k2
from prox_oracle import prox_solve


def _random_instance(n, seed, p=1, density=0.35):
    rng = np.random.default_rng(seed)
    u = rng.random((n, n))
    upper = np.triu(u < density, k=1)
    Y = Network((upper | upper.T).astype(float))
    covs = None
    if p >= 1:
        layers = []
        for _ in range(p):
            x = rng.standard_normal(n)
            layers.append(np.abs(x[:, None] - x[None, :]))
        covs = bn.standardize_covariates(CovariateSet(tuple(layers)))
    return Y, covs


class TestLambda:
    def test_hand_formula(self):
        n, nr, deg, C = 500, 500, 97.3, 2.0
        expected = C * (np.sqrt(deg) + np.sqrt(np.log(n))) / (nr * (n - 1))
        assert lambda_n(nr, n, deg, C) == pytest.approx(expected, rel=1e-15)

    def test_row_subset_scales_inverse(self):
        full = lambda_n(100, 100, 30.0, 2.0)
        half = lambda_n(50, 100, 30.0, 2.0)
        assert half == pytest.approx(2.0 * full)

    def test_simulated_draw(self):
        Y, _, _, _ = bn.simulate(additive_k2(500, 3))
        deg = 500 * Y.edge_density
        got = lambda_n(500, 500, deg, 2.0)
        assert got == pytest.approx(
            2.0 * (np.sqrt(deg) + np.sqrt(np.log(500))) / (500 * 499)
        )


class TestRounding:
    def test_clamp_values(self):
        assert round_to_box(np.array([3.0]), 2.0)[0] == 2.0
        assert round_to_box(np.array([-5.0]), 2.0)[0] == -2.0
        assert round_to_box(np.array([1.5]), 2.0)[0] == 1.5


class TestEntryUpdateDerivatives:
    def test_gradient_hessian_match_finite_differences(self):
        # analytic entry gradient/Hessian of the augmented Lagrangian
        # versus central differences, at random points
        rng = np.random.default_rng(5)
        rho = 0.7
        w = 1.3
        y = 1.0
        d0, d1 = 0.2, -0.4
        f0, f1 = 0.3, 0.1

        def L(g0, g1):
            idx = g0 + w * g1
            sp = np.logaddexp(0.0, idx)
            return (
                sp
                - y * idx
                + d0 * (g0 - f0)
                + d1 * (g1 - f1)
                + 0.5 * rho * ((g0 - f0) ** 2 + (g1 - f1) ** 2)
            )

        for _ in range(20):
            g0, g1 = rng.uniform(-2, 2, size=2)
            idx = g0 + w * g1
            mu = 1 / (1 + np.exp(-idx))
            grad = np.array(
                [mu - y + d0 + rho * (g0 - f0), (mu - y) * w + d1 + rho * (g1 - f1)]
            )
            s = mu * (1 - mu)
            hess = np.array([[s + rho, s * w], [s * w, s * w * w + rho]])
            h = 1e-5
            fd_g0 = (L(g0 + h, g1) - L(g0 - h, g1)) / (2 * h)
            fd_g1 = (L(g0, g1 + h) - L(g0, g1 - h)) / (2 * h)
            assert abs(fd_g0 - grad[0]) <= 1e-6 * max(1.0, abs(grad[0]))
            assert abs(fd_g1 - grad[1]) <= 1e-6 * max(1.0, abs(grad[1]))
            fd_h00 = (L(g0 + h, g1) - 2 * L(g0, g1) + L(g0 - h, g1)) / h**2
            fd_h11 = (L(g0, g1 + h) - 2 * L(g0, g1) + L(g0, g1 - h)) / h**2
            assert abs(fd_h00 - hess[0, 0]) <= 1e-5 * max(1.0, abs(hess[0, 0]))
            assert abs(fd_h11 - hess[1, 1]) <= 1e-5 * max(1.0, abs(hess[1, 1]))

    def test_numba_and_numpy_sweeps_agree(self):
        Y, covs = _random_instance(25, 7)
        lam = lambda_n(25, 25, 25 * Y.edge_density, 2.0)
        box = (0.0, np.log(25.0))
        fit_nb = alm_fit(Y, covs, box, lam, AlmConfig(engine="numba", max_outer=40))
        fit_np = alm_fit(Y, covs, box, lam, AlmConfig(engine="numpy", max_outer=40))
        for a, b in zip(fit_nb.Gamma, fit_np.Gamma):
            assert np.max(np.abs(a - b)) < 1e-9


class TestAlmFit:
    def test_zero_penalty_drives_entries_to_clipped_mle(self):
        # single layer, no penalty, full-rank factorization: each entry's
        # MLE is +-inf, so the box must bind at the fitted optimum
        Y, _ = _random_instance(20, 3, p=0)
        cn = 2.5
        cfg = AlmConfig(r=20, max_outer=400, mu=1.1)
        fit = alm_fit(Y, None, (0.0, cn), 0.0, cfg)
        G = fit.Gamma[0]
        offdiag = ~np.eye(20, dtype=bool)
        signs = np.where(Y.adjacency > 0, cn, -cn)
        assert np.mean(np.abs(G[offdiag] - signs[offdiag]) < 1e-2) > 0.95

    def test_objective_no_worse_than_zero_matrices(self):
        Y, covs = _random_instance(30, 11)
        lam = lambda_n(30, 30, 30 * Y.edge_density, 2.0)
        fit = alm_fit(Y, covs, (0.0, np.log(30.0)), lam, AlmConfig())
        fx = convex_objective(fit.Gamma, Y, covs, lam)
        f0 = convex_objective([np.zeros((30, 30))] * 2, Y, covs, lam)
        assert fx <= f0 + 1e-9

    def test_box_respected_exactly(self):
        Y, covs = _random_instance(24, 2)
        box = (0.4, 0.8)
        lam = lambda_n(24, 24, 24 * Y.edge_density, 2.0)
        fit = alm_fit(Y, covs, box, lam, AlmConfig(max_outer=60))
        assert np.all(np.abs(fit.Gamma[0] - 0.4) <= 0.8 + 1e-12)
        assert np.all(np.abs(fit.Gamma[1]) <= 0.8 + 1e-12)

    def test_factor_updates_are_stationary(self):
        # after the closed-form U update the augmented-Lagrangian gradient
        # in U must vanish (same for V)
        Y, covs = _random_instance(18, 8)
        lam = lambda_n(18, 18, 18 * Y.edge_density, 2.0)
        cfg = AlmConfig(max_outer=25)
        fit = alm_fit(Y, covs, (0.0, np.log(18.0)), lam, cfg)
        lam_total = lam * 18 * 17
        for l in range(2):
            U, V, G, D = fit.U[l], fit.V[l], fit.Gamma[l], fit.Delta[l]
            # rho after m iterations of growth
            rho = min(cfg.rho0 * cfg.mu**fit.n_iter, cfg.rho_cap)
            # V was updated after U with U fixed: check V's stationarity
            grad_V = lam_total * cfg.gamma * V - (D + rho * (G - U @ V.T)).T @ U
            assert np.max(np.abs(grad_V)) < 1e-6 * max(1.0, np.max(np.abs(V)))

    def test_matches_prox_oracle_small(self):
        Y, covs = _random_instance(30, 17)
        lam = lambda_n(30, 30, 30 * Y.edge_density, 2.0)
        box = (0.0, np.log(30.0))
        fit = alm_fit(Y, covs, box, lam, AlmConfig())
        f_alm = convex_objective(fit.Gamma, Y, covs, lam)
        _, f_prox = prox_solve(Y, covs, lam, box=box)
        assert abs(f_alm - f_prox) <= 1e-3 * abs(f_prox)

    def test_objective_trace_eventually_nonincreasing_fixed_rho(self):
        # with no penalty-parameter growth the bilinear objective must
        # settle into a nonincreasing tail
        Y, covs = _random_instance(20, 23)
        lam = lambda_n(20, 20, 20 * Y.edge_density, 2.0)
        cfg = AlmConfig(mu=1.0 + 1e-12, rho0=5.0, max_outer=120)
        fit = alm_fit(Y, covs, (0.0, np.log(20.0)), lam, cfg)
        tail = fit.objective_trace[60:]
        assert np.all(np.diff(tail) <= 1e-7)


class TestTwoStage:
    def test_intercept_only_world_matches_logit_density(self):
        # constant-probability graph, no covariates, tiny penalty: the
        # intercept estimate equals the log-odds of the edge density
        rng = np.random.default_rng(31)
        n = 100
        p_edge = 0.31
        upper = np.triu(rng.random((n, n)) < p_edge, k=1)
        Y = Network((upper | upper.T).astype(float))
        cfg = AlmConfig(C_lambda=0.01)
        fit = two_stage_fit(Y, None, cfg)
        dens = Y.edge_density
        assert fit.tau_hat == pytest.approx(np.log(dens / (1 - dens)), abs=0.02)

    def test_fm_rounding_applied(self):
        Y, covs = _random_instance(40, 5)
        fit = two_stage_fit(Y, covs, AlmConfig(M=0.05))
        for T in fit.theta_hat:
            assert np.max(np.abs(T)) <= 0.05 + 1e-12

    def test_full_sample_theta_symmetric_zero_diag(self):
        Y, covs = _random_instance(36, 6)
        fit = two_stage_fit(Y, covs, AlmConfig(max_outer=80))
        for T in fit.theta_hat:
            assert np.allclose(T, T.T)
            assert np.all(np.diag(T) == 0.0)

    def test_split_sample_block_symmetric(self):
        Y, covs = _random_instance(30, 9)
        rows = np.arange(0, 30, 2)
        fit = two_stage_fit(Y, covs, AlmConfig(max_outer=80), rows=rows)
        T = fit.theta_hat[1]
        block = T[:, rows]
        assert np.allclose(block, block.T)
        # fitted diagonal cells are zeroed
        assert np.all(T[np.arange(rows.size), rows] == 0.0)

    def test_stage_boxes_recorded(self):
        Y, covs = _random_instance(40, 13)
        fit = two_stage_fit(Y, covs, AlmConfig(max_outer=60))
        assert fit.diagnostics["stage1"]["n_iter"] >= 1
        assert fit.diagnostics["stage2"]["n_iter"] >= 1
        assert np.isfinite(fit.tau_tilde)


class TestTruncatedSvd:
    def test_scaled_identity(self):
        fac = truncated_svd(np.eye(4) / 4.0, 2)
        assert np.allclose(fac.sigma, [1 / 16, 1 / 16])

    def test_rank_one(self):
        v = np.array([1.0, 2.0, -1.0, 0.5])
        M = np.outer(v, v)
        fac = truncated_svd(M, 2)
        assert fac.sigma[1] <= 1e-12
        assert np.allclose(fac.reconstruct(), M, atol=1e-10)

    def test_reconstruction_and_scaling(self):
        rng = np.random.default_rng(0)
        M = rng.standard_normal((8, 8))
        M = (M + M.T) / 2
        fac = truncated_svd(M, 8)
        assert np.allclose(fac.reconstruct(), M, atol=1e-10)
        # columns of V / sqrt(n) are orthonormal
        Vn = fac.V / np.sqrt(8)
        assert np.allclose(Vn.T @ Vn, np.eye(8), atol=1e-8)

    def test_sign_convention_deterministic(self):
        rng = np.random.default_rng(4)
        M = rng.standard_normal((10, 10))
        M = (M + M.T) / 2
        fac = truncated_svd(M, 3)
        for k in range(3):
            j = np.argmax(np.abs(fac.V[:, k]))
            assert fac.V[j, k] > 0

    def test_weyl_inequality_on_perturbation(self):
        # |sigma_k(A) - sigma_k(B)| <= ||A - B||_F / n for the scaled SVD
        rng = np.random.default_rng(12)
        n = 30
        A = rng.standard_normal((n, n))
        A = (A + A.T) / 2
        E = 0.01 * rng.standard_normal((n, n))
        B = A + (E + E.T) / 2
        sa = truncated_svd(A, 5).sigma
        sb = truncated_svd(B, 5).sigma
        bound = np.linalg.norm(A - B) / n
        assert np.all(np.abs(sa - sb) <= bound + 1e-12)

    def test_rank_limit(self):
        with pytest.raises(ValueError):
            truncated_svd(np.eye(3), 4)
