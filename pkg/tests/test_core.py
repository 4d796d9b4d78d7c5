import numpy as np
import pytest
from hypothesis import given, strategies as st

from blocknet.core import (
    BlockMatrix,
    CovariateSet,
    Membership,
    ModelParams,
    Network,
    edge_probability,
    logistic,
    matrix_to_vech,
    standardize_covariates,
    vech_pair,
    vech_position,
    vech_to_matrix,
)
from blocknet.errors import DegenerateCovariateError


class TestLogistic:
    def test_zero(self):
        assert logistic(0.0) == 0.5

    def test_symmetry_at_50(self):
        assert abs(logistic(50.0) - (1.0 - logistic(-50.0))) < 1e-15

    def test_value_at_one(self):
        # direct evaluation of 1 / (1 + exp(-1))
        assert abs(logistic(1.0) - 0.7310585786300049) < 1e-12

    def test_extreme_arguments_stay_finite(self):
        for x in (-700.0, -50.0, 50.0, 700.0):
            v = float(logistic(x))
            assert np.isfinite(v) and 0.0 <= v <= 1.0

    @given(st.floats(min_value=-30, max_value=30))
    def test_complement_identity(self, x):
        assert abs(logistic(x) + logistic(-x) - 1.0) < 1e-15

    def test_monotone(self):
        xs = np.linspace(-20, 20, 400)
        assert np.all(np.diff(logistic(xs)) > 0)


def _symmetric(n, rng, zero_diag=False):
    a = rng.standard_normal((n, n))
    a = (a + a.T) / 2
    if zero_diag:
        np.fill_diagonal(a, 0.0)
    return a


class TestNetwork:
    def test_valid(self):
        adj = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        net = Network(adj)
        assert net.n == 3
        assert net.edge_density == pytest.approx(4 / 6)

    def test_rejects_asymmetric(self):
        bad = np.array([[0, 1], [0, 0]], dtype=float)
        with pytest.raises(ValueError, match="symmetric"):
            Network(bad)

    def test_rejects_diagonal(self):
        with pytest.raises(ValueError, match="diagonal"):
            Network(np.eye(3))

    def test_rejects_nonbinary(self):
        with pytest.raises(ValueError, match="0 or 1"):
            Network(np.full((2, 2), 0.5) - 0.5 * np.eye(2))


class TestEdgeProbability:
    def _zero_params(self, n=4, p=1):
        theta = tuple(np.zeros((n, n)) for _ in range(p + 1))
        return ModelParams(0.0, theta)

    def test_all_zero_gives_half(self):
        covs = CovariateSet((np.ones((4, 4)) - np.eye(4),))
        assert edge_probability(self._zero_params(), covs, 0, 1) == 0.5

    def test_intercept_only(self):
        zeta = 0.3
        params = ModelParams(np.log(zeta), (np.zeros((4, 4)), np.zeros((4, 4))))
        covs = CovariateSet((np.ones((4, 4)) - np.eye(4),))
        assert edge_probability(params, covs, 1, 2) == pytest.approx(zeta / (1 + zeta))

    def test_two_block_design_value(self):
        # intercept log(0.7 * 500^{-1/2} * log 500), slope cell 0.6, unit covariate
        n = 6
        zeta = 0.7 * np.log(500.0) / np.sqrt(500.0)
        theta1 = np.full((n, n), 0.6)
        params = ModelParams(np.log(zeta), (np.zeros((n, n)), theta1))
        covs = CovariateSet((np.ones((n, n)),))
        expected = 1.0 / (1.0 + np.exp(-(np.log(zeta) + 0.6)))
        assert edge_probability(params, covs, 0, 1) == pytest.approx(expected, abs=1e-14)

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(0)
        n = 8
        params = ModelParams(-0.2, (_symmetric(n, rng), _symmetric(n, rng)))
        covs = CovariateSet((np.abs(_symmetric(n, rng)),))
        for i, j in ((0, 5), (3, 4), (6, 1)):
            assert edge_probability(params, covs, i, j) == edge_probability(params, covs, j, i)

    def test_rejects_self_edge(self):
        covs = CovariateSet((np.ones((4, 4)) - np.eye(4),))
        with pytest.raises(ValueError):
            edge_probability(self._zero_params(), covs, 2, 2)


class TestStandardize:
    def test_halves_sd_two_layer(self):
        rng = np.random.default_rng(1)
        base = _symmetric(30, rng)
        base /= np.std(base[~np.eye(30, dtype=bool)], ddof=1)
        covs = CovariateSet((2.0 * base,))
        out = standardize_covariates(covs)
        assert np.allclose(out.layers[0], base)
        assert out.scales[0] == pytest.approx(2.0)

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        covs = CovariateSet((_symmetric(25, rng),))
        once = standardize_covariates(covs)
        twice = standardize_covariates(once)
        assert np.allclose(once.layers[0], twice.layers[0], atol=1e-12)
        assert twice.scales[0] == pytest.approx(once.scales[0])

    def test_unit_off_diagonal_sd(self):
        rng = np.random.default_rng(3)
        out = standardize_covariates(CovariateSet((5.0 * _symmetric(40, rng),)))
        offdiag = out.layers[0][~np.eye(40, dtype=bool)]
        assert abs(np.std(offdiag, ddof=1) - 1.0) < 1e-10

    def test_constant_layer_rejected(self):
        with pytest.raises(DegenerateCovariateError):
            standardize_covariates(CovariateSet((np.ones((5, 5)),)))


class TestModelParams:
    def test_centered_flag(self):
        n = 10
        alpha = np.arange(n, dtype=float)
        alpha -= alpha.mean()
        theta0 = alpha[:, None] + alpha[None, :]
        assert ModelParams(0.0, (theta0,)).theta0_centered

    def test_uncentered_flag(self):
        theta0 = np.full((6, 6), 0.3)
        assert not ModelParams(0.0, (theta0,)).theta0_centered

    def test_rejects_asymmetric_theta(self):
        bad = np.zeros((4, 4))
        bad[0, 1] = 1.0
        with pytest.raises(ValueError, match="symmetric"):
            ModelParams(0.0, (bad,))


class TestMembership:
    def test_counts(self):
        m = Membership(np.array([1, 2, 2, 3]), 3)
        assert m.counts().tolist() == [1, 2, 1]

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Membership(np.array([0, 1]), 2)
        with pytest.raises(ValueError):
            Membership(np.array([1, 3]), 2)

    def test_indicator(self):
        m = Membership(np.array([2, 1]), 2)
        assert m.indicator().tolist() == [[0.0, 1.0], [1.0, 0.0]]


class TestVech:
    def test_position_k2(self):
        assert vech_position(2, 1, 1) == 1
        assert vech_position(2, 1, 2) == 2
        assert vech_position(2, 2, 1) == 2
        assert vech_position(2, 2, 2) == 3

    def test_pair_inverse(self):
        for K in range(1, 7):
            for pos in range(1, K * (K + 1) // 2 + 1):
                lo, hi = vech_pair(K, pos)
                assert vech_position(K, lo, hi) == pos

    @given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=10**6))
    def test_round_trip(self, K, salt):
        rng = np.random.default_rng(salt)
        B = _symmetric(K, rng)
        assert np.allclose(vech_to_matrix(matrix_to_vech(B)), B, atol=1e-15)

    def test_block_matrix_lookup(self):
        B = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
        bm = BlockMatrix.from_matrix(B)
        for a in range(1, 4):
            for b in range(1, 4):
                assert bm[a, b] == B[a - 1, b - 1]
        assert np.allclose(bm.to_matrix(), B)

    def test_rejects_bad_length(self):
        with pytest.raises(ValueError):
            BlockMatrix(2, np.zeros(4))
