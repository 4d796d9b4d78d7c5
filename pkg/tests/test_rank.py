import numpy as np
import pytest

from blocknet import Network
from blocknet.rank import RankConfig, mean_degree_stat, select_rank


def _threshold_setup(target: float, n: int = 100, ybar: float = 0.2) -> RankConfig:
    """Pick the constant so the rule's threshold equals ``target``."""
    x = np.log(n) / (n * ybar)
    base = np.sqrt(x) + x
    return RankConfig(K_max=10, c=target / base), n, ybar


class TestMeanDegree:
    def test_empty(self):
        assert mean_degree_stat(Network(np.zeros((4, 4)))) == 0.0

    def test_complete(self):
        assert mean_degree_stat(Network(np.ones((5, 5)) - np.eye(5))) == 1.0

    def test_single_edge(self):
        adj = np.zeros((4, 4))
        adj[0, 1] = adj[1, 0] = 1.0
        assert mean_degree_stat(Network(adj)) == pytest.approx(1 / 6)


class TestSelectRank:
    def test_direct_evaluation(self):
        cfg, n, ybar = _threshold_setup(0.5)
        sigma = np.array([5.0, 4.0, 0.1, 0.05, 0.04, 0.03, 0.02, 0.01, 0.005, 0.001])
        sel = select_rank(sigma, n, ybar, cfg)
        assert sel.threshold == pytest.approx(0.5)
        assert sel.eligible.tolist() == [True, True] + [False] * 7
        assert sel.ratios[0] == pytest.approx(1.25)
        assert sel.ratios[1] == pytest.approx(40.0)
        assert sel.K_hat == 2
        assert not sel.no_pass

    def test_all_equal_above_threshold(self):
        cfg, n, ybar = _threshold_setup(0.5)
        sel = select_rank(np.full(10, 2.0), n, ybar, cfg)
        assert sel.K_hat == 1  # all ratios 1, tie to the smallest k

    def test_no_pass_flag(self):
        cfg, n, ybar = _threshold_setup(0.5)
        sel = select_rank(np.full(10, 1e-4), n, ybar, cfg)
        assert sel.K_hat == 1
        assert sel.no_pass

    def test_scale_invariance_of_ratio_ordering(self):
        cfg, n, ybar = _threshold_setup(0.01)
        rng = np.random.default_rng(0)
        for _ in range(20):
            sigma = np.sort(rng.uniform(0.5, 5.0, size=10))[::-1]
            base = select_rank(sigma, n, ybar, cfg)
            for c in (0.5, 2.0, 10.0):
                scaled = select_rank(c * sigma, n, ybar, cfg)
                # threshold passes for every k in both runs here, so the
                # argmax of the ratios must be unchanged
                assert np.allclose(scaled.ratios, base.ratios)
                assert scaled.K_hat == base.K_hat

    def test_result_respects_indicator(self):
        cfg, n, ybar = _threshold_setup(0.5)
        sigma = np.array([5.0, 0.4, 0.3, 0.2, 0.1, 0.05, 0.04, 0.03, 0.02, 0.01])
        sel = select_rank(sigma, n, ybar, cfg)
        assert sel.K_hat == 1 and not sel.no_pass
        assert sel.eligible[sel.K_hat - 1]

    def test_needs_enough_sigmas(self):
        cfg, n, ybar = _threshold_setup(0.5)
        with pytest.raises(ValueError):
            select_rank(np.array([1.0, 0.5]), n, ybar, cfg)

    def test_zero_tail_gives_infinite_ratio(self):
        cfg, n, ybar = _threshold_setup(0.1)
        sigma = np.array([3.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        sel = select_rank(sigma, n, ybar, cfg)
        assert sel.K_hat == 2
