from itertools import permutations, product

import numpy as np
import pytest

from blocknet import Membership
from blocknet.metrics import mse_theta, nmi, prop_correct, rand_index


def _m(labels, K=None):
    labels = np.asarray(labels)
    return Membership(labels, K or int(labels.max()))


class TestMse:
    def test_identical(self):
        a = np.random.default_rng(0).standard_normal((5, 5))
        a = (a + a.T) / 2
        assert mse_theta(a, a) == 0.0

    def test_constant_offset(self):
        a = np.zeros((6, 6))
        assert mse_theta(a + 0.3, a) == pytest.approx(0.09)

    def test_hand_sum_3x3(self):
        a = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, -1.0], [2.0, -1.0, 0.0]])
        b = np.array([[0.0, 0.5, 1.0], [0.5, 0.0, 0.0], [1.0, 0.0, 0.0]])
        # off-diagonal squared diffs: 2*(0.25 + 1 + 1) / 6
        assert mse_theta(a, b) == pytest.approx((2 * (0.25 + 1.0 + 1.0)) / 6)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_theta(np.zeros((3, 3)), np.zeros((4, 4)))


class TestNmi:
    def test_identical(self):
        assert nmi(_m([1, 1, 2, 2]), _m([1, 1, 2, 2])) == pytest.approx(1.0)

    def test_relabeled(self):
        assert nmi(_m([1, 1, 2, 2]), _m([2, 2, 1, 1])) == pytest.approx(1.0)

    def test_independent_four_points(self):
        # hand computation: the contingency table is uniform, I = 0
        assert nmi(_m([1, 1, 2, 2]), _m([1, 2, 1, 2])) == pytest.approx(0.0)

    def test_trivial_both(self):
        assert nmi(_m([1, 1, 1], K=1), _m([1, 1, 1], K=1)) == 1.0

    def test_trivial_one_side(self):
        assert nmi(_m([1, 1, 1], K=1), _m([1, 2, 1])) == 0.0


class TestRandIndex:
    def test_identical(self):
        assert rand_index(_m([1, 2, 2, 3]), _m([1, 2, 2, 3])) == 1.0

    def test_hand_enumerated_four_points(self):
        # pairs (1,4) and (2,3) agree; the other four disagree
        assert rand_index(_m([1, 1, 2, 2]), _m([1, 2, 1, 2])) == pytest.approx(1 / 3)

    def test_singletons_two_nodes(self):
        assert rand_index(_m([1, 2]), _m([1, 2])) == 1.0

    def test_matches_pair_enumeration_all_partitions_of_4(self):
        # oracle: direct enumeration of the 6 node pairs
        def oracle(a, b):
            agree = 0
            for i in range(4):
                for j in range(i + 1, 4):
                    agree += (a[i] == a[j]) == (b[i] == b[j])
            return agree / 6

        labelings = [p for p in product([1, 2, 3, 4], repeat=4) if max(p) == len(set(p))]
        for a in labelings:
            for b in labelings:
                assert rand_index(_m(a), _m(b)) == pytest.approx(oracle(a, b))


class TestProp:
    def test_identical(self):
        assert prop_correct(_m([1, 2, 1]), _m([1, 2, 1])) == 1.0

    def test_swapped_labels(self):
        assert prop_correct(_m([1, 1, 2, 2]), _m([2, 2, 1, 1])) == 1.0

    def test_one_flip_in_ten(self):
        a = [1] * 5 + [2] * 5
        b = list(a)
        b[0] = 2
        assert prop_correct(_m(a), _m(b)) == pytest.approx(0.9)

    def test_matches_brute_force_and_beats_uniform(self):
        rng = np.random.default_rng(7)
        for K in (2, 3, 4):
            for _ in range(20):
                n = 12
                a = rng.integers(1, K + 1, size=n)
                b = rng.integers(1, K + 1, size=n)
                a[:K] = np.arange(1, K + 1)  # every label present
                b[:K] = np.arange(1, K + 1)
                best = max(
                    np.mean(np.asarray([perm[x - 1] for x in b]) == a)
                    for perm in permutations(range(1, K + 1))
                )
                got = prop_correct(_m(a, K), _m(b, K))
                assert got == pytest.approx(best)
                assert got >= 1.0 / K


class TestPermutationInvariance:
    def test_all_metrics(self):
        rng = np.random.default_rng(3)
        a = rng.integers(1, 4, size=30)
        b = rng.integers(1, 4, size=30)
        a[:3] = [1, 2, 3]
        b[:3] = [1, 2, 3]
        perm = np.array([3, 1, 2])
        a2 = perm[a - 1]
        for fn in (nmi, rand_index, prop_correct):
            assert fn(_m(a, 3), _m(b, 3)) == pytest.approx(fn(_m(a2, 3), _m(b, 3)))
