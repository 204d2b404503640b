"""Chow-Liu fitting and sampling, plus the covariance comparison helpers."""

import itertools
import math

import numpy as np
import pytest

from fermiborn.baselines import (
    ChowLiuTree,
    _max_weight_tree,
    chow_liu_fit,
    chow_liu_sample,
    empirical_covariance,
    model_covariance,
    pairwise_mutual_information,
)
from fermiborn.datagen import BitDataset
from fermiborn.engine import FbmModel
from fermiborn.errors import InvalidInputError
from fermiborn.oracle import exact_distribution


def dataset(*bitstrings: str) -> BitDataset:
    rows = np.array([[int(c) for c in s] for s in bitstrings], dtype=np.uint8)
    return BitDataset(rows.shape[1], rows)


def uniform_tree(n: int, parent) -> ChowLiuTree:
    return ChowLiuTree(0, tuple(parent), np.full((n, 2, 2), 0.5))


class TestMutualInformation:
    def test_perfect_correlation_is_ln2(self):
        mi = pairwise_mutual_information(dataset("00", "11", "00", "11"))
        assert mi[0, 1] == pytest.approx(math.log(2.0), abs=1e-12)
        mi = pairwise_mutual_information(dataset("01", "10"))
        assert mi[0, 1] == pytest.approx(math.log(2.0), abs=1e-12)

    def test_independent_pair_is_zero(self):
        mi = pairwise_mutual_information(dataset("00", "01", "10", "11"))
        assert mi[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_matrix_shape_and_symmetry(self):
        rng = np.random.default_rng(3)
        data = BitDataset(5, (rng.random((200, 5)) < 0.5).astype(np.uint8))
        mi = pairwise_mutual_information(data)
        assert mi.shape == (5, 5)
        np.testing.assert_allclose(mi, mi.T, atol=1e-14)
        assert np.all(np.diag(mi) == 0.0)
        assert np.all(mi >= -1e-14)

    def test_constant_column_contributes_zero(self):
        mi = pairwise_mutual_information(dataset("01", "00", "01"))
        assert np.all(np.isfinite(mi))
        assert mi[0, 1] == 0.0

    def test_needs_two_samples(self):
        with pytest.raises(InvalidInputError):
            pairwise_mutual_information(dataset("01"))


class TestMaxWeightTree:
    @staticmethod
    def _tree_weight(edges, weights):
        return sum(weights[e] for e in edges)

    @staticmethod
    def _is_spanning_tree(edges, n):
        root = list(range(n))

        def find(a):
            while root[a] != a:
                a = root[a] = root[root[a]]
            return a

        for i, j in edges:
            ri, rj = find(i), find(j)
            if ri == rj:
                return False
            root[ri] = rj
        return len(edges) == n - 1

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_brute_force_on_small_graphs(self, seed):
        n = 5
        rng = np.random.default_rng(seed)
        w = rng.random((n, n))
        w = (w + w.T) / 2
        chosen = _max_weight_tree(w)
        assert self._is_spanning_tree(list(chosen), n)
        all_edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
        best = max(
            self._tree_weight(cand, w)
            for cand in itertools.combinations(all_edges, n - 1)
            if self._is_spanning_tree(list(cand), n)
        )
        assert self._tree_weight(chosen, w) == pytest.approx(best, rel=1e-12)

    def test_tie_breaking_is_deterministic(self):
        w = np.ones((4, 4))
        assert _max_weight_tree(w) == [(0, 1), (0, 2), (0, 3)]


class TestChowLiuTree:
    def test_validation(self):
        cpt = np.full((3, 2, 2), 0.5)
        with pytest.raises(InvalidInputError):
            ChowLiuTree(5, (None, 0, 1), cpt)
        with pytest.raises(InvalidInputError):
            ChowLiuTree(0, (1, 0, 1), cpt)  # root has a parent
        with pytest.raises(InvalidInputError):
            ChowLiuTree(0, (None, 2, 1), cpt)  # 1 <-> 2 cycle
        with pytest.raises(InvalidInputError):
            ChowLiuTree(0, (None, 0), cpt)  # cpt for 3 vars, tree of 2
        bad = cpt.copy()
        bad[1, 0] = [0.6, 0.6]
        with pytest.raises(InvalidInputError):
            ChowLiuTree(0, (None, 0, 1), bad)

    def test_sampling_order_visits_parents_first(self):
        tree = uniform_tree(5, (None, 0, 0, 1, 1))
        order = tree.sampling_order()
        assert order[0] == 0 and sorted(order) == list(range(5))
        for v, p in enumerate(tree.parent):
            if p is not None:
                assert order.index(p) < order.index(v)


class TestFit:
    @staticmethod
    def _chain_data(n_rows: int, flip: float, seed: int) -> BitDataset:
        # x0 fair, each later bit copies its predecessor except with
        # probability `flip`; the MI chain 0-1-2-3 dominates all shortcuts.
        rng = np.random.default_rng(seed)
        rows = np.zeros((n_rows, 4), dtype=np.uint8)
        rows[:, 0] = rng.random(n_rows) < 0.5
        for v in range(1, 4):
            flips = rng.random(n_rows) < flip
            rows[:, v] = rows[:, v - 1] ^ flips
        return BitDataset(4, rows)

    def test_recovers_a_markov_chain(self):
        tree = chow_liu_fit(self._chain_data(10_000, flip=0.1, seed=5))
        edges = {
            tuple(sorted((v, p))) for v, p in enumerate(tree.parent) if p is not None
        }
        assert edges == {(0, 1), (1, 2), (2, 3)}
        assert tree.root == 0

    def test_cpt_for_a_deterministic_copy(self):
        data = dataset("00", "11", "00", "11", "00", "11")
        tree = chow_liu_fit(data)
        # root marginal: 3 ones of 6 rows, add-one smoothed
        assert tree.cpt[0, 0, 1] == pytest.approx(4.0 / 8.0)
        child = 1 if tree.parent[1] == 0 else 0
        assert tree.cpt[child, 1, 1] == pytest.approx(4.0 / 5.0)
        assert tree.cpt[child, 0, 1] == pytest.approx(1.0 / 5.0)

    def test_single_variable_marginal(self):
        tree = chow_liu_fit(dataset("0", "0"))
        assert tree.cpt[0, 0, 1] == pytest.approx(0.25)
        sampled = chow_liu_sample(tree, 4000, np.random.default_rng(0))
        mean = sampled.rows.mean()
        assert abs(mean - 0.25) < 3.0 * math.sqrt(0.25 * 0.75 / 4000)


class TestSample:
    def test_seeded_and_reproducible(self):
        tree = uniform_tree(4, (None, 0, 1, 2))
        a = chow_liu_sample(tree, 50, np.random.default_rng(9))
        b = chow_liu_sample(tree, 50, np.random.default_rng(9))
        np.testing.assert_array_equal(a.rows, b.rows)
        assert len(a) == 50 and a.n == 4

    def test_deterministic_conditionals_force_bits(self):
        cpt = np.zeros((3, 2, 2))
        cpt[0, :, 1] = 1.0  # root always 1
        cpt[1, 1] = [0.0, 1.0]  # copy parent
        cpt[1, 0] = [1.0, 0.0]
        cpt[2, 1] = [1.0, 0.0]  # negate parent
        cpt[2, 0] = [0.0, 1.0]
        tree = ChowLiuTree(0, (None, 0, 1), cpt)
        out = chow_liu_sample(tree, 20, np.random.default_rng(1))
        assert np.all(out.rows == [1, 1, 0])

    def test_count_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            chow_liu_sample(uniform_tree(2, (None, 0)), 0, np.random.default_rng(0))

    def test_fit_then_sample_tracks_marginals(self):
        data = TestFit._chain_data(4000, flip=0.2, seed=8)
        tree = chow_liu_fit(data)
        sampled = chow_liu_sample(tree, 4000, np.random.default_rng(2))
        gap = np.abs(sampled.rows.mean(axis=0) - data.rows.mean(axis=0))
        assert np.all(gap < 3.0 * math.sqrt(0.25 / 4000) + 1e-3)


class TestCovariances:
    def test_constant_data_has_zero_covariance(self):
        cov = empirical_covariance(dataset("000", "000"))
        np.testing.assert_array_equal(cov, np.zeros((3, 3)))

    def test_anticorrelated_pair(self):
        cov = empirical_covariance(dataset("01", "10"))
        np.testing.assert_allclose(cov, [[1.0, -1.0], [-1.0, 1.0]], atol=1e-15)

    def test_empty_dataset_rejected(self):
        with pytest.raises(InvalidInputError):
            empirical_covariance(BitDataset(2, np.zeros((0, 2), dtype=np.uint8)))

    def test_model_covariance_matches_exact_distribution(self):
        model = FbmModel.random(2, 2, np.random.default_rng(19))
        got = model_covariance(model)

        dist = exact_distribution(model)
        bits = np.array(
            [[(idx >> (model.n - 1 - v)) & 1 for v in range(model.n)]
             for idx in range(2 ** model.n)]
        )
        z = 1.0 - 2.0 * bits
        mean = dist.probs @ z
        second = (z.T * dist.probs) @ z
        want = second - np.outer(mean, mean)
        assert np.max(np.abs(got - want)) < 1e-8

    def test_model_covariance_worker_count_is_invisible(self):
        model = FbmModel.random(2, 1, np.random.default_rng(23))
        np.testing.assert_array_equal(
            model_covariance(model), model_covariance(model, workers=2)
        )
