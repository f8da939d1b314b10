import numpy as np
import pytest

from blockcv.folds import (
    DIAGONAL_SENTINEL,
    latin_assign,
    make_assignment,
    ncv_assign,
    random_assign,
    training_mask,
    write_fold_csv,
)


def offdiag(n):
    return ~np.eye(n, dtype=bool)


class TestNcv:
    def test_structure_matches_node_labels(self):
        a = ncv_assign(8, 3, np.random.default_rng(0))
        nf = a.node_folds
        for i in range(8):
            for j in range(8):
                if i == j:
                    assert a.matrix[i, j] == DIAGONAL_SENTINEL
                elif nf[i] == nf[j]:
                    assert a.matrix[i, j] == nf[i]
                else:
                    assert a.matrix[i, j] == 0

    def test_small_example_counts(self):
        # n=4, V=2, balanced groups of two: each fold validates 2 dyads,
        # 4 of the 12 dyads total, fewer than N/V = 6
        a = ncv_assign(4, 2, np.random.default_rng(1))
        assert a.fold_sizes().tolist() == [2, 2]
        assert a.validated_count() == 4
        assert a.validated_count() < 12 // 2 + 2

    def test_balanced_node_partition(self):
        a = ncv_assign(11, 3, np.random.default_rng(2))
        counts = np.bincount(a.node_folds)[1:]
        assert counts.max() - counts.min() <= 1

    def test_training_fraction(self):
        # |training(t)| / n(n-1) is approximately (V^2 - 1) / V^2
        n, v = 100, 5
        a = ncv_assign(n, v, np.random.default_rng(3))
        for t in range(1, v + 1):
            frac = training_mask(a, t).sum() / (n * (n - 1))
            assert abs(frac - (v * v - 1) / (v * v)) < 0.01

    def test_node_balance(self):
        # every node has observed dyads in every fold's training set
        a = ncv_assign(12, 4, np.random.default_rng(4))
        for t in range(1, 5):
            mask = training_mask(a, t)
            assert (mask.sum(axis=1) + mask.sum(axis=0)).min() > 0

    def test_rejects_bad_fold_count(self):
        with pytest.raises(ValueError):
            ncv_assign(4, 5, np.random.default_rng(0))
        with pytest.raises(ValueError):
            ncv_assign(4, 1, np.random.default_rng(0))


class TestLatin:
    def test_n6_v3_exact_counts(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            a = latin_assign(6, 3, rng)
            assert a.fold_sizes().tolist() == [10, 10, 10]
            for axis in (0, 1):
                M = a.matrix if axis == 0 else a.matrix.T
                for row in M:
                    counts = np.bincount(row[row > 0], minlength=4)[1:]
                    assert set(counts.tolist()) <= {1, 2}

    def test_n_equals_v(self):
        a = latin_assign(3, 3, np.random.default_rng(11))
        for row in a.matrix:
            counts = np.bincount(row[row > 0], minlength=4)[1:]
            assert counts.max() <= 1

    @pytest.mark.parametrize("n,v", [(30, 3), (30, 10), (60, 5), (120, 10)])
    def test_grid_exactness(self, n, v):
        rng = np.random.default_rng(12)
        for _ in range(20):
            a = latin_assign(n, v, rng)
            assert (a.fold_sizes() == n * (n - 1) // v).all()
            assert _max_line_spread(a.matrix, v) <= 1

    def test_no_zeros_offdiagonal(self):
        a = latin_assign(12, 4, np.random.default_rng(13))
        assert (a.matrix[offdiag(12)] >= 1).all()

    def test_nondivisible_does_not_crash(self):
        a = latin_assign(13, 5, np.random.default_rng(14))
        vals = a.matrix[offdiag(13)]
        assert vals.min() >= 1 and vals.max() <= 5

    def test_deterministic(self):
        a = latin_assign(30, 10, np.random.default_rng(99))
        b = latin_assign(30, 10, np.random.default_rng(99))
        assert np.array_equal(a.matrix, b.matrix)


class TestRandom:
    def test_balanced_sizes(self):
        a = random_assign(4, 2, np.random.default_rng(20))
        assert a.fold_sizes().tolist() == [6, 6]

    def test_dyad_frequency(self):
        rng = np.random.default_rng(21)
        hits = sum(random_assign(4, 2, rng).matrix[0, 1] == 1 for _ in range(10_000))
        assert abs(hits / 10_000 - 0.5) < 0.015

    def test_leave_one_out(self):
        n = 4
        a = random_assign(n, n * (n - 1), np.random.default_rng(22))
        assert (a.fold_sizes() == 1).all()

    def test_node_balance_violated_somewhere(self):
        # a draw where some fold's validation cells miss a node entirely
        rng = np.random.default_rng(23)
        witnessed = False
        for _ in range(200):
            a = random_assign(5, 5, rng)
            for t in range(1, 6):
                cells = a.validation_cells(t)
                touched = cells.any(axis=0) | cells.any(axis=1)
                if not touched.all():
                    witnessed = True
                    break
            if witnessed:
                break
        assert witnessed

    def test_nondivisible_spread(self):
        a = random_assign(5, 3, np.random.default_rng(24))
        sizes = a.fold_sizes()
        assert sizes.sum() == 20
        assert sizes.max() - sizes.min() <= 1


class TestTrainingMask:
    def test_latin_mask_counts(self):
        a = latin_assign(6, 3, np.random.default_rng(30))
        for t in range(1, 4):
            mask = training_mask(a, t)
            assert (~mask[offdiag(6)]).sum() == 10

    def test_partition_per_fold(self):
        for scheme in ("node", "latin", "random"):
            a = make_assignment(scheme, 10, 3, np.random.default_rng(31))
            for t in range(1, 4):
                mask = training_mask(a, t)
                cells = a.validation_cells(t)
                assert not (mask & cells).any()
                assert ((mask | cells) == offdiag(10)).all()
                assert not np.diagonal(mask).any()

    def test_validation_union(self):
        n = 10
        for scheme, complete in (("latin", True), ("random", True), ("node", False)):
            a = make_assignment(scheme, n, 3, np.random.default_rng(32))
            union = np.zeros((n, n), dtype=bool)
            for t in range(1, 4):
                union |= a.validation_cells(t)
            if complete:
                assert (union == offdiag(n)).all()
            else:
                assert union.sum() < n * (n - 1)

    def test_fold_zero_always_trains(self):
        a = ncv_assign(9, 3, np.random.default_rng(33))
        zero_cells = a.matrix == 0
        for t in range(1, 4):
            assert training_mask(a, t)[zero_cells].all()

    def test_bad_fold_id(self):
        a = latin_assign(6, 3, np.random.default_rng(34))
        with pytest.raises(ValueError):
            training_mask(a, 0)
        with pytest.raises(ValueError):
            training_mask(a, 4)


def _max_line_spread(matrix, v):
    worst = 0
    for M in (matrix, matrix.T):
        for row in M:
            counts = np.bincount(row[row > 0], minlength=v + 1)[1:]
            worst = max(worst, int(counts.max() - counts.min()))
    return worst


def test_all_schemes_deterministic():
    for scheme in ("node", "latin", "random"):
        a = make_assignment(scheme, 20, 5, np.random.default_rng(77))
        b = make_assignment(scheme, 20, 5, np.random.default_rng(77))
        assert np.array_equal(a.matrix, b.matrix)


def test_fold_csv_renders_diagonal(tmp_path):
    a = latin_assign(5, 2, np.random.default_rng(40))
    path = tmp_path / "folds.csv"
    write_fold_csv(path, a)
    loaded = np.loadtxt(path, delimiter=",", dtype=int)
    assert (np.diagonal(loaded) == -1).all()
    assert np.array_equal(loaded, a.matrix)
