import itertools

import numpy as np
import pytest

from blockcv.criteria import (
    GreedyModularity,
    InfomapCommunities,
    InformationCriterionSelector,
    aic,
    bic,
    degrees_of_freedom,
    directed_modularity,
    greedy_modularity,
    infomap,
    map_codelength,
    select_model_ic,
    stationary_flow,
)
from blockcv.generate import (
    equal_block_sizes,
    memberships_from_sizes,
    planted_partition,
    sample_network,
    tie_probabilities,
)
from blockcv.sbm import fit_sbm


def planted_network(n, k, b, r, seed):
    labels = memberships_from_sizes(equal_block_sizes(n, k))
    P = tie_probabilities(planted_partition(k, b, r), labels)
    return sample_network(P, np.random.default_rng(seed)), labels


def set_partitions(items):
    if len(items) == 1:
        yield [items]
        return
    first, rest = items[0], items[1:]
    for smaller in set_partitions(rest):
        for i in range(len(smaller)):
            yield smaller[:i] + [[first] + smaller[i]] + smaller[i + 1 :]
        yield [[first]] + smaller


def partition_labels(partition, n):
    labels = np.empty(n, dtype=int)
    for c, members in enumerate(partition, start=1):
        for v in members:
            labels[v] = c
    return labels


class TestInformationCriteria:
    def test_dof(self):
        assert degrees_of_freedom(1) == 1
        assert degrees_of_freedom(2) == 5
        assert [degrees_of_freedom(k) for k in range(1, 6)] == [1, 5, 11, 19, 29]

    def test_aic_values(self):
        assert aic(-100.0, 1).value == pytest.approx(202.0)
        assert aic(-100.0, 2).value == pytest.approx(210.0)

    def test_bic_value(self):
        assert bic(-100.0, 2, 30).value == pytest.approx(200 + 5 * np.log(870))

    def test_bic_penalty_exceeds_aic_from_four_nodes(self):
        assert np.log(4 * 3) > 2.0
        assert bic(-50.0, 3, 4).value > aic(-50.0, 3).value

    def test_bic_minus_aic_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            ll = -float(rng.random() * 500)
            k = int(rng.integers(1, 8))
            n = int(rng.integers(4, 200))
            d = degrees_of_freedom(k)
            gap = bic(ll, k, n).value - aic(ll, k).value
            assert gap == pytest.approx(d * (np.log(n * (n - 1)) - 2.0), abs=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            aic(float("nan"), 2)
        with pytest.raises(ValueError):
            bic(float("-inf"), 2, 10)


class TestSelectModelIc:
    def test_singleton_range(self):
        Y, _ = planted_network(10, 1, 0.3, 2, seed=1)
        best_k, curve = select_model_ic(Y, [1], "bic", np.random.default_rng(2))
        assert best_k == 1 and len(curve) == 1

    def test_shared_fits_across_criteria(self):
        Y, _ = planted_network(16, 2, 0.1, 5, seed=3)
        fits = {}
        k_bic, _ = select_model_ic(Y, [1, 2, 3], "bic", np.random.default_rng(4), fits=fits)
        stored = {k: fit.log_likelihood for k, fit in fits.items()}
        k_aic, _ = select_model_ic(Y, [1, 2, 3], "aic", np.random.default_rng(5), fits=fits)
        assert {k: fit.log_likelihood for k, fit in fits.items()} == stored

    def test_loglik_mode(self):
        Y, _ = planted_network(16, 2, 0.1, 5, seed=6)
        _, curve = select_model_ic(Y, [1, 2], "loglik", np.random.default_rng(7))
        fits = {}
        assert curve[0].value == pytest.approx(
            -2 * fit_sbm(Y, 1).log_likelihood
        )


def modularity_loop_oracle(Y, labels):
    m = Y.sum()
    k_out = Y.sum(axis=1)
    k_in = Y.sum(axis=0)
    total = 0.0
    n = Y.shape[0]
    for i in range(n):
        for j in range(n):
            if i != j and labels[i] == labels[j]:
                total += Y[i, j] - k_out[i] * k_in[j] / m
    return total / m


class TestDirectedModularity:
    def test_all_singletons_zero(self):
        Y, _ = planted_network(8, 2, 0.1, 5, seed=8)
        assert directed_modularity(Y, np.arange(1, 9)) == 0.0

    def test_two_pairs_oracle(self):
        Y = np.zeros((4, 4))
        Y[0, 1] = Y[1, 0] = Y[2, 3] = Y[3, 2] = 1.0
        labels = np.array([1, 1, 2, 2])
        value = directed_modularity(Y, labels)
        assert value == pytest.approx(modularity_loop_oracle(Y, labels), abs=1e-12)

    def test_single_community_oracle(self):
        rng = np.random.default_rng(9)
        Y = (rng.random((7, 7)) < 0.4).astype(float)
        np.fill_diagonal(Y, 0.0)
        if Y.sum() == 0:
            Y[0, 1] = 1.0
        labels = np.ones(7, dtype=int)
        assert directed_modularity(Y, labels) == pytest.approx(
            modularity_loop_oracle(Y, labels), abs=1e-12
        )

    def test_relabelling_invariance(self):
        Y, _ = planted_network(9, 3, 0.1, 5, seed=10)
        labels = np.array([1, 1, 1, 2, 2, 2, 3, 3, 3])
        relabelled = np.array([3, 3, 3, 1, 1, 1, 2, 2, 2])
        assert directed_modularity(Y, labels) == pytest.approx(
            directed_modularity(Y, relabelled)
        )

    def test_empty_network_rejected(self):
        with pytest.raises(ValueError):
            directed_modularity(np.zeros((4, 4)), [1, 1, 2, 2])


class TestGreedyModularity:
    def test_disconnected_cliques(self):
        Y = np.zeros((10, 10))
        Y[:5, :5] = 1.0
        Y[5:, 5:] = 1.0
        np.fill_diagonal(Y, 0.0)
        result = greedy_modularity(Y)
        assert result.n_communities == 2
        assert len(set(result.labels[:5])) == 1
        assert len(set(result.labels[5:])) == 1

    def test_score_matches_recomputation(self):
        Y, _ = planted_network(12, 2, 0.1, 5, seed=11)
        result = greedy_modularity(Y)
        assert result.score == pytest.approx(
            directed_modularity(Y, result.labels), abs=1e-10
        )
        assert result.n_communities == len(set(result.labels.tolist()))

    def test_exhaustive_oracle_rate(self):
        hits = total = 0
        for s in range(25):
            n = 5 + s % 4
            sizes = [n - n // 2, n // 2]
            truth = memberships_from_sizes(sizes)
            P = tie_probabilities(planted_partition(2, 0.08, 10), truth)
            Y = sample_network(P, np.random.default_rng(300 + s))
            if Y.sum() < 1:
                continue
            total += 1
            result = greedy_modularity(Y)
            best = max(
                directed_modularity(Y, partition_labels(part, n))
                for part in set_partitions(list(range(n)))
            )
            hits += result.score >= best - 1e-9
        assert total >= 20
        assert hits / total >= 0.9

    def test_trace_records_path(self):
        Y, _ = planted_network(8, 2, 0.1, 5, seed=12)
        result, trace = greedy_modularity(Y, return_trace=True)
        sizes = [k for k, _ in trace.partition_scores]
        assert sizes == list(range(8, 0, -1))
        assert max(q for _, q in trace.partition_scores) == pytest.approx(result.score)


class TestInfomap:
    def test_disconnected_components(self):
        Y = np.zeros((10, 10))
        Y[:5, :5] = 1.0
        Y[5:, 5:] = 1.0
        np.fill_diagonal(Y, 0.0)
        result = infomap(Y)
        assert result.n_communities == 2

    def test_codelength_not_worse_than_singletons(self):
        Y, _ = planted_network(12, 2, 0.1, 5, seed=13)
        result = infomap(Y)
        p, F = stationary_flow(Y)
        singletons = map_codelength(p, F, np.arange(1, 13))
        assert result.score <= singletons + 1e-12

    def test_score_matches_recomputation(self):
        Y, _ = planted_network(12, 2, 0.1, 5, seed=14)
        result = infomap(Y)
        p, F = stationary_flow(Y)
        assert result.score == pytest.approx(
            map_codelength(p, F, result.labels), abs=1e-10
        )
        assert result.n_communities == len(set(result.labels.tolist()))

    def test_exhaustive_oracle_rate(self):
        hits = total = 0
        for s in range(25):
            n = 5 + s % 4
            sizes = [n - n // 2, n // 2]
            truth = memberships_from_sizes(sizes)
            P = tie_probabilities(planted_partition(2, 0.08, 10), truth)
            Y = sample_network(P, np.random.default_rng(400 + s))
            if Y.sum() < 1:
                continue
            total += 1
            result = infomap(Y)
            p, F = stationary_flow(Y)
            best = min(
                map_codelength(p, F, partition_labels(part, n))
                for part in set_partitions(list(range(n)))
            )
            hits += result.score <= best + 1e-9
        assert total >= 20
        assert hits / total >= 0.8

    def test_stationary_flow_properties(self):
        Y, _ = planted_network(10, 2, 0.1, 5, seed=15)
        p, F = stationary_flow(Y)
        assert p.sum() == pytest.approx(1.0)
        assert np.allclose(F.sum(axis=1), p, atol=1e-8)
        assert np.allclose(F.sum(axis=0), p, atol=1e-8)

    def test_deterministic_without_seed(self):
        Y, _ = planted_network(12, 2, 0.1, 5, seed=16)
        a = infomap(Y)
        b = infomap(Y)
        assert np.array_equal(a.labels, b.labels)
        assert a.score == b.score

    def test_anneal_flag_runs(self):
        Y, _ = planted_network(10, 2, 0.1, 5, seed=17)
        result = infomap(Y, rng=np.random.default_rng(18), anneal=True, n_anneal_sweeps=3)
        p, F = stationary_flow(Y)
        assert result.score == pytest.approx(map_codelength(p, F, result.labels), abs=1e-10)

    def test_empty_network_rejected(self):
        with pytest.raises(ValueError):
            infomap(np.zeros((4, 4)))


def test_estimator_wrappers():
    Y, truth = planted_network(20, 2, 0.15, 5, seed=19)
    ic = InformationCriterionSelector(criterion="bic", k_max=3, random_state=20).fit(Y)
    assert ic.best_k_ in (1, 2, 3)
    assert len(ic.criterion_curve_) == 3
    gm = GreedyModularity().fit(Y)
    assert gm.n_communities_ >= 1
    im = InfomapCommunities(random_state=21).fit(Y)
    assert im.n_communities_ >= 1
