import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptrec.errors import ContractError
from adaptrec.metrics import MetricsReport, hr_at_k, ndcg_at_k, rank_of
from adaptrec.recommender import RankedList


def ranked_from_order(order):
    order = np.asarray(order)
    n = order.shape[0]
    scores = np.zeros(n)
    scores[order] = np.linspace(1.0, 0.1, n)  # consistent with the order
    return RankedList(scores=scores / scores.sum(), order=order)


def brute_force_dcg(order, truth, k):
    # direct formula evaluation: sum over positions of (2^rel - 1)/log2(j+1),
    # normalized by the one-relevant-item ideal ranking
    dcg = 0.0
    for j in range(1, k + 1):
        rel = 1.0 if order[j - 1] == truth else 0.0
        dcg += (2.0 ** rel - 1.0) / math.log2(j + 1)
    ideal = (2.0 ** 1.0 - 1.0) / math.log2(2.0)
    return dcg / ideal


def brute_force_hr(order, truth, k):
    return float(sum(1 for j in range(k) if order[j] == truth))


def test_rank_one_is_perfect():
    ranked = ranked_from_order(np.arange(20))
    assert ndcg_at_k(ranked, 0, 10) == 1.0
    assert hr_at_k(ranked, 0, 10) == 1.0


def test_rank_three_is_half():
    ranked = ranked_from_order(np.arange(20))
    assert ndcg_at_k(ranked, 2, 10) == pytest.approx(0.5)


def test_outside_cutoff_is_zero():
    ranked = ranked_from_order(np.arange(20))
    assert ndcg_at_k(ranked, 10, 10) == 0.0
    assert hr_at_k(ranked, 10, 10) == 0.0


def test_hr_boundary_inclusion():
    ranked = ranked_from_order(np.arange(20))
    assert hr_at_k(ranked, 9, 10) == 1.0   # rank exactly K
    assert hr_at_k(ranked, 10, 10) == 0.0  # rank K+1


def test_invalid_truth_and_k_rejected():
    ranked = ranked_from_order(np.arange(5))
    with pytest.raises(ContractError):
        ndcg_at_k(ranked, 7, 3)
    with pytest.raises(ContractError):
        ndcg_at_k(ranked, 1, 0)
    with pytest.raises(ContractError):
        hr_at_k(ranked, 1, 6)


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_metrics_match_brute_force_formula(data):
    n = data.draw(st.integers(min_value=2, max_value=40))
    seed = data.draw(st.integers(min_value=0, max_value=2**31))
    order = np.random.default_rng(seed).permutation(n)
    truth = data.draw(st.integers(min_value=0, max_value=n - 1))
    k = data.draw(st.integers(min_value=1, max_value=n))
    ranked = ranked_from_order(order)
    assert ndcg_at_k(ranked, truth, k) == pytest.approx(brute_force_dcg(order, truth, k))
    assert hr_at_k(ranked, truth, k) == pytest.approx(brute_force_hr(order, truth, k))


def test_ndcg_never_exceeds_hr():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 30))
        ranked = ranked_from_order(rng.permutation(n))
        truth = int(rng.integers(n))
        k = int(rng.integers(1, n + 1))
        assert ndcg_at_k(ranked, truth, k) <= hr_at_k(ranked, truth, k)


def test_metrics_invariant_to_item_relabeling():
    rng = np.random.default_rng(1)
    n = 12
    order = rng.permutation(n)
    relabel = rng.permutation(n)  # item i becomes relabel[i]
    truth = 5
    ranked = ranked_from_order(order)
    relabeled = ranked_from_order(relabel[order])
    for k in (1, 3, 10):
        assert ndcg_at_k(ranked, truth, k) == ndcg_at_k(relabeled, relabel[truth], k)
        assert hr_at_k(ranked, truth, k) == hr_at_k(relabeled, relabel[truth], k)


def test_random_scorer_hr_expectation():
    rng = np.random.default_rng(42)
    n, k, trials = 100, 10, 20_000
    hits = sum(hr_at_k(ranked_from_order(rng.permutation(n)), 0, k)
               for _ in range(trials))
    assert hits / trials == pytest.approx(k / n, abs=0.01)


def test_report_lines_deterministic_and_wall_clock_free():
    report = MetricsReport(ndcg={10: 0.5, 5: 0.25}, hr={10: 0.7, 5: 0.4},
                           num_users=3, seed=1, config_hash="abc", wall_clock=1.23)
    other = MetricsReport(ndcg={10: 0.5, 5: 0.25}, hr={10: 0.7, 5: 0.4},
                          num_users=3, seed=1, config_hash="abc", wall_clock=9.87)
    assert report.to_lines() == other.to_lines()
    assert "wall" not in report.to_lines()
    assert "ndcg@5=0.25" in report.to_lines()


def test_rank_of_rejects_non_permutation():
    ranked = RankedList(scores=np.full(3, 1 / 3), order=np.array([0, 0, 2]))
    with pytest.raises(ContractError):
        rank_of(ranked, 0)
