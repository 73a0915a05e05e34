import numpy as np
import pytest

from adaptrec import numcore as nc
from adaptrec.encoder import EmbeddingTable
from adaptrec.errors import ContractError
from adaptrec.recommender import RecommenderNet, cross_entropy, recommend_topk, RankedList, rank_order


def make_net(seed=0, users=3, items=8, dim=5, max_len=10, blocks=1):
    table = EmbeddingTable(num_users=users, num_items=items, embed_dim=dim,
                           max_seq_len=max_len, init_scale=0.2, seed=seed)
    return RecommenderNet(table, ff_dim=12, num_blocks=blocks, init_scale=0.2, seed=seed)


def test_single_item_catalog_scores_one():
    net = make_net(items=1)
    ranked = net.score_next([0, 0], user=1)
    assert ranked.scores.tolist() == [1.0]
    assert ranked.order.tolist() == [0]


def test_untrained_scores_normalized_permutation():
    net = make_net()
    ranked = net.score_next([1, 3, 2], user=0)
    assert ranked.scores.sum() == pytest.approx(1.0, abs=1e-9)
    assert (ranked.scores > 0).all()
    assert sorted(ranked.order.tolist()) == list(range(8))


def test_order_is_descending_with_id_tiebreak():
    scores = np.array([0.2, 0.5, 0.2, 0.1])
    assert rank_order(scores).tolist() == [1, 0, 2, 3]


def test_constant_score_shift_keeps_order():
    net = make_net(seed=3)
    items, user = [2, 5], 1
    with nc.no_grad():
        h = net.hidden(items, user)
        num_items = net.embeddings.item.shape[0]
        cand = nc.concat(net.embeddings.item,
                         nc.gather_rows(net.embeddings.user, [user] * num_items))
        raw = nc.matmul(nc.as_row(h), nc.transpose(cand)).data[0]
    base = rank_order(raw)
    shifted = rank_order(raw + 3.7)
    assert np.array_equal(base, shifted)
    assert np.array_equal(net.score_next(items, user).order, base)


def test_causality_only_the_suffix_matters():
    net = make_net(seed=1)
    a = net.score_next([4, 1, 2], user=0)
    b = net.score_next([7, 1, 2], user=0)
    # same adapted suffix after dropping position 0 gives identical scores
    a2 = net.score_next([1, 2], user=0)
    b2 = net.score_next([1, 2], user=0)
    assert np.array_equal(a2.scores, b2.scores)
    assert not np.allclose(a.scores, b.scores)


def test_user_personalizes_scores():
    net = make_net(seed=2)
    a = net.score_next([1, 2, 3], user=0)
    b = net.score_next([1, 2, 3], user=2)
    assert not np.allclose(a.scores, b.scores)


def test_empty_sequence_rejected():
    net = make_net()
    with pytest.raises(ContractError):
        net.score_next([], user=0)


def test_cross_entropy_perfect_prediction_is_zero():
    ranked = RankedList(scores=np.array([1.0, 0.0, 0.0]), order=np.array([0, 1, 2]))
    assert cross_entropy(ranked, 0) == pytest.approx(0.0, abs=1e-9)


def test_cross_entropy_uniform_four_items():
    ranked = RankedList(scores=np.full(4, 0.25), order=np.arange(4))
    assert cross_entropy(ranked, 2) == pytest.approx(np.log(4.0), abs=1e-9)


def test_cross_entropy_strictly_decreasing_in_truth_probability():
    values = []
    for p in (0.1, 0.5, 0.9):
        scores = np.array([p, 1.0 - p])
        values.append(cross_entropy(RankedList(scores, rank_order(scores)), 0))
    assert values[0] > values[1] > values[2]


def test_graph_loss_matches_functional_cross_entropy():
    net = make_net(seed=5)
    items, user, truth = [3, 1], 2, 4
    with nc.no_grad():
        graph_value = net.loss(items, user, truth).item()
    assert graph_value == pytest.approx(cross_entropy(net.score_next(items, user), truth),
                                        abs=1e-9)


def test_recommend_topk_bounds_and_contents():
    scores = np.array([0.1, 0.4, 0.3, 0.2])
    ranked = RankedList(scores, rank_order(scores))
    assert recommend_topk(ranked, 1) == [1]
    assert recommend_topk(ranked, 4) == [1, 2, 3, 0]
    with pytest.raises(ContractError):
        recommend_topk(ranked, 0)
    with pytest.raises(ContractError):
        recommend_topk(ranked, 5)


def test_memorizes_single_two_step_sequence():
    net = make_net(seed=7, items=6)
    params = list(net.named_params().values()) + list(net.embeddings.named_params().values())
    opt = nc.Adam(params, lr=0.05)
    items, user, truth = [2, 4], 0, 5
    for _ in range(120):
        opt.zero_grad()
        with nc.Tape():
            nc.backward(net.loss(items, user, truth))
        opt.step()
    ranked = net.score_next(items, user)
    assert ranked.order[0] == truth
    assert ranked.scores[truth] > 0.9


def test_causal_batch_loss_matches_per_step_losses():
    net = make_net(seed=13)
    items, user = [2, 5, 1, 7, 3], 1
    steps = [2, 3, 4]
    truths = [items[t] for t in steps]
    weights = [0.5, 2.0, 1.0]
    with nc.no_grad():
        total, per_step = net.weighted_loss_causal(items[:4], user, steps, truths, weights)
        individual = [net.loss(items[:t], user, truth).item()
                      for t, truth in zip(steps, truths)]
    assert np.allclose(per_step, individual, atol=1e-12)
    assert total.item() == pytest.approx(sum(w * ce for w, ce in zip(weights, individual)))


def test_causal_batch_loss_rejects_gaps():
    net = make_net(seed=13)
    with pytest.raises(ContractError):
        net.weighted_loss_causal([1, 2, 3], 0, [1, 3], [2, 3], [1.0, 1.0])


def test_scoring_gradients_match_finite_differences():
    net = make_net(seed=11, items=5, dim=4)
    params = list(net.named_params().values()) + list(net.embeddings.named_params().values())
    # keep embeddings O(1) so the fd step stays in range
    for p in (net.embeddings.item, net.embeddings.user, net.embeddings.pos):
        p.data *= 10.0

    err = nc.check_gradients(lambda: net.loss([1, 3], 1, 2), params, step=1e-3)
    assert err < 1e-4
