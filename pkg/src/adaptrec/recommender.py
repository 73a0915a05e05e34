"""Next-item scoring over the adapted suffix, personalized by user embedding.

Each input position is the item embedding (plus positional term) concatenated
with the user embedding; a causal gated-attention stack produces the
last-position hidden vector, which is dot-scored against every catalog item's
[item ⊕ user] vector and softmax-normalized into a probability ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .encoder import EmbeddingTable, GatedAttentionBlock
from .errors import ContractError
from .numcore import Tensor

LOG_EPS = 1e-12


@dataclass
class RankedList:
    """Softmax scores over the catalog plus the tie-broken ranking."""

    scores: np.ndarray  # probabilities, sum to 1
    order: np.ndarray   # item ids by descending score, ties by ascending id


def rank_order(scores: np.ndarray) -> np.ndarray:
    """Descending-score permutation with deterministic ascending-id ties."""
    n = scores.shape[0]
    return np.lexsort((np.arange(n), -scores)).astype(np.int64)


class RecommenderNet:
    """Transformer scorer with its own blocks, reading a shared embedding table."""

    def __init__(self, embeddings: EmbeddingTable, ff_dim: int, num_blocks: int,
                 init_scale: float, seed: int, dropout: float = 0.0,
                 namespace: str = "rec"):
        self.embeddings = embeddings
        self.dropout = dropout
        self.width = 2 * embeddings.embed_dim
        self.blocks = [GatedAttentionBlock(self.width, ff_dim, init_scale, seed,
                                           f"{namespace}.block{i}",
                                           max_seq_len=embeddings.max_seq_len)
                       for i in range(num_blocks)]
        self.namespace = namespace

    def _input_rows(self, items, user: int, drop_rng) -> Tensor:
        item_half = self.embeddings.embed_items(items)
        user_half = nc.gather_rows(self.embeddings.user, [user] * len(items))
        h = nc.concat(item_half, user_half)
        if self.dropout > 0.0 and drop_rng is not None:
            keep = 1.0 - self.dropout
            mask = (drop_rng.random(h.shape) < keep) / keep
            h = nc.mul(h, Tensor(mask))
        return h

    def hidden_all(self, items, user: int, drop_rng=None) -> Tensor:
        """Per-position hidden states; row j sees items[:j+1] only (causal)."""
        if len(items) == 0:
            raise ContractError("cannot score an empty sequence")
        h = self._input_rows(items, user, drop_rng)
        for block in self.blocks:
            h = block(h)
        return h

    def hidden(self, items, user: int, drop_rng=None) -> Tensor:
        return nc.take_row(self.hidden_all(items, user, drop_rng), len(items) - 1)

    def _candidates(self, user: int) -> Tensor:
        num_items = self.embeddings.item.shape[0]
        return nc.concat(self.embeddings.item,
                         nc.gather_rows(self.embeddings.user, [user] * num_items))

    def probabilities(self, items, user: int, drop_rng=None) -> Tensor:
        """Differentiable softmax distribution over all catalog items."""
        h = self.hidden(items, user, drop_rng)
        scores = nc.matmul(nc.as_row(h), nc.transpose(self._candidates(user)))
        return nc.take_row(nc.softmax(scores), 0)

    def score_next(self, items, user: int) -> RankedList:
        """Rank the whole catalog for the next step (inference path)."""
        with nc.no_grad():
            probs = self.probabilities(items, user).data
        return RankedList(scores=probs, order=rank_order(probs))

    def loss(self, items, user: int, truth: int, drop_rng=None) -> Tensor:
        """Differentiable cross-entropy of the logged next item."""
        probs = self.probabilities(items, user, drop_rng)
        onehot = np.zeros(probs.shape[0])
        onehot[truth] = 1.0
        p_truth = nc.tsum(nc.mul(probs, Tensor(onehot)))
        return nc.neg(nc.log(nc.add(p_truth, LOG_EPS)))

    def weighted_loss_causal(self, items, user: int, steps: list[int],
                             truths: list[int], weights: list[float],
                             drop_rng=None) -> tuple[Tensor, np.ndarray]:
        """Sum of weighted per-step cross-entropies from one causal forward.

        Step t in `steps` scores items[:t] against truths; valid whenever the
        adapted sequence at t is the full prefix. Steps must be consecutive.
        Returns the weighted-sum loss and the unweighted per-step values.
        """
        if not steps or list(steps) != list(range(steps[0], steps[0] + len(steps))):
            raise ContractError("steps must be nonempty and consecutive")
        if steps[-1] > len(items):
            raise ContractError("step exceeds the sequence length")
        h = self.hidden_all(items, user, drop_rng)
        rows = nc.slice_rows(h, steps[0] - 1, steps[-1])
        scores = nc.matmul(rows, nc.transpose(self._candidates(user)))
        probs = nc.softmax(scores)
        select = np.zeros(probs.shape)
        for i, (truth, w) in enumerate(zip(truths, weights)):
            select[i, truth] = w
        log_probs = nc.log(nc.add(probs, LOG_EPS))
        total = nc.neg(nc.tsum(nc.mul(log_probs, Tensor(select))))
        per_step = -np.log(probs.data[np.arange(len(steps)), truths] + LOG_EPS)
        return total, per_step

    def named_params(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for block in self.blocks:
            params.update(block.named_params())
        return params


def cross_entropy(ranked: RankedList, truth: int) -> float:
    """-log of the probability assigned to the interacted item."""
    if not 0 <= truth < ranked.scores.shape[0]:
        raise ContractError(f"truth item {truth} outside the catalog")
    return float(-np.log(ranked.scores[truth] + LOG_EPS))


def recommend_topk(ranked: RankedList, k: int) -> list[int]:
    """First k entries of the ranking."""
    if not 1 <= k <= ranked.order.shape[0]:
        raise ContractError(f"k={k} outside [1, {ranked.order.shape[0]}]")
    return ranked.order[:k].tolist()
