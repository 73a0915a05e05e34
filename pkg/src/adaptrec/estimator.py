"""Scikit-learn style estimator wrapping the full train/evaluate pipeline.

X is an interaction log: an iterable of (user, item, timestamp) triples (or an
(n, 3) array). `fit` builds the chronological per-user sequences, splits them
leave-one-out, and trains; `predict` returns the next-item recommendation for
users from their full fitted history; `score` is test NDCG@10. Hyperparameters
mirror the run configuration one to one, so `get_params` round-trips them.
"""

from __future__ import annotations

from dataclasses import fields

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .agent import adapt_sequence
from .config import RunConfig
from .data import build_dataset, leave_one_out
from .errors import DataError
from .evaluation import evaluate
from .recommender import recommend_topk
from .trainer import train
from . import numcore as nc

_CONFIG_FIELDS = tuple(f.name for f in fields(RunConfig))


def validate_interactions(X) -> list[tuple[str, str, int]]:
    """Coerce an array-like of (user, item, timestamp) rows into records."""
    if X is None:
        raise DataError("interaction log is required")
    if isinstance(X, np.ndarray):
        if X.ndim != 2 or X.shape[1] != 3:
            raise DataError(f"expected an (n, 3) interaction array, got {X.shape}")
        rows = X.tolist()
    else:
        rows = list(X)
    records = []
    for i, row in enumerate(rows):
        try:
            user, item, ts = row
            records.append((str(user), str(item), int(ts)))
        except (TypeError, ValueError):
            raise DataError(f"row {i}: expected (user, item, timestamp)") from None
    if not records:
        raise DataError("interaction log is empty")
    return records


class AdaptiveSequenceRecommender(BaseEstimator):
    """Next-item recommender that learns how much history to use per user."""

    def __init__(self, embed_dim=100, state_dim=150, ff_dim=200, num_blocks=1,
                 rec_ff_dim=400, actor_dim=64, critic_dim=64, max_seq_len=200,
                 init_scale=0.05, dropout=0.0, shared_embeddings=True,
                 gamma=0.82, exploration_sigma=2.0, reward_k=10,
                 reward_mode="ndcg", mode="adaptive", fixed_length=50,
                 epochs=100, batch_size=128, lr=1e-3, actor_lr=1e-4, lambda_critic=1.0,
                 lambda_actor=1.0, length_penalty=0.05, actor_warmup_epochs=2, seed=0):
        self.embed_dim = embed_dim
        self.state_dim = state_dim
        self.ff_dim = ff_dim
        self.num_blocks = num_blocks
        self.rec_ff_dim = rec_ff_dim
        self.actor_dim = actor_dim
        self.critic_dim = critic_dim
        self.max_seq_len = max_seq_len
        self.init_scale = init_scale
        self.dropout = dropout
        self.shared_embeddings = shared_embeddings
        self.gamma = gamma
        self.exploration_sigma = exploration_sigma
        self.reward_k = reward_k
        self.reward_mode = reward_mode
        self.mode = mode
        self.fixed_length = fixed_length
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.actor_lr = actor_lr
        self.lambda_critic = lambda_critic
        self.lambda_actor = lambda_actor
        self.length_penalty = length_penalty
        self.actor_warmup_epochs = actor_warmup_epochs
        self.seed = seed

    def _config(self) -> RunConfig:
        return RunConfig(**{name: getattr(self, name)
                            for name in _CONFIG_FIELDS}).validate()

    def fit(self, X, y=None):
        config = self._config()
        records = validate_interactions(X)
        catalog, sequences, stats = build_dataset(records)
        split = leave_one_out(sequences)
        report, model = train(split, config, catalog.num_users, catalog.num_items)
        self.catalog_ = catalog
        self.sequences_ = sequences
        self.split_ = split
        self.model_ = model
        self.report_ = report
        self.n_users_ = catalog.num_users
        self.n_items_ = catalog.num_items
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("fit the recommender before predicting")

    def _history(self, user_id) -> tuple[int, list[int]]:
        try:
            user = self.catalog_.user_index(str(user_id))
        except KeyError:
            raise DataError(f"unknown user {user_id!r}") from None
        return user, list(self.sequences_[user].items)

    def recommend(self, user_id, k: int = 10) -> list[str]:
        """Top-k next items for a fitted user, from their full history."""
        self._check_fitted()
        user, items = self._history(user_id)
        config = self.model_.config
        if config.mode == "adaptive":
            with nc.no_grad():
                state = self.model_.encoder.encode_all(items).data[-1]
            length = self.model_.actor.act(state, len(items)).length
        else:
            length = min(config.fixed_length, len(items))
        ranked = self.model_.recommender.score_next(
            adapt_sequence(items, length), user)
        return [self.catalog_.item_ids[i] for i in recommend_topk(ranked, k)]

    def predict(self, X=None) -> np.ndarray:
        """Top-1 next item per user id in X (all fitted users when X is None)."""
        self._check_fitted()
        users = list(X) if X is not None else list(self.catalog_.user_ids)
        return np.asarray([self.recommend(user, k=1)[0] for user in users])

    def score(self, X=None, y=None) -> float:
        """Held-out test NDCG@10 on the fitted split (X and y are ignored)."""
        self._check_fitted()
        return evaluate(self.model_, self.split_, which="test", ks=(10,)).ndcg[10]

    def evaluation_report(self, which: str = "test", ks=(5, 10)):
        self._check_fitted()
        return evaluate(self.model_, self.split_, which=which, ks=ks)
