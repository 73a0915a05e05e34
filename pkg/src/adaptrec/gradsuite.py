"""Finite-difference verification suite over every differentiable operation.

For each operation, 100 random instances are sampled and the tape gradient of
a scalar output is compared against central finite differences at the given
step. Instances whose relu pre-activations sit within a few steps of the kink
(or whose selected probability is tiny, for the log) are resampled: central
differences are invalid across non-differentiable points. Composite networks
with many parameter tensors check a seeded random subset per instance; every
parameter is exercised many times across the hundred instances.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .agent import Actor, Critic
from .encoder import EmbeddingTable, GatedAttentionBlock, StateEncoder
from .numcore import Tensor
from .recommender import RecommenderNet

TOLERANCE = 1e-4
STEP = 1e-3
INSTANCES = 100
# a one-coordinate perturbation of size STEP moves a relu input by at most a
# few STEP; anything beyond this margin cannot be pushed across the kink
_KINK_MARGIN = 10 * STEP
_RESAMPLE_TRIES = 50
_PARAMS_PER_INSTANCE = 7


@dataclass
class OpResult:
    name: str
    max_rel_error: float
    instances: int
    resamples: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def _tensor(rng, shape, scale=1.0, positive=False):
    data = rng.normal(size=shape) * scale
    if positive:
        data = np.abs(data) + 0.2
    return Tensor(data, requires_grad=True)


def _min_margin(forward) -> float:
    with nc.no_grad(), nc.watch_kinks() as margins:
        forward()
    return min(margins) if margins else np.inf


def _run_op(name, make_instance, instances=INSTANCES, step=STEP) -> OpResult:
    """make_instance(rng) -> (forward, params); resamples kink-marginal draws."""
    worst = 0.0
    resamples = 0
    for i in range(instances):
        best = None  # (margin, forward, params); keep the widest-margin draw
        for attempt in range(_RESAMPLE_TRIES):
            rng = nc.stream(20_000 + i, name, attempt)
            forward, params = make_instance(rng)
            margin = _min_margin(forward)
            if best is None or margin > best[0]:
                best = (margin, forward, params)
            if margin > _KINK_MARGIN:
                break
            resamples += 1
        forward, params = best[1], best[2]
        if len(params) > _PARAMS_PER_INSTANCE:
            picker = nc.stream(30_000 + i, name, "subset")
            chosen = picker.choice(len(params), size=_PARAMS_PER_INSTANCE,
                                   replace=False)
            params = [params[j] for j in sorted(chosen)]
        worst = max(worst, nc.check_gradients(forward, params, step=step))
    return OpResult(name=name, max_rel_error=worst, instances=instances,
                    resamples=resamples)


def _matmul(rng):
    a, b = _tensor(rng, (3, 4)), _tensor(rng, (4, 2))
    w = Tensor(rng.normal(size=(3, 2)))
    return lambda: nc.tsum(nc.mul(nc.matmul(a, b), w)), [a, b]


def _add(rng):
    a, b = _tensor(rng, (5,)), _tensor(rng, (5,))
    w = Tensor(rng.normal(size=5))
    return lambda: nc.tsum(nc.mul(nc.add(a, b), w)), [a, b]


def _mul(rng):
    a, b = _tensor(rng, (5,)), _tensor(rng, (5,))
    return lambda: nc.tsum(nc.mul(a, b)), [a, b]


def _neg(rng):
    a = _tensor(rng, (5,))
    w = Tensor(rng.normal(size=5))
    return lambda: nc.tsum(nc.mul(nc.neg(a), w)), [a]


def _relu(rng):
    data = rng.normal(size=6)
    data = np.where(np.abs(data) < 0.1, 0.5, data)  # keep clear of the kink
    a = Tensor(data, requires_grad=True)
    w = Tensor(rng.normal(size=6))
    return lambda: nc.tsum(nc.mul(nc.relu(a), w)), [a]


def _sigmoid(rng):
    a = _tensor(rng, (6,), scale=2.0)
    w = Tensor(rng.normal(size=6))
    return lambda: nc.tsum(nc.mul(nc.sigmoid(a), w)), [a]


def _tanh(rng):
    a = _tensor(rng, (6,), scale=2.0)
    w = Tensor(rng.normal(size=6))
    return lambda: nc.tsum(nc.mul(nc.tanh(a), w)), [a]


def _log(rng):
    a = Tensor(rng.uniform(0.3, 3.0, size=6), requires_grad=True)
    w = Tensor(rng.normal(size=6))
    return lambda: nc.tsum(nc.mul(nc.log(a), w)), [a]


def _softmax(rng):
    a = _tensor(rng, (6,))
    w = Tensor(rng.normal(size=6))
    return lambda: nc.tsum(nc.mul(nc.softmax(a), w)), [a]


def _layernorm(rng):
    x = _tensor(rng, (3, 5))
    gain = Tensor(rng.uniform(0.5, 1.5, size=5), requires_grad=True)
    bias = _tensor(rng, (5,), scale=0.3)
    w = Tensor(rng.normal(size=(3, 5)))
    return lambda: nc.tsum(nc.mul(nc.layernorm(x, gain, bias), w)), [x, gain, bias]


def _gated_block(rng):
    seed = int(rng.integers(2**31))
    block = GatedAttentionBlock(dim=4, ff_dim=4, init_scale=0.3, seed=seed,
                                namespace="g", max_seq_len=4)
    x = Tensor(rng.normal(size=(3, 4)))
    w = Tensor(rng.normal(size=(3, 4)))
    params = list(block.named_params().values())
    return lambda: nc.tsum(nc.mul(block(x), w)), params


def _actor(rng):
    seed = int(rng.integers(2**31))
    actor = Actor(state_dim=6, hidden_dim=5, init_scale=0.5, seed=seed)
    s = Tensor(rng.normal(size=6))
    return lambda: nc.tsum(actor.forward(s)), [actor.w1, actor.w2]


def _critic(rng):
    seed = int(rng.integers(2**31))
    critic = Critic(state_dim=6, hidden_dim=5, max_seq_len=20, init_scale=0.5,
                    seed=seed)
    s = Tensor(rng.normal(size=6))
    raw = float(rng.uniform(1, 15))
    return lambda: nc.tsum(critic.forward(s, raw)), [critic.w1, critic.w2]


def _state_encoder(rng):
    seed = int(rng.integers(2**31))
    # O(1)-scale embeddings keep layernorm curvature in the fd validity range
    table = EmbeddingTable(num_users=3, num_items=5, embed_dim=4, max_seq_len=8,
                           init_scale=1.5, seed=seed)
    enc = StateEncoder(table, state_dim=3, ff_dim=4, num_blocks=1,
                       init_scale=0.3, seed=seed)
    items = rng.integers(0, 5, size=3).tolist()
    w = Tensor(rng.normal(size=3))
    params = (list(enc.named_params().values()) + [table.item, table.pos])
    return lambda: nc.tsum(nc.mul(enc.state_encode(items), w)), params


def _rec_net(rng, scale=1.5):
    seed = int(rng.integers(2**31))
    table = EmbeddingTable(num_users=3, num_items=5, embed_dim=2, max_seq_len=8,
                           init_scale=scale, seed=seed)
    net = RecommenderNet(table, ff_dim=3, num_blocks=1, init_scale=0.3, seed=seed)
    items = rng.integers(0, 5, size=2).tolist()
    user = int(rng.integers(3))
    params = (list(net.named_params().values())
              + [table.item, table.user, table.pos])
    return net, items, user, params


def _scoring(rng):
    net, items, user, params = _rec_net(rng, scale=1.0)
    w = Tensor(rng.normal(size=5))

    def forward():
        probs = net.probabilities(items, user)
        # a near-saturated softmax has fd-hostile curvature; flag via kinks
        if nc.tensor._KINK_WATCH is not None and probs.data.max() > 0.85:
            nc.tensor._KINK_WATCH.append(0.0)
        return nc.tsum(nc.mul(probs, w))

    return forward, params


def _cross_entropy(rng):
    net, items, user, params = _rec_net(rng)
    truth = int(rng.integers(5))

    def forward():
        loss = net.loss(items, user, truth)
        # log curvature explodes for a tiny selected probability, and a
        # near-saturated softmax is fd-hostile either way; flag via kinks
        if nc.tensor._KINK_WATCH is not None:
            with nc.no_grad():
                probs = net.probabilities(items, user).data
            if probs[truth] < 0.15 or probs.max() > 0.85:
                nc.tensor._KINK_WATCH.append(0.0)
        return loss

    return forward, params


SUITE = [
    ("matmul", _matmul),
    ("add", _add),
    ("mul", _mul),
    ("neg", _neg),
    ("relu", _relu),
    ("sigmoid", _sigmoid),
    ("tanh", _tanh),
    ("log", _log),
    ("softmax", _softmax),
    ("layernorm", _layernorm),
    ("gated_attention_block", _gated_block),
    ("actor", _actor),
    ("critic", _critic),
    ("state_encoder", _state_encoder),
    ("recommender_scoring", _scoring),
    ("cross_entropy", _cross_entropy),
]


def run_suite(instances: int = INSTANCES, step: float = STEP,
              report=print) -> list[OpResult]:
    """Check every operation; one line per op, return all results."""
    results = []
    for name, maker in SUITE:
        start = time.perf_counter()
        result = _run_op(name, maker, instances=instances, step=step)
        results.append(result)
        status = "pass" if result.passed else "FAIL"
        report(f"{status}  {name:<24} max_rel_error={result.max_rel_error:.3e}  "
               f"instances={result.instances}  resamples={result.resamples}  "
               f"({time.perf_counter() - start:.1f}s)")
    return results
