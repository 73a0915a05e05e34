"""Actor-critic agent choosing a per-step sequence length, plus its offline
episodic environment over logged interaction sequences.

The actor maps the state vector to a nonnegative raw length through
relu(sigmoid(s W1) W2); the executed length is round-and-clamp of the raw
value into [1, t], with Gaussian exploration noise on the raw value during
training only. The critic scores (state ⊕ normalized action) through the same
two-layer shape. Transitions follow the log deterministically: the next state
always encodes the prefix extended by the logged item, regardless of what was
predicted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .encoder import StateEncoder, StateVector
from .errors import ContractError
from .metrics import hr_at_k, ndcg_at_k
from .numcore import Tensor
from .recommender import RankedList, RecommenderNet


@dataclass
class Action:
    raw: float     # nonnegative actor output (after exploration noise)
    length: int    # executed sequence length in [1, t]


def action_from_raw(raw: float, t: int) -> Action:
    """Round-and-clamp the raw actor output into a valid length."""
    if t < 1:
        raise ContractError("prefix length must be >= 1")
    raw = max(0.0, float(raw))
    return Action(raw=raw, length=int(min(max(math.floor(raw + 0.5), 1), t)))


def adapt_sequence(items: list[int], length: int) -> list[int]:
    """The suffix holding the `length` latest interactions, order preserved."""
    if not 1 <= length <= len(items):
        raise ContractError(f"length {length} outside [1, {len(items)}]")
    return list(items[len(items) - length:])


class Actor:
    """Two-layer MLP from state vector to raw sequence length.

    Output weights start nonnegative (the sigmoid hidden layer is strictly
    positive, so the relu head is alive) and sized so the initial raw action
    sits mid-range (~max_seq_len/2). Starting optimistic matters: a
    length-one start is a cold-start deadlock where the recommender never
    sees long suffixes, the critic never learns their value, and the policy
    gradient has nothing to climb.
    """

    def __init__(self, state_dim: int, hidden_dim: int, init_scale: float,
                 seed: int, max_seq_len: int = 40, namespace: str = "actor"):
        rng = nc.stream(seed, namespace)
        self.w1 = Tensor(nc.uniform_init(rng, (state_dim, hidden_dim), init_scale),
                         requires_grad=True)
        mean_w2 = max_seq_len / hidden_dim
        self.w2 = Tensor(rng.uniform(0.0, 2.0 * mean_w2, size=(hidden_dim, 1)),
                         requires_grad=True)
        self.namespace = namespace

    def forward_batch(self, states: Tensor) -> Tensor:
        """Raw actions for a stack of states, rows independent: (n, 1)."""
        hidden = nc.sigmoid(nc.matmul(states, self.w1))
        return nc.relu(nc.matmul(hidden, self.w2))

    def forward(self, state: Tensor) -> Tensor:
        """Differentiable raw action as a 1x1 tensor."""
        return self.forward_batch(nc.as_row(state))

    def raw_batch(self, state_values: np.ndarray) -> np.ndarray:
        with nc.no_grad():
            return self.forward_batch(Tensor(state_values)).data[:, 0]

    def act(self, state_values: np.ndarray, t: int, noise_sigma: float = 0.0,
            rng: np.random.Generator | None = None) -> Action:
        raw = float(self.raw_batch(state_values[None, :])[0])
        if noise_sigma > 0.0:
            if rng is None:
                raise ContractError("exploration noise requires a random stream")
            raw += noise_sigma * rng.standard_normal()
        return action_from_raw(raw, t)

    def named_params(self) -> dict[str, Tensor]:
        return {f"{self.namespace}.w1": self.w1, f"{self.namespace}.w2": self.w2}


class Critic:
    """Two-layer MLP from (state ⊕ normalized action) to a nonnegative Q."""

    def __init__(self, state_dim: int, hidden_dim: int, max_seq_len: int,
                 init_scale: float, seed: int, namespace: str = "critic"):
        rng = nc.stream(seed, namespace)
        self.w1 = Tensor(nc.uniform_init(rng, (state_dim + 1, hidden_dim), init_scale),
                         requires_grad=True)
        # nonnegative output weights, same liveness argument as the actor
        self.w2 = Tensor(np.abs(nc.uniform_init(rng, (hidden_dim, 1), init_scale)),
                         requires_grad=True)
        self.max_seq_len = max_seq_len
        self.namespace = namespace

    def forward_batch(self, states: Tensor, action_raws) -> Tensor:
        """Q values for stacked (state, raw action) rows: (n, 1).

        `action_raws` is an (n, 1) tensor of raw actions (the actor's output,
        for the policy-gradient path) or an array-like of floats; raw values
        are scaled by 1/max_seq_len before concatenation.
        """
        if isinstance(action_raws, Tensor):
            a = nc.mul(action_raws, 1.0 / self.max_seq_len)
        else:
            col = np.asarray(action_raws, dtype=np.float64).reshape(-1, 1)
            a = Tensor(col / self.max_seq_len)
        joined = nc.concat(states, a)
        hidden = nc.sigmoid(nc.matmul(joined, self.w1))
        return nc.relu(nc.matmul(hidden, self.w2))

    def forward(self, state: Tensor, action_raw) -> Tensor:
        """Differentiable Q as a 1x1 tensor for a single (state, action)."""
        if isinstance(action_raw, Tensor):
            raws = action_raw if action_raw.data.ndim == 2 else nc.as_row(action_raw)
        else:
            raws = [float(action_raw)]
        return self.forward_batch(nc.as_row(state), raws)

    def value_batch(self, state_values: np.ndarray, action_raws) -> np.ndarray:
        with nc.no_grad():
            return self.forward_batch(Tensor(state_values), action_raws).data[:, 0]

    def value(self, state_values: np.ndarray, action_raw: float) -> float:
        return float(self.value_batch(state_values[None, :], [action_raw])[0])

    def named_params(self) -> dict[str, Tensor]:
        return {f"{self.namespace}.w1": self.w1, f"{self.namespace}.w2": self.w2}


def compute_reward(ranked: RankedList, truth: int, reward_k: int,
                   mode: str = "ndcg") -> float:
    """Per-step accuracy of the recommendation used as the agent's reward."""
    if mode == "ndcg":
        return ndcg_at_k(ranked, truth, reward_k)
    if mode == "hit":
        return hr_at_k(ranked, truth, reward_k)
    raise ContractError(f"unknown reward mode {mode!r}")


def td_target(reward: float, gamma: float, q_next: float | None) -> float:
    """Bootstrapped critic target; q_next is None at episode end."""
    if not 0.0 <= gamma < 1.0:
        raise ContractError("gamma must lie in [0, 1)")
    return reward if q_next is None else reward + gamma * q_next


@dataclass
class Transition:
    user: int
    t: int                      # prefix length when the action was taken
    items: tuple[int, ...]      # full logged prefix of the episode
    state: StateVector
    action: Action
    reward: float
    next_state: StateVector | None
    terminal: bool

    @property
    def truth(self) -> int:
        """The logged next item this step was scored against."""
        return self.items[self.t]


def run_episode(user: int, prefix: list[int], *, encoder: StateEncoder,
                actor: Actor, recommender: RecommenderNet, reward_k: int,
                reward_mode: str = "ndcg", noise_sigma: float = 0.0,
                rng: np.random.Generator | None = None, mode: str = "eval",
                fixed_length: int | None = None,
                with_rewards: bool = True) -> list[Transition]:
    """Replay one user's logged prefix as an episode of length len(prefix)-1.

    Returns [] when the prefix is too short to produce a transition (the
    caller counts skips). In fixed mode the actor is bypassed and rewards may
    be skipped by the trainer, which does not consume them.
    """
    if mode not in ("train", "eval"):
        raise ContractError(f"unknown episode mode {mode!r}")
    if len(prefix) < 2:
        return []
    sigma = noise_sigma if mode == "train" else 0.0
    items = tuple(prefix)
    raws = None
    states = None
    if fixed_length is None:
        with nc.no_grad():
            states = encoder.encode_all(prefix).data
        raws = actor.raw_batch(states[:-1])
        if sigma > 0.0:
            if rng is None:
                raise ContractError("exploration noise requires a random stream")
            raws = raws + sigma * rng.standard_normal(raws.shape[0])

    transitions: list[Transition] = []
    last_t = len(prefix) - 1
    for t in range(1, len(prefix)):
        if fixed_length is None:
            state = StateVector(values=states[t - 1].copy(), user=user, step=t)
            action = action_from_raw(raws[t - 1], t)
        else:
            state = StateVector(values=np.zeros(0), user=user, step=t)
            action = Action(raw=float(fixed_length), length=min(fixed_length, t))
        reward = 0.0
        if with_rewards:
            ranked = recommender.score_next(adapt_sequence(prefix[:t], action.length), user)
            reward = compute_reward(ranked, prefix[t], reward_k, reward_mode)
        terminal = t == last_t
        next_state = None
        if not terminal and fixed_length is None:
            next_state = StateVector(values=states[t].copy(), user=user, step=t + 1)
        transitions.append(Transition(user=user, t=t, items=items, state=state,
                                      action=action, reward=reward,
                                      next_state=next_state, terminal=terminal))
    return transitions


def transitions_to_lines(transitions: list[Transition],
                         critic: Critic | None = None) -> str:
    """Diagnostic export: one `user t l reward q terminal` record per line."""
    lines = []
    for tr in transitions:
        q = 0.0
        if critic is not None and tr.state.values.size:
            q = critic.value(tr.state.values, tr.action.raw)
        lines.append(f"user={tr.user} t={tr.t} l={tr.action.length} "
                     f"reward={tr.reward!r} q={q!r} terminal={int(tr.terminal)}")
    return "\n".join(lines) + ("\n" if lines else "")
