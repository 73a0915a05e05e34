"""Embedding tables and the prefix-to-state network.

The state network is a causal single-head attention block in which GRU-style
gates replace both residual connections (the stabilization trick from gated
transformer variants used for RL), followed by a linear projection of the
last position into the state space. One forward over a length-t prefix yields
the states of all t steps at once, which episode code exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import CapacityError, ContractError
from .numcore import Tensor


@dataclass
class StateVector:
    """Encoded state of one user at one step, outside the autodiff graph."""

    values: np.ndarray
    user: int
    step: int


_MASK_CACHE: dict[int, np.ndarray] = {}


def causal_mask(t: int) -> Tensor:
    """Additive mask: position j may attend to positions <= j only."""
    if t not in _MASK_CACHE:
        _MASK_CACHE[t] = np.triu(np.full((t, t), -1e9), k=1)
    return Tensor(_MASK_CACHE[t])


class EmbeddingTable:
    """Item, user and learned positional embeddings, one shared width."""

    def __init__(self, num_users: int, num_items: int, embed_dim: int,
                 max_seq_len: int, init_scale: float, seed: int, namespace: str = "emb"):
        self.embed_dim = embed_dim
        self.max_seq_len = max_seq_len
        self.namespace = namespace
        self.item = Tensor(nc.uniform_init(nc.stream(seed, namespace, "item"),
                                           (num_items, embed_dim), init_scale),
                           requires_grad=True)
        self.user = Tensor(nc.uniform_init(nc.stream(seed, namespace, "user"),
                                           (num_users, embed_dim), init_scale),
                           requires_grad=True)
        self.pos = Tensor(nc.uniform_init(nc.stream(seed, namespace, "pos"),
                                          (max_seq_len, embed_dim), init_scale),
                          requires_grad=True)

    def embed_items(self, items) -> Tensor:
        """Rows item_emb[i_j] + pos_emb[j] for the given id sequence."""
        t = len(items)
        if t == 0:
            raise ContractError("cannot embed an empty sequence")
        if t > self.max_seq_len:
            raise CapacityError(f"sequence length {t} exceeds max_seq_len "
                                f"{self.max_seq_len}")
        return nc.add(nc.gather_rows(self.item, items),
                      nc.gather_rows(self.pos, range(t)))

    def user_vector(self, user: int) -> Tensor:
        return nc.take_row(self.user, user)

    def named_params(self) -> dict[str, Tensor]:
        ns = self.namespace
        return {f"{ns}.item": self.item, f"{ns}.user": self.user, f"{ns}.pos": self.pos}


class _Gate:
    """GRU-style gate: out = (1 - z) * residual + z * candidate."""

    def __init__(self, dim: int, init_scale: float, seed: int, namespace: str):
        rng = nc.stream(seed, namespace)
        mat = lambda: Tensor(nc.uniform_init(rng, (dim, dim), init_scale), requires_grad=True)
        self.w_r, self.u_r = mat(), mat()
        self.w_z, self.u_z = mat(), mat()
        self.w_h, self.u_h = mat(), mat()
        self.b_r = Tensor(np.zeros(dim), requires_grad=True)
        # negative update bias starts the block near the identity map
        self.b_z = Tensor(np.full(dim, -2.0), requires_grad=True)
        self.b_h = Tensor(np.zeros(dim), requires_grad=True)
        self.namespace = namespace

    def __call__(self, x: Tensor, y: Tensor) -> Tensor:
        r = nc.sigmoid(nc.add_rows(nc.add(nc.matmul(x, self.w_r), nc.matmul(y, self.u_r)),
                                   self.b_r))
        z = nc.sigmoid(nc.add_rows(nc.add(nc.matmul(x, self.w_z), nc.matmul(y, self.u_z)),
                                   self.b_z))
        cand = nc.tanh(nc.add_rows(nc.add(nc.matmul(nc.mul(r, x), self.w_h),
                                          nc.matmul(y, self.u_h)), self.b_h))
        return nc.add(nc.mul(nc.sub(1.0, z), x), nc.mul(z, cand))

    def named_params(self) -> dict[str, Tensor]:
        ns = self.namespace
        return {f"{ns}.w_r": self.w_r, f"{ns}.u_r": self.u_r, f"{ns}.b_r": self.b_r,
                f"{ns}.w_z": self.w_z, f"{ns}.u_z": self.u_z, f"{ns}.b_z": self.b_z,
                f"{ns}.w_h": self.w_h, f"{ns}.u_h": self.u_h, f"{ns}.b_h": self.b_h}


class GatedAttentionBlock:
    """Pre-norm causal self-attention and feed-forward, both gated.

    Attention scores combine content similarity with a learned
    relative-distance term (query i against the key i-j steps behind it), so
    "k steps back" means the same thing at every position and for every
    input length. Distance embeddings are translation-invariant, which keeps
    the one-forward-per-prefix property intact.
    """

    def __init__(self, dim: int, ff_dim: int, init_scale: float, seed: int,
                 namespace: str, max_seq_len: int = 256):
        self.dim = dim
        rng = nc.stream(seed, namespace)
        mat = lambda shape: Tensor(nc.uniform_init(rng, shape, init_scale), requires_grad=True)
        self.w_q, self.w_k, self.w_v = mat((dim, dim)), mat((dim, dim)), mat((dim, dim))
        self.rel_pos = mat((max_seq_len, dim))
        self.ln1_g = Tensor(np.ones(dim), requires_grad=True)
        self.ln1_b = Tensor(np.zeros(dim), requires_grad=True)
        self.ln2_g = Tensor(np.ones(dim), requires_grad=True)
        self.ln2_b = Tensor(np.zeros(dim), requires_grad=True)
        self.w_ff1, self.b_ff1 = mat((dim, ff_dim)), Tensor(np.zeros(ff_dim), requires_grad=True)
        self.w_ff2, self.b_ff2 = mat((ff_dim, dim)), Tensor(np.zeros(dim), requires_grad=True)
        self.gate_attn = _Gate(dim, init_scale, seed, f"{namespace}.gate_attn")
        self.gate_ff = _Gate(dim, init_scale, seed, f"{namespace}.gate_ff")
        self.namespace = namespace

    def _scores(self, x: Tensor) -> Tensor:
        t = x.shape[0]
        a_in = nc.layernorm(x, self.ln1_g, self.ln1_b)
        q = nc.matmul(a_in, self.w_q)
        k = nc.matmul(a_in, self.w_k)
        content = nc.matmul(q, nc.transpose(k))
        by_distance = nc.matmul(q, nc.transpose(nc.gather_rows(self.rel_pos, range(t))))
        scores = nc.mul(nc.add(content, nc.gather_by_distance(by_distance)),
                        1.0 / math.sqrt(self.dim))
        return nc.add(scores, causal_mask(t)), a_in

    def attention_weights(self, x: Tensor) -> Tensor:
        """Causal softmax attention matrix (t x t) for inspection and tests."""
        scores, _ = self._scores(x)
        return nc.softmax(scores)

    def __call__(self, x: Tensor) -> Tensor:
        scores, a_in = self._scores(x)
        v = nc.matmul(a_in, self.w_v)
        attn = nc.matmul(nc.softmax(scores), v)
        h = self.gate_attn(x, nc.relu(attn))

        f_in = nc.layernorm(h, self.ln2_g, self.ln2_b)
        hidden = nc.relu(nc.add_rows(nc.matmul(f_in, self.w_ff1), self.b_ff1))
        ff = nc.add_rows(nc.matmul(hidden, self.w_ff2), self.b_ff2)
        return self.gate_ff(h, nc.relu(ff))

    def named_params(self) -> dict[str, Tensor]:
        ns = self.namespace
        params = {f"{ns}.w_q": self.w_q, f"{ns}.w_k": self.w_k, f"{ns}.w_v": self.w_v,
                  f"{ns}.rel_pos": self.rel_pos,
                  f"{ns}.ln1_g": self.ln1_g, f"{ns}.ln1_b": self.ln1_b,
                  f"{ns}.ln2_g": self.ln2_g, f"{ns}.ln2_b": self.ln2_b,
                  f"{ns}.w_ff1": self.w_ff1, f"{ns}.b_ff1": self.b_ff1,
                  f"{ns}.w_ff2": self.w_ff2, f"{ns}.b_ff2": self.b_ff2}
        params.update(self.gate_attn.named_params())
        params.update(self.gate_ff.named_params())
        return params


class StateEncoder:
    """Map a full interaction prefix to per-step state vectors."""

    def __init__(self, embeddings: EmbeddingTable, state_dim: int, ff_dim: int,
                 num_blocks: int, init_scale: float, seed: int, dropout: float = 0.0,
                 namespace: str = "enc"):
        self.embeddings = embeddings
        self.dropout = dropout
        dim = embeddings.embed_dim
        self.blocks = [GatedAttentionBlock(dim, ff_dim, init_scale, seed,
                                           f"{namespace}.block{i}",
                                           max_seq_len=embeddings.max_seq_len)
                       for i in range(num_blocks)]
        self.w_out = Tensor(nc.uniform_init(nc.stream(seed, namespace, "w_out"),
                                            (dim, state_dim), init_scale),
                            requires_grad=True)
        self.namespace = namespace

    def encode_all(self, items, drop_rng: np.random.Generator | None = None) -> Tensor:
        """States for every prefix length at once: row t-1 encodes items[:t]."""
        h = self.embeddings.embed_items(items)
        if self.dropout > 0.0 and drop_rng is not None:
            keep = 1.0 - self.dropout
            mask = (drop_rng.random(h.shape) < keep) / keep
            h = nc.mul(h, Tensor(mask))
        for block in self.blocks:
            h = block(h)
        return nc.matmul(h, self.w_out)

    def state_encode(self, items) -> Tensor:
        """State vector of the full prefix (the last encoded position)."""
        if len(items) == 0:
            raise ContractError("state_encode requires a nonempty prefix")
        states = self.encode_all(items)
        return nc.take_row(states, len(items) - 1)

    def named_params(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for block in self.blocks:
            params.update(block.named_params())
        params[f"{self.namespace}.w_out"] = self.w_out
        return params
