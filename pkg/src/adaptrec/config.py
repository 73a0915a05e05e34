"""Run configuration: documented keys, flat key=value files, provenance hash.

Defaults follow the reference setup where one exists (embedding width 100,
state width 150, discount 0.82, 100 epochs, Adam) and declared choices
everywhere else. A config hash over the canonicalized key=value bytes names
run directories.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    # model dimensions
    embed_dim: int = 100          # item and user embedding width (kept equal)
    state_dim: int = 150          # encoded state width
    ff_dim: int = 200             # encoder feed-forward width
    num_blocks: int = 1           # gated attention blocks per network
    rec_ff_dim: int = 400         # recommender feed-forward width
    actor_dim: int = 64           # actor hidden width
    critic_dim: int = 64          # critic hidden width
    max_seq_len: int = 200        # hard cap on encoded sequence length
    init_scale: float = 0.05      # uniform(-s, s) parameter initialization
    dropout: float = 0.0          # input-embedding dropout rate
    shared_embeddings: bool = True  # one table for encoder and recommender

    # reinforcement-learning configuration
    gamma: float = 0.82
    exploration_sigma: float = 2.0  # initial stddev of raw-action noise
    reward_k: int = 10
    reward_mode: str = "ndcg"     # "ndcg" (rank-discounted) or "hit"

    # training
    mode: str = "adaptive"        # "adaptive" or "fixed"
    fixed_length: int = 50        # sequence length used in fixed mode
    epochs: int = 100
    batch_size: int = 128
    lr: float = 1e-3
    actor_lr: float = 1e-4        # DDPG-style slow policy updates
    lambda_critic: float = 1.0
    lambda_actor: float = 1.0
    length_penalty: float = 0.05  # actor's preference for shorter sufficient context
    actor_warmup_epochs: int = 2   # critic-only epochs before policy updates
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.embed_dim < 1 or self.state_dim < 1:
            raise ConfigError("embedding and state dimensions must be positive")
        if self.mode not in ("adaptive", "fixed"):
            raise ConfigError(f"mode must be adaptive or fixed, got {self.mode!r}")
        if self.reward_mode not in ("ndcg", "hit"):
            raise ConfigError(f"reward_mode must be ndcg or hit, got {self.reward_mode!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.mode == "fixed" and self.fixed_length < 1:
            raise ConfigError("fixed_length must be >= 1")
        if self.max_seq_len < 1:
            raise ConfigError("max_seq_len must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.reward_k < 1:
            raise ConfigError("reward_k must be >= 1")
        if self.actor_warmup_epochs < 0:
            raise ConfigError("actor_warmup_epochs must be >= 0")
        if self.actor_lr < 0 or self.lr < 0:
            raise ConfigError("learning rates must be nonnegative")
        if self.length_penalty < 0:
            raise ConfigError("length_penalty must be nonnegative")
        return self


_BOOL_WORDS = {"true": True, "1": True, "yes": True,
               "false": False, "0": False, "no": False}


def _parse_value(name: str, text: str, kind: type):
    if kind is bool:
        if text.lower() not in _BOOL_WORDS:
            raise ConfigError(f"{name}: expected true/false, got {text!r}")
        return _BOOL_WORDS[text.lower()]
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{name}: expected {kind.__name__}, got {text!r}") from None


def load_config(path: str | Path, **overrides) -> RunConfig:
    """Parse a key=value config file; unknown keys are errors."""
    known = {f.name: f.type for f in fields(RunConfig)}
    kinds = {name: type(getattr(RunConfig(), name)) for name in known}
    values: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key=value")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in kinds:
            raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, kinds[key])
    values.update(overrides)
    return RunConfig(**values).validate()


def canonical_text(config: RunConfig) -> str:
    """Full resolved configuration as sorted key=value lines."""
    pairs = []
    for f in sorted(fields(config), key=lambda f: f.name):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        pairs.append(f"{f.name}={value}")
    return "\n".join(pairs) + "\n"


def config_hash(config: RunConfig, *extra: str) -> str:
    """12-hex-character provenance hash of the canonical config plus context."""
    payload = canonical_text(config) + "".join(f"{part}\n" for part in extra)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(canonical_text(config), encoding="utf-8")
