"""Top-K ranking metrics and the evaluation report record."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ContractError
from .recommender import RankedList


def rank_of(ranked: RankedList, truth: int) -> int:
    """1-based position of the true item in the ranking."""
    n = ranked.order.shape[0]
    if not 0 <= truth < n:
        raise ContractError(f"truth item {truth} outside the catalog")
    hits = (ranked.order == truth).nonzero()[0]
    if hits.shape[0] != 1:
        raise ContractError("ranking is not a permutation of the catalog")
    return int(hits[0]) + 1


def ndcg_at_k(ranked: RankedList, truth: int, k: int) -> float:
    """Single-relevant-item NDCG: 1/log2(rank + 1) inside the cutoff, else 0."""
    _check_k(ranked, k)
    rank = rank_of(ranked, truth)
    return 1.0 / math.log2(rank + 1) if rank <= k else 0.0


def hr_at_k(ranked: RankedList, truth: int, k: int) -> float:
    _check_k(ranked, k)
    return 1.0 if rank_of(ranked, truth) <= k else 0.0


def _check_k(ranked: RankedList, k: int) -> None:
    if not 1 <= k <= ranked.order.shape[0]:
        raise ContractError(f"K={k} outside [1, {ranked.order.shape[0]}]")


@dataclass
class PerUserResult:
    user: int
    truth: int
    rank: int
    chosen_length: int
    input_length: int


@dataclass
class MetricsReport:
    ndcg: dict[int, float]
    hr: dict[int, float]
    num_users: int
    mean_chosen_length: float | None = None
    std_chosen_length: float | None = None
    seed: int = 0
    config_hash: str = ""
    split: str = "test"
    wall_clock: float = 0.0          # excluded from canonical lines
    per_user: list[PerUserResult] = field(default_factory=list)

    def to_lines(self) -> str:
        """Canonical line-delimited record; deterministic for identical runs."""
        lines = [f"split={self.split}", f"num_users={self.num_users}",
                 f"seed={self.seed}", f"config_hash={self.config_hash}"]
        for k in sorted(self.ndcg):
            lines.append(f"ndcg@{k}={self.ndcg[k]!r}")
        for k in sorted(self.hr):
            lines.append(f"hr@{k}={self.hr[k]!r}")
        if self.mean_chosen_length is not None:
            lines.append(f"mean_chosen_length={self.mean_chosen_length!r}")
            lines.append(f"std_chosen_length={self.std_chosen_length!r}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        parts = [f"{self.split}: users={self.num_users}"]
        for k in sorted(self.ndcg):
            parts.append(f"NDCG@{k}={self.ndcg[k]:.4f} HR@{k}={self.hr[k]:.4f}")
        if self.mean_chosen_length is not None:
            parts.append(f"len={self.mean_chosen_length:.2f}±{self.std_chosen_length:.2f}")
        parts.append(f"wall={self.wall_clock:.1f}s")
        return "  ".join(parts)
