"""Held-out evaluation and the fixed-vs-adaptive sequence-length study.

Evaluation ranks the full catalog (no sampled negatives): for each user the
model sees the history before the held-out item, picks a sequence length
(noiseless actor in adaptive mode, the configured constant otherwise), scores
the catalog and accumulates NDCG@K / HR@K. The comparison study trains one
model per (mode, seed) cell and aggregates mean and standard deviation per
row; cells fail independently.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import numcore as nc
from .agent import adapt_sequence
from .config import RunConfig, config_hash
from .data import SplitDataset
from .errors import AdaptrecError, ContractError
from .metrics import MetricsReport, PerUserResult, rank_of


def evaluate(model, split: SplitDataset, which: str = "test", ks=(5, 10),
             include_per_user: bool = False) -> MetricsReport:
    """Score every user's held-out item for the requested split role."""
    if which not in ("val", "test"):
        raise ContractError(f"split role must be val or test, got {which!r}")
    if not split.entries:
        raise ContractError("cannot evaluate an empty split")
    ks = tuple(ks)
    config = model.config
    adaptive = config.mode == "adaptive"
    start = time.perf_counter()

    ndcg = {k: 0.0 for k in ks}
    hr = {k: 0.0 for k in ks}
    lengths: list[int] = []
    per_user: list[PerUserResult] = []
    for entry in split.entries:
        if which == "val":
            history, truth = entry.prefix, entry.val_item
        else:
            history, truth = entry.prefix + [entry.val_item], entry.test_item
        t = len(history)
        if adaptive:
            with nc.no_grad():
                state = model.encoder.encode_all(history).data[-1]
            length = model.actor.act(state, t).length
        else:
            length = min(config.fixed_length, t)
        lengths.append(length)
        ranked = model.recommender.score_next(adapt_sequence(history, length),
                                              entry.user)
        rank = rank_of(ranked, truth)
        for k in ks:
            if rank <= k:
                ndcg[k] += 1.0 / np.log2(rank + 1)
                hr[k] += 1.0
        if include_per_user:
            per_user.append(PerUserResult(user=entry.user, truth=truth, rank=rank,
                                          chosen_length=length, input_length=t))

    n = len(split.entries)
    arr = np.asarray(lengths, dtype=np.float64)
    return MetricsReport(
        ndcg={k: ndcg[k] / n for k in ks},
        hr={k: hr[k] / n for k in ks},
        num_users=n,
        mean_chosen_length=float(arr.mean()) if adaptive else None,
        std_chosen_length=float(arr.std()) if adaptive else None,
        seed=config.seed,
        config_hash=config_hash(config),
        split=which,
        wall_clock=time.perf_counter() - start,
        per_user=per_user,
    )


@dataclass
class ComparisonRow:
    mode: str                   # "fixed" or "adaptive"
    length: int | None          # None for the adaptive row
    ndcg_mean: float = 0.0
    ndcg_std: float = 0.0
    hr_mean: float = 0.0
    hr_std: float = 0.0
    mean_chosen_length: float | None = None
    failures: int = 0
    runs: int = 0

    def label(self) -> str:
        return "adaptive" if self.mode == "adaptive" else f"fixed-{self.length}"


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]
    k: int
    config_hash: str
    repeats: int
    adaptive_reports: list[MetricsReport] = field(default_factory=list)

    def to_lines(self) -> str:
        lines = [f"k={self.k} repeats={self.repeats} config_hash={self.config_hash}"]
        for row in self.rows:
            lines.append(
                f"mode={row.label()} ndcg_mean={row.ndcg_mean!r} ndcg_std={row.ndcg_std!r} "
                f"hr_mean={row.hr_mean!r} hr_std={row.hr_std!r} "
                f"runs={row.runs} failures={row.failures}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        lines = [f"{'row':>12}  NDCG@{self.k} (mean±std)   HR@{self.k} (mean±std)   runs"]
        for row in self.rows:
            lines.append(f"{row.label():>12}  {row.ndcg_mean:.4f}±{row.ndcg_std:.4f}      "
                         f"{row.hr_mean:.4f}±{row.hr_std:.4f}      {row.runs}"
                         + (f"  (len {row.mean_chosen_length:.2f})"
                            if row.mean_chosen_length is not None else ""))
        return "\n".join(lines) + "\n"

    def series(self) -> tuple[str, str]:
        """Two-column (l, NDCG@k) texts: fixed rows, and the adaptive constant."""
        fixed_rows = [r for r in self.rows if r.mode == "fixed"]
        adaptive = next((r for r in self.rows if r.mode == "adaptive"), None)
        fixed_text = "".join(f"{r.length} {r.ndcg_mean!r}\n" for r in fixed_rows)
        adaptive_text = ""
        if adaptive is not None:
            adaptive_text = "".join(f"{r.length} {adaptive.ndcg_mean!r}\n"
                                    for r in fixed_rows)
        return fixed_text, adaptive_text


def compare_lengths(split: SplitDataset, base_config: RunConfig, num_users: int,
                    num_items: int, l_grid, repeats: int = 3,
                    k: int = 10) -> ComparisonTable:
    """Train fixed(l) for each l plus one adaptive setup, `repeats` seeds each."""
    from .trainer import train

    if not l_grid:
        raise ContractError("l_grid must be nonempty")
    if repeats < 1:
        raise ContractError("repeats must be >= 1")

    variants: list[tuple[str, int | None, RunConfig]] = []
    for length in l_grid:
        variants.append(("fixed", int(length),
                         replace(base_config, mode="fixed", fixed_length=int(length))))
    variants.append(("adaptive", None, replace(base_config, mode="adaptive")))

    table = ComparisonTable(rows=[], k=k, config_hash=config_hash(base_config),
                            repeats=repeats)
    for mode, length, variant in variants:
        ndcgs, hrs, chosen = [], [], []
        failures = 0
        for rep in range(repeats):
            cell_config = replace(variant, seed=base_config.seed + rep)
            try:
                _, model = train(split, cell_config, num_users, num_items)
                report = evaluate(model, split, which="test", ks=(k,),
                                  include_per_user=(mode == "adaptive"))
            except AdaptrecError:
                failures += 1
                continue
            ndcgs.append(report.ndcg[k])
            hrs.append(report.hr[k])
            if mode == "adaptive":
                chosen.append(report.mean_chosen_length)
                table.adaptive_reports.append(report)
        row = ComparisonRow(mode=mode, length=length, failures=failures,
                            runs=len(ndcgs))
        if ndcgs:
            row.ndcg_mean = float(np.mean(ndcgs))
            row.ndcg_std = float(np.std(ndcgs))
            row.hr_mean = float(np.mean(hrs))
            row.hr_std = float(np.std(hrs))
            if chosen:
                row.mean_chosen_length = float(np.mean(chosen))
        table.rows.append(row)
    return table
