"""Dataset ingestion, chronological sequence building, splitting, synthesis.

Input format: UTF-8 text, one interaction per line, `user<TAB>item<TAB>timestamp`
with integer epoch-second timestamps. Users keep their interactions in
timestamp order (ties keep file order, so ingestion is order-invariant only
for tie-free data); users with fewer than MIN_SEQUENCE_LENGTH interactions are
dropped. Dense integer ids are assigned by sorted external id, which makes the
mapping independent of line order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DataError, ParseError
from .numcore import rng as rngmod

MIN_SEQUENCE_LENGTH = 3  # one training item, one validation item, one test item


@dataclass(frozen=True)
class Catalog:
    """Bijection between external string ids and dense integer ids."""

    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    _user_index: dict[str, int] = field(repr=False, default_factory=dict)
    _item_index: dict[str, int] = field(repr=False, default_factory=dict)

    @staticmethod
    def from_ids(user_ids, item_ids) -> "Catalog":
        users = tuple(user_ids)
        items = tuple(item_ids)
        return Catalog(users, items,
                       {u: i for i, u in enumerate(users)},
                       {it: i for i, it in enumerate(items)})

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def num_items(self) -> int:
        return len(self.item_ids)

    def user_index(self, user_id: str) -> int:
        return self._user_index[user_id]

    def item_index(self, item_id: str) -> int:
        return self._item_index[item_id]


@dataclass
class InteractionSequence:
    user: int
    items: list[int]
    timestamps: list[int]

    def __post_init__(self):
        if len(self.items) != len(self.timestamps):
            raise ContractError("items and timestamps must align")
        if any(b < a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ContractError("timestamps must be non-decreasing")


@dataclass
class SplitEntry:
    user: int
    prefix: list[int]
    val_item: int
    test_item: int


@dataclass
class SplitDataset:
    entries: list[SplitEntry]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class IngestStats:
    num_lines: int = 0
    num_interactions: int = 0
    dropped_users: int = 0


def build_dataset(records) -> tuple[Catalog, list[InteractionSequence], IngestStats]:
    """Assemble per-user chronological sequences from (user, item, ts) records."""
    stats = IngestStats()
    raw: dict[str, list[tuple[int, str]]] = {}
    for user, item, ts in records:
        stats.num_lines += 1
        raw.setdefault(str(user), []).append((int(ts), str(item)))
    if not raw:
        raise DataError("empty dataset: no interactions")

    kept: dict[str, list[tuple[int, str]]] = {}
    for user in raw:
        if len(raw[user]) < MIN_SEQUENCE_LENGTH:
            stats.dropped_users += 1
            continue
        # stable sort keeps arrival order among equal timestamps
        kept[user] = sorted(raw[user], key=lambda pair: pair[0])
    if not kept:
        raise DataError("empty dataset: every user fell below the minimum length")

    user_ids = sorted(kept)
    item_ids = sorted({item for events in kept.values() for _, item in events})
    catalog = Catalog.from_ids(user_ids, item_ids)

    sequences = []
    for user in user_ids:
        events = kept[user]
        stats.num_interactions += len(events)
        sequences.append(InteractionSequence(
            user=catalog.user_index(user),
            items=[catalog.item_index(item) for _, item in events],
            timestamps=[ts for ts, _ in events],
        ))
    return catalog, sequences, stats


def _parse_tsv(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"line {lineno}: expected 3 tab-separated fields")
            user, item, ts_text = parts
            if not user or not item:
                raise ParseError(f"line {lineno}: empty user or item id")
            try:
                ts = int(ts_text)
            except ValueError:
                raise ParseError(f"line {lineno}: bad timestamp {ts_text!r}") from None
            yield user, item, ts


def load_tsv(path: str | Path) -> tuple[Catalog, list[InteractionSequence], IngestStats]:
    """Load interactions, returning the id catalog, per-user sequences and counts."""
    try:
        return build_dataset(_parse_tsv(path))
    except ParseError:
        raise
    except DataError as err:
        raise DataError(f"{err}: {path}") from None


def dump_tsv(catalog: Catalog, sequences: list[InteractionSequence],
             path: str | Path, stats: IngestStats | None = None) -> None:
    """Write the normalized dataset back out, plus a `.stats` sidecar."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            user = catalog.user_ids[seq.user]
            for item, ts in zip(seq.items, seq.timestamps):
                fh.write(f"{user}\t{catalog.item_ids[item]}\t{ts}\n")
    lengths = [len(s.items) for s in sequences]
    lines = [
        f"num_users={catalog.num_users}",
        f"num_items={catalog.num_items}",
        f"num_interactions={sum(lengths)}",
        f"min_length={min(lengths)}",
        f"max_length={max(lengths)}",
        f"mean_length={sum(lengths) / len(lengths):.6g}",
    ]
    if stats is not None:
        lines.append(f"dropped_users={stats.dropped_users}")
    path.with_suffix(path.suffix + ".stats").write_text("\n".join(lines) + "\n",
                                                        encoding="utf-8")


def leave_one_out(sequences: list[InteractionSequence]) -> SplitDataset:
    """Per user: items up to step t-2 train, second-last validates, last tests."""
    entries = []
    for seq in sequences:
        if len(seq.items) < MIN_SEQUENCE_LENGTH:
            raise ContractError(f"user {seq.user}: sequence shorter than "
                                f"{MIN_SEQUENCE_LENGTH}; filter upstream")
        entries.append(SplitEntry(
            user=seq.user,
            prefix=list(seq.items[:-2]),
            val_item=seq.items[-2],
            test_item=seq.items[-1],
        ))
    return SplitDataset(entries)


@dataclass(frozen=True)
class SyntheticSpec:
    num_users: int = 200
    num_items: int = 500
    seq_length_range: tuple[int, int] = (20, 40)
    window_choices: tuple[int, ...] = (2, 20)
    noise_rate: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if self.num_items < 10:
            raise ConfigError("synthetic corpus needs at least 10 items")
        if self.num_users < 1:
            raise ConfigError("num_users must be positive")
        if min(self.window_choices) < 1:
            raise ConfigError("dependence windows must be >= 1")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ConfigError("noise_rate must lie in [0, 1]")
        lo, hi = self.seq_length_range
        if lo < MIN_SEQUENCE_LENGTH or hi < lo:
            raise ConfigError(f"seq_length_range must satisfy "
                              f"{MIN_SEQUENCE_LENGTH} <= min <= max")


def _next_item(window: list[int]) -> int:
    # copy the item exactly w steps back (the window's oldest element): a
    # deterministic function of the last w items whose dependence length is
    # exact ground truth — a model reading fewer than w recent items cannot
    # see the predictive item at all
    return window[0]


def generate_synthetic(spec: SyntheticSpec) -> tuple[Catalog, list[InteractionSequence], dict[int, int]]:
    """Synthesize a corpus whose per-user dependence window is known ground truth.

    Each user's next item is a deterministic seeded-hash function of their
    last w_u items with probability 1 - noise_rate, uniform-random otherwise.
    The hidden user -> w_u map is returned for diagnostics only.
    """
    spec.validate()
    width = len(str(max(spec.num_users, spec.num_items) - 1))
    catalog = Catalog.from_ids(
        [f"u{idx:0{width}d}" for idx in range(spec.num_users)],
        [f"i{idx:0{width}d}" for idx in range(spec.num_items)],
    )
    windows: dict[int, int] = {}
    sequences = []
    for user in range(spec.num_users):
        rng = rngmod.stream(spec.seed, "synthetic", user)
        w = int(rng.choice(np.asarray(spec.window_choices)))
        windows[user] = w
        length = int(rng.integers(spec.seq_length_range[0], spec.seq_length_range[1] + 1))
        # seed with w independent items so the pool is at least window-sized
        items = [int(rng.integers(spec.num_items)) for _ in range(min(w, length))]
        while len(items) < length:
            if rng.random() < spec.noise_rate:
                items.append(int(rng.integers(spec.num_items)))
            else:
                items.append(_next_item(items[-w:]))
        sequences.append(InteractionSequence(
            user=user, items=items, timestamps=list(range(length))))
    return catalog, sequences, windows
