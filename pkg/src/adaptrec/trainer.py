"""Joint training: Q-weighted recommendation loss, critic TD loss, actor
policy gradient, three decoupled Adam groups, epoch loop with validation.

Per mini-batch of transitions three updates run in order: (1) the recommender
and embeddings descend the mean of cross-entropy times the detached Q weight,
(2) the critic and the state encoder feeding it descend the squared TD error
against frozen bootstrap targets, (3) the actor ascends the critic's value of
its own noiseless action. Detaching Q in update (1) is what keeps the critic
from being dragged toward zero through the product loss; it changes only via
its TD objective.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .agent import Actor, Critic, Transition, adapt_sequence, run_episode, td_target
from .config import RunConfig
from .data import SplitDataset
from .encoder import EmbeddingTable, StateEncoder
from .errors import ContractError, NumericError
from .numcore import Adam, Tape, Tensor
from .recommender import RecommenderNet


class ModelState:
    """All trainable components plus the sizes they were built for."""

    def __init__(self, config: RunConfig, num_users: int, num_items: int):
        config.validate()
        self.config = config
        self.num_users = num_users
        self.num_items = num_items
        seed = config.seed
        self.embeddings = EmbeddingTable(num_users, num_items, config.embed_dim,
                                         config.max_seq_len, config.init_scale,
                                         seed, namespace="emb")
        if config.shared_embeddings:
            rec_embeddings = self.embeddings
        else:
            rec_embeddings = EmbeddingTable(num_users, num_items, config.embed_dim,
                                            config.max_seq_len, config.init_scale,
                                            seed, namespace="rec_emb")
        self.rec_embeddings = rec_embeddings
        self.encoder = StateEncoder(self.embeddings, config.state_dim, config.ff_dim,
                                    config.num_blocks, config.init_scale, seed,
                                    dropout=config.dropout)
        self.actor = Actor(config.state_dim, config.actor_dim, config.init_scale,
                           seed, max_seq_len=config.max_seq_len)
        self.critic = Critic(config.state_dim, config.critic_dim, config.max_seq_len,
                             config.init_scale, seed)
        self.recommender = RecommenderNet(rec_embeddings, config.rec_ff_dim,
                                          config.num_blocks, config.init_scale, seed,
                                          dropout=config.dropout)

    def named_params(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        params.update(self.embeddings.named_params())
        if self.rec_embeddings is not self.embeddings:
            params.update(self.rec_embeddings.named_params())
        params.update(self.encoder.named_params())
        params.update(self.actor.named_params())
        params.update(self.critic.named_params())
        params.update(self.recommender.named_params())
        return params

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.named_params().values())

    def recommender_group(self) -> list[Tensor]:
        """Stepped by the joint loss: recommender blocks plus its embeddings."""
        return (list(self.recommender.named_params().values())
                + list(self.rec_embeddings.named_params().values()))

    def critic_group(self) -> list[Tensor]:
        """Stepped by the TD loss: critic and the state path feeding it."""
        group = (list(self.critic.named_params().values())
                 + list(self.encoder.named_params().values()))
        if self.rec_embeddings is not self.embeddings:
            # unshared tables: the encoder's own table trains through TD only
            group += list(self.embeddings.named_params().values())
        return group

    def actor_group(self) -> list[Tensor]:
        return list(self.actor.named_params().values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_params().items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        params = self.named_params()
        if set(snapshot) != set(params):
            raise ContractError("snapshot does not match this model's parameters")
        for name, arr in snapshot.items():
            params[name].data = arr.copy()


def joint_loss(recommendation_loss: Tensor, q_value: float) -> Tensor:
    """Cross-entropy weighted by the detached, nonnegative critic value."""
    return nc.mul(recommendation_loss, max(0.0, float(q_value)))


@dataclass
class EpochRecord:
    epoch: int
    mean_loss_rec: float
    mean_loss_joint: float
    mean_loss_critic: float
    mean_actor_objective: float
    mean_length: float
    std_length: float
    val_ndcg10: float
    val_hr10: float

    FIELD_ORDER = ("epoch", "mean_loss_rec", "mean_loss_joint", "mean_loss_critic",
                   "mean_actor_objective", "mean_length", "std_length",
                   "val_ndcg10", "val_hr10")

    def to_line(self) -> str:
        return " ".join(f"{name}={getattr(self, name)!r}" for name in self.FIELD_ORDER)


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    skipped_users: int = 0
    wall_clock: float = 0.0  # excluded from canonical lines

    def to_lines(self) -> str:
        lines = [record.to_line() for record in self.records]
        lines.append(f"best_epoch={self.best_epoch} skipped_users={self.skipped_users}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        lines = ["epoch  loss_rec  loss_joint  critic   actor    len(mean±std)  "
                 "val_ndcg@10  val_hr@10"]
        for r in self.records:
            lines.append(f"{r.epoch:>5}  {r.mean_loss_rec:8.4f}  {r.mean_loss_joint:10.4f}  "
                         f"{r.mean_loss_critic:7.4f}  {r.mean_actor_objective:7.4f}  "
                         f"{r.mean_length:6.2f}±{r.std_length:<6.2f} "
                         f"{r.val_ndcg10:11.4f}  {r.val_hr10:9.4f}")
        lines.append(f"best epoch {self.best_epoch}, skipped users {self.skipped_users}, "
                     f"wall clock {self.wall_clock:.1f}s")
        return "\n".join(lines) + "\n"


def _exploration_sigma(config: RunConfig, epoch: int) -> float:
    if config.mode != "adaptive":
        return 0.0
    if config.epochs == 1:
        return config.exploration_sigma
    frac = 1.0 - epoch / (config.epochs - 1)  # linear anneal to zero
    return config.exploration_sigma * max(0.0, frac)


def _consecutive_runs(indices: list[int], ts: list[int]) -> list[list[int]]:
    """Split indices into maximal runs whose t values are consecutive."""
    runs: list[list[int]] = []
    prev_t = None
    for idx, t in zip(indices, ts):
        if runs and t == prev_t + 1:
            runs[-1].append(idx)
        else:
            runs.append([idx])
        prev_t = t
    return runs


def _batch_user_groups(batch: list[Transition]) -> list[list[Transition]]:
    groups: list[list[Transition]] = []
    for tr in batch:
        if groups and groups[-1][0].user == tr.user:
            groups[-1].append(tr)
        else:
            groups.append([tr])
    return groups


class _Accumulator:
    def __init__(self):
        self.total = 0.0
        self.count = 0

    def add(self, value: float, n: int = 1) -> None:
        self.total += value
        self.count += n

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0


def train_epoch(split: SplitDataset, model: ModelState, optimizers: dict[str, Adam],
                epoch: int, report: TrainReport) -> EpochRecord:
    """One pass over all user episodes in seeded-shuffled order."""
    config = model.config
    adaptive = config.mode == "adaptive"
    sigma = _exploration_sigma(config, epoch)
    all_params = list(model.named_params().values())

    order = nc.stream(config.seed, "shuffle", epoch).permutation(len(split.entries))
    loss_rec = _Accumulator()
    loss_joint = _Accumulator()
    loss_critic = _Accumulator()
    actor_obj = _Accumulator()
    lengths: list[int] = []
    skipped = 0

    pending: list[Transition] = []

    def flush(batch: list[Transition]) -> None:
        if not batch:
            return
        _update_recommender(model, optimizers["recommender"], batch, adaptive,
                            all_params, loss_rec, loss_joint, epoch)
        if adaptive:
            _update_critic(model, optimizers["critic"], batch, all_params, loss_critic)
            if epoch >= config.actor_warmup_epochs:
                _update_actor(model, optimizers["actor"], batch, all_params, actor_obj)

    for idx in order:
        entry = split.entries[idx]
        transitions = run_episode(
            entry.user, entry.prefix, encoder=model.encoder, actor=model.actor,
            recommender=model.recommender, reward_k=config.reward_k,
            reward_mode=config.reward_mode, noise_sigma=sigma,
            rng=nc.stream(config.seed, "explore", epoch, entry.user), mode="train",
            fixed_length=None if adaptive else config.fixed_length,
            with_rewards=adaptive)
        if not transitions:
            skipped += 1
            continue
        lengths.extend(tr.action.length for tr in transitions)
        pending.extend(transitions)
        while len(pending) >= config.batch_size:
            flush(pending[:config.batch_size])
            pending = pending[config.batch_size:]
    flush(pending)

    report.skipped_users = skipped  # same user set every epoch
    from .evaluation import evaluate  # local import keeps module layering acyclic
    val = evaluate(model, split, which="val", ks=(10,))
    arr = np.asarray(lengths, dtype=np.float64)
    return EpochRecord(
        epoch=epoch,
        mean_loss_rec=loss_rec.mean,
        mean_loss_joint=loss_joint.mean,
        mean_loss_critic=loss_critic.mean,
        mean_actor_objective=actor_obj.mean,
        mean_length=float(arr.mean()) if arr.size else 0.0,
        std_length=float(arr.std()) if arr.size else 0.0,
        val_ndcg10=val.ndcg[10],
        val_hr10=val.hr[10],
    )


def _update_recommender(model: ModelState, opt: Adam, batch: list[Transition],
                        adaptive: bool, all_params: list[Tensor],
                        loss_rec: _Accumulator, loss_joint: _Accumulator,
                        epoch: int) -> None:
    config = model.config
    nc.zero_grads(all_params)
    with Tape():
        total = None

        def accumulate(term):
            nonlocal total
            total = term if total is None else nc.add(total, term)

        for group in _batch_user_groups(batch):
            user = group[0].user
            prefix = list(group[0].items)
            if adaptive:
                states = np.stack([tr.state.values for tr in group])
                raws = [tr.action.raw for tr in group]
                weights = np.maximum(model.critic.value_batch(states, raws), 0.0)
            else:
                weights = np.ones(len(group))  # fixed baseline: q treated as 1
            # steps whose adapted suffix is the whole prefix share one causal
            # forward per consecutive run; the rest are scored per transition
            causal = [i for i, tr in enumerate(group) if tr.action.length == tr.t]
            singles = [i for i in range(len(group)) if group[i].action.length != group[i].t]
            for run in _consecutive_runs(causal, [group[i].t for i in causal]):
                t_hi = group[run[-1]].t
                drop_rng = (nc.stream(config.seed, "drop", epoch, user, group[run[0]].t)
                            if config.dropout > 0.0 else None)
                term, per_step = model.recommender.weighted_loss_causal(
                    prefix[:t_hi], user, [group[i].t for i in run],
                    [group[i].truth for i in run],
                    [float(weights[i]) for i in run], drop_rng)
                accumulate(term)
                for i, ce in zip(run, per_step):
                    loss_rec.add(float(ce))
                    loss_joint.add(float(ce) * float(weights[i]))
            for i in singles:
                tr = group[i]
                drop_rng = (nc.stream(config.seed, "drop", epoch, user, tr.t)
                            if config.dropout > 0.0 else None)
                adapted = adapt_sequence(list(tr.items[:tr.t]), tr.action.length)
                ce = model.recommender.loss(adapted, tr.user, tr.truth, drop_rng)
                loss_rec.add(ce.item())
                weighted = joint_loss(ce, float(weights[i]))
                loss_joint.add(weighted.item())
                accumulate(weighted)
        mean = nc.mul(total, 1.0 / len(batch))
        nc.backward(mean)
    opt.step()


def _update_critic(model: ModelState, opt: Adam, batch: list[Transition],
                   all_params: list[Tensor], loss_critic: _Accumulator) -> None:
    config = model.config
    nc.zero_grads(all_params)
    with Tape():
        total = None
        count = 0
        for group in _batch_user_groups(batch):
            prefix = list(group[0].items)
            # one causal forward yields every step's state; its raw values
            # double as the gradient-free bootstrap inputs
            states = model.encoder.encode_all(prefix)
            fresh = states.data
            nonterminal = [tr for tr in group if not tr.terminal]
            q_next_by_t: dict[int, float] = {}
            if nonterminal:
                next_rows = fresh[[tr.t for tr in nonterminal]]
                raw_next = model.actor.raw_batch(next_rows)  # noiseless
                q_next = model.critic.value_batch(next_rows, raw_next)
                q_next_by_t = {tr.t: float(qn) for tr, qn in zip(nonterminal, q_next)}
            targets = [td_target(tr.reward, config.gamma, q_next_by_t.get(tr.t))
                       for tr in group]
            t_lo, t_hi = group[0].t, group[-1].t
            executed = nc.slice_rows(states, t_lo - 1, t_hi)
            raws = [tr.action.raw for tr in group]
            q = model.critic.forward_batch(executed, raws)
            diff = nc.sub(Tensor(np.asarray(targets).reshape(-1, 1)), q)
            sq = nc.tsum(nc.mul(diff, diff))
            total = sq if total is None else nc.add(total, sq)
            count += len(group)
        mean_td = nc.mul(total, 1.0 / count)
        loss_critic.add(mean_td.item())
        nc.backward(nc.mul(mean_td, config.lambda_critic))
    opt.step()


def _update_actor(model: ModelState, opt: Adam, batch: list[Transition],
                  all_params: list[Tensor], actor_obj: _Accumulator) -> None:
    # ascend Q, with a small linear cost on the (normalized) raw length: on
    # reward-flat plateaus the policy slides toward the shortest sufficient
    # context instead of random-walking; any real Q slope dominates the cost
    config = model.config
    nc.zero_grads(all_params)
    with Tape():
        states = Tensor(np.stack([tr.state.values for tr in batch]))
        raws = model.actor.forward_batch(states)
        q = model.critic.forward_batch(states, raws)
        cost = nc.mul(nc.tmean(raws), config.length_penalty / config.max_seq_len)
        mean_obj = nc.add(nc.neg(nc.tmean(q)), cost)
        actor_obj.add(mean_obj.item())
        nc.backward(nc.mul(mean_obj, config.lambda_actor))
    opt.step()


def train(split: SplitDataset, config: RunConfig, num_users: int,
          num_items: int) -> tuple[TrainReport, ModelState]:
    """Full training loop; returns the report and the best-validation model."""
    config.validate()
    if not split.entries:
        raise ContractError("cannot train on an empty split")
    start = time.perf_counter()
    model = ModelState(config, num_users, num_items)
    optimizers = {
        "recommender": Adam(model.recommender_group(), lr=config.lr),
        "critic": Adam(model.critic_group(), lr=config.lr),
        "actor": Adam(model.actor_group(), lr=config.actor_lr),
    }
    report = TrainReport()
    best = (-1.0, -1)
    best_snapshot = model.snapshot()
    for epoch in range(config.epochs):
        try:
            record = train_epoch(split, model, optimizers, epoch, report)
        except NumericError as err:
            raise NumericError(f"epoch {epoch} aborted: {err}") from err
        report.records.append(record)
        if record.val_ndcg10 > best[0]:
            best = (record.val_ndcg10, epoch)
            best_snapshot = model.snapshot()
    report.best_epoch = best[1] if best[1] >= 0 else 0
    model.restore(best_snapshot)
    report.wall_clock = time.perf_counter() - start
    return report, model
