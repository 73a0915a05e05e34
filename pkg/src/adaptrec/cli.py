"""Command-line interface: ingest, synth, train, evaluate, compare, gradcheck.

Every run writes its outputs under a directory named by the hash of the
resolved configuration plus the inputs that shaped the run, so identical
invocations land in the same place and different ones never collide.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import checkpoint as ckpt
from . import data as datamod
from .agent import transitions_to_lines, run_episode
from .config import RunConfig, canonical_text, config_hash, load_config
from .errors import (AdaptrecError, CheckpointError, ConfigError, DataError,
                     NumericError)
from .evaluation import compare_lengths, evaluate
from .gradsuite import run_suite
from .trainer import train

USAGE_ERROR, DATA_ERROR, NUMERIC_ERROR = 1, 2, 3


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"no such file: {p}")
    return p


def _run_dir(out: str, config: RunConfig, *context: str) -> Path:
    run = Path(out) / config_hash(config, *context)
    run.mkdir(parents=True, exist_ok=True)
    return run


def _load_split(data_path: str):
    catalog, sequences, stats = datamod.load_tsv(_require_file(data_path))
    return catalog, sequences, stats, datamod.leave_one_out(sequences)


def cmd_ingest(args) -> int:
    catalog, sequences, stats, _ = _load_split(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    datamod.dump_tsv(catalog, sequences, out / "normalized.tsv", stats)
    print(f"ingested {stats.num_interactions} interactions from "
          f"{catalog.num_users} users over {catalog.num_items} items "
          f"({stats.dropped_users} users dropped)")
    return 0


def cmd_synth(args) -> int:
    spec = _parse_synth_spec(_require_file(args.spec))
    catalog, sequences, windows = datamod.generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    datamod.dump_tsv(catalog, sequences, out / "synthetic.tsv")
    window_lines = "".join(f"{catalog.user_ids[u]}\t{w}\n"
                           for u, w in sorted(windows.items()))
    (out / "synthetic.windows").write_text(window_lines, encoding="utf-8")
    print(f"synthesized {catalog.num_users} users / {catalog.num_items} items "
          f"-> {out / 'synthetic.tsv'}")
    return 0


_SYNTH_KEYS = {"num_users": int, "num_items": int, "min_length": int,
               "max_length": int, "windows": str, "noise_rate": float,
               "seed": int}


def _parse_synth_spec(path: Path) -> datamod.SyntheticSpec:
    values: dict = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not eq or key not in _SYNTH_KEYS:
            raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
        try:
            values[key] = _SYNTH_KEYS[key](raw)
        except ValueError:
            raise ConfigError(f"{path}: line {lineno}: bad value {raw!r}") from None
    kwargs = {}
    if "num_users" in values:
        kwargs["num_users"] = values["num_users"]
    if "num_items" in values:
        kwargs["num_items"] = values["num_items"]
    if "min_length" in values or "max_length" in values:
        lo = values.get("min_length", 20)
        hi = values.get("max_length", max(lo, 40))
        kwargs["seq_length_range"] = (lo, hi)
    if "windows" in values:
        kwargs["window_choices"] = tuple(int(w) for w in values["windows"].split(","))
    if "noise_rate" in values:
        kwargs["noise_rate"] = values["noise_rate"]
    if "seed" in values:
        kwargs["seed"] = values["seed"]
    return datamod.SyntheticSpec(**kwargs)


def cmd_train(args) -> int:
    config = load_config(_require_file(args.config))
    catalog, sequences, stats, split = _load_split(args.data)
    run = _run_dir(args.out, config, "train", Path(args.data).name)
    report, model = train(split, config, catalog.num_users, catalog.num_items)
    (run / "config.cfg").write_text(canonical_text(config), encoding="utf-8")
    (run / "train_report.txt").write_text(report.to_lines(), encoding="utf-8")
    (run / "train_summary.txt").write_text(report.summary(), encoding="utf-8")
    ckpt.save_model(run / "checkpoint.bin", model)
    if args.dump_transitions:
        lines = []
        for entry in split.entries:
            lines.append(transitions_to_lines(
                run_episode(entry.user, entry.prefix, encoder=model.encoder,
                            actor=model.actor, recommender=model.recommender,
                            reward_k=config.reward_k, reward_mode=config.reward_mode,
                            mode="eval",
                            fixed_length=None if config.mode == "adaptive"
                            else config.fixed_length),
                model.critic if config.mode == "adaptive" else None))
        (run / "transitions.log").write_text("".join(lines), encoding="utf-8")
    print(f"run directory: {run}")
    print(report.summary())
    return 0


def cmd_evaluate(args) -> int:
    model = ckpt.load_model(_require_file(args.checkpoint))
    catalog, sequences, stats, split = _load_split(args.data)
    if catalog.num_users != model.num_users or catalog.num_items != model.num_items:
        raise CheckpointError(
            f"checkpoint built for {model.num_users} users / {model.num_items} "
            f"items, dataset has {catalog.num_users} / {catalog.num_items}")
    ks = tuple(int(k) for k in args.k.split(","))
    report = evaluate(model, split, which=args.split, ks=ks)
    run = _run_dir(args.out, model.config, "evaluate", args.split, Path(args.data).name)
    (run / f"metrics_{args.split}.txt").write_text(report.to_lines(), encoding="utf-8")
    print(f"run directory: {run}")
    print(report.summary())
    return 0


def cmd_compare(args) -> int:
    config = load_config(_require_file(args.config))
    catalog, sequences, stats, split = _load_split(args.data)
    l_grid = [int(l) for l in args.lengths.split(",")]
    table = compare_lengths(split, config, catalog.num_users, catalog.num_items,
                            l_grid=l_grid, repeats=args.repeats, k=args.k)
    run = _run_dir(args.out, config, "compare", args.lengths, str(args.repeats),
                   Path(args.data).name)
    (run / "comparison.txt").write_text(table.to_lines(), encoding="utf-8")
    (run / "comparison_summary.txt").write_text(table.summary(), encoding="utf-8")
    fixed_series, adaptive_series = table.series()
    (run / "series_fixed.txt").write_text(fixed_series, encoding="utf-8")
    (run / "series_adaptive.txt").write_text(adaptive_series, encoding="utf-8")
    print(f"run directory: {run}")
    print(table.summary())
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(instances=args.instances)
    worst = max(results, key=lambda r: r.max_rel_error)
    print(f"worst: {worst.name} at {worst.max_rel_error:.3e}")
    return 0 if all(r.passed for r in results) else NUMERIC_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptrec",
        description="Sequential recommender with learned per-user sequence lengths.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize a TSV interaction log")
    p.add_argument("--data", required=True, help="user<TAB>item<TAB>timestamp file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True, help="key=value synthetic spec file")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True, help="key=value run config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="parent of the run directory")
    p.add_argument("--dump-transitions", action="store_true",
                   help="export per-step episode diagnostics")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.add_argument("--k", default="5,10", help="comma-separated cutoffs")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("compare", help="fixed-length grid vs adaptive study")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--lengths", required=True, help="comma-separated fixed lengths")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op")
    p.add_argument("--instances", type=int, default=100)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as err:
        return _fail(USAGE_ERROR, str(err))
    except NumericError as err:
        return _fail(NUMERIC_ERROR, str(err))
    except (DataError, CheckpointError) as err:
        return _fail(DATA_ERROR, str(err))
    except AdaptrecError as err:
        return _fail(DATA_ERROR, str(err))


if __name__ == "__main__":
    sys.exit(main())
