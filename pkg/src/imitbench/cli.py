"""Command-line entry point: ``imitbench <subcommand> ...``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import dataset as ds
from .envs import make_env
from .errors import ConfigError, DatasetFormatError, NumericalError
from .harness import config as hc
from .harness import profiling, report, search, training

log = logging.getLogger("imitbench")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _run_options(p: argparse.ArgumentParser, algo_required: bool = False) -> None:
    p.add_argument("--config", help="flat 'key = value' configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--algo", choices=hc.RUN_ALGORITHMS, required=algo_required)
    p.add_argument("--env", choices=("pointmass", "pendulum"))
    p.add_argument("--dataset")
    p.add_argument("--steps", type=int)
    p.add_argument("--subsample", type=int)
    p.add_argument("--gmmil-self-similarity", type=_on_off, metavar="{on,off}")
    p.add_argument("--dril-quantile", type=float)
    p.add_argument("--red-output-dim", type=int)
    p.add_argument("--replay-multiplier", type=int)


_FLAG_KEYS = ("algo", "env", "dataset", "steps", "subsample", "gmmil_self_similarity",
              "dril_quantile", "red_output_dim", "replay_multiplier")


def _config(args) -> hc.RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = hc.parse_value(key.strip(), value)
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return hc.load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="imitbench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate-expert", help="train a PPO expert and record demonstrations")
    _run_options(p)
    p.add_argument("--episodes", type=int, default=25)
    p.add_argument("--out", required=True, help="ILDS1 dataset path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record-seed", type=int, default=1)
    p.add_argument("--quality", type=float, default=0.75,
                   help="normalised score the chosen checkpoint must reach")
    p.add_argument("--deterministic", action="store_true",
                   help="record mean actions instead of sampled ones")

    p = sub.add_parser("train", help="train one algorithm over one or more seeds")
    _run_options(p)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("evaluate", help="evaluate a saved policy with its mean action")
    p.add_argument("--policy", required=True)
    p.add_argument("--env", choices=("pointmass", "pendulum"), required=True)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--out", help="CSV of per-episode returns")

    p = sub.add_parser("search", help="fixed-budget hyperparameter search")
    _run_options(p)
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--search-seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("profile", help="time and memory per algorithm, standardised settings")
    _run_options(p)
    p.add_argument("--algos", nargs="+", choices=hc.RUN_ALGORITHMS,
                   default=[a for a in hc.RUN_ALGORITHMS if a != "ppo"])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="summary tables and curves from saved runs")
    p.add_argument("--runs", nargs="+", required=True, help="run.json files or directories")
    p.add_argument("--dataset", action="append", default=[],
                   help="expert dataset for the Dataset row (repeatable, one per environment)")
    p.add_argument("--out", required=True)
    return parser


def cmd_generate_expert(args) -> None:
    cfg = _config(args)
    if args.episodes < 1:
        raise ConfigError("--episodes must be >= 1")
    run = training.train_expert(cfg, args.quality)
    env = make_env(cfg.env, cfg.horizon)
    data = ds.record_expert(run.policy, env, args.episodes, args.record_seed, args.deterministic)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.save(data, out)
    training.save_policy(run.policy, out.with_suffix(".policy.npz"))
    with open(out.with_suffix(".checkpoints.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mean_return", "std_return", "selected"])
        for cp in run.checkpoints:
            w.writerow([cp.step, repr(cp.mean), repr(cp.std), int(cp.step == run.checkpoint_step)])
    mean, std = ds.dataset_stats(data)
    print(f"expert checkpoint at step {run.checkpoint_step} (score {run.score:.3f}); "
          f"{len(data)} transitions, return {mean:.2f} ± {std:.2f} -> {out}")


def cmd_train(args) -> None:
    cfg = _config(args)
    expert = training.load_expert(cfg) if cfg.algo != "ppo" else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for seed in args.seeds:
        run_cfg = cfg.replace(seed=seed)
        result = training.run_training(run_cfg, expert)
        rec = report.RunRecord(cfg.algo, cfg.env, seed,
                               tuple((e.step, e.mean, e.std) for e in result.evals),
                               cfg.eval_episodes)
        seed_dir = out / f"seed_{seed}"
        seed_dir.mkdir(exist_ok=True)
        report.save_record(rec, seed_dir / "run.json")
        report.write_curve([rec], seed_dir / "curve.csv")
        training.save_policy(result.policy, seed_dir / "policy.npz")
        (seed_dir / "config.cfg").write_text(run_cfg.to_text())
        records.append(rec)
        print(f"{cfg.algo} seed {seed}: final return {rec.final:.2f} "
              f"(pretrain {result.pretrain_seconds:.1f} s, train {result.train_seconds:.1f} s)")
    report.write_curve(records, out / "curve.csv")


def cmd_evaluate(args) -> None:
    policy = training.load_policy(args.policy)
    env = make_env(args.env)
    if policy.state_dim != env.state_dim or policy.action_dim != env.action_dim:
        raise ConfigError("policy dimensions do not match the environment")
    res = training.evaluate(policy, env, args.episodes, args.seed)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["episode", "return"])
            for i, r in enumerate(res.returns):
                w.writerow([i, repr(float(r))])
    print(f"{res.episodes} episodes: return {res.mean:.2f} ± {res.std:.2f}")


def cmd_search(args) -> None:
    cfg = _config(args)
    expert = training.load_expert(cfg) if cfg.algo != "ppo" else None
    best, trials = search.hyperparameter_search(cfg, args.budget, args.search_seed, args.out, expert)
    print(f"{len(trials)} trials; best #{best.index}: {best.params} objective {best.objective}")


def cmd_profile(args) -> None:
    cfg = _config(args)
    if args.repeats < 1:
        raise ConfigError("--repeats must be >= 1")
    rows = []
    for algo in args.algos:
        row = profiling.profile(cfg.replace(algo=algo), args.repeats)
        rows.append(row)
        print(f"{algo}: pretraining {row.pretrain_cell}, training {row.train_cell}, "
              f"memory {row.memory_cell} MB")
    scaling = None
    if "gmmil" in args.algos:
        expert = training.load_expert(cfg.replace(algo="gmmil")).view()
        scaling = profiling.gmmil_scaling(expert, profiling.STANDARD["rollout_length"])
    profiling.write_profile(rows, args.out, scaling, cfg, args.repeats)


def cmd_report(args) -> None:
    records = report.load_records(args.runs)
    stats = {}
    for path in args.dataset:
        data = ds.load(path)
        stats[data.env_name] = ds.dataset_stats(data)
    for path in report.emit_report(records, args.out, stats):
        print(path)


COMMANDS = {
    "generate-expert": cmd_generate_expert,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "search": cmd_search,
    "profile": cmd_profile,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except (ConfigError, DatasetFormatError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
