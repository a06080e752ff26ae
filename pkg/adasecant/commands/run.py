import argparse
from pathlib import Path

from adasecant.dependencies.config_loader import load_config, parse_assignment
from adasecant.services.harness import ExperimentConfig, run_experiment
from adasecant.services.outputs import write_csv, write_snapshot
from adasecant.settings import RESULTS_DIR


def default_output(config: ExperimentConfig) -> Path:
    return Path(RESULTS_DIR) / f"{config.problem}_{config.optimizer}_seed{config.seed}.csv"


def cmd_run(args: argparse.Namespace) -> int:
    overrides = dict(parse_assignment(item) for item in args.set or [])
    overrides.update({"seed": args.seed, "steps": args.steps, "batch_size": args.batch_size, "out": args.out})
    config = load_config(args.config, overrides)
    record = run_experiment(config)
    out = Path(config.out) if config.out else default_output(config)
    write_csv(record, out)
    write_snapshot(record, out.with_suffix(".yaml"))
    print(f"{out}: {len(record.rows)} steps, final loss {record.final_loss:.6g}")
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("run", help="Run one experiment and write its metrics CSV")
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--out", type=str, default=None, help="CSV path; the config snapshot goes next to it")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a config key, e.g. optimizer.lr=0.1")
    p.set_defaults(func=cmd_run)
