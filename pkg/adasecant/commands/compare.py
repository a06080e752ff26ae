import argparse
import logging
from pathlib import Path

from adasecant.dependencies.config_loader import load_config, parse_list
from adasecant.errors import ConfigError
from adasecant.services.harness import run_experiment
from adasecant.services.outputs import emit_plot_data, write_csv, write_snapshot
from adasecant.settings import RESULTS_DIR

logger = logging.getLogger(__name__)


def cmd_compare(args: argparse.Namespace) -> int:
    base = load_config(
        args.config,
        {"problem": args.problem, "steps": args.steps, "seed": args.seed, "batch_size": args.batch_size},
    )
    out_dir = Path(args.out or RESULTS_DIR)
    names = parse_list(args.optimizers)
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise ConfigError(f"duplicate optimizers: {', '.join(duplicates)}")
    records, labels = [], []
    for name in names:
        params = base.optimizer_params if name == base.optimizer else {}
        config = base.with_optimizer(name, params)
        records.append(run_experiment(config))
        labels.append(name)

    for size in parse_list(args.batch_sizes) if args.batch_sizes else []:
        params = base.optimizer_params if base.optimizer == "adasecant" else {}
        config = base.with_optimizer("adasecant", params).with_overrides({"batch_size": int(size)})
        records.append(run_experiment(config))
        labels.append(f"adasecant_b{int(size)}")

    for label, record in zip(labels, records):
        path = write_csv(record, out_dir / f"{label}.csv")
        write_snapshot(record, path.with_suffix(".yaml"))
        logger.info("%s: final loss %.6g", label, record.final_loss)
    emit_plot_data(records, out_dir / "train_loss.dat", labels)
    if args.batch_sizes:
        emit_plot_data(records, out_dir / "wallclock_ms.dat", labels, column="wallclock_ms")
    for label, record in zip(labels, records):
        print(f"{label}: final loss {record.final_loss:.6g}")
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("compare", help="Run several optimizers on one problem")
    p.add_argument("--optimizers", required=True, help="Comma-separated optimizer names")
    p.add_argument("--problem", type=str, default=None, help="Problem name (overrides the config)")
    p.add_argument("--config", type=str, default=None, help="Optional YAML base config")
    p.add_argument("--out", type=str, default=None, help="Output directory")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--batch-sizes", type=str, default=None,
                   help="Comma-separated minibatch sizes for an extra Adasecant sweep")
    p.set_defaults(func=cmd_compare)
