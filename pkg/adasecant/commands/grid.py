import argparse
from pathlib import Path

from adasecant.dependencies.config_loader import load_config, parse_list
from adasecant.errors import ConfigError, ExperimentAbort
from adasecant.services.harness import grid_search, log_uniform_samples, momentum_rate_pairs
from adasecant.services.numerics import make_rng
from adasecant.services.outputs import write_csv, write_grid_table, write_snapshot
from adasecant.settings import RESULTS_DIR


def build_grid(args: argparse.Namespace):
    if args.momentum_pairs:
        return momentum_rate_pairs(make_rng(args.grid_seed), args.momentum_pairs)
    if not args.param:
        raise ConfigError("grid needs --param with --values or --log-uniform, or --momentum-pairs")
    if args.log_uniform:
        low, high, n = parse_list(args.log_uniform)
        values = log_uniform_samples(make_rng(args.grid_seed), float(low), float(high), int(n))
    elif args.values:
        values = parse_list(args.values)
    else:
        raise ConfigError("grid needs --values or --log-uniform for --param")
    return {args.param: values}


def cmd_grid(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    seeds = [int(s) for s in parse_list(args.seeds)] if args.seeds else None
    result = grid_search(config, build_grid(args), seeds=seeds, workers=args.workers)

    out = Path(args.out) if args.out else Path(RESULTS_DIR) / f"grid_{config.problem}_{config.optimizer}.csv"
    write_grid_table(result, out)
    best = result.best_record
    if best is None:
        raise ExperimentAbort("every grid cell failed", step=0, last_good_step=None)
    best_out = out.with_name(out.stem + "_best.csv")
    write_csv(best, best_out)
    write_snapshot(best, best_out.with_suffix(".yaml"))
    print(f"{out}: {len(result.cells)} cells, best {result.best_cell.params} -> {result.best_cell.mean_final_loss:.6g}")
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("grid", help="Sweep one hyperparameter and report the best cell")
    p.add_argument("--config", required=True, help="YAML experiment config for the base run")
    p.add_argument("--param", type=str, default=None, help="Key to sweep, e.g. optimizer.lr or batch_size")
    p.add_argument("--values", type=str, default=None, help="Comma-separated values")
    p.add_argument("--log-uniform", type=str, default=None, metavar="LOW,HIGH,N",
                   help="N values drawn log-uniformly from [LOW, HIGH]")
    p.add_argument("--momentum-pairs", type=int, default=None, metavar="N",
                   help="N random (optimizer.momentum, optimizer.lr) pairs")
    p.add_argument("--grid-seed", type=int, default=0, help="Seed for generated grids")
    p.add_argument("--seeds", type=str, default=None, help="Comma-separated run seeds per cell")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=str, default=None, help="Grid table CSV path")
    p.set_defaults(func=cmd_grid)
