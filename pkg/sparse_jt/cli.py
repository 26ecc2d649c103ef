"""
Command-line experiment runner.

Subcommands ``plan``, ``run``, ``sweep`` and ``validate`` write CSV (or
JSON lines for ``validate``) and return 0 on success, 1 when a validation
check fails and 2 on configuration errors.
"""

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional, Sequence, TextIO

from .config import Config, NetworkConfig, PRESETS, load_config, preset
from .errors import CapacityTooSmall, ConfigError
from .fronthaul import GainProfile, capacity_bits_per_use, fronthaul_rates, plan_csi_bits, plan_data_bits
from .se_metrics import gain_profile, summarize
from .simulator import SCHEMES, SchemeOutcome, SparseJTSimulator, SweepRow
from .validation import LEVELS, run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2

PLAN_COLUMNS = [
    "C_bits_per_use", "U", "B", "B_bar", "rate_csi", "rate_data", "feasible",
    "noise_level", "p_gain_above", "U_supported",
]
RUN_COLUMNS = [
    "seed", "drop", "fade", "scheme", "S", "objective_bits", "sum_se_true", "sparsity",
    "active_count", "inner_iters", "outer_iters", "kkt_residual", "second_order_pass",
]
SWEEP_COLUMNS = ["axis", "value", "scheme", "mean_se", "stderr", "n_ok", "n_failed"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format(value, ".12g")
    return str(value)


def _list_of(kind: Callable) -> Callable[[str], list]:
    def parse(text: str) -> list:
        try:
            return [kind(item) for item in text.split(",") if item.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"invalid list '{text}': {e}") from e
    return parse


def _write_csv(rows: Sequence[Sequence], columns: Sequence[str], out: TextIO) -> None:
    writer = csv.writer(out)
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])


def _emit(rows, columns, path: Optional[Path]) -> None:
    if path is None:
        _write_csv(rows, columns, sys.stdout)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        _write_csv(rows, columns, handle)
    print(f"✓ Wrote {len(rows)} rows to {path}")


def plan_rows(
    cfg: NetworkConfig,
    capacities: Optional[Sequence[float]] = None,
    gains: Optional[GainProfile] = None,
) -> list[list]:
    """
    Feasible (U, B) frontier and data bits for every capacity.

    B_bar follows each listed capacity; a B_bar override only applies at the
    configured capacity. ``feasible`` is false when a rate exceeds the
    capacity, and rows whose capacity cannot carry a single bit are marked
    ``infeasible``. With a gain profile every row also carries the CSI
    quantization noise level at B, the fraction of channel gains above it and
    the users per RRH those gains support.
    """
    rows = []
    for C in capacities or [cfg.C_bits_per_use]:
        for U in range(1, cfg.K + 1):
            try:
                B = plan_csi_bits(C, U, cfg.N)
                if cfg.B_bar_override and C == cfg.C_bits_per_use:
                    B_bar = cfg.B_bar_override
                else:
                    B_bar = plan_data_bits(C, cfg.N)
            except CapacityTooSmall:
                rows.append([float(C), U] + ["infeasible"] * 4 + ["false", None, None, None])
                continue
            rate_csi, rate_data = fronthaul_rates(U, cfg.N, B, B_bar)
            feasible = bool(rate_csi <= C and rate_data <= C)
            row = [float(C), U, B, B_bar, float(rate_csi), float(rate_data), str(feasible).lower()]
            if gains is None:
                row += [None, None, None]
            else:
                level = gains.noise_level(B)
                row += [level, gains.exceedance(level), gains.supported_users(B, cfg.K)]
            rows.append(row)
    return rows


def _capacities(args, cfg: NetworkConfig) -> Optional[list[float]]:
    if args.sweep_c and args.sweep_gbps:
        raise ConfigError("Configuration errors: choose one of --sweep-c and --sweep-gbps")
    if args.sweep_gbps:
        return [capacity_bits_per_use(gbps * 1e9, cfg.bandwidth_hz) for gbps in args.sweep_gbps]
    return args.sweep_c


def run_rows(outcomes: Sequence[SchemeOutcome]) -> list[list]:
    """One CSV row per outcome; solver statistics only on sparse_jt rows."""
    rows = []
    for o in outcomes:
        solver = o.solver if o.scheme == "sparse_jt" else None
        if not o.ok:
            rows.append([o.seed, o.drop, o.fade, o.scheme, o.S] + [None] * 7 + ["not-checked"])
            continue
        rows.append([
            o.seed, o.drop, o.fade, o.scheme, o.S,
            o.objective_bits, o.sum_se_true, o.sparsity, len(o.active),
            solver.inner_iters if solver else None,
            solver.outer_iters if solver else None,
            solver.kkt_residual if solver else None,
            solver.second_order_pass if solver else "not-checked",
        ])
    return rows


def sweep_rows(rows: Sequence[SweepRow]) -> list[list]:
    return [[r.axis, float(r.value), r.scheme, r.mean_se, r.stderr, r.n_ok, r.n_failed] for r in rows]


def cmd_plan(args, cfg: NetworkConfig, runtime: Config) -> int:
    capacities = _capacities(args, cfg)
    gains = gain_profile(cfg, args.drops) if args.drops else None
    _emit(plan_rows(cfg, capacities, gains), PLAN_COLUMNS, args.out)
    return EXIT_OK


def cmd_run(args, cfg: NetworkConfig, runtime: Config) -> int:
    simulator = SparseJTSimulator(cfg, args.settings, runtime)
    outcomes = simulator.run(args.drops, args.fades, args.scheme, args.threads)
    _emit(run_rows(outcomes), RUN_COLUMNS, args.out or runtime.output_dir / "run.csv")

    print("\n--- Summary ---")
    for scheme in args.scheme:
        values = [o.sum_se_true for o in outcomes if o.scheme == scheme and o.ok]
        failed = sum(1 for o in outcomes if o.scheme == scheme and not o.ok)
        mean, stderr = summarize(values)
        print(f"  {scheme}: {mean:.4f} ± {stderr:.4f} bits/s/Hz ({len(values)} ok, {failed} failed)")
    return EXIT_OK


def cmd_sweep(args, cfg: NetworkConfig, runtime: Config) -> int:
    capacities = _capacities(args, cfg)
    if args.sweep_s and capacities:
        raise ConfigError("Configuration errors: choose one of --sweep-s and a capacity sweep")
    if capacities:
        axis, values = "C", capacities
    else:
        axis, values = "S", args.sweep_s or [cfg.S]
        bad = [s for s in values if not 1 <= s <= cfg.L]
        if bad:
            raise ConfigError(f"Configuration errors: sweep values {bad} outside [1, {cfg.L}]")
    simulator = SparseJTSimulator(cfg, args.settings, runtime)
    rows = simulator.sweep(axis, values, args.drops, args.fades, args.scheme, args.threads)
    _emit(sweep_rows(rows), SWEEP_COLUMNS, args.out or runtime.output_dir / "sweep.csv")
    return EXIT_OK


def cmd_validate(args, cfg: NetworkConfig, runtime: Config) -> int:
    results = run_suite(args.level)
    for r in results:
        print(json.dumps({"module": r.module, "name": r.name, "passed": r.passed, "detail": r.detail}))
    failed = [r for r in results if not r.passed]
    mark = "✓" if not failed else "✗"
    print(f"{mark} {len(results) - len(failed)}/{len(results)} checks passed", file=sys.stderr)
    return EXIT_VALIDATION if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value configuration file")
    common.add_argument("--preset", choices=sorted(PRESETS), help="Start from a named scenario")
    common.add_argument("--seed", type=int, help="Master seed")
    common.add_argument("--out", type=Path, help="Output CSV path")
    common.add_argument("--threads", type=int, help="Worker threads (default: SPARSEJT_THREADS)")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    experiment = argparse.ArgumentParser(add_help=False)
    experiment.add_argument("--scheme", type=_list_of(str), default=list(SCHEMES[:3]),
                            help=f"Comma-separated schemes out of {', '.join(SCHEMES)}")
    experiment.add_argument("--drops", type=int, default=100, help="Topology drops")
    experiment.add_argument("--fades", type=int, default=10, help="Fading realizations per drop")

    parser = argparse.ArgumentParser(prog="sparse-jt", description="Sparse joint transmission C-RAN simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common], help="Fronthaul quantization plans")
    p.add_argument("--sweep-c", type=_list_of(float), help="Capacities in bits per channel use")
    p.add_argument("--sweep-gbps", type=_list_of(float), help="Capacities in Gbit/s, converted with the bandwidth")
    p.add_argument("--drops", type=int, default=20, help="Topology drops behind the channel-gain columns (0 skips them)")
    p.set_defaults(handler=cmd_plan)

    p = sub.add_parser("run", parents=[common, experiment], help="Per-realization results")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("sweep", parents=[common, experiment], help="Ergodic SE over S or C")
    p.add_argument("--sweep-s", type=_list_of(int), help="Active-RRH budgets")
    p.add_argument("--sweep-c", type=_list_of(float), help="Capacities in bits per channel use")
    p.add_argument("--sweep-gbps", type=_list_of(float), help="Capacities in Gbit/s, converted with the bandwidth")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("validate", parents=[common], help="Invariant suites")
    p.add_argument("--level", choices=LEVELS, default="fast")
    p.set_defaults(handler=cmd_validate)
    return parser


def _resolve(args) -> tuple[NetworkConfig, Config]:
    runtime = Config()
    cfg = preset(args.preset) if args.preset else NetworkConfig()
    settings = None
    if args.config:
        cfg, settings = load_config(args.config, cfg)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    cfg.validate()
    args.settings = settings
    if getattr(args, "threads", None) is None:
        args.threads = runtime.threads
    elif args.threads < 1:
        raise ConfigError("Configuration errors: --threads must be >= 1")
    # plan accepts --drops 0 to skip the channel-gain columns
    least = 0 if args.command == "plan" else 1
    for name in ("drops", "fades"):
        if getattr(args, name, 1) < least:
            raise ConfigError(f"Configuration errors: --{name} must be >= {least}")
    return cfg, runtime


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``sparse-jt`` console script."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        runtime_level = Config().log_level
    except ConfigError:
        runtime_level = "INFO"
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, runtime_level, logging.INFO),
        format="%(asctime)s - %(levelname)s - %(message)s",
    )

    try:
        cfg, runtime = _resolve(args)
        return args.handler(args, cfg, runtime)
    except (ConfigError, CapacityTooSmall) as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
