"""Command line interface.

  fbq-sim run <experiment> --config <path> [--seed N] [--out <path>]
                           [--threads N] [--monte-carlo]
  fbq-sim allocate --M 3 --B 90 --gamma-db 2,5,8 --q 0.1,0.1,0.1
                   [--numerical] [--out <path>]
  fbq-sim check-mqcs --M 3 --gamma-db 10 --q 0.05 [--dir-bits N]

Exit codes: 0 success, 2 config error, 3 infeasibility (no feasible trials,
or a feedback budget below the asymptotic regime / MQCS requirement).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import __version__
from .allocation import (QoSTargets, allocate_bits_closed_form, allocate_bits_numerical,
                         allocation_rows, min_feedback_rate, round_bits)
from .channel import chi_square_facts
from .config import EXPERIMENTS, ConfigError, load_config
from .harness import run_experiment
from .power import mqcs_min_dir_size

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


def _parse_float_list(text: str, name: str):
    try:
        return [float(tok) for tok in text.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse {name}: {text!r}")


def _emit(text: str, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {args.experiment!r}")
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, out=args.out)
        table = run_experiment(cfg, threads=args.threads, monte_carlo=args.monte_carlo)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    _emit(table.to_csv_text(), cfg.out or None)
    if cfg.out:
        print(f"wrote {cfg.out}")

    if cfg.experiment == "sdp-vs-bound":
        n_eff = table.column("n_effective")
        if np.all(n_eff == 0):
            print("no feasible trials at any sweep point", file=sys.stderr)
            return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_allocate(args) -> int:
    try:
        gammas_db = _parse_float_list(args.gamma_db, "--gamma-db")
        qs = _parse_float_list(args.q, "--q")
        if len(gammas_db) != args.M or len(qs) != args.M:
            raise ConfigError(f"--gamma-db and --q need exactly {args.M} entries")
        targets = QoSTargets(gammas=np.array([10 ** (g / 10.0) for g in gammas_db]),
                             qs=np.array(qs))
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        alloc = allocate_bits_closed_form(args.B, targets, args.M)
    except ValueError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        try:
            rep = min_feedback_rate(targets, args.M)
            print(f"sufficient total rate for these targets: "
                  f"B > {rep.B_min:.1f} bits", file=sys.stderr)
        except ValueError:
            pass
        return EXIT_INFEASIBLE

    mag_r, dir_r = round_bits(alloc)
    lines = ["user,mag_bits_cont,dir_bits_cont,mag_bits,dir_bits,total_bits"]
    for k in range(args.M):
        lines.append(f"{k + 1},{alloc.mag_bits[k]:.6f},{alloc.dir_bits[k]:.6f},"
                     f"{mag_r[k]},{dir_r[k]},{mag_r[k] + dir_r[k]}")
    if args.numerical:
        dist = chi_square_facts(args.M)
        try:
            num_m, num_d, obj = allocate_bits_numerical(args.B, targets, dist, args.M)
            lines.append("# numerical minimization (user,mag_bits,dir_bits,total)")
            for user, mb, db, tot in allocation_rows(num_m, num_d):
                lines.append(f"{user},{mb},{db},{tot}")
        except ValueError as exc:
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_check_mqcs(args) -> int:
    try:
        gammas_db = _parse_float_list(args.gamma_db, "--gamma-db")
        qs = _parse_float_list(args.q, "--q")
        if len(qs) != len(gammas_db):
            raise ConfigError("--gamma-db and --q must have equal length")
        if args.M < 2:
            raise ConfigError("--M must be >= 2")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    all_met = True
    print("user,gamma_db,q,theta0,required_dir_size,required_dir_bits"
          + (",provided_size,met" if args.dir_bits is not None else ""))
    for k, (gdb, q) in enumerate(zip(gammas_db, qs), start=1):
        gamma = 10 ** (gdb / 10.0)
        theta0 = (np.pi / 4.0) * q
        need = mqcs_min_dir_size(gamma, theta0, args.M)
        bits = int(np.ceil(np.log2(need)))
        line = f"{k},{gdb:g},{q:g},{theta0:.6g},{need},{bits}"
        if args.dir_bits is not None:
            have = 2 ** args.dir_bits
            met = have >= need
            all_met = all_met and met
            line += f",{have},{int(met)}"
        print(line)
    if args.dir_bits is not None and not all_met:
        return EXIT_INFEASIBLE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fbq-sim",
                                     description="Limited-feedback beamforming simulations")
    parser.add_argument("--version", action="version", version=f"fbq-sim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("experiment", choices=list(EXPERIMENTS))
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--monte-carlo", action="store_true",
                       help="distortion: add a measured average-power column")
    p_run.set_defaults(func=_cmd_run)

    p_alloc = sub.add_parser("allocate", help="closed-form feedback bit allocation")
    p_alloc.add_argument("--M", type=int, required=True)
    p_alloc.add_argument("--B", type=int, required=True)
    p_alloc.add_argument("--gamma-db", required=True)
    p_alloc.add_argument("--q", required=True)
    p_alloc.add_argument("--numerical", action="store_true",
                         help="also run the exact integer minimization")
    p_alloc.add_argument("--out", default=None)
    p_alloc.set_defaults(func=_cmd_allocate)

    p_mqcs = sub.add_parser("check-mqcs", help="minimum direction codebook sizes")
    p_mqcs.add_argument("--M", type=int, required=True)
    p_mqcs.add_argument("--gamma-db", required=True)
    p_mqcs.add_argument("--q", required=True)
    p_mqcs.add_argument("--dir-bits", type=int, default=None)
    p_mqcs.set_defaults(func=_cmd_check_mqcs)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
