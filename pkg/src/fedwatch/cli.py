"""Command-line front end.

Subcommands:
  run       execute a scenario's arms and write metric CSVs
  validate  parse a config and print its normalized form
  rescore   re-run the update checks over a history snapshot

Exit codes: 0 success, 1 configuration problem, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from fedwatch.config import ConfigError, load_config, serialize_config
from fedwatch.defense import rescore, snapshot_load
from fedwatch.experiment import (ARM_ORDER, emit_csv, run_experiment,
                                 summary_csv_lines)
from fedwatch.vectorops import backend_name

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedwatch",
        description="Deterministic federated-learning poisoning simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("config", help="scenario config file")
    p_run.add_argument("--arms", default=None,
                       help=f"comma list from {','.join(ARM_ORDER)} "
                            "(default: all three if an attack is configured)")
    p_run.add_argument("--out", default=None,
                       help="output directory (overrides [run] out)")

    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("config", help="scenario config file")

    p_re = sub.add_parser("rescore",
                          help="re-run checks on a history snapshot")
    p_re.add_argument("snapshot", help="history snapshot file")
    p_re.add_argument("--config", required=True,
                      help="config supplying the [defense] thresholds")
    p_re.add_argument("--out", default=None,
                      help="directory for rescored.csv")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    arms = None
    if args.arms is not None:
        arms = tuple(a.strip() for a in args.arms.split(",") if a.strip())
        bad = [a for a in arms if a not in ARM_ORDER]
        if bad:
            raise ConfigError(f"unknown arms: {', '.join(bad)}")
    report = run_experiment(cfg, arms)
    print(f"# kernels: {backend_name()}")
    for line in summary_csv_lines(report):
        print(line)
    out_dir = args.out or cfg.out
    if out_dir:
        paths = emit_csv(report, out_dir)
        for name, path in paths.items():
            print(f"# wrote {name}: {path}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    sys.stdout.write(serialize_config(cfg))
    return EXIT_OK


def _cmd_rescore(args) -> int:
    cfg = load_config(args.config)
    try:
        rows = snapshot_load(args.snapshot)
    except OSError as exc:
        raise ConfigError(f"cannot read snapshot: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    scored = rescore(rows, cfg.defense)

    lines = ["round,worker_id,role,delta_rate,a1,a2,a3,accepted"]
    tri = {True: "1", False: "0", None: "NA"}
    tp = fp = attacker_rounds = benign_rounds = 0
    for rnd, wid, role, v in scored:
        lines.append(",".join([
            str(rnd), str(wid), role,
            "NA" if v.delta_rate is None else repr(float(v.delta_rate)),
            tri[v.a1], tri[v.a2], tri[v.a3], "1" if v.accepted else "0"]))
        if rnd >= cfg.defense.warmup_rounds:
            if role == "attacker":
                attacker_rounds += 1
                tp += not v.accepted
            else:
                benign_rounds += 1
                fp += not v.accepted
    recall = tp / attacker_rounds if attacker_rounds else None
    fpr = fp / benign_rounds if benign_rounds else None
    print(f"# rescored {len(scored)} records")
    print(f"# post-warmup attacker_recall="
          f"{'NA' if recall is None else f'{recall:.4f}'} "
          f"benign_fpr={'NA' if fpr is None else f'{fpr:.4f}'}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "rescored.csv")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"# wrote rescored: {path}")
    else:
        for line in lines:
            print(line)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate":
            return _cmd_validate(args)
        return _cmd_rescore(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
