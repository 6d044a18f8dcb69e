"""Command-line front end.

Exit codes: 0 success, 1 configuration problem, 2 a reference comparison
failed (for CI gating).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .analysis import equilibria_to_csv, find_equilibria, predict_limit
from .harness import (ConfigError, ExperimentConfig, comparison_to_csv,
                      compare_theory_mc, load_config, reproduce_table,
                      run_experiment, table_report_to_csv, write_experiment)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the master seed")
    common.add_argument("--out", default=None,
                        help="directory for CSV output")
    common.add_argument("--replications", type=int, default=None,
                        help="override the replication count")
    common.add_argument("--finite", action="store_true",
                        help="full finite-network Monte Carlo instead of "
                             "asymptotic returns")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for replications")

    parser = argparse.ArgumentParser(
        prog="banknet",
        description="Interbank lending network: settlement, replicator "
                    "dynamics, and equilibrium analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common],
                       help="run replicated trajectories for a config")
    p.add_argument("--config", required=True)
    p.add_argument("--kind", choices=("average", "random"), default=None)

    p = sub.add_parser("equilibria", parents=[common],
                       help="list equilibria of the drift ODE")
    p.add_argument("--config", required=True)
    p.add_argument("--kind", choices=("average", "random"), default=None)

    p = sub.add_parser("predict", parents=[common],
                       help="closed-form limit prediction")
    p.add_argument("--config", required=True)
    p.add_argument("--kind", choices=("average", "random"), default=None)

    p = sub.add_parser("table", parents=[common],
                       help="recompute a packaged reference table")
    p.add_argument("k", type=int, choices=(1, 2, 3, 4))

    p = sub.add_parser("compare", parents=[common],
                       help="theory vs Monte Carlo for a config")
    p.add_argument("--config", required=True)
    return parser


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.replications is not None:
        overrides["replications"] = args.replications
    if args.finite:
        overrides["finite"] = True
    if getattr(args, "kind", None) is not None:
        overrides["kind"] = args.kind
    if args.out is not None:
        overrides["out"] = args.out
    return dataclasses.replace(config, **overrides) if overrides else config


def _ensure_out(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _cmd_simulate(args) -> int:
    config = _load(args)
    result = run_experiment(config, jobs=args.jobs)
    if config.out:
        write_experiment(result, _ensure_out(config.out))
    theory = result.theory_eps_star
    truncated = sum(tr.truncated for tr in result.trajectories)
    print(f"kind={config.kind} finite={int(config.finite)} "
          f"replications={config.replications} "
          f"final eps mean={result.eps_final_mean:.6g} "
          f"std={result.eps_final_std:.6g} "
          f"theory={'n/a' if theory is None else format(theory, '.6g')}")
    if truncated:
        print(f"warning: {truncated} trajectory(ies) hit the wall-clock "
              f"budget and were truncated", file=sys.stderr)
    return 0


def _cmd_equilibria(args) -> int:
    config = _load(args)
    eqs = find_equilibria(config.params, config.kind)
    pred = predict_limit(config.params, config.kind)
    print("eps_star    kind           stability  phi_gap")
    for e in eqs:
        gap = "" if e.phi_gap is None else f"{e.phi_gap:.6g}"
        print(f"{e.eps_star:<12.6g}{e.kind:<15}{e.stability:<11}{gap}")
    if config.out:
        equilibria_to_csv(config.params, eqs,
                          os.path.join(_ensure_out(config.out), "equilibria.csv"),
                          clause=pred.rule)
    return 0


def _cmd_predict(args) -> int:
    config = _load(args)
    pred = predict_limit(config.params, config.kind)
    if pred.predicted is None:
        print(f"kind={config.kind}: no closed-form rule applies; "
              f"defer to equilibria/simulation")
    else:
        extra = ""
        if pred.approx_eps_star is not None:
            extra = f" approx_eps_star={pred.approx_eps_star:.6g}"
        print(f"kind={config.kind}: rule {pred.rule} -> "
              f"eps*={pred.predicted.eps_star:.6g} "
              f"({pred.predicted.kind}, {pred.predicted.stability}){extra}")
    if config.out:
        out = os.path.join(_ensure_out(config.out), "predict.csv")
        with open(out, "w", newline="") as fh:
            fh.write("kind,rule,eps_star,equilibrium_kind,approx_eps_star\n")
            if pred.predicted is None:
                fh.write(f"{config.kind},,,,\n")
            else:
                approx = ("" if pred.approx_eps_star is None
                          else f"{pred.approx_eps_star:.6g}")
                fh.write(f"{config.kind},{pred.rule},"
                         f"{pred.predicted.eps_star:.6g},"
                         f"{pred.predicted.kind},{approx}\n")
    return 0


def _cmd_table(args) -> int:
    report = reproduce_table(
        args.k,
        replications=args.replications if args.replications is not None else 20,
        master_seed=args.seed if args.seed is not None else 0,
        finite=args.finite, jobs=args.jobs)
    print(report.to_text())
    if args.out:
        table_report_to_csv(
            report, os.path.join(_ensure_out(args.out), f"table{args.k}.csv"))
    return 0 if report.passed else 2


def _cmd_compare(args) -> int:
    config = _load(args)
    report = compare_theory_mc(config, jobs=args.jobs)
    print(report.to_text())
    if config.out:
        comparison_to_csv(
            report, os.path.join(_ensure_out(config.out), "comparison.csv"))
    return 0 if report.passed else 2


_COMMANDS = {
    "simulate": _cmd_simulate,
    "equilibria": _cmd_equilibria,
    "predict": _cmd_predict,
    "table": _cmd_table,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
