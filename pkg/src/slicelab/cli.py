"""Command-line entry point for running certification scenarios.

Exit codes: 0 all verdicts pass, 1 a bound or verdict fails, 2 usage or
config problem, 3 numerical failure inside a run.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, SliceLabError
from .harness import (
    config_from_mapping,
    emit_report,
    load_config,
    parse_config_text,
    report_columns,
    run_experiment,
    run_scenarios,
    scenario_kind,
)

_SUBCOMMAND_SCENARIO = {
    "solve": "solve",
    "estimate": "budget-flat-smooth",
    "contraction": "contraction-flat-burgers",
    "compare-flux": "flux-perturbation",
    "diffusion-rate": "diffusion-rate",
    "verify-mollifier": "mollifier-admissibility",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slicelab",
        description="Run and certify foliated conservation-law experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, scenario in _SUBCOMMAND_SCENARIO.items():
        p = sub.add_parser(name, help=f"run the {scenario!r} scenario family")
        _add_common(p)
    p = sub.add_parser("run", help="run one or more scenarios from a config file")
    _add_common(p)
    return parser


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", help="report destination (file, or directory for lists)")
    p.add_argument("--seed", type=int, help="override the recorded seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel scenarios for lists")


def _load_mapping(args) -> dict:
    if args.config is None:
        return {}
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)


def _configs_for(args) -> list:
    mapping = _load_mapping(args)
    if args.command == "run":
        raw = mapping.get("scenario")
        if raw is None:
            raise ConfigError("the run command needs a config with a scenario key")
        names = [tok.strip() for tok in str(raw).split(",") if tok.strip()]
    else:
        default = _SUBCOMMAND_SCENARIO[args.command]
        names = [str(mapping.get("scenario", default)).strip()]
        if scenario_kind(names[0]) != scenario_kind(default):
            raise ConfigError(
                f"command {args.command!r} runs {scenario_kind(default)!r} scenarios, "
                f"config names {names[0]!r}"
            )
    cfgs = []
    for name in names:
        cfg = config_from_mapping({**mapping, "scenario": name})
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        cfgs.append(cfg)
    return cfgs


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfgs = _configs_for(args)
        if len(cfgs) > 1:
            out_dir = Path(args.out) if args.out is not None else Path(".")
            results = run_scenarios(cfgs, out_dir, jobs=args.jobs)
            for res in results:
                print(f"{res.scenario}: {'pass' if res.passed else 'fail'} ({res.path})")
            return 0 if all(r.passed for r in results) else 1
        cfg = cfgs[0]
        rows = run_experiment(replace(cfg, out_path=None))
        out = Path(args.out) if args.out is not None else Path(f"{cfg.scenario}.csv")
        emit_report(rows, out, columns=report_columns(cfg.scenario))
        passed = all(bool(r["verdict"]) for r in rows if "verdict" in r)
        print(f"{cfg.scenario}: {'pass' if passed else 'fail'} ({out})")
        return 0 if passed else 1
    except ConfigError as exc:
        print(f"slicelab: {exc}", file=sys.stderr)
        return 2
    except (SliceLabError, FloatingPointError) as exc:
        print(f"slicelab: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
