"""Command line front end: solve one instance, run a sweep, or check a
config file.

Exit codes: 0 success, 1 config error, 2 solver infeasibility on a
solve run, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import pathlib
import sys

from .channel import corrupt_channels, realize_channels
from .harness import (ExperimentSpec, KINDS, MOBILITY_LINE, run_experiment,
                      trial_seed, write_results)
from .orchestrator import solution_to_text, solve_bilayer
from .scenario import (ScenarioParseError, SystemParams, ValidationError,
                       generate_scenario, load_scenario, scenario_params_dict,
                       scenario_to_text)

log = logging.getLogger(__name__)

DEFAULT_VALUES = {
    "antennaSweep": "8,10,12,14",
    "heightSweep": "100,150,200,250,300",
    "gueCountSweep": "1,2,3",
    "errorVarSweep": "0,0.0025,0.005,0.0125,0.025",
    "correlationSweep": "0,0.3,0.6,0.9",
}


def _load_inputs(args):
    if args.config:
        try:
            text = pathlib.Path(args.config).read_text()
        except OSError as exc:
            raise ScenarioParseError(f"cannot read config: {exc}")
        scenario = load_scenario(text)
    else:
        scenario = generate_scenario(trial_seed(args.seed, "solve", 0, "scen"),
                                     SystemParams())
    channels = realize_channels(scenario,
                                trial_seed(args.seed, "solve", 0, "chan"))
    p = scenario.params
    if p.channel_error_var > 0:
        channels = corrupt_channels(channels, p.channel_error_var,
                                    p.correlation_coeff,
                                    trial_seed(args.seed, "solve", 0, "err"))
    return scenario, channels


def _cmd_solve(args):
    scenario, channels = _load_inputs(args)
    solution = solve_bilayer(scenario, channels, csi_mode=args.csi_mode,
                             max_outer=args.max_outer)
    text = solution_to_text(solution)
    sys.stdout.write(text)
    if args.output:
        out = pathlib.Path(args.output)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "solution.txt").write_text(text)
            (out / "scenario.yaml").write_text(scenario_to_text(scenario))
            with open(out / "diagnostics.json", "w") as fh:
                json.dump(solution.diagnostics, fh, sort_keys=True, indent=1,
                          default=float)
                fh.write("\n")
        except OSError as exc:
            log.error("cannot write output: %s", exc)
            return 3
    return 0 if solution.success else 2


def _parse_values(text):
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        number = float(part)
        values.append(int(number) if number == int(number) and
                      "." not in part and "e" not in part.lower()
                      else number)
    if not values:
        raise ValueError("no sweep values given")
    return values


def _parse_methods(text):
    methods = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            method, beam = part.split(":", 1)
        else:
            method, beam = part, "optimal"
        methods.append((method.strip(), beam.strip()))
    if not methods:
        raise ValueError("no methods given")
    return tuple(methods)


def _cmd_sweep(args):
    if args.config:
        try:
            text = pathlib.Path(args.config).read_text()
        except OSError as exc:
            raise ScenarioParseError(f"cannot read config: {exc}")
        params = load_scenario(text).params
    else:
        params = SystemParams()
    if args.kind == MOBILITY_LINE:
        values = tuple(range(args.waypoints))
    else:
        values = tuple(_parse_values(args.values
                                     or DEFAULT_VALUES[args.kind]))
    spec = ExperimentSpec(kind=args.kind, sweep_values=values, params=params,
                          trials=args.trials,
                          methods=_parse_methods(args.methods),
                          seed_base=args.seed)
    spec.validate()
    table = run_experiment(spec, workers=args.workers, keep_raw=args.raw)
    try:
        out = write_results(table, args.output, spec=spec)
    except OSError as exc:
        log.error("cannot write results: %s", exc)
        return 3
    included = sum(r.trial_count for r in table.rows)
    dropped = sum(table.failures.values())
    sys.stdout.write(f"wrote {out / 'results.csv'} "
                     f"({len(table.rows)} rows, {included} method-trials, "
                     f"{dropped} failures)\n")
    return 0


def _cmd_validate(args):
    try:
        text = pathlib.Path(args.config).read_text()
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return 1
    scenario = load_scenario(text)
    p = scenario.params
    sys.stdout.write(
        f"config ok: {p.num_bs} BS x {p.antennas_per_bs} antennas, "
        f"{p.gues_per_cell} ground users/cell, {p.num_uav} UAVs, "
        f"target SINR {p.gue_target_sinr:g}, "
        f"heights [{p.uav_height_min:g}, {p.uav_height_max:g}] m\n")
    if args.verbose:
        sys.stdout.write(json.dumps(scenario_params_dict(p), sort_keys=True,
                                    indent=1, default=float) + "\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="uavcell",
        description="Max-min UAV rate planning in cellular uplink: "
                    "association, receive beamforming, and height control.")
    parser.add_argument("--verbose", "-v", action="count", default=0,
                        help="log progress (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one instance")
    solve.add_argument("--config", help="scenario YAML (generated if omitted)")
    solve.add_argument("--seed", type=int, default=0,
                       help="seed for generated scenario and channels")
    solve.add_argument("--csi-mode", choices=("perfect", "effective",
                                              "imperfect"), default=None)
    solve.add_argument("--max-outer", type=int, default=10)
    solve.add_argument("--output", help="directory for solution artifacts")
    solve.set_defaults(func=_cmd_solve)

    sweep = sub.add_parser("sweep", help="run a Monte-Carlo sweep")
    sweep.add_argument("--kind", choices=KINDS, required=True)
    sweep.add_argument("--values", help="comma-separated sweep values")
    sweep.add_argument("--waypoints", type=int, default=7,
                       help="waypoint count for mobilityLine")
    sweep.add_argument("--trials", type=int, default=100)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--config", help="base parameters YAML")
    sweep.add_argument("--methods", default="proposed:optimal,nearest:optimal",
                       help="method:beamformer pairs, comma separated")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--output", default="results",
                       help="output directory")
    sweep.add_argument("--raw", action="store_true",
                       help="also write per-trial raw.csv")
    sweep.set_defaults(func=_cmd_sweep)

    check = sub.add_parser("validate", help="check a config file")
    check.add_argument("--config", required=True)
    check.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (logging.WARNING if args.verbose == 0
             else logging.INFO if args.verbose == 1 else logging.DEBUG)
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioParseError, ValidationError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
