"""Monte-Carlo experiment runner: sweeps, trial seeding, aggregation,
and byte-stable result files.

Each (sweep value, trial) pair draws a fresh scenario and channel set
from seeds derived by hashing (seed base, stream tag, trial index,
stream name), so adding trials or sweep values never disturbs earlier
draws. The stream tag is the sweep value only for streams whose draw
actually consumes it (fading dimensions change with the antenna count,
geometry with the user count); otherwise it is a constant, so the same
trial index reuses the same draw across sweep values and cross-value
differences reflect the swept knob alone.

All methods in a trial share the same draws. A trial where any solve
under optimal beams fails is excluded from every method's average (the
comparison stays paired); the raw dump keeps those rows with a failed
flag so the published aggregates are recomputable from it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .channel import corrupt_channels, realize_channels
from .orchestrator import (Solution, evaluate_solution, nearest_baseline,
                           solve_bilayer, solve_fixed_heights)
from .beamforming import baseline_beamformers
from .scenario import generate_scenario, scenario_params_dict

log = logging.getLogger(__name__)

ANTENNA_SWEEP = "antennaSweep"
HEIGHT_SWEEP = "heightSweep"
GUE_COUNT_SWEEP = "gueCountSweep"
ERROR_VAR_SWEEP = "errorVarSweep"
CORRELATION_SWEEP = "correlationSweep"
MOBILITY_LINE = "mobilityLine"
KINDS = (ANTENNA_SWEEP, HEIGHT_SWEEP, GUE_COUNT_SWEEP, ERROR_VAR_SWEEP,
         CORRELATION_SWEEP, MOBILITY_LINE)

METHOD_NAMES = ("proposed", "nearest")
BEAM_KINDS = ("optimal", "mf", "pzf")

# mobility track endpoints (same start/finish every run; z pinned)
LINE_START = np.array([600.0, -600.0, 100.0])
LINE_END = np.array([-600.0, 600.0, 100.0])


@dataclass
class ExperimentSpec:
    kind: str
    sweep_values: tuple
    params: object
    trials: int = 100
    methods: tuple = (("proposed", "optimal"), ("nearest", "optimal"))
    seed_base: int = 0

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not self.sweep_values:
            raise ValueError("sweep values must be nonempty")
        if list(self.sweep_values) != sorted(self.sweep_values):
            raise ValueError("sweep values must be sorted")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.methods:
            raise ValueError("method list must be nonempty")
        for method, beam in self.methods:
            if method not in METHOD_NAMES:
                raise ValueError(f"unknown method {method!r}")
            if beam not in BEAM_KINDS:
                raise ValueError(f"unknown beamformer kind {beam!r}")
        if self.kind == MOBILITY_LINE:
            if list(self.sweep_values) != list(range(len(self.sweep_values))):
                raise ValueError("mobility sweep values are waypoint indices "
                                 "0..n-1")
            if len(self.sweep_values) < 2:
                raise ValueError("mobility needs at least two waypoints")
            if self.params.num_uav != 1:
                raise ValueError("mobility experiments track a single UAV")
        else:
            for value in self.sweep_values:
                _params_for(self, value).validate()
        if self.kind == HEIGHT_SWEEP:
            lo, hi = self.params.uav_height_min, self.params.uav_height_max
            for value in self.sweep_values:
                if not lo <= value <= hi:
                    raise ValueError(f"pinned height {value} outside "
                                     f"[{lo}, {hi}]")


@dataclass
class ResultRow:
    sweep_value: float
    method: str
    beamformer: str
    mean_min_uav_rate: float
    mean_min_gue_rate: float
    mean_optimal_height: float
    trial_count: int
    std_error: float


@dataclass
class ResultTable:
    rows: list
    failures: dict = field(default_factory=dict)
    raw: list = field(default_factory=list)


def trial_seed(seed_base, sweep_value, trial_index, stream):
    """Deterministic 64-bit seed; stable under added trials or values."""
    key = f"{seed_base}|{sweep_value!r}|{trial_index}|{stream}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def _params_for(spec, value):
    p = spec.params
    if spec.kind == ANTENNA_SWEEP:
        return replace(p, antennas_per_bs=int(value))
    if spec.kind == GUE_COUNT_SWEEP:
        return replace(p, gues_per_cell=int(value))
    if spec.kind == ERROR_VAR_SWEEP:
        return replace(p, channel_error_var=float(value))
    if spec.kind == CORRELATION_SWEEP:
        return replace(p, correlation_coeff=float(value))
    return p


def _stream_tags(kind, value):
    """Per-stream sweep tags: the sweep value where the draw consumes it
    (geometry depends on the user count, fading dimensions on antenna
    and user counts), a constant everywhere else so trials stay paired
    across sweep values."""
    scen_tag = value if kind == GUE_COUNT_SWEEP else "base"
    fade_tag = (value if kind in (ANTENNA_SWEEP, GUE_COUNT_SWEEP)
                else "base")
    return scen_tag, fade_tag


def _draw_inputs(params, seed_base, kind, value, trial):
    scen_tag, fade_tag = _stream_tags(kind, value)
    scenario = generate_scenario(trial_seed(seed_base, scen_tag, trial,
                                            "scen"), params)
    channels = realize_channels(scenario, trial_seed(seed_base, fade_tag,
                                                     trial, "chan"))
    if params.channel_error_var > 0:
        channels = corrupt_channels(channels, params.channel_error_var,
                                    params.correlation_coeff,
                                    trial_seed(seed_base, fade_tag, trial,
                                               "err"))
    return scenario, channels


def _swap_beams(scenario, channels, solution, beam_kind):
    """Re-evaluate a solved association/height tuple under mf or pzf
    receive beams."""
    beams = baseline_beamformers(beam_kind, scenario, channels,
                                 solution.association,
                                 heights=solution.heights)
    shell = Solution(association=solution.association, beamformers=beams,
                     heights=solution.heights, t_star=0.0,
                     gue_rates=np.zeros(0), uav_rates=np.zeros(0),
                     min_uav_rate=0.0, min_gue_rate=0.0, success=False)
    report = evaluate_solution(scenario, channels, shell)
    return report


def _row(value, trial, method, beam, min_uav, min_gue, height, success,
         failed=False, note=""):
    return {"sweep_value": value, "trial": trial, "method": method,
            "beamformer": beam, "min_uav_rate": min_uav,
            "min_gue_rate": min_gue, "mean_height": height,
            "success": success, "failed": failed, "note": note}


def run_trial(spec, value, trial):
    """All methods on one (sweep value, trial) draw; returns raw rows."""
    if spec.kind == MOBILITY_LINE:
        raise ValueError("mobility trials run per track, not per value")
    params = _params_for(spec, value)
    scenario, channels = _draw_inputs(params, spec.seed_base, spec.kind,
                                      value, trial)
    pinned = None
    if spec.kind == HEIGHT_SWEEP:
        pinned = np.full(params.num_uav, float(value))
        scenario = scenario.replaced_heights(pinned)
    rows = []
    proposed_solution = None
    for method, beam in spec.methods:
        try:
            if method == "proposed":
                if proposed_solution is None:
                    if pinned is None:
                        proposed_solution = solve_bilayer(scenario, channels)
                    else:
                        proposed_solution = solve_fixed_heights(
                            scenario, channels, pinned)
                sol = proposed_solution
                if beam == "optimal":
                    rows.append(_row(value, trial, method, beam,
                                     sol.min_uav_rate, sol.min_gue_rate,
                                     float(np.mean(sol.heights)),
                                     sol.success))
                else:
                    report = _swap_beams(scenario, channels, sol, beam)
                    rows.append(_row(value, trial, method, beam,
                                     report.min_uav_rate,
                                     report.min_gue_rate,
                                     float(np.mean(sol.heights)),
                                     not report.violations))
                if not sol.success:
                    rows[-1]["failed"] = True
                    rows[-1]["note"] = "; ".join(sol.violations[:3])
            else:
                design = "mmse" if beam == "optimal" else beam
                sol = nearest_baseline(scenario, channels, beam_design=design,
                                       heights=pinned)
                rows.append(_row(value, trial, method, beam,
                                 sol.min_uav_rate, sol.min_gue_rate,
                                 float(np.mean(sol.heights)), sol.success))
                if beam == "optimal" and not sol.success:
                    rows[-1]["failed"] = True
                    rows[-1]["note"] = "; ".join(sol.violations[:3])
        except Exception as exc:  # recorded, never aborts the sweep
            log.warning("trial %s value %r method %s/%s failed: %s",
                        trial, value, method, beam, exc)
            rows.append(_row(value, trial, method, beam, math.nan, math.nan,
                             math.nan, False, failed=True, note=str(exc)))
    return rows


def _waypoints(count):
    return np.linspace(LINE_START, LINE_END, count)


def run_mobility_trial(spec, trial):
    """One full track: four method variants across every waypoint with a
    single fading draw."""
    params = spec.params
    tag = "mobility"
    points = _waypoints(len(spec.sweep_values))
    scen_seed = trial_seed(spec.seed_base, tag, trial, "scen")
    chan_seed = trial_seed(spec.seed_base, tag, trial, "chan")
    base = generate_scenario(scen_seed, params)

    def at_waypoint(k):
        xy = points[k, :2][None, :]
        h = np.array([points[k, 2]])
        scen = replace(base, uav_xy=xy, uav_heights=h)
        chans = realize_channels(scen, chan_seed)
        if params.channel_error_var > 0:
            chans = corrupt_channels(chans, params.channel_error_var,
                                     params.correlation_coeff,
                                     trial_seed(spec.seed_base, tag, trial,
                                                "err"))
        return scen, chans, h

    rows = []
    try:
        fixed_proposed = None
        fixed_nearest = None
        for k in spec.sweep_values:
            scen, chans, h = at_waypoint(k)
            live = solve_fixed_heights(scen, chans, h)
            near = nearest_baseline(scen, chans, heights=h)
            if k == spec.sweep_values[0]:
                fixed_proposed = (live.association, live.beamformers)
                fixed_nearest = (near.association, near.beamformers)
            rows.append(_row(float(k), trial, "proposed-realtime", "optimal",
                             live.min_uav_rate, live.min_gue_rate,
                             float(h[0]), live.success))
            rows.append(_row(float(k), trial, "nearest-realtime", "optimal",
                             near.min_uav_rate, near.min_gue_rate,
                             float(h[0]), near.success))
            for name, (assoc, beams) in (("proposed-fixed", fixed_proposed),
                                         ("nearest-fixed", fixed_nearest)):
                report = _evaluate_tuple(scen, chans, assoc, beams, h)
                rows.append(_row(float(k), trial, name, "optimal",
                                 report.min_uav_rate, report.min_gue_rate,
                                 float(h[0]), not report.violations))
    except Exception as exc:
        log.warning("mobility trial %s failed: %s", trial, exc)
        rows = [_row(float(k), trial, name, "optimal", math.nan, math.nan,
                     math.nan, False, failed=True, note=str(exc))
                for k in spec.sweep_values
                for name in ("proposed-realtime", "nearest-realtime",
                             "proposed-fixed", "nearest-fixed")]
    return rows


def _evaluate_tuple(scenario, channels, association, beams, heights):
    shell = Solution(association=association, beamformers=beams,
                     heights=np.asarray(heights, dtype=float), t_star=0.0,
                     gue_rates=np.zeros(0), uav_rates=np.zeros(0),
                     min_uav_rate=0.0, min_gue_rate=0.0, success=False)
    return evaluate_solution(scenario, channels, shell)


def _mobility_methods(spec):
    return (("proposed-realtime", "optimal"), ("nearest-realtime", "optimal"),
            ("proposed-fixed", "optimal"), ("nearest-fixed", "optimal"))


def aggregate_raw(raw_rows, values, methods):
    """Paired-mean table rows from per-trial raw rows.

    A (sweep value, trial) group where any row carries the failed flag
    is excluded from every method's average, so the comparison stays
    paired. run_experiment publishes exactly this aggregation of its own
    raw rows; re-running it over a persisted raw dump reproduces the
    results table.
    """
    dropped = {(r["sweep_value"], r["trial"])
               for r in raw_rows if r["failed"]}
    by_cell = {}
    for r in raw_rows:
        if (r["sweep_value"], r["trial"]) in dropped:
            continue
        cell = (r["sweep_value"], r["method"], r["beamformer"])
        by_cell.setdefault(cell, []).append(r)
    table_rows = []
    for value in values:
        for method, beam in methods:
            cell = by_cell.get((value, method, beam), [])
            if not cell:
                table_rows.append(ResultRow(float(value), method, beam,
                                            math.nan, math.nan, math.nan,
                                            0, 0.0))
                continue
            uav = np.array([r["min_uav_rate"] for r in cell])
            gue = np.array([r["min_gue_rate"] for r in cell])
            hts = np.array([r["mean_height"] for r in cell])
            stderr = (float(uav.std(ddof=1) / math.sqrt(len(uav)))
                      if len(uav) > 1 else 0.0)
            table_rows.append(ResultRow(
                float(value), method, beam, float(uav.mean()),
                float(gue.mean()), float(hts.mean()), len(cell), stderr))
    return table_rows


def run_experiment(spec, workers=1, keep_raw=False):
    """Run every (value, trial, method) cell and aggregate.

    Trials are dispatched to a process pool when workers > 1 and merged
    in (value, trial) order, so the output never depends on completion
    order. A trial in which any optimal-beam solve failed is excluded
    from every method's average (the comparison stays paired) and
    tallied in the table's failures map; with keep_raw the dropped rows
    stay in the raw dump, marked by their failed flag.
    """
    spec.validate()
    if spec.kind == MOBILITY_LINE:
        tasks = [(None, t) for t in range(spec.trials)]

        def submit(pool, task):
            return pool.submit(run_mobility_trial, spec, task[1])

        def inline(task):
            return run_mobility_trial(spec, task[1])
    else:
        tasks = [(v, t) for v in spec.sweep_values
                 for t in range(spec.trials)]

        def submit(pool, task):
            return pool.submit(run_trial, spec, task[0], task[1])

        def inline(task):
            return run_trial(spec, task[0], task[1])

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [submit(pool, task) for task in tasks]
            per_task = [f.result() for f in futures]
    else:
        per_task = [inline(task) for task in tasks]

    failures = {}
    raw = []
    for rows in per_task:
        raw.extend(rows)
        for r in rows:
            if r["failed"]:
                key = (r["sweep_value"], r["method"], r["beamformer"])
                failures[key] = failures.get(key, 0) + 1

    methods = (_mobility_methods(spec) if spec.kind == MOBILITY_LINE
               else spec.methods)
    values = ([float(v) for v in spec.sweep_values]
              if spec.kind == MOBILITY_LINE else list(spec.sweep_values))
    table_rows = aggregate_raw(raw, values, methods)
    return ResultTable(rows=table_rows, failures=failures,
                       raw=raw if keep_raw else [])


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

RESULT_COLUMNS = ("sweep_value", "method", "beamformer", "mean_min_uav_rate",
                  "mean_min_gue_rate", "mean_optimal_height", "trial_count",
                  "std_error")
RAW_COLUMNS = ("sweep_value", "trial", "method", "beamformer", "min_uav_rate",
               "min_gue_rate", "mean_height", "success", "failed", "note")


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_results(table, path, spec=None):
    """results.csv + metadata.json (+ raw.csv when raw rows are kept)
    under `path`; identical inputs give byte-identical files."""
    import pathlib

    out = pathlib.Path(path)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in table.rows:
            writer.writerow([_fmt(row.sweep_value), row.method,
                             row.beamformer, _fmt(row.mean_min_uav_rate),
                             _fmt(row.mean_min_gue_rate),
                             _fmt(row.mean_optimal_height),
                             _fmt(row.trial_count), _fmt(row.std_error)])
    meta = {"artifact_version": __version__,
            "failures": {f"{v!r}|{m}|{b}": c
                         for (v, m, b), c in sorted(table.failures.items(),
                                                    key=lambda kv: str(kv))}}
    if spec is not None:
        meta["spec"] = {"kind": spec.kind,
                        "sweep_values": list(spec.sweep_values),
                        "trials": spec.trials,
                        "methods": [list(mb) for mb in spec.methods],
                        "seed_base": spec.seed_base,
                        "params": scenario_params_dict(spec.params)}
    with open(out / "metadata.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")
    if table.raw:
        with open(out / "raw.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RAW_COLUMNS)
            for r in table.raw:
                writer.writerow([_fmt(r["sweep_value"]), _fmt(r["trial"]),
                                 r["method"], r["beamformer"],
                                 _fmt(r["min_uav_rate"]),
                                 _fmt(r["min_gue_rate"]),
                                 _fmt(r["mean_height"]), _fmt(r["success"]),
                                 _fmt(r["failed"]), r["note"]])
    return out


def read_results(path):
    """Inverse of write_results (table rows, failures, raw)."""
    import pathlib

    out = pathlib.Path(path)
    rows = []
    with open(out / "results.csv", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ResultRow(float(rec["sweep_value"]), rec["method"],
                                  rec["beamformer"],
                                  float(rec["mean_min_uav_rate"]),
                                  float(rec["mean_min_gue_rate"]),
                                  float(rec["mean_optimal_height"]),
                                  int(rec["trial_count"]),
                                  float(rec["std_error"])))
    failures = {}
    meta_path = out / "metadata.json"
    if meta_path.exists():
        with open(meta_path) as fh:
            meta = json.load(fh)
        for key, count in meta.get("failures", {}).items():
            value, method, beam = key.split("|")
            failures[(_parse_value(value), method, beam)] = count
    raw = []
    raw_path = out / "raw.csv"
    if raw_path.exists():
        with open(raw_path, newline="") as fh:
            for rec in csv.DictReader(fh):
                raw.append({"sweep_value": _parse_value(rec["sweep_value"]),
                            "trial": int(rec["trial"]),
                            "method": rec["method"],
                            "beamformer": rec["beamformer"],
                            "min_uav_rate": float(rec["min_uav_rate"]),
                            "min_gue_rate": float(rec["min_gue_rate"]),
                            "mean_height": float(rec["mean_height"]),
                            "success": rec["success"] == "true",
                            "failed": rec.get("failed", "false") == "true",
                            "note": rec.get("note", "")})
    return ResultTable(rows=rows, failures=failures, raw=raw)


def _parse_value(text):
    try:
        return int(text)
    except ValueError:
        return float(text)
