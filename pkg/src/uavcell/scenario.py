"""System parameters and network geometry.

A scenario bundles the radio constants with base-station, ground-user,
and UAV placement. Scenarios come either from a YAML config (explicit
positions optional) or from seeded random generation: base stations on
an even grid inside the square service area, ground users uniform in
the Voronoi cell of their serving BS, UAV horizontal positions uniform
over the whole square, UAV heights starting at the floor.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import yaml


class ScenarioParseError(ValueError):
    """Config text is malformed or has unknown/ill-typed keys."""


class ValidationError(ValueError):
    """A parameter or geometry invariant is violated.

    Carries the offending field name in `field`.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class SystemParams:
    """Radio and layout constants for one network.

    Powers are in watts, distances in meters, SINR targets linear.
    Noise power is derived from the spectral density and bandwidth.
    """

    num_bs: int = 3
    antennas_per_bs: int = 8
    gues_per_cell: int = 2
    num_uav: int = 6

    path_loss_ref_los: float = 6e-3
    path_loss_exp_los: float = 2.09
    path_loss_ref_nlos: float = 1e-3
    path_loss_exp_nlos: float = 3.75
    nakagami_shape_los: int = 3
    nakagami_shape_nlos: int = 1
    power_scale_los: float = 1.2e-8
    power_scale_nlos: float = 1.67e-9
    max_power_gue: float = 10.0
    max_power_uav: float = 0.2
    gue_target_sinr: float = 2.0
    noise_density_dbm: float = -174.0
    bandwidth: float = 1e6

    area_side: float = 600.0
    bs_height: float = 25.0
    uav_height_min: float = 100.0
    uav_height_max: float = 300.0
    enforce_los_heights: bool = True

    channel_error_var: float = 0.0
    correlation_coeff: float = 0.0

    @property
    def noise_power(self):
        """Thermal noise in watts over the configured bandwidth."""
        return 10 ** ((self.noise_density_dbm - 30.0) / 10.0) * self.bandwidth

    def validate(self):
        pos = [
            "path_loss_ref_los", "path_loss_exp_los", "path_loss_ref_nlos",
            "path_loss_exp_nlos", "power_scale_los", "power_scale_nlos",
            "max_power_gue", "max_power_uav", "gue_target_sinr", "bandwidth",
            "area_side", "bs_height",
        ]
        for name in pos:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)
                    and value > 0):
                raise ValidationError(name, f"must be a positive number, got {value!r}")
        for name in ("nakagami_shape_los", "nakagami_shape_nlos"):
            value = getattr(self, name)
            if not (isinstance(value, int) and value >= 1):
                raise ValidationError(name, f"must be a positive integer, got {value!r}")
        for name, floor in (("num_bs", 1), ("antennas_per_bs", 1),
                            ("gues_per_cell", 0), ("num_uav", 0)):
            value = getattr(self, name)
            if not (isinstance(value, int) and value >= floor):
                raise ValidationError(name, f"must be an integer >= {floor}, got {value!r}")
        if self.gues_per_cell > self.antennas_per_bs:
            raise ValidationError(
                "gues_per_cell",
                f"{self.gues_per_cell} ground users per cell exceed the "
                f"{self.antennas_per_bs} receive antennas")
        if not math.isfinite(self.noise_density_dbm):
            raise ValidationError("noise_density_dbm", "must be finite")
        if not 0.0 <= self.correlation_coeff <= 1.0:
            raise ValidationError("correlation_coeff",
                                  f"must lie in [0, 1], got {self.correlation_coeff!r}")
        if self.channel_error_var < 0:
            raise ValidationError("channel_error_var", "must be nonnegative")
        if self.uav_height_max < self.uav_height_min:
            raise ValidationError("uav_height_max",
                                  "must be at least uav_height_min")
        if self.uav_height_min <= self.bs_height:
            raise ValidationError("uav_height_min",
                                  "UAVs must fly above the base-station height")
        if self.enforce_los_heights and self.uav_height_min < 100.0:
            raise ValidationError(
                "uav_height_min",
                "line-of-sight air-to-ground model assumes at least 100 m; "
                "set enforce_los_heights false to override")
        return self


@dataclass(eq=False)
class Scenario:
    """Parameters plus concrete placement. UAV heights are the only
    mutable part; everything else is fixed for the scenario's lifetime."""

    params: SystemParams
    bs_xy: np.ndarray        # (G, 2)
    gue_xy: np.ndarray       # (G*K, 2), ground level
    gue_serving: np.ndarray  # (G*K,) serving BS index per ground user
    uav_xy: np.ndarray       # (U, 2)
    uav_heights: np.ndarray  # (U,)

    def __post_init__(self):
        self.bs_xy = np.asarray(self.bs_xy, dtype=float).reshape(-1, 2)
        self.gue_xy = np.asarray(self.gue_xy, dtype=float).reshape(-1, 2)
        self.gue_serving = np.asarray(self.gue_serving, dtype=int).ravel()
        self.uav_xy = np.asarray(self.uav_xy, dtype=float).reshape(-1, 2)
        self.uav_heights = np.asarray(self.uav_heights, dtype=float).ravel()

    def validate(self):
        p = self.params
        p.validate()
        if self.bs_xy.shape[0] != p.num_bs:
            raise ValidationError("num_bs", f"{self.bs_xy.shape[0]} base stations "
                                            f"placed but num_bs={p.num_bs}")
        expected = p.num_bs * p.gues_per_cell
        if self.gue_xy.shape[0] != expected:
            raise ValidationError("gues_per_cell",
                                  f"{self.gue_xy.shape[0]} ground users placed "
                                  f"but G*K={expected}")
        if self.gue_serving.shape[0] != self.gue_xy.shape[0]:
            raise ValidationError("gue_serving", "one serving tag per ground user")
        if len(self.gue_serving) and (self.gue_serving.min() < 0
                                      or self.gue_serving.max() >= p.num_bs):
            raise ValidationError("gue_serving", "serving index out of range")
        counts = np.bincount(self.gue_serving, minlength=p.num_bs)
        if len(self.gue_serving) and not np.all(counts == p.gues_per_cell):
            raise ValidationError("gue_serving",
                                  f"each cell must serve exactly {p.gues_per_cell} "
                                  f"ground users, got {counts.tolist()}")
        if self.uav_xy.shape[0] != p.num_uav:
            raise ValidationError("num_uav", f"{self.uav_xy.shape[0]} UAVs placed "
                                             f"but num_uav={p.num_uav}")
        if self.uav_heights.shape[0] != p.num_uav:
            raise ValidationError("uav_heights", "one height per UAV")
        if len(self.uav_heights):
            low, high = self.uav_heights.min(), self.uav_heights.max()
            if low < p.uav_height_min - 1e-9 or high > p.uav_height_max + 1e-9:
                raise ValidationError(
                    "uav_heights",
                    f"heights must lie in [{p.uav_height_min}, {p.uav_height_max}], "
                    f"got range [{low}, {high}]")
        return self

    # --- cached horizontal geometry (meters squared) ---

    @cached_property
    def r2_bs_gue(self):
        """(G, G*K) squared horizontal distance, BS i to ground user k."""
        d = self.bs_xy[:, None, :] - self.gue_xy[None, :, :]
        return np.einsum("ijk,ijk->ij", d, d)

    @cached_property
    def r2_bs_uav(self):
        """(G, U) squared horizontal distance, BS i to UAV u."""
        d = self.bs_xy[:, None, :] - self.uav_xy[None, :, :]
        return np.einsum("ijk,ijk->ij", d, d)

    def replaced_heights(self, heights):
        """Copy of this scenario with different UAV heights."""
        return Scenario(self.params, self.bs_xy, self.gue_xy,
                        self.gue_serving, self.uav_xy,
                        np.asarray(heights, dtype=float).copy())


def bs_grid(num_bs, area_side):
    """Even BS layout inside the square.

    Three stations form an equilateral triangle whose x coordinates sit
    at the centroids of the three equal vertical strips (side length
    2/3 of the square side, centroid at the origin); that keeps the
    cells as far apart as the strip spacing allows. Any other count
    falls back to the strip centroids on the x axis.
    """
    xs = -area_side / 2 + (np.arange(num_bs) + 0.5) * area_side / num_bs
    if num_bs == 3:
        side = 2.0 * area_side / 3.0
        dy = side * np.sqrt(3.0) / 2.0
        ys = np.array([-dy / 3.0, 2.0 * dy / 3.0, -dy / 3.0])
        return np.column_stack([xs, ys])
    return np.column_stack([xs, np.zeros(num_bs)])


def generate_scenario(seed, params):
    """Seeded random scenario. Deterministic given (seed, params)."""
    params.validate()
    rng = np.random.default_rng(seed)
    g, k, u = params.num_bs, params.gues_per_cell, params.num_uav
    half = params.area_side / 2
    bs = bs_grid(g, params.area_side)

    gue = np.zeros((g * k, 2))
    serving = np.repeat(np.arange(g), k)
    for idx in range(g * k):
        cell = serving[idx]
        while True:
            pt = rng.uniform(-half, half, size=2)
            d2 = ((bs - pt) ** 2).sum(axis=1)
            if int(np.argmin(d2)) == cell:
                gue[idx] = pt
                break

    uav = rng.uniform(-half, half, size=(u, 2))
    heights = np.full(u, params.uav_height_min)
    return Scenario(params, bs, gue, serving, uav, heights).validate()


# ---------------------------------------------------------------------------
# config text
# ---------------------------------------------------------------------------

_SECTIONS = {
    "system": ("num_bs", "antennas_per_bs", "gues_per_cell", "num_uav"),
    "radio": ("path_loss_ref_los", "path_loss_exp_los", "path_loss_ref_nlos",
              "path_loss_exp_nlos", "nakagami_shape_los", "nakagami_shape_nlos",
              "power_scale_los", "power_scale_nlos", "max_power_gue",
              "max_power_uav", "gue_target_sinr", "noise_density_dbm",
              "bandwidth"),
    "geometry": ("area_side", "bs_height", "uav_height_min", "uav_height_max",
                 "enforce_los_heights"),
    "csi": ("channel_error_var", "correlation_coeff"),
}
_POWER_FIELDS = {"max_power_gue", "max_power_uav"}
_INT_FIELDS = {"num_bs", "antennas_per_bs", "gues_per_cell", "num_uav",
               "nakagami_shape_los", "nakagami_shape_nlos"}
_BOOL_FIELDS = {"enforce_los_heights"}


def _parse_power(field, value):
    """Watts as a number, or a '<value> dBm' string."""
    if isinstance(value, str):
        text = value.strip()
        if text.lower().endswith("dbm"):
            try:
                dbm = float(text[:-3].strip())
            except ValueError:
                raise ScenarioParseError(f"{field}: cannot parse dBm value {value!r}")
            return 10 ** ((dbm - 30.0) / 10.0)
        raise ScenarioParseError(f"{field}: power must be watts or '<x> dBm', "
                                 f"got {value!r}")
    return value


def load_scenario(config_text):
    """Build a Scenario from YAML config text.

    Sections system/radio/geometry/csi override SystemParams defaults.
    A top-level `positions` block pins placement explicitly (ground
    users as [x, y, serving_bs], UAVs as [x, y, height]); otherwise
    placement is generated from the top-level `seed` (default 0).
    Unknown keys are rejected by name.
    """
    try:
        doc = yaml.safe_load(config_text)
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"config is not valid YAML: {exc}")
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ScenarioParseError("config root must be a mapping")

    known_top = set(_SECTIONS) | {"seed", "positions"}
    for key in doc:
        if key not in known_top:
            raise ScenarioParseError(f"unknown key {key!r} at config root")

    overrides = {}
    for section, fields in _SECTIONS.items():
        block = doc.get(section) or {}
        if not isinstance(block, dict):
            raise ScenarioParseError(f"section {section!r} must be a mapping")
        for key, value in block.items():
            if key not in fields:
                raise ScenarioParseError(f"unknown key {section}.{key!r}")
            if key in _POWER_FIELDS:
                value = _parse_power(key, value)
            if key in _BOOL_FIELDS:
                if not isinstance(value, bool):
                    raise ScenarioParseError(f"{section}.{key} must be a boolean")
            elif key in _INT_FIELDS:
                if not isinstance(value, int) or isinstance(value, bool):
                    raise ScenarioParseError(f"{section}.{key} must be an integer")
            else:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ScenarioParseError(f"{section}.{key} must be a number")
                value = float(value)
            overrides[key] = value

    positions = doc.get("positions")
    if positions is not None:
        if not isinstance(positions, dict):
            raise ScenarioParseError("positions must be a mapping")
        for key in positions:
            if key not in ("bs", "gue", "uav"):
                raise ScenarioParseError(f"unknown key positions.{key!r}")
        missing = [k for k in ("bs", "gue", "uav") if k not in positions]
        if missing:
            raise ScenarioParseError(f"positions block missing {missing}")
        bs = _coerce_rows(positions["bs"], 2, "positions.bs")
        gue_rows = _coerce_rows(positions["gue"], 3, "positions.gue")
        uav_rows = _coerce_rows(positions["uav"], 3, "positions.uav")
        counts = np.bincount(gue_rows[:, 2].astype(int),
                             minlength=len(bs)) if len(gue_rows) else np.zeros(len(bs), int)
        if len(gue_rows) and len(set(counts.tolist())) > 1:
            raise ValidationError("gue_serving",
                                  f"per-cell ground user counts must match, got "
                                  f"{counts.tolist()}")
        inferred = {
            "num_bs": len(bs),
            "gues_per_cell": int(counts[0]) if len(bs) else 0,
            "num_uav": len(uav_rows),
        }
        for key, value in inferred.items():
            if key in overrides and overrides[key] != value:
                raise ValidationError(key, f"config says {overrides[key]} but "
                                           f"positions imply {value}")
            overrides[key] = value
        params = SystemParams(**overrides)
        scenario = Scenario(params, bs, gue_rows[:, :2],
                            gue_rows[:, 2].astype(int), uav_rows[:, :2],
                            uav_rows[:, 2])
        return scenario.validate()

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ScenarioParseError("seed must be an integer")
    return generate_scenario(seed, SystemParams(**overrides))


def _coerce_rows(value, width, where):
    if not isinstance(value, list):
        raise ScenarioParseError(f"{where} must be a list of {width}-element rows")
    rows = []
    for i, row in enumerate(value):
        if (not isinstance(row, list) or len(row) != width
                or any(isinstance(x, bool) or not isinstance(x, (int, float))
                       for x in row)):
            raise ScenarioParseError(f"{where}[{i}] must be {width} numbers")
        rows.append([float(x) for x in row])
    return np.array(rows, dtype=float).reshape(len(rows), width)


def scenario_to_text(scenario):
    """Serialize to YAML that load_scenario reproduces exactly."""
    p = scenario.params
    doc = {
        "system": {k: getattr(p, k) for k in _SECTIONS["system"]},
        "radio": {k: getattr(p, k) for k in _SECTIONS["radio"]},
        "geometry": {k: getattr(p, k) for k in _SECTIONS["geometry"]},
        "csi": {k: getattr(p, k) for k in _SECTIONS["csi"]},
        "positions": {
            "bs": [[float(x), float(y)] for x, y in scenario.bs_xy],
            "gue": [[float(x), float(y), int(s)] for (x, y), s
                    in zip(scenario.gue_xy, scenario.gue_serving)],
            "uav": [[float(x), float(y), float(h)] for (x, y), h
                    in zip(scenario.uav_xy, scenario.uav_heights)],
        },
    }
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def scenario_params_dict(params):
    """Plain-dict view of SystemParams (for metadata sidecars)."""
    return dataclasses.asdict(params)
