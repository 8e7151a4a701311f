"""Synthetic V2V scene kinematics relative to the receiver's front array.

Coordinates are 2D in the receiver frame: x along the array boresight
(forward), y to the left.  Azimuth is ``atan2(y, x)`` so positive angles
are to the left.  Radial velocity is the time derivative of range, positive
when the object recedes.  Every preset is a closed-form trajectory, so
ranges and radial velocities are exact at any time.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from typing import Callable

import numpy as np

from .radar import RadarWaveformConfig, derived_params

PRESETS = ("following", "passing", "lane_change", "turn")

PRESET_DEFAULTS: dict[str, dict[str, float]] = {
    # constant gap, equal speeds
    "following": {"gap_m": 10.0, "lane_offset_m": 0.0},
    # transmitter ahead, crossing from one side of boresight to the other
    # (e.g. it overtook on the left and now merges across); the crossing
    # happens mid-scene by default
    "passing": {"gap_m": 12.0, "pull_away_speed_mps": 0.3,
                "lateral_start_m": 6.0, "lateral_speed_mps": 1.2},
    # smooth (raised-cosine) lateral shift between two lane offsets
    "lane_change": {"gap_m": 15.0, "pull_away_speed_mps": 0.0,
                    "from_offset_m": 0.0, "to_offset_m": 3.5,
                    "start_s": 2.0, "maneuver_s": 4.0},
    # both vehicles turning: relative bearing rotates at a constant rate
    "turn": {"gap_m": 15.0, "pull_away_speed_mps": 0.0,
             "start_azimuth_deg": -30.0, "turn_rate_dps": 8.0},
}

# parameters that are speeds/durations and must not be negative
_NON_NEGATIVE = {"pull_away_speed_mps", "lateral_speed_mps", "maneuver_s", "start_s"}
_POSITIVE = {"gap_m", "maneuver_s"}

FRONT_SECTOR = math.pi / 4
CLUTTER_LANES = (-7.0, -3.5, 0.0, 3.5, 7.0)


class ConfigError(ValueError):
    """Invalid scenario configuration."""


class GeometryError(ValueError):
    """Degenerate geometry, e.g. an object at zero range."""


@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    preset: str = "following"
    duration_s: float = 10.0
    sample_rate_hz: float = 10.0
    n_clutter: int = 0
    seed: int = 0
    speed_params: dict = dataclasses.field(default_factory=dict)
    tx_rcs: float = 10.0

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; expected one of {PRESETS}")
        if not self.duration_s > 0:
            raise ConfigError("duration_s must be > 0")
        if not self.sample_rate_hz > 0:
            raise ConfigError("sample_rate_hz must be > 0")
        if self.n_clutter < 0:
            raise ConfigError("n_clutter must be >= 0")
        unknown = set(self.speed_params) - set(PRESET_DEFAULTS[self.preset])
        if unknown:
            raise ConfigError(f"unknown {self.preset} parameters: {sorted(unknown)}")
        for key, val in self.params().items():
            if key in _POSITIVE and not val > 0:
                raise ConfigError(f"{key} must be > 0 (got {val})")
            if key in _NON_NEGATIVE and val < 0:
                raise ConfigError(f"{key} must be >= 0 (got {val})")

    def params(self) -> dict[str, float]:
        return {**PRESET_DEFAULTS[self.preset], **self.speed_params}

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown scenario fields: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclasses.dataclass(frozen=True)
class ObjectTruth:
    range_m: float
    radial_velocity_mps: float
    azimuth_rad: float
    rcs_gain: float = 1.0
    obj_id: int = 0


@dataclasses.dataclass
class SceneTimeline:
    timestamps_s: np.ndarray
    transmitter: list[ObjectTruth]
    clutter: list[list[ObjectTruth]]
    config: ScenarioConfig | None = None

    def __len__(self) -> int:
        return len(self.timestamps_s)

    def objects_at(self, step: int) -> list[ObjectTruth]:
        return [self.transmitter[step], *self.clutter[step]]


# -- kinematics -------------------------------------------------------------

def _smoothstep(t, t0, dur):
    """Raised-cosine ramp 0 -> 1 over [t0, t0 + dur] and its derivative."""
    u = np.clip((t - t0) / dur, 0.0, 1.0)
    s = 0.5 * (1 - np.cos(np.pi * u))
    inside = (t > t0) & (t < t0 + dur)
    ds = np.where(inside, 0.5 * np.pi / dur * np.sin(np.pi * u), 0.0)
    return s, ds


def transmitter_kinematics(cfg: ScenarioConfig) -> Callable:
    """Return ``f(t) -> (range, radial_velocity, azimuth)`` for the preset.

    ``t`` may be any array of times, not only the sample grid, which is what
    the finite-difference checks rely on.
    """
    p = cfg.params()

    if cfg.preset == "turn":
        az0 = math.radians(p["start_azimuth_deg"])
        rate = math.radians(p["turn_rate_dps"])

        def polar(t):
            t = np.asarray(t, dtype=float)
            r = p["gap_m"] + p["pull_away_speed_mps"] * t
            return r, np.full_like(t, p["pull_away_speed_mps"]), az0 + rate * t
        return polar

    def xy(t):
        t = np.asarray(t, dtype=float)
        if cfg.preset == "following":
            x = np.full_like(t, p["gap_m"])
            y = np.full_like(t, p["lane_offset_m"])
            return x, y, np.zeros_like(t), np.zeros_like(t)
        if cfg.preset == "passing":
            side = 1.0 if p["lateral_start_m"] >= 0 else -1.0
            x = p["gap_m"] + p["pull_away_speed_mps"] * t
            y = p["lateral_start_m"] - side * p["lateral_speed_mps"] * t
            return (x, y, np.full_like(t, p["pull_away_speed_mps"]),
                    np.full_like(t, -side * p["lateral_speed_mps"]))
        # lane_change
        x = p["gap_m"] + p["pull_away_speed_mps"] * t
        s, ds = _smoothstep(t, p["start_s"], p["maneuver_s"])
        dy = p["to_offset_m"] - p["from_offset_m"]
        return (x, p["from_offset_m"] + dy * s,
                np.full_like(t, p["pull_away_speed_mps"]), dy * ds)

    def polar(t):
        x, y, vx, vy = xy(t)
        r = np.hypot(x, y)
        return r, (x * vx + y * vy) / r, np.arctan2(y, x)
    return polar


def _clutter_tracks(cfg: ScenarioConfig):
    """Constant-velocity clutter movers, drawn from the scenario seed."""
    rng = np.random.default_rng([cfg.seed, 0xC1])
    tracks = []
    for k in range(cfg.n_clutter):
        lane = CLUTTER_LANES[rng.integers(len(CLUTTER_LANES))]
        y0 = lane + rng.uniform(-0.5, 0.5)
        x0 = rng.uniform(5.0, 45.0)
        vx = rng.uniform(-3.0, 3.0)
        rcs = rng.uniform(2.0, 10.0)
        tracks.append((k + 1, x0, y0, vx, rcs))
    return tracks


def generate_timeline(cfg: ScenarioConfig,
                      radar: RadarWaveformConfig | None = None) -> SceneTimeline:
    """Sample the scene at ``cfg.sample_rate_hz`` for ``cfg.duration_s``.

    Raises ConfigError when the transmitter leaves its sector or the
    radar's unambiguous range/velocity.  Clutter objects are simply omitted
    at timesteps where they are not observable.
    """
    limits = derived_params(radar or RadarWaveformConfig())
    max_r = 0.95 * limits.max_range
    max_v = 0.95 * limits.max_vel
    t = np.arange(cfg.n_steps) / cfg.sample_rate_hz

    r, v, az = transmitter_kinematics(cfg)(t)
    sector = math.pi / 2 if cfg.preset == "turn" else FRONT_SECTOR
    if np.any(np.abs(az) > sector + 1e-12):
        raise ConfigError(f"{cfg.preset}: transmitter leaves the +/-{math.degrees(sector):.0f} deg sector")
    if np.any(r <= 0.5) or np.any(r >= max_r):
        raise ConfigError(f"{cfg.preset}: transmitter range leaves (0.5, {max_r:.1f}) m")
    if np.any(np.abs(v) >= max_v):
        raise ConfigError(f"{cfg.preset}: transmitter radial speed exceeds {max_v:.2f} m/s")
    tx = [ObjectTruth(float(r[i]), float(v[i]), float(az[i]), cfg.tx_rcs, 0)
          for i in range(len(t))]

    clutter: list[list[ObjectTruth]] = [[] for _ in t]
    for obj_id, x0, y0, vx, rcs in _clutter_tracks(cfg):
        x = x0 + vx * t
        cr = np.hypot(x, y0)
        cv = x * vx / cr
        caz = np.arctan2(y0, x)
        visible = (x > 0.5) & (cr < max_r) & (np.abs(caz) < math.pi / 2 - 0.05) & (np.abs(cv) < max_v)
        for i in np.flatnonzero(visible):
            clutter[i].append(ObjectTruth(float(cr[i]), float(cv[i]), float(caz[i]), rcs, obj_id))
    return SceneTimeline(t, tx, clutter, cfg)


def truth_to_channel_paths(obj: ObjectTruth, seed=0, ref_gain: float = 1.0,
                           ground_reflection: bool = False,
                           antenna_height_m: float = 1.5,
                           reflection_coeff: float = -0.7):
    """Geometric channel paths ``(gain, azimuth, elevation)`` for one object.

    The LOS path has free-space magnitude ``ref_gain / range`` and a phase
    drawn from ``seed``.  The optional ground bounce arrives from the same
    azimuth with the extra path length's phase; elevation stays 0 because
    the linear array cannot resolve it.
    """
    if obj.range_m <= 0:
        raise GeometryError("object at zero range")
    phase = np.random.default_rng(seed).uniform(0, 2 * np.pi)
    los = ref_gain / obj.range_m * np.exp(1j * phase)
    paths = [(complex(los), float(obj.azimuth_rad), 0.0)]
    if ground_reflection:
        d_refl = math.hypot(obj.range_m, 2 * antenna_height_m)
        # 60 GHz carrier for the communication link
        k = 2 * math.pi * 60e9 / 299_792_458.0
        g = reflection_coeff * ref_gain / d_refl * np.exp(1j * (phase + k * (d_refl - obj.range_m)))
        paths.append((complex(g), float(obj.azimuth_rad), 0.0))
    return paths


def timeline_to_csv(timeline: SceneTimeline, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "object_id", "range_m", "radial_velocity_mps", "azimuth_rad"])
        for i, t in enumerate(timeline.timestamps_s):
            for obj in timeline.objects_at(i):
                w.writerow([f"{t:.6f}", obj.obj_id, repr(obj.range_m),
                            repr(obj.radial_velocity_mps), repr(obj.azimuth_rad)])
