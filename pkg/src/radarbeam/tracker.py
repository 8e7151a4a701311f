"""Transmitter identification by communication angle, then weighted
range/Doppler nearest-state tracking with short coasting."""
from __future__ import annotations

import csv
import dataclasses
import os
from typing import Sequence

import numpy as np

from .comm import BeamCodebook, beam_to_comm_angle
from .dsp import ObjectState
from .radar import RadarWaveformConfig, derived_params


class NoObjectError(ValueError):
    """No detected object to identify the transmitter from."""


class TrackLostError(RuntimeError):
    """The transmitter went undetected for longer than the coast budget."""


_DEFAULT_LIMITS = derived_params(RadarWaveformConfig())


@dataclasses.dataclass(frozen=True)
class TrackerConfig:
    # defaults put range and velocity differences in bins of the default radar
    w_r: float = 1 / _DEFAULT_LIMITS.range_res
    w_v: float = 1 / _DEFAULT_LIMITS.vel_res
    max_coast_frames: int = 2

    def __post_init__(self):
        if self.w_r < 0 or self.w_v < 0 or (self.w_r == 0 and self.w_v == 0):
            raise ValueError("weights must be >= 0 and not both zero")
        if self.max_coast_frames < 0:
            raise ValueError("max_coast_frames must be >= 0")

    @classmethod
    def for_radar(cls, radar: RadarWaveformConfig | None = None, **kw) -> "TrackerConfig":
        """Weights that express both terms in FFT-bin units."""
        p = derived_params(radar or RadarWaveformConfig())
        return cls(w_r=1 / p.range_res, w_v=1 / p.vel_res, **kw)


@dataclasses.dataclass
class TrackState:
    current: ObjectState
    frames_since_update: int = 0
    history: list = dataclasses.field(default_factory=list)
    max_history: int | None = None


def identify_transmitter(states: Sequence[ObjectState], comm_angle: float) -> int:
    if not states:
        raise NoObjectError("no objects to identify the transmitter among")
    diffs = np.abs(np.array([s.angle_rad for s in states]) - comm_angle)
    return int(np.argmin(diffs))


def track_metric(prev: ObjectState, cand: ObjectState, cfg: TrackerConfig) -> float:
    return cfg.w_r * abs(cand.range_m - prev.range_m) + cfg.w_v * abs(cand.velocity_mps - prev.velocity_mps)


def track_step(prev: TrackState, candidates: Sequence[ObjectState],
               cfg: TrackerConfig) -> TrackState:
    if candidates:
        costs = [track_metric(prev.current, c, cfg) for c in candidates]
        current = candidates[int(np.argmin(costs))]
        counter = 0
    else:
        counter = prev.frames_since_update + 1
        if counter > cfg.max_coast_frames:
            raise TrackLostError(f"no detection for {counter} consecutive frames")
        current = prev.current
    history = prev.history + [current]
    if prev.max_history is not None:
        history = history[-prev.max_history:]
    return TrackState(current, counter, history, prev.max_history)


def track_frames(frames: Sequence[Sequence[ObjectState]], comm_angle: float,
                 cfg: TrackerConfig) -> tuple[list[ObjectState], list[bool]]:
    """Identify on the first frame, then track; returns states and coast flags."""
    if not frames:
        raise ValueError("empty frame sequence")
    first = frames[0]
    k = identify_transmitter(first, comm_angle)
    state = TrackState(first[k], 0, [first[k]])
    coasted = [False]
    for cands in frames[1:]:
        state = track_step(state, cands, cfg)
        coasted.append(state.frames_since_update > 0)
    return state.history, coasted


def run_tracker(frames: Sequence[Sequence[ObjectState]], initial_beam: int,
                cb: BeamCodebook, cfg: TrackerConfig | None = None) -> list[ObjectState]:
    cfg = cfg or TrackerConfig.for_radar()
    states, _ = track_frames(frames, beam_to_comm_angle(initial_beam, cb), cfg)
    return states


def track_to_csv(states: Sequence[ObjectState], coasted: Sequence[bool],
                 timestamps: Sequence[float], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "range_m", "velocity_mps", "angle_rad", "coast_flag"])
        for t, s, c in zip(timestamps, states, coasted):
            w.writerow([f"{t:.6f}", repr(s.range_m), repr(s.velocity_mps), repr(s.angle_rad), int(c)])
