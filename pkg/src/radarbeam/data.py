"""Sequence datasets: frame labelling, sliding windows, time splits, storage
and the feature views consumed by the two learned predictors.

Frames of all scenes live on one global clock (scenes laid end to end with
a gap), so a single time boundary separates training and test windows.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import rbtk
from .comm import ArrayConfig, BeamCodebook, beam_to_comm_angle, build_codebook, label_channel
from .dsp import DetectionChain, ObjectState, detect_objects
from .models import MapBatch, preprocess_map
from .radar import RadarFrameCube, RadarWaveformConfig, derived_params, synth_frame
from .scenario import SceneTimeline, truth_to_channel_paths
from .tracker import NoObjectError, TrackerConfig, TrackLostError, track_frames

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
WINDOW = 10
MANIFEST = "manifest.json"
FRAMES = "frames.bin"
LABELS = "labels.csv"


class DatasetError(ValueError):
    """Too little data for the requested windowing or split."""


# -- labelling ----------------------------------------------------------------

@dataclasses.dataclass
class LabeledFrame:
    cube: RadarFrameCube
    beam: int
    step: int
    timestamp_s: float


def iter_labeled_frames(timeline: SceneTimeline, radar_cfg: RadarWaveformConfig,
                        array_cfg: ArrayConfig = ArrayConfig(),
                        codebook: BeamCodebook | None = None,
                        seed: int | None = None) -> Iterator[LabeledFrame]:
    """Synthesize every frame of a scene and label it with the optimal beam.

    Radar noise for step ``i`` is seeded by ``(seed, i)`` and the channel
    phase by ``(seed, i, 1)``, so frames can be produced in any order.
    """
    cb = codebook or build_codebook(array_cfg)
    if seed is None:
        seed = timeline.config.seed if timeline.config is not None else 0
    for i, t in enumerate(timeline.timestamps_s):
        cube = synth_frame(timeline.objects_at(i), radar_cfg, seed=(seed, i), timestamp_s=float(t))
        paths = truth_to_channel_paths(timeline.transmitter[i], seed=(seed, i, 1))
        yield LabeledFrame(cube, label_channel(paths, array_cfg, cb), i, float(t))


def label_frames(timeline: SceneTimeline, radar_cfg: RadarWaveformConfig,
                 array_cfg: ArrayConfig = ArrayConfig(), codebook: BeamCodebook | None = None,
                 seed: int | None = None) -> list[LabeledFrame]:
    return list(iter_labeled_frames(timeline, radar_cfg, array_cfg, codebook, seed))


# -- windows and splits --------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    scene: int
    step: int
    t: float  # global clock, s
    beam: int


@dataclasses.dataclass(frozen=True)
class SequenceSample:
    """A window of consecutive frames with their per-frame optimal beams.

    ``initial_beam`` is the beam at the first frame and ``label`` the beam
    at the last.  :meth:`last` keeps only the final ``t_obs`` frames, which
    is how shorter observation intervals are evaluated.
    """
    sequence_id: int
    frame_ids: tuple[int, ...]
    beams: tuple[int, ...]
    t_start: float
    t_end: float

    @property
    def length(self) -> int:
        return len(self.frame_ids)

    @property
    def initial_beam(self) -> int:
        return self.beams[0]

    @property
    def label(self) -> int:
        return self.beams[-1]

    def last(self, t_obs: int) -> "SequenceSample":
        if not 1 <= t_obs <= self.length:
            raise ValueError(f"t_obs {t_obs} outside 1..{self.length}")
        if t_obs == self.length:
            return self
        dt = (self.t_end - self.t_start) / max(self.length - 1, 1)
        return SequenceSample(self.sequence_id, self.frame_ids[-t_obs:], self.beams[-t_obs:],
                              self.t_end - dt * (t_obs - 1), self.t_end)


def make_sequences(frames: Sequence[FrameRecord], length: int = WINDOW, stride: int = 1,
                   keep_changing_only: bool = False, first_id: int = 0) -> list[SequenceSample]:
    """Sliding windows over the time-ordered frames of one scene."""
    if len(frames) < length:
        raise DatasetError(f"need at least {length} frames, got {len(frames)}")
    out = []
    for start in range(0, len(frames) - length + 1, stride):
        win = frames[start:start + length]
        beams = tuple(f.beam for f in win)
        if keep_changing_only and len(set(beams)) == 1:
            continue
        out.append(SequenceSample(first_id + len(out), tuple(f.frame_id for f in win), beams,
                                  win[0].t, win[-1].t))
    return out


@dataclasses.dataclass
class DatasetSplit:
    train: list[SequenceSample]
    test: list[SequenceSample]
    boundary_s: float
    n_dropped: int


def split_by_time(samples: Sequence[SequenceSample], ratio: float = 0.7) -> DatasetSplit:
    """One time boundary: train windows end before it, test windows start at or after it.

    Windows straddling the boundary are dropped.  The boundary is the window
    start time that brings the train share closest to ``ratio`` (ties: fewer
    drops, then earlier).
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    if len(samples) < 2:
        raise DatasetError(f"need at least 2 samples to split, got {len(samples)}")
    ordered = sorted(samples, key=lambda s: (s.t_start, s.t_end, s.sequence_id))
    starts = np.array([s.t_start for s in ordered])
    ends = np.sort([s.t_end for s in ordered])
    best = None
    for b in np.unique(starts):
        n_train = int(np.searchsorted(ends, b, side="left"))
        n_test = len(starts) - int(np.searchsorted(starts, b, side="left"))
        if n_train == 0 or n_test == 0:
            continue
        key = (abs(n_train / (n_train + n_test) - ratio), len(ordered) - n_train - n_test, b)
        if best is None or key < best[0]:
            best = (key, float(b))
    if best is None:
        raise DatasetError("samples cannot be split in time (all windows overlap)")
    boundary = best[1]
    train = [s for s in ordered if s.t_end < boundary]
    test = [s for s in ordered if s.t_start >= boundary]
    return DatasetSplit(train, test, boundary, len(ordered) - len(train) - len(test))


# -- datasets -------------------------------------------------------------------

@dataclasses.dataclass
class SceneRecord:
    """One simulated scene placed on the global clock."""
    config: dict          # ScenarioConfig fields
    first_frame: int
    n_frames: int
    t_offset_s: float
    sample_rate_hz: float


@dataclasses.dataclass
class Dataset:
    frames: list[FrameRecord]
    samples: list[SequenceSample]
    split: DatasetSplit
    scenes: list[SceneRecord]
    radar: RadarWaveformConfig
    array: ArrayConfig
    n_beams: int
    window: int = WINDOW
    keep_changing_only: bool = False
    cubes: list[np.ndarray] | None = None  # complex64 (ant, samples, chirps) per frame

    def manifest(self) -> dict:
        return {
            "format": "radarbeam-dataset",
            "format_version": FORMAT_VERSION,
            "radar": self.radar.to_dict(),
            "array": dataclasses.asdict(self.array),
            "n_beams": self.n_beams,
            "window": self.window,
            "keep_changing_only": self.keep_changing_only,
            "scenes": [dataclasses.asdict(s) for s in self.scenes],
            "frame_beams": [f.beam for f in self.frames],
            "counts": {"frames": len(self.frames), "sequences": len(self.samples),
                       "train": len(self.split.train), "test": len(self.split.test),
                       "dropped_at_boundary": self.split.n_dropped},
            "split_boundary_s": self.split.boundary_s,
        }


def assemble_dataset(scene_frames: Sequence[Sequence[int]], scene_configs: Sequence[dict],
                     sample_rates: Sequence[float], radar: RadarWaveformConfig,
                     array: ArrayConfig, n_beams: int, window: int = WINDOW,
                     keep_changing_only: bool = False, ratio: float = 0.7,
                     gap_s: float = 1.0, cubes: list | None = None) -> Dataset:
    """Place scenes on one clock, window each one and split by time.

    ``scene_frames[i]`` holds the per-frame beams of scene ``i``; frame ids
    run consecutively across scenes in the given order.
    """
    frames, samples, scenes = [], [], []
    offset = 0.0
    for si, (beams, cfg, rate) in enumerate(zip(scene_frames, scene_configs, sample_rates)):
        first = len(frames)
        recs = [FrameRecord(first + i, si, i, offset + i / rate, int(b)) for i, b in enumerate(beams)]
        frames.extend(recs)
        scenes.append(SceneRecord(dict(cfg), first, len(recs), offset, float(rate)))
        if len(recs) >= window:
            samples.extend(make_sequences(recs, window, 1, keep_changing_only, first_id=len(samples)))
        offset += len(recs) / rate + gap_s
    split = split_by_time(samples, ratio) if len(samples) >= 2 else DatasetSplit([], list(samples), offset, 0)
    return Dataset(frames, samples, split, scenes, radar, array, n_beams, window,
                   keep_changing_only, cubes)


def save_dataset(ds: Dataset, directory: str | os.PathLike, extra_manifest: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if ds.cubes is None:
        raise DatasetError("dataset has no frame cubes to write")
    rbtk.write_records(directory / FRAMES, (np.asarray(c, dtype=np.complex64) for c in ds.cubes))
    in_train = {s.sequence_id for s in ds.split.train}
    in_test = {s.sequence_id for s in ds.split.test}
    with open(directory / LABELS, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sequence_id", "split", "position", "frame_id", "t", "beam"])
        for s in ds.samples:
            split = "train" if s.sequence_id in in_train else "test" if s.sequence_id in in_test else "dropped"
            for pos, (fid, beam) in enumerate(zip(s.frame_ids, s.beams)):
                w.writerow([s.sequence_id, split, pos, fid, repr(ds.frames[fid].t), beam])
    with open(directory / MANIFEST, "w") as fh:
        json.dump({**ds.manifest(), **(extra_manifest or {})}, fh, indent=2, sort_keys=True)
    return directory


def load_dataset(directory: str | os.PathLike, load_cubes: bool = True) -> Dataset:
    directory = Path(directory)
    with open(directory / MANIFEST) as fh:
        man = json.load(fh)
    if man.get("format_version") != FORMAT_VERSION:
        raise rbtk.FormatError(f"unsupported dataset format version {man.get('format_version')}")
    scenes = [SceneRecord(**s) for s in man["scenes"]]
    beams = man["frame_beams"]
    frames = []
    for si, sc in enumerate(scenes):
        for i in range(sc.n_frames):
            fid = sc.first_frame + i
            frames.append(FrameRecord(fid, si, i, sc.t_offset_s + i / sc.sample_rate_hz, beams[fid]))
    rows: dict[int, list] = {}
    with open(directory / LABELS, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(int(row["sequence_id"]), []).append(row)
    samples, train, test = [], [], []
    for sid in sorted(rows):
        rs = sorted(rows[sid], key=lambda r: int(r["position"]))
        fids = tuple(int(r["frame_id"]) for r in rs)
        s = SequenceSample(sid, fids, tuple(int(r["beam"]) for r in rs),
                           frames[fids[0]].t, frames[fids[-1]].t)
        samples.append(s)
        {"train": train, "test": test}.get(rs[0]["split"], []).append(s)
    cubes = None
    if load_cubes:
        cubes = rbtk.read_records(directory / FRAMES)
        if len(cubes) != len(frames):
            raise rbtk.FormatError(f"{len(cubes)} frame records for {len(frames)} frames")
    c = man["counts"]
    split = DatasetSplit(train, test, man["split_boundary_s"], c["dropped_at_boundary"])
    return Dataset(frames, samples, split, scenes, RadarWaveformConfig.from_dict(man["radar"]),
                   ArrayConfig(**man["array"]), man["n_beams"], man["window"],
                   man["keep_changing_only"], cubes)


# -- features ---------------------------------------------------------------------

@dataclasses.dataclass
class FrameFeatures:
    maps: np.ndarray | None               # (F, h, w) float32, preprocessed
    states: list[list[ObjectState]] | None


def compute_features(cubes: Iterable, radar_cfg: RadarWaveformConfig,
                     map_shape: tuple[int, int] | None = (128, 64),
                     chain: DetectionChain = DetectionChain(),
                     with_states: bool = True) -> FrameFeatures:
    """Run the detection chain and map preprocessing on every frame.

    ``cubes`` yields RadarFrameCube objects or raw (ant, samples, chirps)
    arrays.  ``map_shape=None`` skips the maps.
    """
    maps, states = [], []
    for c in cubes:
        cube = c if isinstance(c, RadarFrameCube) else RadarFrameCube(np.asarray(c), radar_cfg)
        st, rd = detect_objects(cube, chain, return_map=True)
        if with_states:
            states.append(st)
        if map_shape is not None:
            maps.append(preprocess_map(rd.values, map_shape).astype(np.float32))
    return FrameFeatures(np.stack(maps) if maps else None, states if with_states else None)


def tx_state_sequence(frame_states: Sequence[Sequence[ObjectState]], initial_beam: int,
                      codebook: BeamCodebook, cfg: TrackerConfig) -> list[ObjectState]:
    """Tracker output for one window, with fallbacks so every window yields states.

    If the first frame has no detections, identification moves to the first
    frame that has some and earlier steps carry a placeholder at the
    communication angle.  A lost track holds its last state.
    """
    angle = beam_to_comm_angle(initial_beam, codebook)
    first = next((i for i, f in enumerate(frame_states) if f), None)
    if first is None:
        return [ObjectState(0.0, 0.0, angle, 0.0)] * len(frame_states)
    head = [ObjectState(0.0, 0.0, angle, 0.0)] * first
    try:
        states, _ = track_frames(frame_states[first:], angle, cfg)
    except (TrackLostError, NoObjectError):
        hold = dataclasses.replace(cfg, max_coast_frames=len(frame_states))
        states, _ = track_frames(frame_states[first:], angle, hold)
    return head + list(states)


class TxIdTrainingSet:
    """Normalised tracker states (r/max_range, v/max_vel, a/(pi/2)) per window."""

    def __init__(self, samples: Sequence[SequenceSample], frame_states: Sequence,
                 radar_cfg: RadarWaveformConfig, codebook: BeamCodebook,
                 tracker_cfg: TrackerConfig | None = None):
        self.samples = list(samples)
        self.frame_states = frame_states
        self.codebook = codebook
        self.tracker_cfg = tracker_cfg or TrackerConfig.for_radar(radar_cfg)
        p = derived_params(radar_cfg)
        self.scale = np.array([p.max_range, p.max_vel, math.pi / 2])
        self.max_len = max((s.length for s in self.samples), default=0)
        self._cache: dict = {}

    def __len__(self) -> int:
        return len(self.samples)

    def window_states(self, i: int, t_obs: int) -> np.ndarray:
        key = (i, t_obs)
        if key not in self._cache:
            s = self.samples[i].last(t_obs)
            seq = tx_state_sequence([self.frame_states[f] for f in s.frame_ids],
                                    s.initial_beam, self.codebook, self.tracker_cfg)
            raw = np.array([[o.range_m, o.velocity_mps, o.angle_rad] for o in seq])
            self._cache[key] = raw / self.scale
        return self._cache[key]

    def batch(self, indices, t_obs: int):
        x = np.stack([self.window_states(int(i), t_obs) for i in indices])
        return x, np.array([self.samples[int(i)].label for i in indices])


class E2ETrainingSet:
    """Preprocessed range-Doppler map windows with shared-frame batching.

    Consecutive windows of a scene are grouped (``group_size`` per group) so
    a mini-batch built from whole groups reuses most of its frames.
    """

    def __init__(self, samples: Sequence[SequenceSample], maps: np.ndarray, group_size: int = 8):
        self.samples = list(samples)
        self.maps = maps
        self.max_len = max((s.length for s in self.samples), default=0)
        order = sorted(range(len(self.samples)), key=lambda i: (self.samples[i].t_start, i))
        self.groups = []
        cur: list[int] = []
        for i in order:
            s = self.samples[i]
            if cur and (len(cur) == group_size or s.frame_ids[0] != self.samples[cur[-1]].frame_ids[0] + 1):
                self.groups.append(np.array(cur))
                cur = []
            cur.append(i)
        if cur:
            self.groups.append(np.array(cur))

    def __len__(self) -> int:
        return len(self.samples)

    def batch(self, indices, t_obs: int):
        ids = np.array([self.samples[int(i)].frame_ids[-t_obs:] for i in indices])
        uniq, inv = np.unique(ids, return_inverse=True)
        beams = np.array([self.samples[int(i)].beams[-t_obs] for i in indices])
        labels = np.array([self.samples[int(i)].label for i in indices])
        return MapBatch(self.maps[uniq], inv.reshape(ids.shape), beams), labels
