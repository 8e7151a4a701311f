"""Range-Doppler / radar-cube FFTs, CA-CFAR, DBSCAN and state estimation.

Conventions: forward FFTs are unnormalised; the range axis is left
unshifted, Doppler and angle axes are fft-shifted so that zero velocity
sits at bin ``n_chirps // 2`` and boresight at ``n_angle_bins // 2``.
"""
from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from .radar import RadarFrameCube, RadarWaveformConfig, derived_params


@dataclasses.dataclass
class RangeDopplerMap:
    values: np.ndarray  # (n_samples, n_chirps), >= 0
    config: RadarWaveformConfig | None = None


@dataclasses.dataclass
class RadarCube:
    values: np.ndarray  # (n_samples, n_angle, n_chirps), >= 0

    @property
    def n_angle_bins(self) -> int:
        return self.values.shape[1]

    def angle_profile(self, range_bin: int, doppler_bin: int) -> np.ndarray:
        return self.values[range_bin, :, doppler_bin]


@dataclasses.dataclass(frozen=True)
class Detection:
    range_bin: int
    doppler_bin: int
    power: float


@dataclasses.dataclass(frozen=True)
class ObjectState:
    range_m: float
    velocity_mps: float
    angle_rad: float
    power: float = 1.0


@dataclasses.dataclass(frozen=True)
class CfarConfig:
    guard_cells: tuple[int, int] = (2, 2)
    training_cells: tuple[int, int] = (4, 4)
    pfa: float = 1e-4

    def __post_init__(self):
        if not 0 < self.pfa < 1:
            raise ValueError("pfa must be in (0, 1)")
        if min(self.guard_cells) < 0 or min(self.training_cells) < 0:
            raise ValueError("cell counts must be >= 0")
        if max(self.training_cells) == 0:
            raise ValueError("training window is empty")


@dataclasses.dataclass(frozen=True)
class DbscanConfig:
    eps_bins: float = 3.0
    min_points: int = 3

    def __post_init__(self):
        if not self.eps_bins > 0:
            raise ValueError("eps_bins must be > 0")
        if self.min_points < 1:
            raise ValueError("min_points must be >= 1")


# -- spectra ----------------------------------------------------------------

def _windowed(data: np.ndarray, hann_range: bool, hann_doppler: bool) -> np.ndarray:
    if hann_range:
        data = data * np.hanning(data.shape[-2])[:, None]
    if hann_doppler:
        data = data * np.hanning(data.shape[-1])[None, :]
    return data


def antenna_spectra(cube: RadarFrameCube, hann_range=False, hann_doppler=False) -> np.ndarray:
    """Per-antenna 2D spectra (n_ant, n_samples, n_chirps), Doppler-centred."""
    spec = np.fft.fft2(_windowed(cube.data, hann_range, hann_doppler), axes=(1, 2))
    return np.fft.fftshift(spec, axes=2)


def range_doppler_map(cube: RadarFrameCube, hann_range=False, hann_doppler=False) -> RangeDopplerMap:
    spec = antenna_spectra(cube, hann_range, hann_doppler)
    return RangeDopplerMap(np.abs(spec).sum(axis=0), cube.config)


def _angle_fft(x: np.ndarray, n_angle_bins: int, axis: int) -> np.ndarray:
    return np.fft.fftshift(np.fft.fft(x, n=n_angle_bins, axis=axis), axes=axis)


def radar_cube(cube: RadarFrameCube, n_angle_bins: int = 64) -> RadarCube:
    if n_angle_bins < cube.data.shape[0]:
        raise ValueError(f"n_angle_bins={n_angle_bins} < n_ant={cube.data.shape[0]}")
    spec = np.fft.fftn(cube.data, s=(n_angle_bins,) + cube.data.shape[1:], axes=(0, 1, 2))
    spec = np.fft.fftshift(spec, axes=(0, 2))
    return RadarCube(np.abs(spec).transpose(1, 0, 2))


class LazyRadarCube:
    """Radar-cube slices computed on demand from per-antenna 2D spectra.

    Equivalent to :func:`radar_cube` (the 3D FFT is separable) but only the
    angle profiles that are actually read get transformed.
    """

    def __init__(self, spectra: np.ndarray, n_angle_bins: int = 64):
        if n_angle_bins < spectra.shape[0]:
            raise ValueError(f"n_angle_bins={n_angle_bins} < n_ant={spectra.shape[0]}")
        self.spectra = spectra
        self.n_angle_bins = n_angle_bins

    def angle_profile(self, range_bin: int, doppler_bin: int) -> np.ndarray:
        return np.abs(_angle_fft(self.spectra[:, range_bin, doppler_bin], self.n_angle_bins, 0))


# -- CA-CFAR ----------------------------------------------------------------

def cfar_alpha(n_train, pfa: float):
    """Threshold multiplier for exponential noise: N (pfa^(-1/N) - 1)."""
    n_train = np.asarray(n_train, dtype=float)
    return n_train * (pfa ** (-1.0 / n_train) - 1.0)


def _rect_sums(a: np.ndarray, r_lo: int, r_hi: int, d_lo: int, d_hi: int) -> np.ndarray:
    """Per cell, the sum of a[r + r_lo : r + r_hi + 1, d + d_lo : d + d_hi + 1] (zero outside).

    Built by adding shifted copies of the (non-negative) input, with no
    cumulative-sum differencing, so a ring next to a strong peak cannot
    come out slightly negative.
    """
    n, m = a.shape
    if r_lo > r_hi or d_lo > d_hi:
        return np.zeros_like(a)
    ph, pw = max(abs(r_lo), abs(r_hi)), max(abs(d_lo), abs(d_hi))
    p = np.pad(a, ((ph, ph), (pw, pw)))
    rows = np.zeros((n, m + 2 * pw), dtype=p.dtype)
    for k in range(r_lo, r_hi + 1):
        rows += p[ph + k:ph + k + n]
    out = np.zeros((n, m), dtype=p.dtype)
    for k in range(d_lo, d_hi + 1):
        out += rows[:, pw + k:pw + k + m]
    return out


def _ring_sums(a: np.ndarray, guard: tuple[int, int], train: tuple[int, int]) -> np.ndarray:
    (gr, gd), (tr, td) = guard, train
    R, D = gr + tr, gd + td
    return (_rect_sums(a, -R, -gr - 1, -D, D) + _rect_sums(a, gr + 1, R, -D, D)
            + _rect_sums(a, -gr, gr, -D, -gd - 1) + _rect_sums(a, -gr, gr, gd + 1, D))


def cfar_threshold(power: np.ndarray, cfg: CfarConfig) -> np.ndarray:
    """Per-cell CA-CFAR threshold on a power map.

    Cells near the border average over the part of the training ring that
    lies inside the map, with the scale factor recomputed for that count.
    """
    n_train = np.rint(_ring_sums(np.ones_like(power), cfg.guard_cells, cfg.training_cells))
    mean = _ring_sums(power, cfg.guard_cells, cfg.training_cells) / n_train
    return cfar_alpha(n_train, cfg.pfa) * mean


def cfar_detect(rd_map: RangeDopplerMap, cfg: CfarConfig = CfarConfig()) -> list[Detection]:
    values = rd_map.values
    (gr, gd), (tr, td) = cfg.guard_cells, cfg.training_cells
    if values.shape[0] <= 2 * (gr + tr) + 1 or values.shape[1] <= 2 * (gd + td) + 1:
        raise ValueError(f"map {values.shape} too small for CFAR window")
    power = np.asarray(values, dtype=float) ** 2
    hits = power > cfar_threshold(power, cfg)
    rs, ds = np.nonzero(hits)
    return [Detection(int(r), int(d), float(power[r, d])) for r, d in zip(rs, ds)]


# -- DBSCAN -----------------------------------------------------------------

def dbscan_cluster(dets: Sequence[Detection], cfg: DbscanConfig = DbscanConfig()) -> list[int]:
    """Cluster detections in (range_bin, doppler_bin) space.

    Returns one label per input detection: cluster ids 0, 1, ... or -1 for
    noise.  Points are visited in lexicographic order, so the result does
    not depend on the input order (cluster ids follow the visiting order).
    """
    n = len(dets)
    if n == 0:
        return []
    pts = np.array([(d.range_bin, d.doppler_bin) for d in dets], dtype=float)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    p = pts[order]
    dist2 = ((p[:, None, :] - p[None, :, :]) ** 2).sum(-1)
    neigh = [np.flatnonzero(row <= cfg.eps_bins ** 2) for row in dist2]
    core = np.array([len(nb) >= cfg.min_points for nb in neigh])

    labels = np.full(n, -1)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        stack = [i]
        while stack:
            j = stack.pop()
            if not core[j]:
                continue
            for k in neigh[j]:
                if labels[k] == -1:
                    labels[k] = cluster
                    stack.append(k)
        cluster += 1

    out = np.empty(n, dtype=int)
    out[order] = labels
    return out.tolist()


# -- state estimation -------------------------------------------------------

def _is_local_peak(values: np.ndarray, r: int, d: int) -> bool:
    # FFT axes are circular, so the 3x3 neighbourhood wraps at the edges
    n, m = values.shape
    rows = np.arange(r - 1, r + 2) % n
    cols = np.arange(d - 1, d + 2) % m
    return values[r, d] >= values[np.ix_(rows, cols)].max()


def estimate_states(dets: Sequence[Detection], labels: Sequence[int],
                    rd_map: RangeDopplerMap, cube3d, cfg: RadarWaveformConfig | None = None,
                    require_peak: bool = True) -> list[ObjectState]:
    """One ObjectState per cluster, read at the cluster's strongest cell.

    With ``require_peak`` a cluster is kept only if that cell is a local
    maximum of the range-Doppler map; clusters made purely of a stronger
    target's FFT sidelobes fail this test.  States are ordered by range bin,
    then Doppler bin.
    """
    cfg = cfg or rd_map.config
    p = derived_params(cfg)
    n_chirps = rd_map.values.shape[1]
    best: dict[int, Detection] = {}
    for det, lab in zip(dets, labels):
        if lab < 0:
            continue
        cur = best.get(lab)
        if cur is None or det.power > cur.power:
            best[lab] = det
    reps = sorted(best.values(), key=lambda d: (d.range_bin, d.doppler_bin))
    states = []
    for det in reps:
        if require_peak and not _is_local_peak(rd_map.values, det.range_bin, det.doppler_bin):
            continue
        profile = cube3d.angle_profile(det.range_bin, det.doppler_bin)
        n_ang = len(profile)
        a_bin = int(np.argmax(profile))
        s = np.clip(2.0 * (a_bin - n_ang / 2) / n_ang, -1.0, 1.0)
        states.append(ObjectState(
            range_m=det.range_bin * p.range_res,
            velocity_mps=(det.doppler_bin - n_chirps / 2) * p.vel_res,
            angle_rad=float(math.asin(s)),
            power=det.power,
        ))
    return states


@dataclasses.dataclass(frozen=True)
class DetectionChain:
    cfar: CfarConfig = CfarConfig()
    dbscan: DbscanConfig = DbscanConfig()
    n_angle_bins: int = 64
    hann_range: bool = False
    hann_doppler: bool = False


def detect_objects(cube: RadarFrameCube, chain: DetectionChain = DetectionChain(),
                   return_map: bool = False):
    """Full detection chain on one frame: RD map, CFAR, DBSCAN, angle peak."""
    spectra = antenna_spectra(cube, chain.hann_range, chain.hann_doppler)
    rd = RangeDopplerMap(np.abs(spectra).sum(axis=0), cube.config)
    dets = cfar_detect(rd, chain.cfar)
    labels = dbscan_cluster(dets, chain.dbscan)
    states = estimate_states(dets, labels, rd, LazyRadarCube(spectra, chain.n_angle_bins), cube.config)
    return (states, rd) if return_map else states
