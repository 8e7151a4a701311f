"""FMCW radar waveform parameters and IF frame-cube synthesis.

The IF signal is written directly in complex baseband (the quadrature
mixer + low-pass output) for point scatterers.  Targets move between
chirps but not within one (stop-and-hop), so the round-trip delay is
re-evaluated per chirp.
"""
from __future__ import annotations

import dataclasses
from typing import NamedTuple, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class AliasingError(ValueError):
    """Object outside the unambiguous range/velocity of the waveform."""


@dataclasses.dataclass(frozen=True)
class RadarWaveformConfig:
    f0: float = 77e9
    slope: float = 15e12  # Hz/s, i.e. 15 MHz/us
    fs: float = 5e6
    n_samples: int = 256
    n_chirps: int = 128
    n_ant: int = 4
    t_pri: float = 65e-6
    tx_power: float = 1.0
    noise_var: float = 0.0

    def __post_init__(self):
        if min(self.n_samples, self.n_chirps, self.n_ant) < 1:
            raise ValueError("sample, chirp and antenna counts must be >= 1")
        if self.fs <= 0 or self.slope <= 0 or self.f0 <= 0:
            raise ValueError("f0, slope and fs must be positive")
        if self.t_active > self.t_pri * (1 + 1e-12):
            raise ValueError(
                f"active chirp time {self.t_active:.3g}s exceeds t_pri {self.t_pri:.3g}s")
        if self.noise_var < 0 or self.tx_power <= 0:
            raise ValueError("noise_var must be >= 0 and tx_power > 0")

    @property
    def t_active(self) -> float:
        return self.n_samples / self.fs

    @property
    def bandwidth(self) -> float:
        return self.slope * self.t_active

    @property
    def t_frame(self) -> float:
        return self.n_chirps * self.t_pri

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RadarWaveformConfig":
        return cls(**d)


class DerivedParams(NamedTuple):
    range_res: float
    max_range: float
    vel_res: float
    max_vel: float
    wavelength: float


def derived_params(cfg: RadarWaveformConfig) -> DerivedParams:
    range_res = SPEED_OF_LIGHT / (2 * cfg.bandwidth)
    # complex (quadrature) sampling: all n_samples FFT bins are usable
    max_range = cfg.n_samples * range_res
    max_vel = cfg.wavelength / (4 * cfg.t_pri)
    vel_res = 2 * max_vel / cfg.n_chirps
    return DerivedParams(range_res, max_range, vel_res, max_vel, cfg.wavelength)


@dataclasses.dataclass
class RadarFrameCube:
    data: np.ndarray  # (n_ant, n_samples, n_chirps) complex
    config: RadarWaveformConfig
    timestamp_s: float = 0.0

    def __post_init__(self):
        want = (self.config.n_ant, self.config.n_samples, self.config.n_chirps)
        if self.data.shape != want:
            raise ValueError(f"cube shape {self.data.shape} does not match config {want}")


def reflection_gain(obj) -> float:
    """Radar-equation proportionality: rcs / R^4."""
    return obj.rcs_gain / obj.range_m ** 4


def _check_unambiguous(obj, cfg: RadarWaveformConfig) -> None:
    p = derived_params(cfg)
    if not 0 < obj.range_m < p.max_range:
        raise AliasingError(f"range {obj.range_m:.3f} m outside (0, {p.max_range:.3f}) m")
    if abs(obj.radial_velocity_mps) >= p.max_vel:
        raise AliasingError(
            f"|velocity| {abs(obj.radial_velocity_mps):.3f} m/s >= max {p.max_vel:.3f} m/s")


def synth_chirp_if(obj, cfg: RadarWaveformConfig, chirp_index: int,
                   antenna_index: int) -> np.ndarray:
    """IF samples of one chirp at one receive antenna for a single object."""
    _check_unambiguous(obj, cfg)
    t = np.arange(cfg.n_samples) / cfg.fs
    r_c = obj.range_m + obj.radial_velocity_mps * chirp_index * cfg.t_pri
    tau = 2 * r_c / SPEED_OF_LIGHT
    amp = np.sqrt(cfg.tx_power * reflection_gain(obj))
    phase = cfg.slope * tau * t + cfg.f0 * tau - 0.5 * cfg.slope * tau ** 2
    ant = np.exp(1j * np.pi * antenna_index * np.sin(obj.azimuth_rad))
    return amp * ant * np.exp(2j * np.pi * phase)


def object_cube(obj, cfg: RadarWaveformConfig) -> np.ndarray:
    """Noiseless cube contribution of one object, vectorised over all chirps."""
    _check_unambiguous(obj, cfg)
    t = np.arange(cfg.n_samples)[:, None] / cfg.fs
    r_c = obj.range_m + obj.radial_velocity_mps * np.arange(cfg.n_chirps) * cfg.t_pri
    tau = (2 * r_c / SPEED_OF_LIGHT)[None, :]
    phase = cfg.slope * tau * t + cfg.f0 * tau - 0.5 * cfg.slope * tau ** 2
    # keep the large f0*tau term accurate: reduce modulo one cycle first
    chirp = np.exp(2j * np.pi * np.mod(phase, 1.0))
    amp = np.sqrt(cfg.tx_power * reflection_gain(obj))
    ant = np.exp(1j * np.pi * np.arange(cfg.n_ant) * np.sin(obj.azimuth_rad))
    return (amp * ant)[:, None, None] * chirp[None, :, :]


def synth_frame(objects: Sequence, cfg: RadarWaveformConfig, seed=None,
                timestamp_s: float = 0.0) -> RadarFrameCube:
    """Superpose object returns and add circular complex Gaussian noise.

    ``seed`` may be an int or a sequence of ints (e.g. ``(scene_seed, step)``)
    so that frames can be generated in any order with identical results.
    """
    shape = (cfg.n_ant, cfg.n_samples, cfg.n_chirps)
    data = np.zeros(shape, dtype=np.complex128)
    for obj in objects:
        data += object_cube(obj, cfg)
    if cfg.noise_var > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((2,) + shape)
        data += np.sqrt(cfg.noise_var / 2) * (noise[0] + 1j * noise[1])
    return RadarFrameCube(data, cfg, timestamp_s)


def predicted_bins(obj, cfg: RadarWaveformConfig, n_angle_bins: int = 64):
    """Analytic (range, Doppler, angle) bin positions of an object's peak.

    Doppler and angle bins follow the centred (fft-shifted) convention used
    by :mod:`radarbeam.dsp`.
    """
    p = derived_params(cfg)
    range_bin = cfg.slope * 2 * obj.range_m / SPEED_OF_LIGHT / cfg.fs * cfg.n_samples
    doppler_bin = cfg.n_chirps / 2 + 2 * obj.radial_velocity_mps / p.wavelength * cfg.t_pri * cfg.n_chirps
    angle_bin = n_angle_bins / 2 + n_angle_bins * np.sin(obj.azimuth_rad) / 2
    return range_bin, doppler_bin, angle_bin
