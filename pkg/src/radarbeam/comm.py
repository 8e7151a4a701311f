"""Geometric mmWave channel, ULA codebook and exhaustive beam selection.

Beam indices are 1-based throughout the public API (1..B).
"""
from __future__ import annotations

import csv
import dataclasses
import math
import os
from typing import Sequence

import numpy as np

SECTORS = ("front", "right", "back", "left")


TIE_RTOL = 1e-12


class CodebookError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class ArrayConfig:
    n_elements: int = 16
    spacing_wavelengths: float = 0.5
    sector: str = "front"

    def __post_init__(self):
        if self.n_elements < 1:
            raise ValueError("n_elements must be >= 1")
        if not self.spacing_wavelengths > 0:
            raise ValueError("spacing_wavelengths must be > 0")
        if self.sector not in SECTORS:
            raise ValueError(f"sector must be one of {SECTORS}")


@dataclasses.dataclass(frozen=True)
class BeamCodebook:
    beams: np.ndarray  # (B, n_elements) complex, unit-norm rows
    steering_angles_rad: np.ndarray  # (B,)

    @property
    def size(self) -> int:
        return len(self.steering_angles_rad)


@dataclasses.dataclass(frozen=True)
class ChannelState:
    paths: tuple  # of (gain, azimuth, elevation)

    def __post_init__(self):
        if len(self.paths) < 1:
            raise ValueError("a channel needs at least one path")
        for _, az, el in self.paths:
            if not (math.isfinite(az) and math.isfinite(el)):
                raise ValueError("path angles must be finite")

    @property
    def n_paths(self) -> int:
        return len(self.paths)


def array_response(cfg: ArrayConfig, azimuth: float, elevation: float = 0.0) -> np.ndarray:
    # elevation is part of the geometric model but a horizontal ULA cannot see it
    m = np.arange(cfg.n_elements)
    return np.exp(2j * np.pi * cfg.spacing_wavelengths * m * np.sin(azimuth))


def codebook_sines(B: int, half_width: float = math.pi / 4) -> np.ndarray:
    """Uniform sin-space grid centred in B equal cells over the sector."""
    s = math.sin(half_width)
    step = 2 * s / B
    return -s + (np.arange(B) + 0.5) * step


def build_codebook(cfg: ArrayConfig, B: int = 64) -> BeamCodebook:
    if B < cfg.n_elements:
        raise CodebookError(f"B={B} < n_elements={cfg.n_elements}: undersampled codebook")
    angles = np.arcsin(codebook_sines(B))
    beams = np.stack([array_response(cfg, a) for a in angles]) / np.sqrt(cfg.n_elements)
    return BeamCodebook(beams, angles)


def channel_vector(state: ChannelState, cfg: ArrayConfig) -> np.ndarray:
    h = np.zeros(cfg.n_elements, dtype=complex)
    for gain, az, el in state.paths:
        h += gain * array_response(cfg, az, el)
    return h


def receive_signal(h: np.ndarray, f: np.ndarray, symbol_power: float = 1.0,
                   noise_var: float = 0.0, seed=None) -> complex:
    """Combined received sample for transmit symbol s = 1."""
    h = np.asarray(h)
    f = np.asarray(f)
    if h.shape != f.shape:
        raise ValueError(f"shape mismatch: h {h.shape} vs f {f.shape}")
    y = np.sqrt(symbol_power) * np.vdot(f, h)
    if noise_var > 0:
        g = np.random.default_rng(seed).standard_normal(2)
        y += np.sqrt(noise_var / 2) * (g[0] + 1j * g[1])
    return complex(y)


def beam_gains(h: np.ndarray, cb: BeamCodebook) -> np.ndarray:
    return np.abs(cb.beams.conj() @ h) ** 2


def optimal_beam(h: np.ndarray, cb: BeamCodebook) -> tuple[int, float]:
    """Exhaustive search; ties resolve to the lowest index.

    Gains within 1e-12 (relative) of the maximum count as ties, so the
    choice does not depend on rounding when h is rescaled.
    """
    h = np.asarray(h)
    if not np.any(h):
        raise ValueError("zero channel: optimal beam undefined")
    gains = beam_gains(h, cb)
    b = int(np.flatnonzero(gains >= gains.max() * (1 - TIE_RTOL))[0])
    return b + 1, float(gains[b])


def beam_to_comm_angle(b: int, cb: BeamCodebook) -> float:
    if not 1 <= b <= cb.size:
        raise IndexError(f"beam {b} outside 1..{cb.size}")
    return float(cb.steering_angles_rad[b - 1])


def codebook_to_csv(cb: BeamCodebook, path: str | os.PathLike) -> None:
    n = cb.beams.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "steering_angle_rad"]
                   + [f"{part}{m}" for m in range(n) for part in ("re", "im")])
        for i, (beam, ang) in enumerate(zip(cb.beams, cb.steering_angles_rad), start=1):
            row: list = [i, repr(float(ang))]
            for v in beam:
                row += [repr(float(v.real)), repr(float(v.imag))]
            w.writerow(row)


def label_channel(paths: Sequence, cfg: ArrayConfig, cb: BeamCodebook) -> int:
    """Optimal beam index for a list of ``(gain, az, el)`` paths."""
    return optimal_beam(channel_vector(ChannelState(tuple(paths)), cfg), cb)[0]
