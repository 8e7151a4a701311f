import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_dbscan, naive_radar_cube, naive_rd_map, same_partition
from radarbeam.dsp import (CfarConfig, DbscanConfig, Detection, DetectionChain, LazyRadarCube,
                           RangeDopplerMap, antenna_spectra, cfar_alpha, cfar_detect, cfar_threshold,
                           dbscan_cluster, detect_objects, estimate_states, radar_cube,
                           range_doppler_map)
from radarbeam.radar import RadarFrameCube, RadarWaveformConfig, derived_params, predicted_bins, synth_frame
from radarbeam.scenario import ObjectTruth

CFG = RadarWaveformConfig()
P = derived_params(CFG)
SMALL = RadarWaveformConfig(n_ant=8, n_samples=16, n_chirps=8)


def _random_cube(rng, cfg=SMALL):
    shape = (cfg.n_ant, cfg.n_samples, cfg.n_chirps)
    return RadarFrameCube(rng.normal(size=shape) + 1j * rng.normal(size=shape), cfg)


def _rel_err(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


def test_fft_oracles_on_small_cubes():
    rng = np.random.default_rng(0)
    for _ in range(10):
        cube = _random_cube(rng)
        assert _rel_err(range_doppler_map(cube).values, naive_rd_map(cube.data)) < 1e-6
        assert _rel_err(radar_cube(cube, 16).values, naive_radar_cube(cube.data, 16)) < 1e-6


def test_single_tone_matches_oracle():
    m, c = np.meshgrid(np.arange(16), np.arange(8), indexing="ij")
    tone = np.exp(2j * np.pi * (3 * m / 16 + 2 * c / 8))
    cube = RadarFrameCube(np.broadcast_to(tone, (8, 16, 8)).copy(), SMALL)
    rd = range_doppler_map(cube).values
    assert _rel_err(rd, naive_rd_map(cube.data)) < 1e-6
    assert np.unravel_index(np.argmax(rd), rd.shape) == (3, 2 + 4)


def test_zero_cube_gives_zero_outputs():
    cube = RadarFrameCube(np.zeros((4, 256, 128), complex), CFG)
    assert not np.any(range_doppler_map(cube).values)
    assert not np.any(radar_cube(cube).values)
    assert cfar_detect(range_doppler_map(cube)) == []


def test_parseval_per_antenna():
    rng = np.random.default_rng(1)
    cube = _random_cube(rng)
    spec = antenna_spectra(cube)
    for a in range(cube.data.shape[0]):
        lhs = np.sum(np.abs(spec[a]) ** 2)
        rhs = 16 * 8 * np.sum(np.abs(cube.data[a]) ** 2)
        assert abs(lhs - rhs) <= 1e-9 * rhs


def test_static_object_sits_at_doppler_centre():
    rd = range_doppler_map(synth_frame([ObjectTruth(20.0, 0.0, 0.0)], CFG)).values
    assert np.unravel_index(np.argmax(rd), rd.shape)[1] == 64


def test_angle_bins():
    rc = radar_cube(synth_frame([ObjectTruth(20.0, 0.0, 0.0)], CFG))
    r, a, d = np.unravel_index(np.argmax(rc.values), rc.values.shape)
    assert a == 32
    rc = radar_cube(synth_frame([ObjectTruth(20.0, 0.0, math.radians(30))], CFG))
    r, a, d = np.unravel_index(np.argmax(rc.values), rc.values.shape)
    assert a == 32 + 16


def test_radar_cube_needs_enough_angle_bins():
    with pytest.raises(ValueError):
        radar_cube(synth_frame([], CFG), 2)


def test_lazy_cube_matches_full_cube():
    cube = _random_cube(np.random.default_rng(2))
    full = radar_cube(cube, 16)
    lazy = LazyRadarCube(antenna_spectra(cube), 16)
    for r, d in [(0, 0), (5, 3), (15, 7)]:
        assert np.allclose(lazy.angle_profile(r, d), full.angle_profile(r, d), rtol=1e-12)


# -- CFAR -------------------------------------------------------------------

def test_cfar_alpha_default_below_100():
    n = (2 * 6 + 1) ** 2 - (2 * 2 + 1) ** 2
    assert n == 144
    alpha = n * (1e-4 ** (-1 / n) - 1)
    assert abs(float(cfar_alpha(144, 1e-4)) - alpha) < 1e-12
    assert alpha < 100


def test_cfar_impulse_on_flat_map():
    vals = np.ones((64, 64))
    vals[30, 40] = 10.0  # power 100, i.e. +20 dB
    dets = cfar_detect(RangeDopplerMap(vals))
    assert [(d.range_bin, d.doppler_bin) for d in dets] == [(30, 40)]
    assert dets[0].power == pytest.approx(100.0)


def test_cfar_false_alarm_rate():
    rng = np.random.default_rng(7)
    power = rng.exponential(size=(1000, 1000))
    n = len(cfar_detect(RangeDopplerMap(np.sqrt(power)), CfarConfig(pfa=1e-4)))
    assert 0.3e-4 <= n / 1e6 <= 3e-4


@settings(max_examples=25, deadline=None)
@given(st.integers(8, 40), st.integers(8, 40), st.integers(-6, 6), st.integers(-6, 6))
def test_cfar_translation_covariant(r, d, dr, dd):
    a = np.zeros((56, 56))
    a[r, d] = 5.0
    b = np.roll(np.roll(a, dr, 0), dd, 1)
    da = {(x.range_bin, x.doppler_bin) for x in cfar_detect(RangeDopplerMap(a))}
    db = {(x.range_bin, x.doppler_bin) for x in cfar_detect(RangeDopplerMap(b))}
    assert db == {(x + dr, y + dd) for x, y in da}


def test_cfar_config_validation():
    with pytest.raises(ValueError):
        CfarConfig(pfa=1.0)
    with pytest.raises(ValueError):
        CfarConfig(training_cells=(0, 0))
    with pytest.raises(ValueError):
        cfar_detect(RangeDopplerMap(np.ones((10, 10))))


# -- DBSCAN -----------------------------------------------------------------

def _dets(points):
    return [Detection(int(r), int(d), 1.0) for r, d in points]


def test_dbscan_small_examples():
    assert dbscan_cluster([]) == []
    assert dbscan_cluster(_dets([(0, 0), (10, 10)])) == [-1, -1]
    rng = np.random.default_rng(3)
    blob = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 1)]
    pts = blob + [(r + 20, d) for r, d in blob]
    perm = rng.permutation(len(pts))
    labels = dbscan_cluster(_dets([pts[i] for i in perm]))
    assert sorted(set(labels)) == [0, 1]
    assert same_partition(labels, brute_dbscan([pts[i] for i in perm], 3.0, 3))


def test_dbscan_matches_brute_force():
    for seed in range(500):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(0, 13))
        pts = [tuple(p) for p in rng.integers(0, 12, size=(n, 2))]
        ours = dbscan_cluster(_dets(pts))
        assert same_partition(ours, brute_dbscan(pts, 3.0, 3)), seed


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 15), st.integers(0, 15)), max_size=12), st.randoms())
def test_dbscan_order_independent(pts, rnd):
    shuffled = list(range(len(pts)))
    rnd.shuffle(shuffled)
    a = dbscan_cluster(_dets(pts))
    b = dbscan_cluster(_dets([pts[i] for i in shuffled]))
    assert same_partition([a[i] for i in shuffled], b)


def test_dbscan_config_validation():
    with pytest.raises(ValueError):
        DbscanConfig(eps_bins=0)
    with pytest.raises(ValueError):
        DbscanConfig(min_points=0)


# -- state estimation -------------------------------------------------------

def _bins_of_state(s):
    return (s.range_m / P.range_res, s.velocity_mps / P.vel_res + 64, 32 + 32 * math.sin(s.angle_rad))


def _close(state, obj):
    got, want = _bins_of_state(state), predicted_bins(obj, CFG)
    return all(abs(g - w) <= 1 for g, w in zip(got, want))


def test_state_of_single_object():
    obj = ObjectTruth(30.0, 5.0, math.radians(20))
    states = detect_objects(synth_frame([obj], CFG))
    assert len(states) == 1 and _close(states[0], obj)


def test_boresight_angle_is_exactly_zero():
    states = detect_objects(synth_frame([ObjectTruth(15.0, -2.0, 0.0)], CFG))
    assert len(states) == 1 and states[0].angle_rad == 0.0


def test_two_separated_objects():
    a = ObjectTruth(12.0, -3.0, math.radians(-25))
    b = ObjectTruth(30.0, 4.0, math.radians(15))
    states = detect_objects(synth_frame([a, b], CFG))
    assert len(states) == 2
    assert _close(states[0], a) and _close(states[1], b)


def test_estimate_states_representative_and_noise():
    vals = np.zeros((32, 16))
    vals[10, 8], vals[11, 8], vals[10, 9] = 5.0, 3.0, 2.0
    dets = [Detection(10, 8, 25.0), Detection(11, 8, 9.0), Detection(10, 9, 4.0), Detection(3, 3, 1.0)]
    cube3d = LazyRadarCube(np.ones((4, 32, 16), complex), 64)
    cfg = RadarWaveformConfig(n_samples=32, n_chirps=16)
    p = derived_params(cfg)
    states = estimate_states(dets, [0, 0, 0, -1], RangeDopplerMap(vals, cfg), cube3d)
    assert len(states) == 1
    assert states[0].range_m == 10 * p.range_res and states[0].velocity_mps == 0.0
    assert states[0].angle_rad == 0.0 and states[0].power == 25.0


def test_detection_chain_end_to_end_100_frames():
    rng = np.random.default_rng(11)
    for _ in range(100):
        obj = ObjectTruth(rng.uniform(3, 0.9 * P.max_range), rng.uniform(-0.9, 0.9) * P.max_vel,
                          rng.uniform(-1.0, 1.0))
        states = detect_objects(synth_frame([obj], CFG), DetectionChain())
        assert len(states) == 1 and _close(states[0], obj)


def test_cfar_ring_is_never_negative_near_strong_peak():
    vals = np.zeros((256, 128))
    vals[76, 64] = 3e5  # strong isolated peak, exact zeros around it
    power = vals ** 2
    assert np.all(cfar_threshold(power, CfarConfig()) >= 0)
    assert [(d.range_bin, d.doppler_bin) for d in cfar_detect(RangeDopplerMap(vals))] == [(76, 64)]


def test_noiseless_detections_have_positive_power():
    states = detect_objects(synth_frame([ObjectTruth(15.0, 0.0, math.radians(20))], CFG))
    assert len(states) == 1 and all(s.power > 0 for s in states)
