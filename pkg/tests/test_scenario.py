import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radarbeam.radar import RadarWaveformConfig, derived_params
from radarbeam.scenario import (PRESETS, ConfigError, GeometryError, ObjectTruth, ScenarioConfig,
                                generate_timeline, timeline_to_csv, transmitter_kinematics,
                                truth_to_channel_paths)


def test_following_constant_gap():
    tl = generate_timeline(ScenarioConfig("following", duration_s=10, speed_params={"gap_m": 10.0}))
    assert len(tl) == 100
    assert all(o.range_m == 10.0 and o.radial_velocity_mps == 0.0 for o in tl.transmitter)


def test_timeline_length_and_spacing():
    tl = generate_timeline(ScenarioConfig("lane_change", duration_s=10, sample_rate_hz=10))
    assert len(tl) == len(tl.transmitter) == 100
    assert np.allclose(np.diff(tl.timestamps_s), 0.1)


def test_passing_range_dips_once_and_azimuth_crosses_zero_once():
    p = {"gap_m": 12.0, "pull_away_speed_mps": 0.0, "lateral_start_m": 6.0, "lateral_speed_mps": 1.2}
    tl = generate_timeline(ScenarioConfig("passing", duration_s=10, speed_params=p))
    r = np.array([o.range_m for o in tl.transmitter])
    az = np.array([o.azimuth_rad for o in tl.transmitter])
    # closed-form straight-line oracle
    t = tl.timestamps_s
    y = 6.0 - 1.2 * t
    assert np.allclose(r, np.hypot(12.0, y), atol=1e-12)
    k = int(np.argmin(r))
    assert 0 < k < len(r) - 1
    assert np.all(np.diff(r[:k + 1]) < 0) and np.all(np.diff(r[k:]) > 0)
    signs = np.sign(az[az != 0])
    assert np.count_nonzero(np.diff(signs)) == 1


@pytest.mark.parametrize("preset", PRESETS)
def test_regeneration_is_bit_identical(preset):
    cfg = ScenarioConfig(preset, n_clutter=3, seed=11)
    a, b = generate_timeline(cfg), generate_timeline(cfg)
    assert np.array_equal(a.timestamps_s, b.timestamps_s)
    assert a.transmitter == b.transmitter and a.clutter == b.clutter


@pytest.mark.parametrize("preset", PRESETS)
def test_finite_difference_matches_radial_velocity(preset):
    cfg = ScenarioConfig(preset)
    f = transmitter_kinematics(cfg)
    tl = generate_timeline(cfg)
    h = 1e-5
    for t, obj in zip(tl.timestamps_s[1:-1], tl.transmitter[1:-1]):
        r_p, _, _ = f(t + h)
        r_m, _, _ = f(t - h)
        assert abs((r_p - r_m) / (2 * h) - obj.radial_velocity_mps) < 1e-6


@pytest.mark.parametrize("preset", PRESETS)
def test_sector_and_unambiguous_limits(preset):
    tl = generate_timeline(ScenarioConfig(preset, n_clutter=4, seed=3))
    lim = derived_params(RadarWaveformConfig())
    sector = math.pi / 2 if preset == "turn" else math.pi / 4
    for o in tl.transmitter:
        assert abs(o.azimuth_rad) <= sector
        assert 0 < o.range_m < lim.max_range
        assert abs(o.radial_velocity_mps) < lim.max_vel
    for objs in tl.clutter:
        for o in objs:
            assert o.range_m < lim.max_range and abs(o.radial_velocity_mps) < lim.max_vel


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), n_clutter=st.integers(0, 4),
       preset=st.sampled_from(PRESETS))
def test_any_seed_is_deterministic(seed, n_clutter, preset):
    cfg = ScenarioConfig(preset, duration_s=2, n_clutter=n_clutter, seed=seed)
    a, b = generate_timeline(cfg), generate_timeline(cfg)
    assert a.transmitter == b.transmitter and a.clutter == b.clutter


def test_invalid_configs_rejected():
    with pytest.raises(ConfigError):
        ScenarioConfig("passing", speed_params={"lateral_speed_mps": -1.0})
    with pytest.raises(ConfigError):
        ScenarioConfig("drifting")
    with pytest.raises(ConfigError):
        ScenarioConfig("following", duration_s=0)
    with pytest.raises(ConfigError):
        ScenarioConfig("following", n_clutter=-1)
    with pytest.raises(ConfigError):
        # leaves the front sector
        generate_timeline(ScenarioConfig("following", speed_params={"gap_m": 5.0, "lane_offset_m": 8.0}))


def test_config_from_json(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps({"preset": "turn", "duration_s": 3, "seed": 5,
                                "speed_params": {"turn_rate_dps": 4.0}}))
    cfg = ScenarioConfig.from_json(path)
    assert cfg.preset == "turn" and cfg.params()["turn_rate_dps"] == 4.0
    assert len(generate_timeline(cfg)) == 30


def test_channel_paths_follow_inverse_range():
    obj = ObjectTruth(10.0, 0.0, 0.3)
    (g, az, el), = truth_to_channel_paths(obj, seed=4, ref_gain=2.0)
    assert az == 0.3 and el == 0.0
    assert abs(abs(g) - 0.2) < 1e-15
    (g2, _, _), = truth_to_channel_paths(ObjectTruth(20.0, 0.0, 0.3), seed=4, ref_gain=2.0)
    assert abs(abs(g2) - abs(g) / 2) < 1e-15
    assert truth_to_channel_paths(obj, seed=4) == truth_to_channel_paths(obj, seed=4)


def test_ground_reflection_adds_second_path():
    paths = truth_to_channel_paths(ObjectTruth(15.0, 0.0, -0.2), seed=1, ground_reflection=True)
    assert len(paths) == 2 and paths[1][1] == -0.2
    assert abs(paths[1][0]) < abs(paths[0][0])


def test_zero_range_is_degenerate():
    with pytest.raises(GeometryError):
        truth_to_channel_paths(ObjectTruth(0.0, 0.0, 0.0))


def test_timeline_csv(tmp_path):
    tl = generate_timeline(ScenarioConfig("passing", duration_s=1, n_clutter=1, seed=2))
    timeline_to_csv(tl, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,object_id,range_m,radial_velocity_mps,azimuth_rad"
    assert len(lines) == 1 + sum(len(tl.objects_at(i)) for i in range(len(tl)))
