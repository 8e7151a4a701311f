"""
FMCW radar frames and the detection chain
=========================================

Synthesize one frame with two reflectors, form the range-Doppler map,
run CA-CFAR and DBSCAN, and recover range, radial velocity and azimuth.
"""
import math

import numpy as np

from radarbeam.dsp import cfar_detect, dbscan_cluster, detect_objects, radar_cube, range_doppler_map
from radarbeam.radar import RadarWaveformConfig, derived_params, predicted_bins, synth_frame
from radarbeam.scenario import ObjectTruth

cfg = RadarWaveformConfig(noise_var=1e-4)
p = derived_params(cfg)
print(f"range resolution {p.range_res:.4f} m, max range {p.max_range:.2f} m")
print(f"velocity resolution {p.vel_res:.3f} m/s, max velocity {p.max_vel:.2f} m/s")

objects = [ObjectTruth(30.0, 5.0, math.radians(20)), ObjectTruth(12.0, -3.0, math.radians(-35))]
cube = synth_frame(objects, cfg, seed=0)
print("raw frame (antennas, samples, chirps):", cube.data.shape)

rd = range_doppler_map(cube)
dets = cfar_detect(rd)
labels = dbscan_cluster(dets)
print(f"{len(dets)} CFAR detections in {len(set(labels) - {-1})} clusters")

# the radar cube adds an angle axis to the range-Doppler map
rc = radar_cube(cube)
print("radar cube (range, angle, Doppler):", rc.values.shape)

for obj in objects:
    print("expected bins (range, Doppler, angle):", np.round(predicted_bins(obj, cfg), 1))
for s in detect_objects(cube):
    print(f"estimated r={s.range_m:.2f} m  v={s.velocity_mps:.2f} m/s  az={math.degrees(s.angle_rad):.1f} deg")
