"""
Following the transmitter through a crossing
============================================

A transmitter and a clutter car cross in azimuth.  The tracker picks the
transmitter on the first frame from the communication beam and then
follows it by nearest-neighbour association.
"""
import math

from radarbeam.comm import ArrayConfig, array_response, build_codebook, optimal_beam
from radarbeam.dsp import detect_objects
from radarbeam.radar import RadarWaveformConfig, synth_frame
from radarbeam.scenario import ObjectTruth
from radarbeam.tracker import run_tracker

radar = RadarWaveformConfig(noise_var=1e-4)
cb = build_codebook(ArrayConfig())
dt = 0.1
frames, truth = [], []
for i in range(20):
    t = i * dt
    tx = ObjectTruth(20.0 + 3.0 * t, 3.0, math.radians(-15 + 15 * t))
    car = ObjectTruth(26.0 - 2.0 * t, -2.0, math.radians(15 - 15 * t))
    frames.append(detect_objects(synth_frame([tx, car], radar, seed=i)))
    truth.append(tx)

beam = optimal_beam(array_response(ArrayConfig(), truth[0].azimuth_rad), cb)[0]
track = run_tracker(frames, beam, cb)
for i, (s, tx) in enumerate(zip(track, truth)):
    print(f"frame {i:2d}: track r={s.range_m:5.2f} v={s.velocity_mps:5.2f} "
          f"az={math.degrees(s.angle_rad):6.1f} | truth r={tx.range_m:5.2f} az={math.degrees(tx.azimuth_rad):6.1f}")
