"""
Beamforming codebook and optimal-beam labels
============================================

Build the 64-beam DFT-style codebook for a uniform linear array and label
a line-of-sight channel with the beam of largest received gain.
"""
import math

import numpy as np

from radarbeam.comm import (ArrayConfig, array_response, beam_gains, beam_to_comm_angle, build_codebook,
                            label_channel, optimal_beam)
from radarbeam.scenario import ObjectTruth, truth_to_channel_paths

array = ArrayConfig()
cb = build_codebook(array, 64)
print("codebook:", cb.size, "beams, pointing from",
      f"{math.degrees(beam_to_comm_angle(1, cb)):.1f} to {math.degrees(beam_to_comm_angle(64, cb)):.1f} deg")

for deg in (-30, 0, 12.5, 40):
    h = array_response(array, math.radians(deg))
    b, gain = optimal_beam(h, cb)
    print(f"LoS at {deg:6.1f} deg -> beam {b:2d} (points at {math.degrees(beam_to_comm_angle(b, cb)):6.1f} deg), "
          f"gain {gain:.2f}")

# gains fall off quickly away from the best beam
h = array_response(array, math.radians(12.5))
g = beam_gains(h, cb)
b = int(np.argmax(g))
print("gains around the best beam:", np.round(g[b - 3:b + 4] / g[b], 3))

# a transmitter seen by the radar labels its frame through its channel paths
tx = ObjectTruth(25.0, 2.0, math.radians(-10))
print("label for a transmitter at -10 deg:", label_channel(truth_to_channel_paths(tx, seed=1), array, cb))
