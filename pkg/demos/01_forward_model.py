"""Trace a room and inspect the resulting channel paths.

The image method mirrors the anchor across wall sequences; every reflected
path's length equals the straight-line distance to the deepest image, and
each single-bounce path can be reproduced from its reflection point alone.
"""

import math

import numpy as np

from snapslam import (
    SPEED_OF_LIGHT,
    Pose,
    Scene,
    UeState,
    Wall,
    measurement_model,
    synthesize_gains,
    trace_paths,
)

scene = Scene(
    walls=(
        Wall((-8.0, 6.0), (8.0, 6.0), 3.0),
        Wall((8.0, 6.0), (8.0, -6.0), 2.0),
        Wall((8.0, -6.0), (-8.0, -6.0), 3.0),
        Wall((-8.0, -6.0), (-8.0, 6.0), 2.0),
    ),
    bs=Pose((-5.0, 2.0), 0.3),
)
ue = UeState(position=(3.0, -4.0), orientation=1.1, clock_bias=20e-9)

paths = synthesize_gains(trace_paths(scene, ue, max_bounces=2))

print(f"{len(paths)} paths from anchor {scene.bs.position} "
      f"to user {ue.position} (bias {ue.clock_bias * 1e9:.0f} ns)\n")
print(f"{'kind':<14}{'toa ns':>10}{'aod deg':>10}{'aoa deg':>10}"
      f"{'len m':>8}{'gain dB':>9}")
for p in paths:
    print(f"{p.kind:<14}{p.toa * 1e9:>10.3f}{math.degrees(p.aod):>10.2f}"
          f"{math.degrees(p.aoa):>10.2f}{p.length_m:>8.3f}"
          f"{10 * math.log10(p.gain):>9.2f}")

# the reported toa is biased: geometric delay + clock offset
los = paths[0]
d = float(np.hypot(*(scene.bs.position - ue.position)))
print(f"\ndirect path check: {d:.6f} m / c + bias = "
      f"{(d / SPEED_OF_LIGHT + ue.clock_bias) * 1e9:.3f} ns, "
      f"traced {los.toa * 1e9:.3f} ns")

# single-bounce closure: the reflection point fully determines the path
worst = 0.0
for p in paths:
    if p.kind != "single_bounce":
        continue
    toa, aod, aoa = measurement_model(ue, scene.bs, p.incidence_points[0])
    worst = max(worst, abs(toa - p.toa) * SPEED_OF_LIGHT,
                abs(aod - p.aod), abs(aoa - p.aoa))
print(f"single-bounce closure vs the measurement model: worst "
      f"mismatch {worst:.3e} (m / rad)")
