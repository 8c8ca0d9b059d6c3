"""From raw gaze logs to camouflage ranks, step by step.

Three simulated observers view one image containing two hidden instances.
Observers find the left instance quickly; the right instance is mostly
missed. The script walks through per-observer delays, the median-of-medians
instance delay, and the final quantized rank map, then round-trips
everything through the CSV / PNG / JSON file formats.
"""

import os
import tempfile

import numpy as np

from camorank.annotation import (
    FixationSession,
    InstanceMask,
    annotate_image,
    read_session_csv,
    write_rank_annotation,
    write_session_csv,
)

OUT = os.path.join(os.environ.get("CAMORANK_OUT_ROOT", "demo_out"), "annotate")
os.makedirs(OUT, exist_ok=True)

# one 32x32 image with two instances: an easy square on the left,
# a hard square on the right
easy = np.zeros((32, 32), dtype=bool)
easy[8:16, 4:12] = True
hard = np.zeros((32, 32), dtype=bool)
hard[18:26, 22:30] = True
instances = [
    InstanceMask(instance_id="left", mask=easy, image_id="scene"),
    InstanceMask(instance_id="right", mask=hard, image_id="scene"),
]

# observer 0 finds both; observers 1 and 2 never fixate the right instance
sessions = [
    FixationSession("obs0", "scene", t0=0.0, points=[
        (0.8, 6, 10), (1.1, 8, 12), (6.5, 25, 20), (9.5, 1, 1),
    ]),
    FixationSession("obs1", "scene", t0=0.0, points=[
        (1.5, 5, 9), (2.0, 10, 14), (9.5, 2, 30),
    ]),
    FixationSession("obs2", "scene", t0=0.0, points=[
        (0.6, 7, 11), (9.5, 30, 2),
    ]),
]

delays, annotation = annotate_image(sessions, instances)

print("per-observer delays (None = never fixated):")
for inst_id, (per_observer, delay) in delays.entries.items():
    print(f"  {inst_id:>5}: {per_observer} -> normalized delay {delay:.3f}")

print("\nquantized ranks (1 hardest .. 3 easiest):")
for inst_id, rank in annotation.instance_ranks.items():
    print(f"  {inst_id:>5}: rank {rank}")

values, counts = np.unique(annotation.rank_map, return_counts=True)
print("\nrank map value counts:",
      {int(v): int(c) for v, c in zip(values, counts)})

# the same flow through the on-disk formats
with tempfile.TemporaryDirectory() as tmp:
    for s in sessions:
        write_session_csv(s, os.path.join(tmp, f"{s.observer_id}.csv"))
    back = read_session_csv(os.path.join(tmp, "obs0.csv"))
    print(f"\nCSV round trip: observer {back.observer_id}, "
          f"{len(back.points)} points, t0={back.t0}")

write_rank_annotation(annotation, delays, OUT, "scene")
print(f"wrote {OUT}/scene.png and {OUT}/scene.json")
