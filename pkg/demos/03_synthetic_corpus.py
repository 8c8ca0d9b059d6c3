"""Generate a small synthetic camouflage corpus and render layer montages.

Each sample gets a side-by-side PNG: image | segmentation | fixation
density | rank map (brighter = easier). The corpus is byte-reproducible
from its seed.
"""

import os

import numpy as np
from PIL import Image

from camorank.data import load_sample, synthesize

OUT = os.path.join(os.environ.get("CAMORANK_OUT_ROOT", "demo_out"), "corpus")

manifest = synthesize(seed=42, n=4, size=64, out_dir=OUT)
print(f"wrote {len(manifest.entries)} samples under {manifest.root}")

montage_dir = os.path.join(OUT, "montage")
os.makedirs(montage_dir, exist_ok=True)

for sid in manifest.entries:
    sample = load_sample(manifest, sid)
    img = (sample.image * 255).astype(np.uint8)
    seg = np.repeat((sample.seg_gt * 255).astype(np.uint8)[..., None], 3, axis=2)
    fix = np.repeat((sample.fix_gt * 255).astype(np.uint8)[..., None], 3, axis=2)
    rank = np.repeat((sample.rank_gt.rank_map * 85).astype(np.uint8)[..., None],
                     3, axis=2)
    strip = np.concatenate([img, seg, fix, rank], axis=1)
    Image.fromarray(strip).save(os.path.join(montage_dir, f"{sid}.png"))
    ranks = {i.instance_id: i.rank for i in sample.instances}
    print(f"  {sid}: {len(sample.instances)} instance(s), ranks {ranks}, "
          f"{len(sample.fix_points)} fixation point(s)")

print(f"montages under {montage_dir}")
print("re-running with the same seed reproduces every byte; try seed=43 "
      "for different scenes")
