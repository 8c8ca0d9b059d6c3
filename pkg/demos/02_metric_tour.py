"""A tour of the evaluation metrics on small constructed maps.

Shows the segmentation suite (MAE, mean-F, mean-E, S-measure), the rank
error r_MAE and its ordering behaviour, and the fixation suite including
the exact transport distance.
"""

import numpy as np

from camorank import metrics

rng = np.random.default_rng(0)

# --- segmentation metrics ---------------------------------------------
gt = np.zeros((16, 16))
gt[4:12, 4:12] = 1.0

perfect = gt.copy()
blurry = np.clip(gt + 0.25 * rng.standard_normal(gt.shape), 0, 1)
inverted = 1.0 - gt

print("segmentation metrics (prediction vs an 8x8 square gt):")
header = f"{'prediction':>10} {'MAE':>7} {'meanF':>7} {'meanE':>7} {'S':>7}"
print(header)
for name, pred in [("perfect", perfect), ("blurry", blurry),
                   ("inverted", inverted)]:
    print(f"{name:>10} "
          f"{metrics.mae(pred, gt):7.3f} "
          f"{metrics.mean_f_measure(pred, gt):7.3f} "
          f"{metrics.mean_e_measure(pred, gt):7.3f} "
          f"{metrics.s_measure(pred, gt):7.3f}")

# --- rank error --------------------------------------------------------
print("\nrank error r_MAE (gt: one rank-3 'easiest' square):")
rank_gt = np.zeros((16, 16), dtype=int)
rank_gt[4:12, 4:12] = 3
for name, value in [("exact", 3), ("as median (2)", 2), ("as hardest (1)", 1),
                    ("missed (0)", 0)]:
    pred = np.where(rank_gt > 0, value, 0)
    print(f"  predicted {name:>15}: r_MAE = {metrics.r_mae(pred, rank_gt):.3f}")
print("  larger rank distance costs strictly more, background mistakes most")

# --- fixation metrics ---------------------------------------------------
print("\nfixation metrics:")
ys, xs = np.mgrid[0:16, 0:16]
blob = np.exp(-((xs - 6.0) ** 2 + (ys - 9.0) ** 2) / 4.0)
shifted = np.exp(-((xs - 10.0) ** 2 + (ys - 9.0) ** 2) / 4.0)
points = [(6, 9), (7, 9)]
for name, pred in [("same blob", blob), ("blob shifted 4px", shifted)]:
    vals = metrics.fixation_metrics(pred, blob, points)
    print(f"  {name:>16}: SIM={vals['SIM']:.3f} CC={vals['CC']:.3f} "
          f"EMD={vals['EMD']:.3f} KLD={vals['KLD']:.3f} NSS={vals['NSS']:.2f} "
          f"AUC_J={vals['AUC_J']:.3f}")
print("  the transport distance of the shifted blob is the shift itself")

# point masses make the transport cost exactly readable
a = np.zeros((8, 8))
b = np.zeros((8, 8))
a[1, 1] = 1.0
b[5, 4] = 1.0
print(f"\npoint mass (1,1) -> (4,5): EMD = {metrics.emd(a, b):.6f} "
      f"(hypot(3,4) = 5)")
