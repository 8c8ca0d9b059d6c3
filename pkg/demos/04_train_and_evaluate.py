"""End-to-end desk run: synthesize, train, evaluate, inspect predictions.

A small model overfits a 5-scene corpus. Expect the smoothed objective to
fall by roughly an order of magnitude and the evaluation report to show
high structural similarity and a low rank error on the training scenes.
Pass an iteration count to train longer (300 reproduces the acceptance
protocol; the default 120 keeps the demo under a minute or two).
"""

import json
import os
import sys

import numpy as np

from camorank.data import synthesize
from camorank.model.net import CamoRankNet, ModelConfig
from camorank.pipeline import TrainConfig, evaluate, objective_curve, train

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 120
root = os.path.join(os.environ.get("CAMORANK_OUT_ROOT", "demo_out"), "train")

corpus = synthesize(seed=7, n=5, size=64, out_dir=os.path.join(root, "corpus"))
print(f"corpus: {len(corpus.entries)} scenes at 64x64")

model = ModelConfig(input_size=64, backbone_widths=(16, 32, 64, 96),
                    decoder_channels=32, fpn_channels=32,
                    pre_nms_top_n=256, post_nms_top_n=32)
config = TrainConfig(batch_size=5, iterations=iterations, learning_rate=1e-3,
                     seed=7, checkpoint_every=100, augment_flip=False,
                     threads=2, model=model)

n_params = sum(p.numel() for p in CamoRankNet(model).parameters())
print(f"training {iterations} iterations ({n_params:,} parameters)...")
ckpt, log = train(config, corpus, os.path.join(root, "run"))

curve = objective_curve(log)
marks = [0, len(curve) // 4, len(curve) // 2, 3 * len(curve) // 4, -1]
print("objective:", " -> ".join(f"{curve[i]:.3f}" for i in marks))

report = evaluate(ckpt, corpus, report_path=os.path.join(root, "report.json"))
mean = report["mean"]
print("\ntrain-set metrics:")
print(json.dumps({k: round(v, 4) for k, v in mean.items()
                  if v is not None}, indent=2, sort_keys=True))
print(f"\nS-measure {mean['S_alpha']:.3f}, rank error {mean['r_MAE']:.3f}")
print(f"checkpoint: {ckpt}")
print(f"report: {os.path.join(root, 'report.json')}")
print("\nrun the CLI on one scene:")
print(f"  camorank infer --ckpt {ckpt} "
      f"--image {os.path.join(root, 'corpus', 'images', 'scene_0000.png')} "
      f"--out {os.path.join(root, 'preds')}")
