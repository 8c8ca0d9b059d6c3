"""Training and evaluation orchestration.

One Adam optimizer drives the shared backbone and all three heads; every
iteration computes the joint fixation/segmentation loss plus the ranking
multi-task loss on the same batch and logs all components as one JSON line.
Checkpoints rotate every ``checkpoint_every`` iterations (keep-last-3) and
at the end. Everything is a pure function of (config, seed, corpus):
two runs with the same seed produce byte-identical logs and reports.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields

import numpy as np
import torch
import yaml
from PIL import Image

from camorank import metrics
from camorank.data import (
    DatasetManifest,
    Sample,
    ValidationError,
    epoch_order,
    flip_sample,
    load_sample,
)
from camorank.losses import LossReport, SimilarityPrior
from camorank.model.net import (
    CamoRankNet,
    InstanceProposal,
    ModelConfig,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "TrainConfig",
    "train",
    "evaluate",
    "rank_map_from_instances",
    "read_train_log",
    "objective_curve",
    "smoothed",
    "config_hash",
]


@dataclass
class TrainConfig:
    batch_size: int = 10
    iterations: int = 10000
    learning_rate: float = 5e-5
    lam: float = 1.0
    seed: int = 0
    checkpoint_every: int = 500
    keep_checkpoints: int = 3
    augment_flip: bool = True
    threads: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 0 or self.learning_rate <= 0:
            raise ValidationError("batch_size/iterations/learning_rate must be positive")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")

    @property
    def input_size(self) -> int:
        return self.model.input_size

    def to_flat_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "model"}
        d.update(self.model.to_dict())
        return d

    @classmethod
    def from_flat_dict(cls, flat: dict) -> "TrainConfig":
        model_names = {f.name for f in fields(ModelConfig)}
        train_names = {f.name for f in fields(cls)} - {"model"}
        model_kw, train_kw = {}, {}
        for key, value in flat.items():
            if key in model_names:
                model_kw[key] = value
            elif key in train_names:
                train_kw[key] = value
            else:
                raise ValidationError(f"unknown config key {key!r}")
        return cls(model=ModelConfig(**model_kw), **train_kw)

    @classmethod
    def from_file(cls, path: str) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as f:
            flat = yaml.safe_load(f) or {}
        if not isinstance(flat, dict):
            raise ValidationError(f"{path}: expected a flat key-value mapping")
        return cls.from_flat_dict(flat)

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(self.to_flat_dict(), f, sort_keys=True)


def config_hash(config: TrainConfig) -> str:
    blob = json.dumps(config.to_flat_dict(), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ----------------------------------------------------------------------
# batch assembly
# ----------------------------------------------------------------------

def _sample_to_tensors(sample: Sample):
    image = torch.from_numpy(sample.image.transpose(2, 0, 1)).float()
    fix = torch.from_numpy(sample.fix_gt).float()[None]
    seg = torch.from_numpy(sample.seg_gt.astype(np.float32))[None]
    boxes = torch.tensor([list(i.box) for i in sample.instances],
                         dtype=torch.float32).reshape(-1, 4)
    ranks = torch.tensor([i.rank for i in sample.instances], dtype=torch.int64)
    masks = (torch.from_numpy(np.stack([i.mask for i in sample.instances]))
             .float() if sample.instances
             else torch.zeros((0,) + sample.shape))
    return image, fix, seg, {"boxes": boxes, "ranks": ranks, "masks": masks}


def _build_batch(samples: list):
    images, fixes, segs, instances = [], [], [], []
    for s in samples:
        img, fix, seg, inst = _sample_to_tensors(s)
        images.append(img)
        fixes.append(fix)
        segs.append(seg)
        instances.append(inst)
    return (torch.stack(images), torch.stack(fixes), torch.stack(segs),
            instances)


# ----------------------------------------------------------------------
# training
# ----------------------------------------------------------------------

def train(config: TrainConfig, manifest: DatasetManifest, out_dir: str,
          prior: SimilarityPrior | None = None) -> tuple:
    """Run the optimizer loop; returns (final checkpoint path, log path)."""
    os.makedirs(out_dir, exist_ok=True)
    torch.set_num_threads(config.threads)
    torch.manual_seed(config.seed)
    prior = prior or SimilarityPrior.default()

    model = CamoRankNet(config.model)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    samples = [load_sample(manifest, sid, size=config.input_size)
               for sid in manifest.entries]
    n = len(samples)
    flip_rng = np.random.default_rng([config.seed, 1])

    log_path = os.path.join(out_dir, "train_log.jsonl")
    kept_checkpoints: list[str] = []
    epoch, cursor = 0, 0
    order = epoch_order(n, config.seed, epoch)

    with open(log_path, "w", encoding="utf-8") as log:
        for iteration in range(1, config.iterations + 1):
            batch_samples = []
            for _ in range(config.batch_size):
                if cursor >= n:
                    epoch += 1
                    cursor = 0
                    order = epoch_order(n, config.seed, epoch)
                s = samples[order[cursor]]
                cursor += 1
                if config.augment_flip and flip_rng.random() < 0.5:
                    s = flip_sample(s)
                batch_samples.append(s)
            images, fix_gt, seg_gt, instances = _build_batch(batch_samples)
            losses = model.training_losses(images, fix_gt, seg_gt, instances,
                                           prior=prior, lam=config.lam)
            objective = losses["L_fc"] + losses["ranking_total"]
            optimizer.zero_grad()
            objective.backward()
            optimizer.step()
            with torch.no_grad():
                report = LossReport.build(
                    l_f=float(losses["L_f"]), l_c=float(losses["L_c"]),
                    lam=config.lam, l_rpn=float(losses["L_rpn"]),
                    l_rank=float(losses["L_rank"]), l_mask=float(losses["L_mask"]))
            try:
                report.validate()
            except FloatingPointError as exc:
                raise RuntimeError(
                    f"training diverged at iteration {iteration}: {exc}") from exc
            log.write(report.to_json_line(iteration) + "\n")
            if config.checkpoint_every and iteration % config.checkpoint_every == 0:
                path = os.path.join(out_dir, f"ckpt_{iteration:06d}.zip")
                save_checkpoint(model, path, extra={"iteration": iteration,
                                                    "seed": config.seed})
                kept_checkpoints.append(path)
                while len(kept_checkpoints) > config.keep_checkpoints:
                    os.remove(kept_checkpoints.pop(0))

    final_path = os.path.join(out_dir, "ckpt_final.zip")
    save_checkpoint(model, final_path,
                    extra={"iteration": config.iterations, "seed": config.seed,
                           "config_hash": config_hash(config)})
    return final_path, log_path


def read_train_log(path: str) -> list:
    with open(path, "r", encoding="utf-8") as f:
        return [LossReport.from_json_line(line) for line in f if line.strip()]


def objective_curve(path: str) -> list:
    return [r.objective for r in read_train_log(path)]


def smoothed(values, window: int = 25) -> list:
    """Trailing moving average (shorter head windows use what is available)."""
    out = []
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out.append(float(np.mean(values[lo:i + 1])))
    return out


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------

def rank_map_from_instances(proposals: list, shape,
                            mask_threshold: float = 0.5) -> np.ndarray:
    """Paint each proposal's binarized mask with its argmax rank; overlaps go
    to the higher-scoring proposal; background stays 0."""
    out = np.zeros(shape, dtype=np.uint8)
    h, w = shape
    for prop in sorted(proposals, key=lambda p: p.score):
        if prop.rank == 0 or prop.mask is None:
            continue
        x1 = int(np.clip(np.floor(prop.box[0]), 0, w))
        y1 = int(np.clip(np.floor(prop.box[1]), 0, h))
        x2 = int(np.clip(np.ceil(prop.box[2]), 0, w))
        y2 = int(np.clip(np.ceil(prop.box[3]), 0, h))
        if x2 <= x1 or y2 <= y1:
            continue
        mask_img = Image.fromarray(prop.mask.astype(np.float32), mode="F")
        resized = np.array(mask_img.resize((x2 - x1, y2 - y1), Image.BILINEAR))
        region = out[y1:y2, x1:x2]
        region[resized >= mask_threshold] = prop.rank
    return out


def _segmentation_scores(pred: np.ndarray, gt: np.ndarray) -> dict:
    gt_bin = (gt > 0.5).astype(np.float64)
    return {
        "MAE": metrics.mae(pred, gt_bin),
        "F_mean": metrics.mean_f_measure(pred, gt_bin),
        "E_mean": metrics.mean_e_measure(pred, gt_bin),
        "S_alpha": metrics.s_measure(pred, gt_bin),
    }


def _fixation_scores(pred, gt_density, points, pool) -> dict:
    out = {
        "SIM": metrics.sim(pred, gt_density),
        "CC": metrics.cc(pred, gt_density),
        "EMD": metrics.emd(pred, gt_density),
        "KLD": metrics.kld(pred, gt_density),
        "NSS": None, "AUC_J": None, "AUC_B": None, "sAUC": None,
    }
    if points is not None and len(points):
        out["NSS"] = metrics.nss(pred, points)
        out["AUC_J"] = metrics.auc_judd(pred, points)
        out["AUC_B"] = metrics.auc_borji(pred, points)
        if pool is not None and len(pool):
            out["sAUC"] = metrics.shuffled_auc(pred, points, pool)
    return out


def aggregate_means(per_image: dict) -> dict:
    """Arithmetic mean per metric over the images where it is present."""
    keys = sorted({k for v in per_image.values() for k in v})
    means = {}
    for key in keys:
        vals = [v[key] for v in per_image.values()
                if v.get(key) is not None]
        means[key] = float(np.mean(vals)) if vals else None
    return means


def evaluate(checkpoint: str, manifest: DatasetManifest,
             report_path: str | None = None) -> dict:
    """Score every sample with all applicable metrics and return the report.

    Metrics whose ground-truth layer is missing are reported as null
    (absent), never as zero.
    """
    model, meta = load_checkpoint(checkpoint)
    model.eval()
    size_cfg = model.config.input_size

    loaded = {}
    for sid in manifest.entries:
        sample = load_sample(manifest, sid, require_all=False)
        if sample.shape[0] % 32 or sample.shape[1] % 32:
            sample = load_sample(manifest, sid, size=size_cfg, require_all=False)
        loaded[sid] = sample

    seg_keys = ("MAE", "F_mean", "E_mean", "S_alpha")
    fix_keys = ("SIM", "CC", "EMD", "KLD", "NSS", "AUC_J", "AUC_B", "sAUC")
    rank_keys = ("r_MAE", "rank_MAE")

    per_image = {}
    for sid, sample in loaded.items():
        image = torch.from_numpy(sample.image.transpose(2, 0, 1)).float()
        with torch.no_grad():
            out = model(image[None])
            proposals = model.detect_instances(image[None])[0]
        f_map = out["fixation"][0, 0].numpy()
        s_map = out["segmentation"][0, 0].numpy()
        scores = dict.fromkeys(seg_keys + fix_keys + rank_keys)
        if sample.seg_gt is not None:
            scores.update(_segmentation_scores(s_map, sample.seg_gt.astype(float)))
        if sample.fix_gt is not None:
            pool = np.concatenate(
                [loaded[o].fix_points for o in manifest.entries
                 if o != sid and len(loaded[o].fix_points)]
            ) if len(manifest.entries) > 1 else np.zeros((0, 2), int)
            scores.update(_fixation_scores(f_map, sample.fix_gt,
                                           sample.fix_points, pool))
        if sample.rank_gt is not None:
            rank_pred = rank_map_from_instances(proposals, sample.shape)
            scores["r_MAE"] = metrics.r_mae(rank_pred, sample.rank_gt.rank_map)
            scores["rank_MAE"] = metrics.mae(
                (rank_pred > 0).astype(float),
                (sample.rank_gt.rank_map > 0).astype(float))
        per_image[sid] = scores

    report = {
        "schema": "camorank-eval/1",
        "checkpoint": os.path.basename(checkpoint),
        "checkpoint_meta": meta.get("extra", {}),
        "split": manifest.split,
        "per_image": per_image,
        "mean": aggregate_means(per_image),
    }
    if report_path:
        os.makedirs(os.path.dirname(report_path) or ".", exist_ok=True)
        with open(report_path, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True)
    return report
