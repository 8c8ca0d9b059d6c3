"""Dataset ingestion and the synthetic desk-scale corpus generator.

Directory layout (one file set per sample id)::

    root/
      manifest.json          split, entries, seed
      images/<id>.png        RGB scene
      gt/<id>.png            binary segmentation (0/255)
      fix/<id>.png           fixation density (0-255)
      rank/<id>.png          literal rank values 0-3
      instances/<id>.json    boxes, ranks, RLE masks, fixation points

The generator embeds 1-3 low-contrast ellipses in a textured background;
the contrast level maps deterministically to rank (lower contrast = harder
= rank 1) and each instance carries a small high-contrast spot whose
location defines the fixation ground truth (a Gaussian blob, sigma = 1/32
of the image width). Everything is reproducible from the seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from camorank.annotation import RankAnnotation

__all__ = [
    "SampleInstance",
    "Sample",
    "DatasetManifest",
    "ValidationError",
    "load_sample",
    "write_sample",
    "synthesize",
    "generate_scene",
    "flip_sample",
    "epoch_order",
    "rle_encode",
    "rle_decode",
]

# contrast shift applied inside an instance, by rank (1 hardest .. 3 easiest)
RANK_CONTRAST = {1: 0.06, 2: 0.14, 3: 0.26}
SPOT_CONTRAST = 0.30

LAYERS = ("images", "gt", "fix", "rank", "instances")


class ValidationError(ValueError):
    """A sample or manifest violates the dataset contract."""


@dataclass
class SampleInstance:
    instance_id: str
    box: tuple  # (x1, y1, x2, y2) in pixels
    rank: int
    mask: np.ndarray  # bool (h, w)


@dataclass
class Sample:
    sample_id: str
    image: np.ndarray        # (h, w, 3) float in [0, 1]
    seg_gt: np.ndarray       # bool (h, w); None when the layer is absent
    fix_gt: np.ndarray       # float (h, w) in [0, 1]; None when absent
    rank_gt: RankAnnotation  # None when absent
    instances: list
    fix_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), int))

    @property
    def shape(self):
        return self.image.shape[:2]


@dataclass
class DatasetManifest:
    root: str
    split: str
    entries: list
    seed: int

    def path(self) -> str:
        return os.path.join(self.root, "manifest.json")

    def save(self):
        with open(self.path(), "w", encoding="utf-8") as f:
            json.dump({"split": self.split, "entries": self.entries,
                       "seed": self.seed}, f, indent=2)

    @classmethod
    def load(cls, root: str) -> "DatasetManifest":
        path = os.path.join(root, "manifest.json")
        if not os.path.exists(path):
            raise ValidationError(f"no manifest.json under {root}")
        with open(path, "r", encoding="utf-8") as f:
            d = json.load(f)
        if len(set(d["entries"])) != len(d["entries"]):
            raise ValidationError("manifest holds duplicate sample ids")
        return cls(root=root, split=d["split"], entries=list(d["entries"]),
                   seed=int(d["seed"]))


# ----------------------------------------------------------------------
# masks as run-length encodings (row-major, starting with background)
# ----------------------------------------------------------------------

def rle_encode(mask: np.ndarray) -> list:
    flat = np.asarray(mask, dtype=bool).ravel()
    runs = []
    value = False
    pos = 0
    change = np.flatnonzero(np.diff(flat))
    for edge in list(change + 1) + [flat.size]:
        runs.append(int(edge - pos))
        pos = edge
        value = not value
    if flat.size and flat[0]:
        runs.insert(0, 0)
    return runs


def rle_decode(runs: list, shape) -> np.ndarray:
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    if pos != flat.size:
        raise ValidationError("RLE does not cover the mask")
    return flat.reshape(shape)


# ----------------------------------------------------------------------
# reading and writing samples
# ----------------------------------------------------------------------

def _layer_path(root: str, layer: str, sample_id: str) -> str:
    ext = "json" if layer == "instances" else "png"
    path = os.path.join(root, layer, f"{sample_id}.{ext}")
    if layer == "images" and not os.path.exists(path):
        # scene images may be stored as JPEG; label layers are always PNG
        jpg = os.path.join(root, layer, f"{sample_id}.jpg")
        if os.path.exists(jpg):
            return jpg
    return path


def _read_png(path: str, layer: str, sample_id: str) -> np.ndarray:
    if not os.path.exists(path):
        raise ValidationError(f"sample {sample_id}: missing {layer} layer ({path})")
    return np.array(Image.open(path))


def write_sample(root: str, sample: Sample):
    for layer in LAYERS:
        os.makedirs(os.path.join(root, layer), exist_ok=True)
    sid = sample.sample_id
    img = np.clip(np.round(sample.image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(img, mode="RGB").save(_layer_path(root, "images", sid))
    Image.fromarray((sample.seg_gt.astype(np.uint8) * 255), mode="L").save(
        _layer_path(root, "gt", sid))
    fix = np.clip(np.round(sample.fix_gt * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(fix, mode="L").save(_layer_path(root, "fix", sid))
    Image.fromarray(sample.rank_gt.rank_map.astype(np.uint8), mode="L").save(
        _layer_path(root, "rank", sid))
    record = {
        "shape": list(sample.shape),
        "fix_points": [[int(x), int(y)] for x, y in sample.fix_points],
        "instances": [
            {
                "id": inst.instance_id,
                "box": [float(v) for v in inst.box],
                "rank": int(inst.rank),
                "mask_rle": rle_encode(inst.mask),
            }
            for inst in sample.instances
        ],
    }
    with open(_layer_path(root, "instances", sid), "w", encoding="utf-8") as f:
        json.dump(record, f)


def _validate(sample: Sample):
    h, w = sample.shape
    if sample.image.shape[:2] != (h, w):
        raise ValidationError(f"sample {sample.sample_id}: image/label shape mismatch")
    if sample.fix_gt is not None and sample.fix_gt.shape != (h, w):
        raise ValidationError(f"sample {sample.sample_id}: label shapes differ")
    if sample.rank_gt is not None:
        if sample.rank_gt.rank_map.shape != (h, w):
            raise ValidationError(f"sample {sample.sample_id}: label shapes differ")
        ranks = np.unique(sample.rank_gt.rank_map)
        if not np.all(np.isin(ranks, (0, 1, 2, 3))):
            raise ValidationError(
                f"sample {sample.sample_id}: rank values outside 0-3: {ranks}")
    covered = np.zeros((h, w), dtype=bool)
    for inst in sample.instances:
        if inst.mask.shape != (h, w):
            raise ValidationError(f"sample {sample.sample_id}: instance mask shape")
        if sample.seg_gt is not None and (inst.mask & ~sample.seg_gt).any():
            raise ValidationError(
                f"sample {sample.sample_id}: instance {inst.instance_id} "
                "mask overlaps segmentation background")
        if sample.rank_gt is not None:
            on_inst = sample.rank_gt.rank_map[inst.mask]
            if not np.all(on_inst == inst.rank):
                raise ValidationError(
                    f"sample {sample.sample_id}: instance {inst.instance_id} "
                    f"rank {inst.rank} inconsistent with the rank map")
        covered |= inst.mask
    if sample.rank_gt is not None and \
            (~covered & (sample.rank_gt.rank_map > 0)).any():
        raise ValidationError(
            f"sample {sample.sample_id}: rank map foreground outside instances")


def load_sample(manifest: DatasetManifest, sample_id: str,
                size: int | None = None, require_all: bool = True) -> Sample:
    """Read, validate and optionally resize one sample (labels use nearest
    resampling; the image is bilinear).

    With ``require_all=False`` missing label layers come back as None /
    empty instead of raising, so scoring can mark their metrics absent.
    """
    if sample_id not in manifest.entries:
        raise ValidationError(f"unknown sample id {sample_id!r}")
    root = manifest.root

    def read_layer(layer):
        path = _layer_path(root, layer, sample_id)
        if not require_all and not os.path.exists(path):
            return None
        return _read_png(path, layer, sample_id)

    img = _read_png(_layer_path(root, "images", sample_id), "images", sample_id)
    seg = read_layer("gt")
    fix = read_layer("fix")
    rank = read_layer("rank")
    inst_path = _layer_path(root, "instances", sample_id)
    if not os.path.exists(inst_path):
        if require_all:
            raise ValidationError(
                f"sample {sample_id}: missing instances layer ({inst_path})")
        record = {"shape": list(img.shape[:2]), "instances": [],
                  "fix_points": []}
    else:
        with open(inst_path, "r", encoding="utf-8") as f:
            record = json.load(f)
    shape = tuple(record["shape"])
    instances = [
        SampleInstance(
            instance_id=str(r["id"]),
            box=tuple(float(v) for v in r["box"]),
            rank=int(r["rank"]),
            mask=rle_decode(r["mask_rle"], shape),
        )
        for r in record["instances"]
    ]
    sample = Sample(
        sample_id=sample_id,
        image=img.astype(np.float64) / 255.0,
        seg_gt=None if seg is None else seg > 127,
        fix_gt=None if fix is None else fix.astype(np.float64) / 255.0,
        rank_gt=None if rank is None else RankAnnotation(
            rank_map=rank.astype(np.uint8),
            instance_ranks={i.instance_id: i.rank for i in instances},
        ),
        instances=instances,
        fix_points=np.asarray(record.get("fix_points", []), dtype=int).reshape(-1, 2),
    )
    _validate(sample)
    if size is not None and (sample.shape != (size, size)):
        sample = _resize_sample(sample, size)
        _validate(sample)
    return sample


def _resize_arr(arr: np.ndarray, size: int, resample) -> np.ndarray:
    return np.array(Image.fromarray(arr).resize((size, size), resample))


def _resize_sample(sample: Sample, size: int) -> Sample:
    h, w = sample.shape
    sx, sy = size / w, size / h
    img = np.clip(np.round(sample.image * 255), 0, 255).astype(np.uint8)
    image = _resize_arr(img, size, Image.BILINEAR).astype(np.float64) / 255.0
    seg = None
    if sample.seg_gt is not None:
        seg = _resize_arr(sample.seg_gt.astype(np.uint8), size, Image.NEAREST) > 0
    fix = None
    if sample.fix_gt is not None:
        fix8 = np.clip(np.round(sample.fix_gt * 255), 0, 255).astype(np.uint8)
        fix = _resize_arr(fix8, size, Image.BILINEAR).astype(np.float64) / 255.0
    rank_gt = None
    if sample.rank_gt is not None:
        rank = _resize_arr(sample.rank_gt.rank_map, size, Image.NEAREST)
        rank_gt = RankAnnotation(rank_map=rank.astype(np.uint8),
                                 instance_ranks=dict(sample.rank_gt.instance_ranks))
    instances = [
        SampleInstance(
            instance_id=i.instance_id,
            box=(i.box[0] * sx, i.box[1] * sy, i.box[2] * sx, i.box[3] * sy),
            rank=i.rank,
            mask=_resize_arr(i.mask.astype(np.uint8), size, Image.NEAREST) > 0,
        )
        for i in sample.instances
    ]
    pts = sample.fix_points.astype(np.float64)
    pts = np.stack([np.clip(pts[:, 0] * sx, 0, size - 1),
                    np.clip(pts[:, 1] * sy, 0, size - 1)], axis=1) if len(pts) \
        else np.zeros((0, 2))
    return Sample(
        sample_id=sample.sample_id,
        image=image,
        seg_gt=seg,
        fix_gt=fix,
        rank_gt=rank_gt,
        instances=instances,
        fix_points=pts.astype(int),
    )


def flip_sample(sample: Sample) -> Sample:
    """Horizontal mirror of every layer, box and fixation point."""
    h, w = sample.shape
    instances = [
        SampleInstance(
            instance_id=i.instance_id,
            box=(w - i.box[2], i.box[1], w - i.box[0], i.box[3]),
            rank=i.rank,
            mask=i.mask[:, ::-1].copy(),
        )
        for i in sample.instances
    ]
    pts = sample.fix_points.copy()
    if len(pts):
        pts[:, 0] = w - 1 - pts[:, 0]
    return Sample(
        sample_id=sample.sample_id,
        image=sample.image[:, ::-1].copy(),
        seg_gt=sample.seg_gt[:, ::-1].copy(),
        fix_gt=sample.fix_gt[:, ::-1].copy(),
        rank_gt=RankAnnotation(rank_map=sample.rank_gt.rank_map[:, ::-1].copy(),
                               instance_ranks=dict(sample.rank_gt.instance_ranks)),
        instances=instances,
        fix_points=pts,
    )


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Deterministic visit order: a pure function of (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


# ----------------------------------------------------------------------
# synthetic scenes
# ----------------------------------------------------------------------

def _smooth_noise(rng, size: int, sigma: float) -> np.ndarray:
    noise = gaussian_filter(rng.standard_normal((size, size, 3)),
                            sigma=(sigma, sigma, 0))
    return noise / (noise.std() + 1e-9)


def _ellipse_mask(size: int, cx, cy, a, b, theta) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    dx, dy = xs - cx, ys - cy
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def generate_scene(rng: np.random.Generator, size: int, sample_id: str,
                   difficulty=(1, 2, 3), max_instances: int = 3) -> Sample:
    """One textured scene with 1..max_instances embedded low-contrast shapes."""
    image = 0.5 + 0.08 * _smooth_noise(rng, size, sigma=size / 10.0)
    image += 0.02 * rng.standard_normal((size, size, 3))
    seg = np.zeros((size, size), dtype=bool)
    rank_map = np.zeros((size, size), dtype=np.uint8)
    sigma_fix = size / 32.0
    fix = np.zeros((size, size), dtype=np.float64)
    instances = []
    fix_points = []
    n_inst = int(rng.integers(1, max_instances + 1))
    for k in range(n_inst):
        mask = None
        for _ in range(40):
            a = rng.uniform(0.10, 0.17) * size
            b = a * rng.uniform(0.55, 0.95)
            theta = rng.uniform(0, np.pi)
            margin = a + 2
            cx = rng.uniform(margin, size - margin)
            cy = rng.uniform(margin, size - margin)
            cand = _ellipse_mask(size, cx, cy, a, b, theta)
            if cand.sum() >= 24 and not (cand & seg).any():
                mask = cand
                break
        if mask is None:
            continue
        rank = int(rng.choice(np.asarray(difficulty)))
        shift = rng.uniform(-1.0, 1.0, size=3)
        shift /= np.abs(shift).max()
        image[mask] += RANK_CONTRAST[rank] * shift
        # discriminative spot toward one end of the major axis
        ux, uy = np.cos(theta), np.sin(theta)
        px = float(np.clip(cx + 0.45 * a * ux, 1, size - 2))
        py = float(np.clip(cy + 0.45 * a * uy, 1, size - 2))
        spot = _ellipse_mask(size, px, py, max(2.0, size / 24.0),
                             max(2.0, size / 24.0), 0.0) & mask
        spot_shift = rng.uniform(-1.0, 1.0, size=3)
        spot_shift /= np.abs(spot_shift).max()
        image[spot] += SPOT_CONTRAST * spot_shift
        ys, xs = np.mgrid[0:size, 0:size]
        fix += np.exp(-((xs - px) ** 2 + (ys - py) ** 2) / (2 * sigma_fix ** 2))
        seg |= mask
        rank_map[mask] = rank
        rows, cols = np.nonzero(mask)
        box = (float(cols.min()), float(rows.min()),
               float(cols.max() + 1), float(rows.max() + 1))
        instances.append(SampleInstance(instance_id=f"i{k}", box=box,
                                        rank=rank, mask=mask))
        fix_points.append((int(round(px)), int(round(py))))
    image = np.clip(image, 0.0, 1.0)
    if fix.max() > 0:
        fix = fix / fix.max()
    # stored as uint8; quantize now so write/load round-trips exactly
    fix = np.round(fix * 255.0) / 255.0
    return Sample(
        sample_id=sample_id,
        image=image,
        seg_gt=seg,
        fix_gt=fix,
        rank_gt=RankAnnotation(
            rank_map=rank_map,
            instance_ranks={i.instance_id: i.rank for i in instances}),
        instances=instances,
        fix_points=np.asarray(fix_points, dtype=int).reshape(-1, 2),
    )


def synthesize(seed: int, n: int, size: int, out_dir: str,
               difficulty=(1, 2, 3), split: str = "train",
               max_instances: int = 3) -> DatasetManifest:
    """Generate and write an n-scene corpus; byte-identical for equal seeds."""
    if n < 1:
        raise ValidationError("need n >= 1")
    if size % 32:
        raise ValidationError("size must be divisible by 32")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        sample = generate_scene(rng, size, f"scene_{i:04d}",
                                difficulty=difficulty,
                                max_instances=max_instances)
        write_sample(out_dir, sample)
        entries.append(sample.sample_id)
    manifest = DatasetManifest(root=out_dir, split=split, entries=entries,
                               seed=seed)
    manifest.save()
    return manifest
