"""Convert multi-observer fixation sessions into camouflage-rank annotations.

The pipeline: per observer, collect the on-instance fixation delays and take
their median; per instance, take the median across observers (dropping
observers that never fixated the instance, or declaring the instance missed
when more than half of them did); normalize to [0, 1]; quantize the
normalized delay into ranks 3 (easiest, found fast) / 2 / 1 (hardest).
Rank 0 is reserved for background pixels.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from glob import glob

import numpy as np
from PIL import Image

__all__ = [
    "FixationSession",
    "InstanceMask",
    "DetectionDelayTable",
    "RankAnnotation",
    "median",
    "observer_delay",
    "instance_delay",
    "quantize_ranks",
    "annotate_image",
    "read_session_csv",
    "write_session_csv",
    "load_instance_masks",
    "write_rank_annotation",
    "DEFAULT_THRESHOLDS",
]

# Tertile cut points on the normalized delay; overridable everywhere.
DEFAULT_THRESHOLDS = (1.0 / 3.0, 2.0 / 3.0)

MISSING = None  # an observer that never fixated the instance


@dataclass
class FixationSession:
    """One observer viewing one image: session start plus ordered gaze points.

    ``points`` rows are (t, x, y): timestamp in seconds, pixel column, pixel
    row. Timestamps must be non-decreasing and never precede ``t0``.
    """

    observer_id: str
    image_id: str
    t0: float
    points: list[tuple[float, float, float]] = field(default_factory=list)

    def __post_init__(self):
        last = self.t0
        for t, _, _ in self.points:
            if t < self.t0:
                raise ValueError(
                    f"session {self.observer_id}/{self.image_id}: "
                    f"fixation at t={t} precedes t0={self.t0}"
                )
            if t < last:
                raise ValueError(
                    f"session {self.observer_id}/{self.image_id}: "
                    "timestamps not sorted"
                )
            last = t

    @property
    def duration(self) -> float:
        """Elapsed time from t0 to the last fixation (0 if no points)."""
        if not self.points:
            return 0.0
        return self.points[-1][0] - self.t0


@dataclass
class InstanceMask:
    """Binary mask of one camouflaged instance."""

    instance_id: str
    mask: np.ndarray  # bool, (h, w)
    image_id: str

    def __post_init__(self):
        self.mask = np.asarray(self.mask).astype(bool)
        if self.mask.ndim != 2:
            raise ValueError("instance mask must be 2-D")
        if not self.mask.any():
            raise ValueError(f"instance {self.instance_id}: empty mask")


@dataclass
class DetectionDelayTable:
    """Per-instance observer delays and the normalized instance delay."""

    entries: dict[str, tuple[list[float | None], float]]

    def delays(self) -> dict[str, float]:
        return {k: v[1] for k, v in self.entries.items()}


@dataclass
class RankAnnotation:
    """Per-pixel rank map (0 background, 1 hardest .. 3 easiest)."""

    rank_map: np.ndarray  # uint8, (h, w), values in {0,1,2,3}
    instance_ranks: dict[str, int]


def median(values) -> float:
    """Median of a sample: middle element (odd n) or mean of the two middle
    elements (even n)."""
    vals = sorted(float(v) for v in values)
    n = len(vals)
    if n == 0:
        raise ValueError("empty sample")
    if n % 2 == 1:
        return vals[n // 2]
    return 0.5 * (vals[n // 2 - 1] + vals[n // 2])


def observer_delay(session: FixationSession, inst: InstanceMask) -> float | None:
    """Median elapsed time of one observer's fixations inside the instance.

    Returns None ("missing") when no fixation point lands on the mask.
    """
    if session.image_id != inst.image_id:
        raise ValueError(
            f"session image {session.image_id!r} != mask image {inst.image_id!r}"
        )
    h, w = inst.mask.shape
    on_mask = []
    for t, x, y in session.points:
        col, row = int(x), int(y)
        if not (0 <= col < w and 0 <= row < h):
            raise ValueError(
                f"fixation ({x}, {y}) outside image bounds {w}x{h}"
            )
        if inst.mask[row, col]:
            on_mask.append(t - session.t0)
    if not on_mask:
        return MISSING
    return median(on_mask)


def instance_delay(
    sessions: list[FixationSession],
    inst: InstanceMask,
    normalizer: float,
) -> float:
    """Normalized detection delay of one instance across observers, in [0, 1].

    Strictly more than half of the observers missing the instance marks it as
    a hard sample with delay 1. Otherwise missing observers are dropped and
    the median of the remaining delays is divided by ``normalizer`` and
    clamped to [0, 1].
    """
    if not sessions:
        raise ValueError("need at least one session")
    if normalizer <= 0:
        raise ValueError(f"normalizer must be positive, got {normalizer}")
    per_observer = [observer_delay(s, inst) for s in sessions]
    n_missing = sum(1 for d in per_observer if d is MISSING)
    if 2 * n_missing > len(per_observer):
        return 1.0
    remaining = [d for d in per_observer if d is not MISSING]
    return float(min(1.0, max(0.0, median(remaining) / normalizer)))


def _per_observer_delays(
    sessions: list[FixationSession], inst: InstanceMask
) -> list[float | None]:
    return [observer_delay(s, inst) for s in sessions]


def quantize_ranks(
    delays: DetectionDelayTable,
    instances: list[InstanceMask],
    thresholds: tuple[float, float] = DEFAULT_THRESHOLDS,
) -> RankAnnotation:
    """Quantize normalized delays into a per-pixel rank map.

    delay > tau_high -> rank 1 (hardest); tau_low < delay <= tau_high ->
    rank 2; delay <= tau_low -> rank 3 (easiest). Background pixels stay 0.
    """
    tau_low, tau_high = thresholds
    if not (0.0 < tau_low < tau_high < 1.0):
        raise ValueError(f"thresholds must satisfy 0 < low < high < 1, got {thresholds}")
    by_id = {m.instance_id: m for m in instances}
    shape = next(iter(by_id.values())).mask.shape if by_id else (0, 0)
    rank_map = np.zeros(shape, dtype=np.uint8)
    painted = np.zeros(shape, dtype=bool)
    instance_ranks: dict[str, int] = {}
    for inst_id, (_, delay) in delays.entries.items():
        inst = by_id[inst_id]
        if inst.mask.shape != shape:
            raise ValueError(f"instance {inst_id}: mask shape mismatch")
        if delay > tau_high:
            rank = 1
        elif delay > tau_low:
            rank = 2
        else:
            rank = 3
        if (painted & inst.mask).any():
            raise ValueError(f"instance {inst_id}: overlapping instance masks")
        rank_map[inst.mask] = rank
        painted |= inst.mask
        instance_ranks[inst_id] = rank
    return RankAnnotation(rank_map=rank_map, instance_ranks=instance_ranks)


def annotate_image(
    sessions: list[FixationSession],
    instances: list[InstanceMask],
    normalizer: float | None = None,
    thresholds: tuple[float, float] = DEFAULT_THRESHOLDS,
) -> tuple[DetectionDelayTable, RankAnnotation]:
    """Full per-image annotation: delays table plus quantized rank map.

    When ``normalizer`` is None the per-image observation budget is used:
    the maximum session duration across this image's observers.
    """
    if not sessions:
        raise ValueError("need at least one session")
    if normalizer is None:
        normalizer = max(s.duration for s in sessions)
        if normalizer <= 0:
            raise ValueError("cannot infer a positive normalizer from empty sessions")
    entries = {}
    for inst in instances:
        per_obs = _per_observer_delays(sessions, inst)
        entries[inst.instance_id] = (per_obs, instance_delay(sessions, inst, normalizer))
    table = DetectionDelayTable(entries=entries)
    return table, quantize_ranks(table, instances, thresholds)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def read_session_csv(path: str) -> FixationSession:
    """Read one session CSV.

    Line 1 is the literal header ``observer_id,image_id,t0``, line 2 holds
    the values, remaining lines are ``t,x,y`` points (a literal ``t,x,y``
    header before the points is tolerated).
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if len(lines) < 2:
        raise ValueError(f"{path}: truncated session file")
    header = [c.strip() for c in lines[0].split(",")]
    if header != ["observer_id", "image_id", "t0"]:
        raise ValueError(f"{path}: unexpected header {lines[0]!r}")
    obs_id, image_id, t0_s = [c.strip() for c in lines[1].split(",")]
    body = lines[2:]
    if body and body[0].replace(" ", "") == "t,x,y":
        body = body[1:]
    points = []
    for ln in body:
        t_s, x_s, y_s = [c.strip() for c in ln.split(",")]
        points.append((float(t_s), float(x_s), float(y_s)))
    return FixationSession(observer_id=obs_id, image_id=image_id,
                           t0=float(t0_s), points=points)


def write_session_csv(session: FixationSession, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("observer_id,image_id,t0\n")
        f.write(f"{session.observer_id},{session.image_id},{session.t0!r}\n")
        for t, x, y in session.points:
            f.write(f"{t!r},{int(x)},{int(y)}\n")


def load_instance_masks(masks_dir: str, image_id: str | None = None) -> list[InstanceMask]:
    """Load ``<image_id>_<instance_id>.png`` masks (nonzero = foreground)."""
    masks = []
    for path in sorted(glob(os.path.join(masks_dir, "*.png"))):
        stem = os.path.splitext(os.path.basename(path))[0]
        if "_" not in stem:
            raise ValueError(f"{path}: expected <image_id>_<instance_id>.png")
        img_id, inst_id = stem.rsplit("_", 1)
        if image_id is not None and img_id != image_id:
            continue
        arr = np.array(Image.open(path).convert("L"))
        masks.append(InstanceMask(instance_id=inst_id, mask=arr > 0, image_id=img_id))
    return masks


def write_rank_annotation(
    annotation: RankAnnotation,
    delays: DetectionDelayTable,
    out_dir: str,
    image_id: str,
) -> None:
    """Write the literal 0-3 rank PNG plus the {instance: {delay, rank}} sidecar."""
    os.makedirs(out_dir, exist_ok=True)
    Image.fromarray(annotation.rank_map.astype(np.uint8), mode="L").save(
        os.path.join(out_dir, f"{image_id}.png")
    )
    sidecar = {
        inst_id: {"delay": delays.entries[inst_id][1], "rank": rank}
        for inst_id, rank in annotation.instance_ranks.items()
    }
    with open(os.path.join(out_dir, f"{image_id}.json"), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
