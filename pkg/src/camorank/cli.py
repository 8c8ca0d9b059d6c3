"""Command line interface.

Verbs: synth, annotate, train, eval, infer, score. Relative output paths
resolve under $CAMORANK_OUT_ROOT when it is set. Exit codes: 0 success,
1 validation error (bad arguments or bad data), 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import defaultdict
from glob import glob

import numpy as np
from PIL import Image

OUT_ROOT_ENV = "CAMORANK_OUT_ROOT"


def _resolve_out(path: str | None) -> str | None:
    if path is None:
        return None
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def _parse_thresholds(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError("--thresholds expects two comma-separated numbers")
    return parts[0], parts[1]


def _parse_difficulty(text: str):
    ranks = tuple(int(p) for p in text.split(","))
    if not ranks or any(r not in (1, 2, 3) for r in ranks):
        raise ValueError("--difficulty expects ranks out of 1,2,3")
    return ranks


# ----------------------------------------------------------------------
# verbs
# ----------------------------------------------------------------------

def _cmd_synth(args) -> int:
    from camorank.data import synthesize

    manifest = synthesize(seed=args.seed, n=args.n, size=args.size,
                          out_dir=_resolve_out(args.out),
                          difficulty=_parse_difficulty(args.difficulty),
                          split=args.split)
    print(f"wrote {len(manifest.entries)} samples under {manifest.root}")
    return 0


def _cmd_annotate(args) -> int:
    from camorank.annotation import (
        annotate_image,
        load_instance_masks,
        read_session_csv,
        write_rank_annotation,
    )

    sessions = defaultdict(list)
    for path in sorted(glob(os.path.join(args.sessions, "*.csv"))):
        s = read_session_csv(path)
        sessions[s.image_id].append(s)
    if not sessions:
        raise ValueError(f"no session CSVs under {args.sessions}")
    masks = defaultdict(list)
    for m in load_instance_masks(args.masks):
        masks[m.image_id].append(m)
    out_dir = _resolve_out(args.out)
    thresholds = _parse_thresholds(args.thresholds)
    n = 0
    for image_id, image_sessions in sorted(sessions.items()):
        image_masks = masks.get(image_id)
        if not image_masks:
            print(f"warning: no masks for image {image_id}, skipped",
                  file=sys.stderr)
            continue
        delays, annotation = annotate_image(image_sessions, image_masks,
                                            normalizer=args.normalizer,
                                            thresholds=thresholds)
        write_rank_annotation(annotation, delays, out_dir, image_id)
        n += 1
    print(f"annotated {n} images under {out_dir}")
    return 0


def _cmd_train(args) -> int:
    from camorank.data import DatasetManifest
    from camorank.pipeline import TrainConfig, train

    if args.config:
        config = TrainConfig.from_file(args.config)
    else:
        config = TrainConfig()
    if args.iterations is not None:
        config.iterations = args.iterations
    if args.seed is not None:
        config.seed = args.seed
    manifest = DatasetManifest.load(args.data)
    out_dir = _resolve_out(args.out)
    ckpt, log = train(config, manifest, out_dir)
    print(f"checkpoint: {ckpt}\nlog: {log}")
    return 0


def _cmd_eval(args) -> int:
    from camorank.data import DatasetManifest
    from camorank.pipeline import evaluate

    manifest = DatasetManifest.load(args.data)
    report = evaluate(args.ckpt, manifest, report_path=_resolve_out(args.report))
    print(json.dumps(report["mean"], indent=2, sort_keys=True))
    return 0


def _cmd_infer(args) -> int:
    import torch

    from camorank.model.net import load_checkpoint
    from camorank.pipeline import rank_map_from_instances

    model, _ = load_checkpoint(args.ckpt)
    model.eval()
    image = Image.open(args.image).convert("RGB")
    w0, h0 = image.size
    if h0 % 32 or w0 % 32:
        image = image.resize((model.config.input_size,) * 2, Image.BILINEAR)
    arr = np.asarray(image, dtype=np.float32) / 255.0
    tensor = torch.from_numpy(arr.transpose(2, 0, 1))[None]
    with torch.no_grad():
        out = model(tensor)
        proposals = model.detect_instances(tensor)[0]
    out_dir = _resolve_out(args.out)
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.image))[0]

    def _save_map(grid, name):
        img = Image.fromarray(np.round(grid * 255).astype(np.uint8), mode="L")
        if img.size != (w0, h0):
            img = img.resize((w0, h0), Image.BILINEAR)
        img.save(os.path.join(out_dir, f"{stem}_{name}.png"))

    _save_map(out["fixation"][0, 0].numpy(), "fixation")
    _save_map(out["segmentation"][0, 0].numpy(), "segmentation")
    h, w = tensor.shape[-2:]
    rank_map = rank_map_from_instances(proposals, (h, w))
    rank_img = Image.fromarray(rank_map, mode="L")
    if rank_img.size != (w0, h0):
        rank_img = rank_img.resize((w0, h0), Image.NEAREST)
    rank_img.save(os.path.join(out_dir, f"{stem}_rank.png"))
    sx, sy = w0 / w, h0 / h
    record = [
        {
            "box": [p.box[0] * sx, p.box[1] * sy, p.box[2] * sx, p.box[3] * sy],
            "rank": p.rank,
            "score": p.score,
            "objectness": p.objectness,
        }
        for p in proposals
    ]
    with open(os.path.join(out_dir, f"{stem}_instances.json"), "w",
              encoding="utf-8") as f:
        json.dump(record, f, indent=2)
    print(f"wrote predictions for {stem} under {out_dir}")
    return 0


def _read_gray(path: str) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L"), dtype=np.float64)


def _cmd_score(args) -> int:
    from camorank import metrics
    from camorank.pipeline import aggregate_means

    pred_paths = {os.path.splitext(os.path.basename(p))[0]: p
                  for p in glob(os.path.join(args.pred, "*.png"))}
    gt_paths = {os.path.splitext(os.path.basename(p))[0]: p
                for p in glob(os.path.join(args.gt, "*.png"))}
    shared = sorted(set(pred_paths) & set(gt_paths))
    if not shared:
        raise ValueError("no matching prediction/ground-truth file stems")

    points = {}
    if args.points:
        for sid in shared:
            path = os.path.join(args.points, f"{sid}.json")
            if os.path.exists(path):
                with open(path, "r", encoding="utf-8") as f:
                    points[sid] = np.asarray(json.load(f), dtype=int).reshape(-1, 2)

    per_image = {}
    for sid in shared:
        pred_raw = _read_gray(pred_paths[sid])
        gt_raw = _read_gray(gt_paths[sid])
        scores = {}
        if args.ranks:
            scores["r_MAE"] = metrics.r_mae(pred_raw.astype(int), gt_raw.astype(int))
            scores["rank_MAE"] = metrics.mae((pred_raw > 0).astype(float),
                                             (gt_raw > 0).astype(float))
        elif args.fixations:
            pred = pred_raw / 255.0
            gt = gt_raw / 255.0
            scores["SIM"] = metrics.sim(pred, gt)
            scores["CC"] = metrics.cc(pred, gt)
            scores["EMD"] = metrics.emd(pred, gt)
            scores["KLD"] = metrics.kld(pred, gt)
            pts = points.get(sid)
            if pts is not None and len(pts):
                scores["NSS"] = metrics.nss(pred, pts)
                scores["AUC_J"] = metrics.auc_judd(pred, pts)
                scores["AUC_B"] = metrics.auc_borji(pred, pts)
                pool = [p for o, p in points.items() if o != sid and len(p)]
                if pool:
                    scores["sAUC"] = metrics.shuffled_auc(pred, pts,
                                                          np.concatenate(pool))
        else:
            pred = pred_raw / 255.0
            gt = (gt_raw / 255.0 > 0.5).astype(np.float64)
            scores["MAE"] = metrics.mae(pred, gt)
            scores["F_mean"] = metrics.mean_f_measure(pred, gt)
            scores["E_mean"] = metrics.mean_e_measure(pred, gt)
            scores["S_alpha"] = metrics.s_measure(pred, gt)
        per_image[sid] = scores

    report = {"per_image": per_image, "mean": aggregate_means(per_image)}
    report_path = _resolve_out(args.report)
    os.makedirs(os.path.dirname(report_path) or ".", exist_ok=True)
    with open(report_path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    print(json.dumps(report["mean"], indent=2, sort_keys=True))
    return 0


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camorank",
        description="Camouflage localization, segmentation and ranking toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--difficulty", default="1,2,3")
    p.add_argument("--split", default="train")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("annotate", help="fixation sessions -> rank annotations")
    p.add_argument("--sessions", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--thresholds", default="0.3333333333333333,0.6666666666666666")
    p.add_argument("--normalizer", type=float, default=None)
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("train", help="train on a corpus directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="flat YAML key-value file")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("infer", help="run one image through a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("score", help="score prediction PNGs against gt PNGs")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--ranks", action="store_true")
    p.add_argument("--fixations", action="store_true")
    p.add_argument("--points", default=None,
                   help="directory of <id>.json fixation point lists")
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_score)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; those are validation errors here
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
