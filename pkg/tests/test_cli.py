import json
import os

import numpy as np
import pytest
from PIL import Image

from camorank.cli import main


@pytest.fixture()
def corpus_dir(tmp_path):
    path = str(tmp_path / "corpus")
    assert main(["synth", "--seed", "13", "--n", "2", "--size", "64",
                 "--out", path]) == 0
    return path


def write_config(tmp_path):
    config = tmp_path / "config.yaml"
    config.write_text("\n".join([
        "input_size: 64",
        "backbone_widths: [8, 12, 16, 20]",
        "decoder_channels: 8",
        "fpn_channels: 8",
        "head_dim: 16",
        "roi_pool_size: 3",
        "mask_pool_size: 6",
        "aspp_dilations: [1, 2]",
        "pre_nms_top_n: 64",
        "post_nms_top_n: 8",
        "rois_per_image: 8",
        "batch_size: 2",
        "iterations: 2",
        "learning_rate: 0.001",
        "augment_flip: false",
    ]))
    return str(config)


def test_synth_writes_manifest(corpus_dir):
    assert os.path.exists(os.path.join(corpus_dir, "manifest.json"))
    assert os.path.exists(os.path.join(corpus_dir, "images", "scene_0000.png"))


def test_train_eval_infer_score_round_trip(tmp_path, corpus_dir):
    run_dir = str(tmp_path / "run")
    assert main(["train", "--data", corpus_dir, "--out", run_dir,
                 "--config", write_config(tmp_path)]) == 0
    ckpt = os.path.join(run_dir, "ckpt_final.zip")
    assert os.path.exists(ckpt)

    report = str(tmp_path / "report.json")
    assert main(["eval", "--ckpt", ckpt, "--data", corpus_dir,
                 "--report", report]) == 0
    with open(report) as f:
        data = json.load(f)
    assert "mean" in data and "per_image" in data

    out_dir = str(tmp_path / "preds")
    image = os.path.join(corpus_dir, "images", "scene_0000.png")
    assert main(["infer", "--ckpt", ckpt, "--image", image,
                 "--out", out_dir]) == 0
    for suffix in ("fixation", "segmentation", "rank"):
        assert os.path.exists(os.path.join(out_dir, f"scene_0000_{suffix}.png"))
    assert os.path.exists(os.path.join(out_dir, "scene_0000_instances.json"))

    # score the (trivially perfect) gt against itself
    gt_dir = os.path.join(corpus_dir, "gt")
    score_report = str(tmp_path / "score.json")
    assert main(["score", "--pred", gt_dir, "--gt", gt_dir,
                 "--report", score_report]) == 0
    with open(score_report) as f:
        scores = json.load(f)
    assert scores["mean"]["MAE"] == 0.0
    assert scores["mean"]["S_alpha"] == pytest.approx(1.0, abs=1e-9)


def test_score_ranks_mode(tmp_path, corpus_dir):
    rank_dir = os.path.join(corpus_dir, "rank")
    report = str(tmp_path / "ranks.json")
    assert main(["score", "--pred", rank_dir, "--gt", rank_dir, "--ranks",
                 "--report", report]) == 0
    with open(report) as f:
        scores = json.load(f)
    assert scores["mean"]["r_MAE"] == 0.0


def test_score_fixations_mode_with_points(tmp_path, corpus_dir):
    fix_dir = os.path.join(corpus_dir, "fix")
    points_dir = tmp_path / "points"
    points_dir.mkdir()
    for sid in ("scene_0000", "scene_0001"):
        with open(os.path.join(corpus_dir, "instances", f"{sid}.json")) as f:
            record = json.load(f)
        (points_dir / f"{sid}.json").write_text(json.dumps(record["fix_points"]))
    report = str(tmp_path / "fix.json")
    assert main(["score", "--pred", fix_dir, "--gt", fix_dir, "--fixations",
                 "--points", str(points_dir), "--report", report]) == 0
    with open(report) as f:
        scores = json.load(f)
    assert scores["mean"]["SIM"] == pytest.approx(1.0)
    assert scores["mean"]["KLD"] == pytest.approx(0.0, abs=1e-9)
    assert scores["mean"]["NSS"] is not None
    assert scores["mean"]["sAUC"] is not None


def test_annotate_verb(tmp_path):
    sessions = tmp_path / "sessions"
    masks = tmp_path / "masks"
    out = tmp_path / "ranks"
    sessions.mkdir()
    masks.mkdir()
    mask = np.zeros((16, 16), dtype=np.uint8)
    mask[4:10, 4:10] = 255
    Image.fromarray(mask, mode="L").save(masks / "img0_i0.png")
    for k, delay in enumerate([1.0, 2.0, 9.0]):
        (sessions / f"s{k}.csv").write_text(
            "observer_id,image_id,t0\n"
            f"o{k},img0,0.0\n"
            f"{delay},5,5\n"
            "10.0,1,1\n"
        )
    assert main(["annotate", "--sessions", str(sessions), "--masks",
                 str(masks), "--out", str(out)]) == 0
    rank_png = np.array(Image.open(out / "img0.png"))
    sidecar = json.loads((out / "img0.json").read_text())
    # median delay 2.0 over budget 10 -> 0.2 -> rank 3
    assert sidecar["i0"]["delay"] == pytest.approx(0.2)
    assert sidecar["i0"]["rank"] == 3
    assert set(np.unique(rank_png)) == {0, 3}


def test_exit_code_validation_error(tmp_path):
    # bad data directory -> validation error -> exit 1
    assert main(["train", "--data", str(tmp_path / "nonexistent"),
                 "--out", str(tmp_path / "out")]) == 1


def test_exit_code_usage_error():
    assert main(["synth", "--seed", "1"]) == 1  # missing required args
    assert main(["not-a-verb"]) == 1


def test_exit_code_runtime_error(tmp_path):
    # corrupt checkpoint -> runtime error -> exit 2
    bad = tmp_path / "ckpt.zip"
    bad.write_bytes(b"definitely not a zip")
    assert main(["infer", "--ckpt", str(bad),
                 "--image", str(bad), "--out", str(tmp_path)]) == 2


def test_out_root_env_resolution(tmp_path, monkeypatch):
    monkeypatch.setenv("CAMORANK_OUT_ROOT", str(tmp_path))
    assert main(["synth", "--seed", "3", "--n", "1", "--size", "64",
                 "--out", "nested/corpus"]) == 0
    assert os.path.exists(tmp_path / "nested" / "corpus" / "manifest.json")
