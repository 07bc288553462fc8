"""End-to-end smoke: build a toy corpus with the lesionforge CLI, train the
harness on it, and verify the score CSV feeds back into `lesionforge eval`.

This is the heavyweight acceptance check for the training harness; it needs
the lesionforge package installed (its CLI is the only interface used).
"""

from __future__ import annotations

import csv
import json
import shutil
import subprocess
import time
from pathlib import Path

import numpy as np
import pytest
from PIL import Image as PilImage

from lesiontrainer import TrainSpec, score, train
from lesiontrainer.data import load_manifest, split_by_source

SIDE = 256
N_NORMALS = 200


def pair_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (pos.size * neg.size))


def read_scores(path: Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    ids = [r["id"] for r in rows]
    return ids, np.array([float(r["score"]) for r in rows]), np.array(
        [int(r["label"]) for r in rows]
    )


def toy_background(gen: np.random.Generator) -> np.ndarray:
    """Smooth dark-red field with a mild gradient and grain."""
    base = np.array([gen.uniform(70, 110), gen.uniform(22, 42), gen.uniform(18, 34)])
    yy, xx = np.mgrid[:SIDE, :SIDE] / SIDE
    grad = (gen.uniform(-25, 25) * yy + gen.uniform(-25, 25) * xx)[..., None]
    noise = gen.normal(0, 4, (SIDE, SIDE, 3))
    return np.clip(base[None, None, :] + grad + noise, 0, 255).astype(np.uint8)


@pytest.fixture(scope="module")
def toy_dataset(tmp_path_factory) -> Path:
    assert shutil.which("lesionforge"), "smoke test needs the lesionforge CLI installed"
    root = tmp_path_factory.mktemp("toycorpus")
    gen = np.random.default_rng(123)
    normals = root / "normals"
    normals.mkdir()
    for i in range(N_NORMALS):
        PilImage.fromarray(toy_background(gen)).save(normals / f"norm{i:03d}.png")

    # annotated anomalous sample: six bright high-contrast blobs
    sample = toy_background(gen)
    mask = np.zeros((SIDE, SIDE), np.uint8)
    for cy, cx, r in ((40, 50, 7), (90, 180, 5), (150, 60, 9), (200, 200, 6), (60, 120, 4), (180, 130, 8)):
        yy, xx = np.mgrid[:SIDE, :SIDE]
        disk = ((yy - cy) ** 2 + (xx - cx) ** 2) <= r * r
        color = np.array([gen.uniform(215, 245), gen.uniform(200, 235), gen.uniform(130, 180)])
        sample[disk] = np.clip(color + gen.normal(0, 5, 3), 0, 255).astype(np.uint8)
        mask |= disk.astype(np.uint8)
    PilImage.fromarray(sample).save(root / "sample.png")
    PilImage.fromarray(mask * 255).save(root / "mask_other.png")

    subprocess.run(
        [
            "lesionforge", "extract",
            "--image", str(root / "sample.png"),
            "--mask-other", str(root / "mask_other.png"),
            "--out", str(root / "bank"),
        ],
        check=True,
    )
    bank_manifest = json.loads((root / "bank" / "bank.json").read_text())
    assert bank_manifest["n_l"] >= 5

    (root / "run.json").write_text(
        json.dumps(
            {
                "seed": 2024,
                "augment": "paper-best",
                "mixup": "random",
                "strategy": {"rules": [{"probability": 1.0, "types": ["OTHER"]}]},
            }
        )
    )
    subprocess.run(
        [
            "lesionforge", "synth",
            "--bank", str(root / "bank"),
            "--normals", str(normals),
            "--config", str(root / "run.json"),
            "--out", str(root / "dataset"),
            "--threads", "2",
        ],
        check=True,
    )
    return root


@pytest.fixture(scope="module")
def trained_run(toy_dataset, tmp_path_factory):
    spec = TrainSpec(epochs=6, seed=0)
    out_dir = tmp_path_factory.mktemp("run")
    start = time.perf_counter()
    scores_path = train(toy_dataset / "dataset", spec, out_dir, quiet=True)
    elapsed = time.perf_counter() - start
    return spec, out_dir, scores_path, elapsed


def test_end_to_end_smoke(toy_dataset, trained_run, tmp_path):
    spec, out_dir, scores_path, elapsed = trained_run
    assert elapsed < 600.0, f"training took {elapsed:.0f} s"

    ids, scores_val, labels_val = read_scores(scores_path)
    assert len(ids) == len(set(ids))
    heldout_auc = pair_auc(scores_val, labels_val)
    assert heldout_auc >= 0.9, f"held-out AUC {heldout_auc:.4f}"

    # the spec used is serialized alongside the checkpoint
    assert TrainSpec.from_json((out_dir / "trainspec.json").read_text()) == spec

    # the CSV feeds `lesionforge eval` unchanged and the AUCs agree
    report_path = tmp_path / "report.json"
    proc = subprocess.run(
        ["lesionforge", "eval", "--scores", str(scores_path), "--out", str(report_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    report = json.loads(report_path.read_text())
    assert abs(report["auc"] - heldout_auc) < 1e-9
    print(
        f"SMOKE PASS: held-out AUC {heldout_auc:.4f} in {elapsed:.0f}s "
        f"(eval reports {report['auc']:.4f})"
    )


def test_resubstitution_close_to_heldout(toy_dataset, trained_run, tmp_path):
    # training-set AUC should show no generalization gap; on this saturated
    # toy task both sit at ~1.0, so allow sampling noise of 0.01
    spec, out_dir, scores_path, _ = trained_run
    _, scores_val, labels_val = read_scores(scores_path)
    heldout_auc = pair_auc(scores_val, labels_val)

    all_csv = tmp_path / "scores_all.csv"
    score(out_dir / "checkpoint.pt", toy_dataset / "dataset", all_csv)
    ids, scores_all, labels_all = read_scores(all_csv)
    records = load_manifest(toy_dataset / "dataset")
    train_records, _ = split_by_source(records, spec.val_fraction, spec.seed)
    train_ids = {r.sample_id for r in train_records}
    in_train = np.array([i in train_ids for i in ids])
    train_auc = pair_auc(scores_all[in_train], labels_all[in_train])
    assert train_auc >= 0.9
    assert train_auc >= heldout_auc - 0.01


def test_score_on_empty_manifest_gives_header_only_csv(trained_run, tmp_path):
    _, out_dir, _, _ = trained_run
    empty_dir = tmp_path / "emptyds"
    empty_dir.mkdir()
    (empty_dir / "manifest.jsonl").write_text("")
    out_csv = tmp_path / "empty.csv"
    score(out_dir / "checkpoint.pt", empty_dir, out_csv)
    assert out_csv.read_text() == "id,score,label\n"
