"""Training harness: minimize mean cross-entropy over normal (target 0) and
synthetic anomalous (target 1) samples, then score images for evaluation.

Scores are written as id,score,label CSV, the format `lesionforge eval`
consumes directly.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader

from .data import (
    ManifestDataset,
    SampleRecord,
    load_image_tensor,
    load_manifest,
    split_by_source,
)
from .model import SmallCnn

CHECKPOINT_NAME = "checkpoint.pt"
SPEC_COPY_NAME = "trainspec.json"
SCORES_NAME = "scores_val.csv"


@dataclass(frozen=True)
class TrainSpec:
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 0.001
    momentum: float = 0.9
    image_side: int = 256
    depth: int = 3
    width: int = 16
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")

    @classmethod
    def from_json(cls, text: str) -> "TrainSpec":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("train spec must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train spec key(s): {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Cosine decay from lr0 at step 0 to 0 at total_steps."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    step = min(step, total_steps)
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * step / total_steps))


def batch_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over the batch (both label terms together)."""
    return nn.functional.cross_entropy(logits, targets)


def _device() -> torch.device:
    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


def _score_records(
    model: SmallCnn,
    records: Sequence[SampleRecord],
    side: int,
    batch_size: int,
    device: torch.device,
) -> list[tuple[str, float, int]]:
    model.eval()
    rows: list[tuple[str, float, int]] = []
    with torch.no_grad():
        for start in range(0, len(records), batch_size):
            chunk = records[start : start + batch_size]
            batch = torch.stack([load_image_tensor(r.path, side) for r in chunk]).to(device)
            probs = torch.softmax(model(batch), dim=1)[:, 1]
            for record, p in zip(chunk, probs.cpu().tolist()):
                rows.append((record.sample_id, float(p), record.label))
    return rows


def write_scores(rows: Sequence[tuple[str, float, int]], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "score", "label"])
        for sample_id, score, label in rows:
            writer.writerow([sample_id, repr(score), label])


def train(
    dataset_dir: Union[str, Path],
    spec: TrainSpec,
    out_dir: Union[str, Path],
    quiet: bool = False,
) -> Path:
    """Train on a lesionforge dataset and score the held-out split.

    Writes checkpoint.pt, the spec used (verbatim serialization), and
    scores_val.csv into out_dir; returns the path to the scores CSV.
    """
    records = load_manifest(dataset_dir)
    labels = {r.label for r in records}
    if labels != {0, 1}:
        raise ValueError(f"manifest must contain both labels, got {sorted(labels)}")
    train_records, val_records = split_by_source(records, spec.val_fraction, spec.seed)

    torch.manual_seed(spec.seed)
    device = _device()
    train_set = ManifestDataset(train_records, spec.image_side)
    loader = DataLoader(
        train_set,
        batch_size=spec.batch_size,
        shuffle=True,
        num_workers=0,
        generator=torch.Generator().manual_seed(spec.seed),
        # a trailing batch of one sample would break batch-norm statistics
        drop_last=len(train_set) % spec.batch_size == 1,
    )
    model = SmallCnn(in_channels=train_set.channels, depth=spec.depth, width=spec.width).to(device)
    optimizer = torch.optim.SGD(
        model.parameters(), lr=spec.learning_rate, momentum=spec.momentum
    )
    total_steps = spec.epochs * len(loader)
    step = 0
    model.train()
    for epoch in range(spec.epochs):
        running = 0.0
        seen = 0
        for batch, targets, _ in loader:
            lr = cosine_lr(step, total_steps, spec.learning_rate)
            for group in optimizer.param_groups:
                group["lr"] = lr
            batch = batch.to(device)
            targets = targets.to(device)
            optimizer.zero_grad()
            loss = batch_loss(model(batch), targets)
            loss.backward()
            optimizer.step()
            running += float(loss.detach()) * len(targets)
            seen += len(targets)
            step += 1
        if not quiet:
            print(f"epoch {epoch + 1}/{spec.epochs} loss {running / seen:.4f}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "model_state": model.state_dict(),
            "in_channels": train_set.channels,
            "depth": spec.depth,
            "width": spec.width,
            "image_side": spec.image_side,
        },
        out / CHECKPOINT_NAME,
    )
    (out / SPEC_COPY_NAME).write_text(spec.to_json())
    rows = _score_records(model, val_records, spec.image_side, spec.batch_size, device)
    scores_path = out / SCORES_NAME
    write_scores(rows, scores_path)
    return scores_path


def load_checkpoint(path: Union[str, Path]) -> tuple[SmallCnn, int]:
    state = torch.load(path, map_location="cpu", weights_only=True)
    model = SmallCnn(
        in_channels=state["in_channels"], depth=state["depth"], width=state["width"]
    )
    model.load_state_dict(state["model_state"])
    return model, int(state["image_side"])


def score(
    checkpoint: Union[str, Path],
    dataset_dir: Union[str, Path],
    out_csv: Union[str, Path],
    batch_size: int = 64,
) -> Path:
    """Score every manifest record with a trained checkpoint; an empty
    manifest yields a header-only CSV."""
    model, side = load_checkpoint(checkpoint)
    device = _device()
    model = model.to(device)
    records = load_manifest(dataset_dir)
    rows = _score_records(model, records, side, batch_size, device)
    write_scores(rows, out_csv)
    return Path(out_csv)


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="lesiontrainer",
        description="Train a small CNN on a lesionforge dataset and emit score CSVs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and score the held-out split")
    p.add_argument("--dataset", required=True, help="lesionforge dataset directory")
    p.add_argument("--spec", default=None, help="JSON TrainSpec file (defaults apply if omitted)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("score", help="score a dataset with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output CSV path")

    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            spec = TrainSpec.from_json(Path(args.spec).read_text()) if args.spec else TrainSpec()
            scores_path = train(args.dataset, spec, args.out)
            print(f"held-out scores -> {scores_path}")
        else:
            out = score(args.checkpoint, args.dataset, args.out)
            print(f"scores -> {out}")
        return 0
    except (ValueError, IOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
