"""Dataset loading for lesionforge-produced directories.

A dataset directory holds manifest.jsonl (one JSON record per sample with
path, label, and source) plus the referenced PNG files. Samples are split
into train/held-out groups by source image id so a synthetic image never
lands on the other side of the split from the normal it was built from.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    path: Path
    label: int
    source: str


def load_manifest(dataset_dir: Union[str, Path]) -> list[SampleRecord]:
    root = Path(dataset_dir)
    manifest = root / "manifest.jsonl"
    if not manifest.is_file():
        raise IOError(f"not a dataset directory (missing manifest.jsonl): {root}")
    records = []
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        records.append(
            SampleRecord(
                sample_id=raw["path"],
                path=root / raw["path"],
                label=int(raw["label"]),
                source=str(raw["source"]),
            )
        )
    return records


def split_by_source(
    records: Sequence[SampleRecord], val_fraction: float, seed: int
) -> tuple[list[SampleRecord], list[SampleRecord]]:
    """Deterministic train/held-out split on distinct source ids."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    sources = sorted({r.source for r in records})
    gen = np.random.default_rng(seed)
    gen.shuffle(sources)
    n_val = max(1, int(round(val_fraction * len(sources))))
    held_out = set(sources[:n_val])
    train = [r for r in records if r.source not in held_out]
    val = [r for r in records if r.source in held_out]
    return train, val


def load_image_tensor(path: Path, side: int) -> torch.Tensor:
    """PNG -> float32 CHW tensor in [0, 1], bilinear-resized to side x side."""
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        if img.size != (side, side):
            img = img.resize((side, side), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = arr.transpose(2, 0, 1)
    return torch.from_numpy(arr.copy())


class ManifestDataset(Dataset):
    def __init__(self, records: Sequence[SampleRecord], side: int):
        if not records:
            raise ValueError("dataset is empty")
        self.records = list(records)
        self.side = side
        labels = {r.label for r in self.records}
        if labels != {0, 1}:
            raise ValueError(f"manifest must contain both labels 0 and 1, got {sorted(labels)}")

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index: int) -> tuple[torch.Tensor, int, int]:
        record = self.records[index]
        return load_image_tensor(record.path, self.side), record.label, index

    @property
    def channels(self) -> int:
        return int(load_image_tensor(self.records[0].path, self.side).shape[0])
