"""Lesion bank: extract isolated lesion regions from one annotated sample,
store them as typed patches, and resample them for synthesis."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .ccl import label_components
from .imgcore import (
    BinaryMask,
    Image,
    PixelDomain,
    RngLike,
    as_generator,
    read_image,
    read_mask,
    write_image,
    write_mask,
)

BANK_MANIFEST = "bank.json"


class LesionType(Enum):
    MA = "MA"
    HE = "HE"
    SE = "SE"
    EX = "EX"
    COVID = "COVID"
    OTHER = "OTHER"


@dataclass(frozen=True, eq=False)
class LesionPatch:
    """A cropped lesion rectangle with its aligned binary mask.

    The crop is the tight bounding box of one connected component: the mask
    touches all four crop edges and has at least one set pixel.
    """

    pixels: Image
    mask: BinaryMask
    lesion_type: LesionType
    source_id: str = ""
    component_id: int = 0
    augmentation_log: tuple = ()

    def __post_init__(self) -> None:
        if (self.mask.height, self.mask.width) != (self.pixels.height, self.pixels.width):
            raise ValueError("patch mask dimensions must match patch pixels")
        bits = self.mask.bits
        if self.mask.area == 0:
            raise ValueError("patch mask must have at least one set pixel")
        if not (bits[0].any() and bits[-1].any() and bits[:, 0].any() and bits[:, -1].any()):
            raise ValueError("patch crop must be the tight bounding box of its mask")
        object.__setattr__(self, "augmentation_log", tuple(self.augmentation_log))

    @property
    def height(self) -> int:
        return self.pixels.height

    @property
    def width(self) -> int:
        return self.pixels.width

    @property
    def is_original(self) -> bool:
        return len(self.augmentation_log) == 0


@dataclass(frozen=True, eq=False)
class LesionBank:
    """Typed pool of lesion patches.

    n_l counts the original isolated lesion regions (pre-augmentation) and
    must equal the number of distinct (source_id, component_id) pairs among
    unaugmented patches.
    """

    patches: tuple[LesionPatch, ...]
    n_l: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "patches", tuple(self.patches))
        if self.n_l < 1:
            raise ValueError("a lesion bank must contain at least one original region")
        originals = {(p.source_id, p.component_id) for p in self.patches if p.is_original}
        if len(originals) != self.n_l:
            raise ValueError(
                f"n_l={self.n_l} does not match {len(originals)} distinct original regions"
            )

    def filtered(self, types: Optional[Iterable[LesionType]] = None) -> tuple[LesionPatch, ...]:
        if types is None:
            return self.patches
        allowed = frozenset(types)
        return tuple(p for p in self.patches if p.lesion_type in allowed)

    def component_count(self, types: Optional[Iterable[LesionType]] = None) -> int:
        """Distinct original regions among patches of the given types."""
        pool = self.filtered(types)
        return len({(p.source_id, p.component_id) for p in pool if p.is_original})

    def type_counts(self) -> dict[LesionType, int]:
        counts: dict[LesionType, int] = {}
        for p in self.patches:
            counts[p.lesion_type] = counts.get(p.lesion_type, 0) + 1
        return counts


def extract_patches(
    img: Image,
    annotations: Mapping[LesionType, BinaryMask],
    source_id: str = "",
    connectivity: int = 8,
) -> LesionBank:
    """Build a bank with one patch per connected component per type mask.

    component_id runs 1..n_l across all types in LesionType declaration
    order, so (source_id, component_id) identifies each original region.
    """
    for ltype, mask in annotations.items():
        if (mask.height, mask.width) != (img.height, img.width):
            raise ValueError(f"annotation mask for {ltype.value} does not match image dimensions")
    patches: list[LesionPatch] = []
    component_id = 0
    for ltype in LesionType:
        if ltype not in annotations:
            continue
        labels, count = label_components(annotations[ltype], connectivity=connectivity)
        for k in range(1, count + 1):
            ys, xs = np.nonzero(labels == k)
            y0, y1 = int(ys.min()), int(ys.max()) + 1
            x0, x1 = int(xs.min()), int(xs.max()) + 1
            crop = Image(img.pixels[y0:y1, x0:x1], img.domain)
            comp_mask = BinaryMask((labels[y0:y1, x0:x1] == k).astype(np.uint8))
            component_id += 1
            patches.append(
                LesionPatch(
                    pixels=crop,
                    mask=comp_mask,
                    lesion_type=ltype,
                    source_id=source_id,
                    component_id=component_id,
                )
            )
    if not patches:
        raise ValueError("all annotation masks are empty; cannot build a lesion bank")
    return LesionBank(patches=tuple(patches), n_l=len(patches))


def sample_paste_count(n_l: int, rng: RngLike) -> int:
    """Uniform integer draw from {1, ..., round(1.5 * n_l)} (round half up)."""
    if n_l < 1:
        raise ValueError(f"n_l must be >= 1, got {n_l}")
    hi = max(1, int(math.floor(1.5 * n_l + 0.5)))
    return int(as_generator(rng).integers(1, hi + 1))


def resample_patches(
    bank: LesionBank,
    n: int,
    type_filter: Optional[Iterable[LesionType]],
    rng: RngLike,
) -> list[LesionPatch]:
    """n independent uniform draws with replacement from the filtered bank."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    pool = bank.filtered(type_filter)
    if not pool:
        wanted = "any" if type_filter is None else ",".join(sorted(t.value for t in type_filter))
        raise ValueError(f"no patches of the requested types ({wanted}) in the bank")
    gen = as_generator(rng)
    idx = gen.integers(0, len(pool), size=n)
    return [pool[int(i)] for i in idx]


def save_bank(bank: LesionBank, out_dir: Union[str, Path]) -> None:
    """Persist as patch_####.png / patch_####_mask.png plus a JSON manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, p in enumerate(bank.patches):
        name = f"patch_{i:04d}.png"
        mask_name = f"patch_{i:04d}_mask.png"
        write_image(p.pixels, out / name)
        write_mask(p.mask, out / mask_name)
        entries.append(
            {
                "file": name,
                "mask_file": mask_name,
                "lesion_type": p.lesion_type.value,
                "source_id": p.source_id,
                "component_id": p.component_id,
                "augmentation_log": list(p.augmentation_log),
                "domain": p.pixels.domain.value,
            }
        )
    manifest = {"n_l": bank.n_l, "patches": entries}
    (out / BANK_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_bank(bank_dir: Union[str, Path]) -> LesionBank:
    src = Path(bank_dir)
    manifest_path = src / BANK_MANIFEST
    if not manifest_path.is_file():
        raise IOError(f"not a lesion bank directory (missing {BANK_MANIFEST}): {src}")
    manifest = json.loads(manifest_path.read_text())
    patches = []
    for entry in manifest["patches"]:
        img = read_image(src / entry["file"], domain=PixelDomain(entry["domain"]))
        mask = read_mask(src / entry["mask_file"])
        patches.append(
            LesionPatch(
                pixels=img,
                mask=mask,
                lesion_type=LesionType(entry["lesion_type"]),
                source_id=entry["source_id"],
                component_id=int(entry["component_id"]),
                augmentation_log=tuple(entry["augmentation_log"]),
            )
        )
    return LesionBank(patches=tuple(patches), n_l=int(manifest["n_l"]))
