from __future__ import annotations

import numpy as np
import pytest

from lesionforge.imgcore import BinaryMask, Image
from lesionforge.lesion_bank import LesionBank, LesionPatch, LesionType


def random_mask(gen: np.random.Generator, h: int, w: int, density: float) -> BinaryMask:
    return BinaryMask((gen.random((h, w)) < density).astype(np.uint8))


def random_rgb(gen: np.random.Generator, h: int, w: int) -> Image:
    return Image(gen.integers(0, 256, size=(h, w, 3), dtype=np.int64).astype(np.uint8))


def random_gray(gen: np.random.Generator, h: int, w: int) -> Image:
    return Image(gen.integers(0, 256, size=(h, w), dtype=np.int64).astype(np.uint8))


def solid_patch(
    value: int,
    h: int = 3,
    w: int = 3,
    lesion_type: LesionType = LesionType.OTHER,
    channels: int = 3,
    component_id: int = 1,
    source_id: str = "fixture",
) -> LesionPatch:
    shape = (h, w) if channels == 1 else (h, w, channels)
    return LesionPatch(
        pixels=Image(np.full(shape, value, dtype=np.uint8)),
        mask=BinaryMask(np.ones((h, w), dtype=np.uint8)),
        lesion_type=lesion_type,
        source_id=source_id,
        component_id=component_id,
    )


def random_patch(
    gen: np.random.Generator,
    h: int,
    w: int,
    lesion_type: LesionType = LesionType.OTHER,
    channels: int = 3,
    component_id: int = 1,
    source_id: str = "fixture",
) -> LesionPatch:
    """Random patch whose mask is valid (nonempty, tight bounding box)."""
    while True:
        bits = (gen.random((h, w)) < 0.6).astype(np.uint8)
        if bits.any() and bits[0].any() and bits[-1].any() and bits[:, 0].any() and bits[:, -1].any():
            break
    shape = (h, w) if channels == 1 else (h, w, channels)
    pixels = gen.integers(0, 256, size=shape, dtype=np.int64).astype(np.uint8)
    return LesionPatch(
        pixels=Image(pixels),
        mask=BinaryMask(bits),
        lesion_type=lesion_type,
        source_id=source_id,
        component_id=component_id,
    )


def disk_mask(h: int, w: int, cy: float, cx: float, radius: float) -> BinaryMask:
    yy, xx = np.mgrid[:h, :w]
    return BinaryMask((((yy - cy) ** 2 + (xx - cx) ** 2) <= radius**2).astype(np.uint8))


@pytest.fixture
def small_bank() -> LesionBank:
    """Four original patches: three MA, one HE."""
    gen = np.random.default_rng(7)
    patches = [
        random_patch(gen, 4, 5, LesionType.MA, component_id=1),
        random_patch(gen, 3, 3, LesionType.MA, component_id=2),
        random_patch(gen, 6, 4, LesionType.MA, component_id=3),
        random_patch(gen, 5, 5, LesionType.HE, component_id=4),
    ]
    return LesionBank(patches=tuple(patches), n_l=4)
