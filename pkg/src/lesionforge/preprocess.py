"""Dataset normalization applied before synthesis or training.

CT slices get Hounsfield windowing onto 8-bit gray; fundus photographs get
field-of-view detection (with optional tight crop); everything gets a
canonical bilinear resize.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .ccl import label_components
from .imgcore import HU_OFFSET, BinaryMask, Image, PixelDomain, quantize, to_float

DEFAULT_FOV_THRESHOLD = 10.0 / 255.0
_FOV_MIN_AREA_FRAC = 0.10


@dataclass(frozen=True)
class WindowSpec:
    """Intensity window on the Hounsfield scale, spanning level +/- width/2."""

    level: float
    width: float

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise ValueError(f"window width must be > 0, got {self.width}")

    @property
    def lo(self) -> float:
        return self.level - self.width / 2.0

    @property
    def hi(self) -> float:
        return self.level + self.width / 2.0


# Emphasizes lung tissue on thoracic CT.
DEFAULT_CT_WINDOW = WindowSpec(level=-300.0, width=1400.0)


@dataclass(frozen=True, eq=False)
class FovMask(BinaryMask):
    """Valid-imaging-region mask; guaranteed nonempty."""

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.area == 0:
            raise ValueError("field-of-view mask must be nonempty")


def window_ct(img: Image, spec: WindowSpec = DEFAULT_CT_WINDOW) -> Image:
    """Map a HU-offset CT slice through an intensity window onto 8-bit gray.

    HU at or below the lower window edge map to 0, at or above the upper edge
    to 255, linear in between.
    """
    if img.domain is not PixelDomain.HU_OFFSET16:
        raise ValueError("window_ct requires a HU_OFFSET16 image")
    hu = img.pixels.astype(np.float64) - HU_OFFSET
    t = np.clip((hu - spec.lo) / spec.width, 0.0, 1.0)
    return quantize(t, depth=8)


def _luminance(img: Image) -> np.ndarray:
    f = to_float(img)
    if f.ndim == 2:
        return f
    return 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]


def detect_fov(img: Image, threshold: float = DEFAULT_FOV_THRESHOLD) -> FovMask:
    """Detect the bright imaging field against a dark background.

    Thresholds luminance, keeps the largest connected component, and falls
    back to an all-ones mask when the detected region covers less than 10%
    of the frame (so the result is always usable as a placement region).
    """
    lum = _luminance(img)
    fg = BinaryMask((lum > threshold).astype(np.uint8))
    full = FovMask(np.ones(lum.shape, dtype=np.uint8))
    if fg.area == 0:
        return full
    labels, count = label_components(fg, connectivity=8)
    if count == 0:
        return full
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    largest = int(areas[1:].argmax()) + 1
    if areas[largest] < _FOV_MIN_AREA_FRAC * lum.size:
        return full
    return FovMask((labels == largest).astype(np.uint8))


def _bounding_square(mask: BinaryMask) -> tuple[int, int, int, int]:
    """Tight bbox of the mask grown to a square, clipped to the frame."""
    ys, xs = np.nonzero(mask.bits)
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    h, w = y1 - y0, x1 - x0
    side = max(h, w)
    cy, cx = (y0 + y1) / 2.0, (x0 + x1) / 2.0
    y0 = int(round(cy - side / 2.0))
    x0 = int(round(cx - side / 2.0))
    y0 = min(max(y0, 0), max(mask.height - side, 0))
    x0 = min(max(x0, 0), max(mask.width - side, 0))
    y1 = min(y0 + side, mask.height)
    x1 = min(x0 + side, mask.width)
    return y0, y1, x0, x1


def crop_to_fov(img: Image, fov: FovMask) -> tuple[Image, FovMask]:
    """Crop image and mask to the bounding square of the field of view."""
    if (fov.height, fov.width) != (img.height, img.width):
        raise ValueError("field-of-view mask does not match image dimensions")
    y0, y1, x0, x1 = _bounding_square(fov)
    return Image(img.pixels[y0:y1, x0:x1], img.domain), FovMask(fov.bits[y0:y1, x0:x1])


def resize_canonical(img: Image, side: int = 256) -> Image:
    """Bilinear resample to side x side; exact identity when already there."""
    if side < 1:
        raise ValueError(f"side must be >= 1, got {side}")
    if (img.height, img.width) == (side, side):
        return img
    f = to_float(img)
    out = cv2.resize(f, (side, side), interpolation=cv2.INTER_LINEAR)
    return quantize(out, depth=img.depth, domain=img.domain)


def resize_mask(mask: BinaryMask, side: int) -> BinaryMask:
    """Nearest-neighbor resample; output stays strictly binary."""
    if side < 1:
        raise ValueError(f"side must be >= 1, got {side}")
    if (mask.height, mask.width) == (side, side):
        return mask
    out = cv2.resize(mask.bits, (side, side), interpolation=cv2.INTER_NEAREST)
    return BinaryMask.from_nonzero(out)


def preprocess_fundus(
    img: Image,
    side: int = 256,
    fov_crop: bool = True,
    threshold: float = DEFAULT_FOV_THRESHOLD,
) -> tuple[Image, FovMask]:
    """Fundus pipeline: detect field of view, optionally crop to it, resize.

    Returns the resized image plus the matching resized field-of-view mask.
    """
    fov = detect_fov(img, threshold=threshold)
    if fov_crop:
        img, fov = crop_to_fov(img, fov)
    out = resize_canonical(img, side)
    out_fov = resize_mask(fov, side)
    if out_fov.area == 0:
        out_fov = BinaryMask(np.ones((side, side), dtype=np.uint8))
    return out, FovMask(out_fov.bits)
