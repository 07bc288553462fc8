"""Patch augmentation: flip, rotation, resize, contrast, brightness, and
color distortion, applied in a fixed order with every random draw logged so
any augmented patch can be replayed bit-exactly from its log."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import cv2
import numpy as np

from .imgcore import BinaryMask, Image, RngLike, as_generator, quantize, to_float
from .lesion_bank import LesionPatch


class AugmentOp(Enum):
    FLIP = "flip"
    ROTATION = "rotation"
    RESIZE = "resize"
    CONTRAST = "contrast"
    BRIGHTNESS = "brightness"
    COLOR_DISTORTION = "color-distortion"


# Composition order is fixed so a run is reproducible from its config alone.
OP_ORDER = (
    AugmentOp.FLIP,
    AugmentOp.ROTATION,
    AugmentOp.RESIZE,
    AugmentOp.CONTRAST,
    AugmentOp.BRIGHTNESS,
    AugmentOp.COLOR_DISTORTION,
)

FLIP_PROBABILITY = 0.5


def _check_range(name: str, rng: tuple[float, float], positive_lo: bool = False) -> None:
    lo, hi = rng
    if lo > hi:
        raise ValueError(f"{name} must satisfy lo <= hi, got ({lo}, {hi})")
    if positive_lo and lo <= 0:
        raise ValueError(f"{name} lower bound must be > 0, got {lo}")


@dataclass(frozen=True)
class AugmentSpec:
    """Which operations run and the ranges their parameters are drawn from."""

    enabled_ops: frozenset = frozenset()
    rotation_range: tuple[float, float] = (0.0, 360.0)
    scale_range: tuple[float, float] = (0.75, 1.25)
    contrast_range: tuple[float, float] = (0.8, 1.2)
    brightness_range: tuple[float, float] = (0.8, 1.2)
    hue_range: float = 18.0
    saturation_range: tuple[float, float] = (0.8, 1.2)

    def __post_init__(self) -> None:
        ops = frozenset(self.enabled_ops)
        if not all(isinstance(op, AugmentOp) for op in ops):
            raise ValueError("enabled_ops must contain AugmentOp members")
        object.__setattr__(self, "enabled_ops", ops)
        _check_range("rotation_range", self.rotation_range)
        _check_range("scale_range", self.scale_range, positive_lo=True)
        _check_range("contrast_range", self.contrast_range, positive_lo=True)
        _check_range("brightness_range", self.brightness_range, positive_lo=True)
        _check_range("saturation_range", self.saturation_range)
        if self.hue_range < 0:
            raise ValueError(f"hue_range must be >= 0, got {self.hue_range}")


# The five-op composite leaves color distortion off; photometric color shifts
# can destroy lesion-identifying hues.
_PRESETS: dict[str, tuple[AugmentOp, ...]] = {
    "none": (),
    "all": tuple(OP_ORDER),
    "paper-best": (
        AugmentOp.FLIP,
        AugmentOp.ROTATION,
        AugmentOp.RESIZE,
        AugmentOp.CONTRAST,
        AugmentOp.BRIGHTNESS,
    ),
}


def preset(name: str) -> AugmentSpec:
    """Named preset ("none", "all", "paper-best") or a '+'-joined op list
    such as "rotation+resize+brightness"."""
    key = name.strip().lower()
    if key in _PRESETS:
        return AugmentSpec(enabled_ops=frozenset(_PRESETS[key]))
    by_value = {op.value: op for op in AugmentOp}
    ops = []
    for part in key.split("+"):
        part = part.strip()
        if part not in by_value:
            raise ValueError(f"unknown augmentation preset or op name: {part!r}")
        ops.append(by_value[part])
    return AugmentSpec(enabled_ops=frozenset(ops))


def _result(p: LesionPatch, pixels: Image, mask: BinaryMask, entry: dict) -> LesionPatch:
    return LesionPatch(
        pixels=pixels,
        mask=mask,
        lesion_type=p.lesion_type,
        source_id=p.source_id,
        component_id=p.component_id,
        augmentation_log=p.augmentation_log + (entry,),
    )


def _tight_crop(pix: np.ndarray, bits: np.ndarray) -> Optional[tuple[np.ndarray, np.ndarray]]:
    ys, xs = np.nonzero(bits)
    if ys.size == 0:
        return None
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    return pix[y0:y1, x0:x1], bits[y0:y1, x0:x1]


def _apply_flip(p: LesionPatch, horizontal: bool, vertical: bool) -> LesionPatch:
    pix = p.pixels.pixels
    bits = p.mask.bits
    if horizontal:
        pix = pix[:, ::-1]
        bits = bits[:, ::-1]
    if vertical:
        pix = pix[::-1]
        bits = bits[::-1]
    entry = {"op": "flip", "horizontal": horizontal, "vertical": vertical}
    return _result(p, Image(pix.copy(), p.pixels.domain), BinaryMask(bits.copy()), entry)


def flip(p: LesionPatch, axis: str) -> LesionPatch:
    """Mirror pixels and mask; "horizontal" swaps left/right, "vertical" top/bottom."""
    if axis not in ("horizontal", "vertical"):
        raise ValueError(f"axis must be 'horizontal' or 'vertical', got {axis!r}")
    return _apply_flip(p, axis == "horizontal", axis == "vertical")


def rotate(p: LesionPatch, angle: float) -> LesionPatch:
    """Rotate counterclockwise by `angle` degrees on an expanded canvas.

    Right-angle rotations are exact pixel permutations; other angles resample
    pixels bilinearly and the mask nearest-neighbor, then re-crop to the tight
    bounding box. A resample that would empty the mask (possible only for
    pathological masks) leaves the patch unchanged.
    """
    entry = {"op": "rotate", "angle": float(angle)}
    a = angle % 360.0
    if a == 0.0:
        return _result(p, p.pixels, p.mask, entry)
    if a % 90.0 == 0.0:
        k = int(a // 90)
        pix = np.rot90(p.pixels.pixels, k).copy()
        bits = np.rot90(p.mask.bits, k).copy()
        return _result(p, Image(pix, p.pixels.domain), BinaryMask(bits), entry)
    h, w = p.height, p.width
    rad = math.radians(a)
    c, s = abs(math.cos(rad)), abs(math.sin(rad))
    cw = int(math.ceil(w * c + h * s))
    ch = int(math.ceil(w * s + h * c))
    mat = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), a, 1.0)
    mat[0, 2] += (cw - w) / 2.0
    mat[1, 2] += (ch - h) / 2.0
    pix = cv2.warpAffine(
        to_float(p.pixels), mat, (cw, ch), flags=cv2.INTER_LINEAR, borderValue=0.0
    )
    bits = cv2.warpAffine(p.mask.bits, mat, (cw, ch), flags=cv2.INTER_NEAREST, borderValue=0)
    cropped = _tight_crop(pix, bits)
    if cropped is None:
        return _result(p, p.pixels, p.mask, entry)
    pix, bits = cropped
    return _result(
        p, quantize(pix, depth=p.pixels.depth, domain=p.pixels.domain), BinaryMask(bits), entry
    )


def resize_patch(p: LesionPatch, scale: float) -> LesionPatch:
    """Scale both dimensions by `scale`, rounding half up (minimum 1x1)."""
    if scale <= 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    entry = {"op": "resize", "scale": float(scale)}
    nw = max(1, int(math.floor(p.width * scale + 0.5)))
    nh = max(1, int(math.floor(p.height * scale + 0.5)))
    if (nw, nh) == (p.width, p.height):
        return _result(p, p.pixels, p.mask, entry)
    pix = cv2.resize(to_float(p.pixels), (nw, nh), interpolation=cv2.INTER_LINEAR)
    bits = cv2.resize(p.mask.bits, (nw, nh), interpolation=cv2.INTER_NEAREST)
    cropped = _tight_crop(pix, bits)
    if cropped is None:
        return _result(p, p.pixels, p.mask, entry)
    pix, bits = cropped
    return _result(
        p, quantize(pix, depth=p.pixels.depth, domain=p.pixels.domain), BinaryMask(bits), entry
    )


def _photometric(p: LesionPatch, out: np.ndarray, entry: dict) -> LesionPatch:
    return _result(
        p, quantize(out, depth=p.pixels.depth, domain=p.pixels.domain), p.mask, entry
    )


def adjust_brightness(p: LesionPatch, factor: float) -> LesionPatch:
    """v <- clamp(v * factor); mask and geometry untouched."""
    if factor < 0:
        raise ValueError(f"brightness factor must be >= 0, got {factor}")
    entry = {"op": "brightness", "factor": float(factor)}
    return _photometric(p, to_float(p.pixels) * factor, entry)


def adjust_contrast(p: LesionPatch, factor: float) -> LesionPatch:
    """v <- clamp(mean + (v - mean) * factor), pivoting on the per-channel
    mean over mask-set pixels (the rectangle corners outside the lesion must
    not bias the pivot)."""
    if factor < 0:
        raise ValueError(f"contrast factor must be >= 0, got {factor}")
    entry = {"op": "contrast", "factor": float(factor)}
    f = to_float(p.pixels)
    sel = p.mask.bits.astype(bool)
    if f.ndim == 2:
        mean = f[sel].mean()
    else:
        mean = f[sel].mean(axis=0)
    return _photometric(p, mean + (f - mean) * factor, entry)


def color_distort(p: LesionPatch, hue_shift: float, sat_factor: float) -> LesionPatch:
    """Rotate hue and scale saturation in HSV; the value channel is untouched."""
    if p.pixels.channels != 3:
        raise ValueError("color distortion requires a 3-channel patch")
    if sat_factor < 0:
        raise ValueError(f"saturation factor must be >= 0, got {sat_factor}")
    entry = {"op": "color", "hue_shift": float(hue_shift), "sat_factor": float(sat_factor)}
    rgb = to_float(p.pixels).astype(np.float32)
    hsv = cv2.cvtColor(rgb, cv2.COLOR_RGB2HSV)
    hsv[..., 0] = (hsv[..., 0] + hue_shift) % 360.0
    hsv[..., 1] = np.clip(hsv[..., 1] * sat_factor, 0.0, 1.0)
    out = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB).astype(np.float64)
    return _photometric(p, out, entry)


def apply_random(p: LesionPatch, spec: AugmentSpec, rng: RngLike) -> LesionPatch:
    """Apply every enabled op in the fixed order with parameters drawn from
    the spec ranges; the patch log gains exactly one entry per enabled op."""
    gen = as_generator(rng)
    out = p
    for op in OP_ORDER:
        if op not in spec.enabled_ops:
            continue
        if op is AugmentOp.FLIP:
            horizontal = bool(gen.random() < FLIP_PROBABILITY)
            vertical = bool(gen.random() < FLIP_PROBABILITY)
            out = _apply_flip(out, horizontal, vertical)
        elif op is AugmentOp.ROTATION:
            out = rotate(out, float(gen.uniform(*spec.rotation_range)))
        elif op is AugmentOp.RESIZE:
            out = resize_patch(out, float(gen.uniform(*spec.scale_range)))
        elif op is AugmentOp.CONTRAST:
            out = adjust_contrast(out, float(gen.uniform(*spec.contrast_range)))
        elif op is AugmentOp.BRIGHTNESS:
            out = adjust_brightness(out, float(gen.uniform(*spec.brightness_range)))
        elif op is AugmentOp.COLOR_DISTORTION:
            hue = float(gen.uniform(-spec.hue_range, spec.hue_range))
            sat = float(gen.uniform(*spec.saturation_range))
            out = color_distort(out, hue, sat)
    return out


def replay_log(p: LesionPatch, log: Sequence[Mapping]) -> LesionPatch:
    """Re-apply logged transforms to an original patch, reproducing the
    augmented patch bit-exactly."""
    out = p
    for entry in log:
        op = entry["op"]
        if op == "flip":
            out = _apply_flip(out, bool(entry["horizontal"]), bool(entry["vertical"]))
        elif op == "rotate":
            out = rotate(out, float(entry["angle"]))
        elif op == "resize":
            out = resize_patch(out, float(entry["scale"]))
        elif op == "contrast":
            out = adjust_contrast(out, float(entry["factor"]))
        elif op == "brightness":
            out = adjust_brightness(out, float(entry["factor"]))
        elif op == "color":
            out = color_distort(out, float(entry["hue_shift"]), float(entry["sat_factor"]))
        else:
            raise ValueError(f"unknown augmentation log op: {op!r}")
    return out
