"""Core raster types, pixel conventions, and the seeded randomness contract.

All compositing math runs on float64 rasters in [0, 1]; integer samples are
produced only at quantization time with a fixed round-half-up rule so outputs
are bit-reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Union

import cv2
import numpy as np

HU_OFFSET = 32768
_MASK64 = (1 << 64) - 1


class PixelDomain(Enum):
    """How stored samples map to physical values."""

    NATURAL8 = "natural8"
    # CT slice exported to 16-bit gray: stored sample = HU + 32768.
    HU_OFFSET16 = "hu_offset16"


@dataclass(frozen=True, eq=False)
class Image:
    """Immutable 2-D raster: (h, w) gray or (h, w, 3) RGB, uint8 or uint16."""

    pixels: np.ndarray
    domain: PixelDomain = PixelDomain.NATURAL8

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if not (px.ndim == 2 or (px.ndim == 3 and px.shape[2] == 3)):
            raise ValueError(f"expected (h, w) or (h, w, 3) pixels, got shape {px.shape}")
        if px.dtype not in (np.uint8, np.uint16):
            raise ValueError(f"expected uint8 or uint16 samples, got {px.dtype}")
        if self.domain is PixelDomain.HU_OFFSET16 and (px.ndim != 2 or px.dtype != np.uint16):
            raise ValueError("HU_OFFSET16 images must be single-channel 16-bit")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else self.pixels.shape[2]

    @property
    def depth(self) -> int:
        return 8 if self.pixels.dtype == np.uint8 else 16


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Immutable per-pixel {0, 1} raster."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ValueError(f"expected (h, w) mask, got shape {b.shape}")
        if b.size and not np.isin(b, (0, 1)).all():
            raise ValueError("mask values must all be 0 or 1")
        b = np.ascontiguousarray(b.astype(np.uint8))
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @classmethod
    def from_nonzero(cls, arr: np.ndarray) -> "BinaryMask":
        """Map any nonzero sample to 1 (PNG masks are stored as 0/255)."""
        return cls((np.asarray(arr) != 0).astype(np.uint8))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        return int(self.bits.sum())


def mask_inverse(m: BinaryMask) -> BinaryMask:
    """Per-pixel complement: output = 1 - input."""
    return BinaryMask(1 - m.bits)


@dataclass(frozen=True)
class RngStream:
    """Deterministic RNG handle: (root_seed, stream_id) fully determines the draws.

    Distinct stream_ids give statistically independent sequences, so per-image
    or per-decision-site streams can run concurrently without any shared state.
    """

    root_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator; calling twice replays the identical sequence."""
        seq = np.random.SeedSequence(
            entropy=self.root_seed & _MASK64, spawn_key=(self.stream_id & _MASK64,)
        )
        return np.random.default_rng(seq)

    def child(self, label: Union[str, int]) -> "RngStream":
        return RngStream(self.root_seed, stream_id_for(self.stream_id, label))


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    """Accept either a replayable stream handle or a live generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def stream_id_for(*parts: Union[str, int]) -> int:
    """Stable 64-bit stream id derived from labels (platform-independent)."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def to_float(img: Image) -> np.ndarray:
    """Linear map of the stored sample range onto [0, 1] as float64.

    HU_OFFSET16 inputs are mapped from their stored offset samples; windowing
    back to HU is the preprocessing module's job.
    """
    maxval = 255.0 if img.depth == 8 else 65535.0
    return img.pixels.astype(np.float64) / maxval


def quantize(
    raster: np.ndarray, depth: int = 8, domain: PixelDomain = PixelDomain.NATURAL8
) -> Image:
    """Clamp to [0, 1] and round half up onto the integer sample grid."""
    if depth not in (8, 16):
        raise ValueError(f"depth must be 8 or 16, got {depth}")
    maxval = 255.0 if depth == 8 else 65535.0
    r = np.clip(np.asarray(raster, dtype=np.float64), 0.0, 1.0)
    samples = np.floor(r * maxval + 0.5)
    dtype = np.uint8 if depth == 8 else np.uint16
    return Image(samples.astype(dtype), domain=domain)


def read_image(path: Union[str, Path], domain: PixelDomain = PixelDomain.NATURAL8) -> Image:
    """Read a PNG as 8-bit gray/RGB or 16-bit gray."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError(f"cannot read image: {path}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raise ValueError(f"alpha channels are not supported: {path}")
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return Image(raw, domain=domain)


def write_image(img: Image, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    px = img.pixels
    if px.ndim == 3:
        px = cv2.cvtColor(px, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), px):
        raise IOError(f"cannot write image: {path}")


def read_mask(path: Union[str, Path]) -> BinaryMask:
    """Read a mask PNG; any nonzero sample maps to 1."""
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise IOError(f"cannot read mask: {path}")
    return BinaryMask.from_nonzero(raw)


def write_mask(mask: BinaryMask, path: Union[str, Path]) -> None:
    """Write a mask PNG with 0/255 encoding."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), mask.bits * np.uint8(255)):
        raise IOError(f"cannot write mask: {path}")
