"""MixUp paste engine and dataset synthesis loop.

A synthetic anomalous image is built by drawing a lesion-type rule, drawing a
paste count N uniform over {1..round(1.5 * n)} for the filtered bank, then
resampling, augmenting, and pasting N patches onto the normal image with a
per-paste blend coefficient. Everything drawn is logged so any output raster
can be reproduced from its paste log.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Optional, Sequence, Union

import numpy as np

from .augment import AugmentSpec, apply_random
from .imgcore import (
    BinaryMask,
    Image,
    RngLike,
    RngStream,
    as_generator,
    quantize,
    read_image,
    stream_id_for,
    to_float,
    write_image,
)
from .lesion_bank import (
    LesionBank,
    LesionPatch,
    LesionType,
    resample_patches,
    sample_paste_count,
)
from .preprocess import DEFAULT_FOV_THRESHOLD, detect_fov

if TYPE_CHECKING:
    from .config import RunConfig

DATASET_MANIFEST = "manifest.jsonl"
RUN_CONFIG_COPY = "run.json"


@dataclass(frozen=True)
class MixUpMode:
    """Per-paste blend coefficient policy.

    kind "random" draws uniform from [lo, hi]; "fixed" always uses `value`;
    "hard" pastes without blending (coefficient 1).
    """

    kind: str
    lo: float = 0.5
    hi: float = 0.8
    value: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("random", "fixed", "hard"):
            raise ValueError(f"mixup kind must be random|fixed|hard, got {self.kind!r}")
        if self.kind == "random" and not (0.0 <= self.lo <= self.hi <= 1.0):
            raise ValueError(f"random mixup requires 0 <= lo <= hi <= 1, got ({self.lo}, {self.hi})")
        if self.kind == "fixed" and not (0.0 <= self.value <= 1.0):
            raise ValueError(f"fixed mixup coefficient must be in [0, 1], got {self.value}")

    @classmethod
    def random(cls, lo: float = 0.5, hi: float = 0.8) -> "MixUpMode":
        return cls(kind="random", lo=lo, hi=hi)

    @classmethod
    def fixed(cls, value: float) -> "MixUpMode":
        return cls(kind="fixed", value=value)

    @classmethod
    def hard_paste(cls) -> "MixUpMode":
        return cls(kind="hard", value=1.0)

    def draw(self, rng: RngLike) -> float:
        if self.kind == "random":
            return float(as_generator(rng).uniform(self.lo, self.hi))
        if self.kind == "fixed":
            return float(self.value)
        return 1.0

    def to_dict(self) -> dict:
        if self.kind == "random":
            return {"mode": "random", "lo": self.lo, "hi": self.hi}
        if self.kind == "fixed":
            return {"mode": "fixed", "value": self.value}
        return {"mode": "hard"}


@dataclass(frozen=True)
class CompositionRule:
    probability: float
    allowed_types: frozenset

    def __post_init__(self) -> None:
        if not (0.0 <= self.probability <= 1.0):
            raise ValueError(f"rule probability must be in [0, 1], got {self.probability}")
        types = frozenset(self.allowed_types)
        if not types:
            raise ValueError("rule allowed_types must be nonempty")
        if not all(isinstance(t, LesionType) for t in types):
            raise ValueError("allowed_types must contain LesionType members")
        object.__setattr__(self, "allowed_types", types)


@dataclass(frozen=True)
class CompositionStrategy:
    """Probabilistic choice of which lesion types a synthetic image receives."""

    rules: tuple[CompositionRule, ...]

    def __post_init__(self) -> None:
        rules = tuple(self.rules)
        if not rules:
            raise ValueError("strategy needs at least one rule")
        total = sum(r.probability for r in rules)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"rule probabilities must sum to 1, got {total}")
        object.__setattr__(self, "rules", rules)

    @classmethod
    def single(cls, types: Iterable[LesionType]) -> "CompositionStrategy":
        return cls(rules=(CompositionRule(1.0, frozenset(types)),))

    @classmethod
    def dr_grades(cls) -> "CompositionStrategy":
        """Grade-conditioned ladder: mostly tiny-lesion-only images, with
        progressively richer type mixes on a small fraction."""
        ma, he, se, ex = LesionType.MA, LesionType.HE, LesionType.SE, LesionType.EX
        return cls(
            rules=(
                CompositionRule(0.80, frozenset({ma})),
                CompositionRule(0.10, frozenset({ma, he})),
                CompositionRule(0.05, frozenset({ma, he, se})),
                CompositionRule(0.05, frozenset({ma, he, se, ex})),
            )
        )

    def draw_index(self, rng: RngLike) -> int:
        u = float(as_generator(rng).random())
        acc = 0.0
        for i, rule in enumerate(self.rules):
            acc += rule.probability
            if u < acc:
                return i
        return len(self.rules) - 1

    def to_dict(self) -> dict:
        return {
            "rules": [
                {
                    "probability": r.probability,
                    "types": sorted(t.value for t in r.allowed_types),
                }
                for r in self.rules
            ]
        }


@dataclass(frozen=True)
class PasteRecord:
    """Provenance of one paste: which original region, how it was augmented,
    where it landed, and the blend coefficient used."""

    lesion_type: LesionType
    source_id: str
    component_id: int
    augmentation_log: tuple
    x: int
    y: int
    width: int
    height: int
    lam: float

    def to_dict(self) -> dict:
        return {
            "lesion_type": self.lesion_type.value,
            "source_id": self.source_id,
            "component_id": self.component_id,
            "augmentation_log": list(self.augmentation_log),
            "x": self.x,
            "y": self.y,
            "width": self.width,
            "height": self.height,
            "lam": self.lam,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PasteRecord":
        return cls(
            lesion_type=LesionType(d["lesion_type"]),
            source_id=d["source_id"],
            component_id=int(d["component_id"]),
            augmentation_log=tuple(d["augmentation_log"]),
            x=int(d["x"]),
            y=int(d["y"]),
            width=int(d["width"]),
            height=int(d["height"]),
            lam=float(d["lam"]),
        )


@dataclass(frozen=True, eq=False)
class SyntheticSample:
    image: Image
    paste_log: tuple[PasteRecord, ...]
    source_normal_id: str
    rule_index: int = 0
    label: int = 1

    def __post_init__(self) -> None:
        if len(self.paste_log) < 1:
            raise ValueError("a synthetic sample must record at least one paste")


def mixup_paste(
    base: np.ndarray, patch: LesionPatch, position: tuple[int, int], lam: float
) -> np.ndarray:
    """Blend a lesion patch into a float raster at the given top-left corner.

    Where the patch mask is set, output = (1 - lam) * base + lam * patch;
    elsewhere (including the unmasked rectangle corners) the base shows
    through untouched.
    """
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"blend coefficient must be in [0, 1], got {lam}")
    x, y = position
    ph, pw = patch.height, patch.width
    bh, bw = base.shape[:2]
    if x < 0 or y < 0 or x + pw > bw or y + ph > bh:
        raise ValueError(
            f"paste rectangle {pw}x{ph} at ({x}, {y}) exceeds base {bw}x{bh}"
        )
    base_channels = 1 if base.ndim == 2 else base.shape[2]
    if patch.pixels.channels != base_channels:
        raise ValueError(
            f"patch has {patch.pixels.channels} channels, base has {base_channels}"
        )
    out = np.array(base, dtype=np.float64, copy=True)
    region = out[y : y + ph, x : x + pw]
    m = patch.mask.bits.astype(np.float64)
    if base.ndim == 3:
        m = m[..., None]
    lesion = to_float(patch.pixels)
    out[y : y + ph, x : x + pw] = (1.0 - lam) * (m * region) + lam * (m * lesion) + (1.0 - m) * region
    return out


def choose_position(
    base_dims: tuple[int, int],
    patch_dims: tuple[int, int],
    placement_mask: Optional[BinaryMask],
    rng: RngLike,
    max_attempts: int = 100,
) -> tuple[int, int]:
    """Uniform top-left position keeping the patch fully in bounds.

    Dims are (height, width). With a placement mask, positions are rejection
    sampled until the patch center lands on the mask, falling back to an
    unconstrained draw after `max_attempts` failures.
    """
    bh, bw = base_dims
    ph, pw = patch_dims
    if pw > bw or ph > bh:
        raise ValueError(f"patch {pw}x{ph} does not fit in base {bw}x{bh}")
    gen = as_generator(rng)
    max_x = bw - pw
    max_y = bh - ph
    if placement_mask is not None:
        if (placement_mask.height, placement_mask.width) != (bh, bw):
            raise ValueError("placement mask does not match base dimensions")
        for _ in range(max_attempts):
            x = int(gen.integers(0, max_x + 1))
            y = int(gen.integers(0, max_y + 1))
            if placement_mask.bits[y + ph // 2, x + pw // 2]:
                return x, y
    x = int(gen.integers(0, max_x + 1))
    y = int(gen.integers(0, max_y + 1))
    return x, y


def synthesize_one(
    normal: Image,
    bank: LesionBank,
    spec: AugmentSpec,
    mode: MixUpMode,
    strategy: CompositionStrategy,
    rng: RngLike,
    placement_mask: Optional[BinaryMask] = None,
    source_id: str = "",
) -> SyntheticSample:
    """Synthesize one anomalous image from one normal image.

    Draw order is fixed (rule, paste count, patch indices, then per paste:
    augmentation, coefficient, position), so a single stream reproduces the
    output byte for byte.
    """
    gen = as_generator(rng)
    rule_index = strategy.draw_index(gen)
    rule = strategy.rules[rule_index]
    n_components = bank.component_count(rule.allowed_types)
    if n_components == 0:
        wanted = ",".join(sorted(t.value for t in rule.allowed_types))
        raise ValueError(f"bank has no original regions of the drawn types ({wanted})")
    n_pastes = sample_paste_count(n_components, gen)
    patches = resample_patches(bank, n_pastes, rule.allowed_types, gen)
    base = to_float(normal)
    records = []
    for patch in patches:
        augmented = apply_random(patch, spec, gen)
        lam = mode.draw(gen)
        x, y = choose_position(
            (normal.height, normal.width),
            (augmented.height, augmented.width),
            placement_mask,
            gen,
        )
        base = mixup_paste(base, augmented, (x, y), lam)
        records.append(
            PasteRecord(
                lesion_type=patch.lesion_type,
                source_id=patch.source_id,
                component_id=patch.component_id,
                augmentation_log=augmented.augmentation_log,
                x=x,
                y=y,
                width=augmented.width,
                height=augmented.height,
                lam=lam,
            )
        )
    image = quantize(base, depth=normal.depth, domain=normal.domain)
    return SyntheticSample(
        image=image,
        paste_log=tuple(records),
        source_normal_id=source_id,
        rule_index=rule_index,
    )


def load_normals(source: Union[str, Path]) -> list[tuple[str, Path]]:
    """Resolve a normals listing: a directory of PNGs (id = file stem) or a
    JSON manifest [{"id": ..., "path": ...}] with paths relative to it."""
    src = Path(source)
    if src.is_dir():
        entries = [(p.stem, p) for p in sorted(src.glob("*.png"))]
        if not entries:
            raise IOError(f"no .png files found in {src}")
        return entries
    data = json.loads(src.read_text())
    if not isinstance(data, list):
        raise ValueError(f"normals manifest must be a JSON list: {src}")
    entries = []
    for item in data:
        path = Path(item["path"])
        if not path.is_absolute():
            path = src.parent / path
        entries.append((str(item["id"]), path))
    return entries


def _synthesize_entry(
    image_id: str,
    path: Path,
    bank: LesionBank,
    config: "RunConfig",
) -> tuple[str, Image, SyntheticSample]:
    normal = read_image(path)
    mask = None
    if config.placement == "fov":
        mask = detect_fov(normal, threshold=config.fov_threshold)
    stream = RngStream(config.seed, stream_id_for("synth", image_id))
    sample = synthesize_one(
        normal,
        bank,
        config.augment,
        config.mixup,
        config.strategy,
        stream,
        placement_mask=mask,
        source_id=image_id,
    )
    return image_id, normal, sample


def synthesize_dataset(
    normals: Union[str, Path, Sequence[tuple[str, Path]]],
    bank: LesionBank,
    config: "RunConfig",
    out_dir: Union[str, Path],
    threads: int = 1,
    config_text: Optional[str] = None,
) -> list[dict]:
    """Materialize one synthetic anomalous image per normal image.

    Writes normal/<id>.png (label 0 pass-through), anomalous/<id>.png
    (label 1), a JSON-lines manifest, and the run configuration verbatim.
    Per-image RNG streams are derived from the image id, so the output is
    identical no matter the iteration order or thread count.
    """
    entries = load_normals(normals) if isinstance(normals, (str, Path)) else list(normals)
    ids = [image_id for image_id, _ in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("normal image ids must be unique")
    out = Path(out_dir)
    (out / "normal").mkdir(parents=True, exist_ok=True)
    (out / "anomalous").mkdir(parents=True, exist_ok=True)

    def work(entry: tuple[str, Path]) -> tuple[str, Image, SyntheticSample]:
        return _synthesize_entry(entry[0], entry[1], bank, config)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, entries))
    else:
        results = [work(e) for e in entries]

    records = []
    for image_id, normal, sample in sorted(results, key=lambda r: r[0]):
        normal_rel = f"normal/{image_id}.png"
        anom_rel = f"anomalous/{image_id}.png"
        write_image(normal, out / normal_rel)
        write_image(sample.image, out / anom_rel)
        records.append(
            {"path": normal_rel, "label": 0, "source": image_id, "paste_log": None}
        )
        records.append(
            {
                "path": anom_rel,
                "label": 1,
                "source": image_id,
                "rule_index": sample.rule_index,
                "paste_log": [r.to_dict() for r in sample.paste_log],
            }
        )
    lines = [json.dumps(r, sort_keys=True) for r in records]
    (out / DATASET_MANIFEST).write_text("\n".join(lines) + "\n")
    if config_text is None:
        config_text = config.to_json()
    (out / RUN_CONFIG_COPY).write_text(config_text)
    return records


def read_dataset_manifest(dataset_dir: Union[str, Path]) -> list[dict]:
    path = Path(dataset_dir) / DATASET_MANIFEST
    if not path.is_file():
        raise IOError(f"not a dataset directory (missing {DATASET_MANIFEST}): {dataset_dir}")
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
