"""Run configuration: a strict JSON schema that pins every random decision
of a synthesis run. Unknown keys are rejected so sweep configs cannot drift
silently."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

from .augment import AugmentOp, AugmentSpec, preset as augment_preset
from .lesion_bank import LesionType
from .preprocess import DEFAULT_FOV_THRESHOLD
from .synth import CompositionRule, CompositionStrategy, MixUpMode

PLACEMENT_MODES = ("unconstrained", "fov")


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    """Full declarative recipe for one synthesis run."""

    seed: int
    augment: AugmentSpec
    mixup: MixUpMode
    strategy: CompositionStrategy
    placement: str = "unconstrained"
    fov_threshold: float = DEFAULT_FOV_THRESHOLD

    def __post_init__(self) -> None:
        if self.placement not in PLACEMENT_MODES:
            raise ConfigError(
                f"placement: must be one of {'|'.join(PLACEMENT_MODES)}, got {self.placement!r}"
            )

    def to_json(self) -> str:
        data = {
            "seed": self.seed,
            "augment": {
                "ops": "+".join(op.value for op in sorted(self.augment.enabled_ops, key=_op_order))
                if self.augment.enabled_ops
                else "none",
                "rotation_range": list(self.augment.rotation_range),
                "scale_range": list(self.augment.scale_range),
                "contrast_range": list(self.augment.contrast_range),
                "brightness_range": list(self.augment.brightness_range),
                "hue_range": self.augment.hue_range,
                "saturation_range": list(self.augment.saturation_range),
            },
            "mixup": self.mixup.to_dict(),
            "strategy": self.strategy.to_dict(),
            "placement": self.placement,
            "fov_threshold": self.fov_threshold,
        }
        return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _op_order(op: AugmentOp) -> int:
    from .augment import OP_ORDER

    return OP_ORDER.index(op)


def _reject_unknown(data: dict, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def _require(data: dict, key: str, where: str) -> Any:
    if key not in data:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return data[key]


def _as_range(value: Any, where: str) -> tuple[float, float]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        raise ConfigError(f"{where}: expected [lo, hi] numbers, got {value!r}")
    return float(value[0]), float(value[1])


def _parse_augment(value: Any) -> AugmentSpec:
    if isinstance(value, str):
        try:
            return augment_preset(value)
        except ValueError as exc:
            raise ConfigError(f"augment: {exc}") from exc
    if not isinstance(value, dict):
        raise ConfigError(f"augment: expected preset name or object, got {type(value).__name__}")
    allowed = {
        "ops",
        "rotation_range",
        "scale_range",
        "contrast_range",
        "brightness_range",
        "hue_range",
        "saturation_range",
    }
    _reject_unknown(value, allowed, "augment")
    ops_value = value.get("ops", "none")
    if not isinstance(ops_value, str):
        raise ConfigError(f"augment.ops: expected string, got {type(ops_value).__name__}")
    try:
        base = augment_preset(ops_value)
    except ValueError as exc:
        raise ConfigError(f"augment.ops: {exc}") from exc
    kwargs: dict[str, Any] = {"enabled_ops": base.enabled_ops}
    for key in ("rotation_range", "scale_range", "contrast_range", "brightness_range", "saturation_range"):
        if key in value:
            kwargs[key] = _as_range(value[key], f"augment.{key}")
    if "hue_range" in value:
        hue = value["hue_range"]
        if not isinstance(hue, (int, float)) or isinstance(hue, bool):
            raise ConfigError(f"augment.hue_range: expected number, got {hue!r}")
        kwargs["hue_range"] = float(hue)
    try:
        return AugmentSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"augment: {exc}") from exc


def _parse_mixup(value: Any) -> MixUpMode:
    if isinstance(value, str):
        key = value.strip().lower()
        if key == "random":
            return MixUpMode.random()
        if key in ("hard", "none"):
            return MixUpMode.hard_paste()
        if key.startswith("fixed:"):
            try:
                return MixUpMode.fixed(float(key.split(":", 1)[1]))
            except ValueError as exc:
                raise ConfigError(f"mixup: {exc}") from exc
        raise ConfigError(f"mixup: unknown preset {value!r} (use random|hard|fixed:<value>)")
    if not isinstance(value, dict):
        raise ConfigError(f"mixup: expected preset name or object, got {type(value).__name__}")
    mode = _require(value, "mode", "mixup")
    try:
        if mode == "random":
            _reject_unknown(value, {"mode", "lo", "hi"}, "mixup")
            return MixUpMode.random(float(value.get("lo", 0.5)), float(value.get("hi", 0.8)))
        if mode == "fixed":
            _reject_unknown(value, {"mode", "value"}, "mixup")
            return MixUpMode.fixed(float(_require(value, "value", "mixup")))
        if mode == "hard":
            _reject_unknown(value, {"mode"}, "mixup")
            return MixUpMode.hard_paste()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"mixup: {exc}") from exc
    raise ConfigError(f"mixup.mode: expected random|fixed|hard, got {mode!r}")


def _parse_types(value: Any, where: str) -> frozenset:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected nonempty list of lesion types")
    types = set()
    for item in value:
        try:
            types.add(LesionType(item))
        except ValueError as exc:
            raise ConfigError(
                f"{where}: unknown lesion type {item!r} "
                f"(valid: {', '.join(t.value for t in LesionType)})"
            ) from exc
    return frozenset(types)


def _parse_strategy(value: Any) -> CompositionStrategy:
    if isinstance(value, str):
        key = value.strip().lower()
        if key == "dr-grades":
            return CompositionStrategy.dr_grades()
        if key == "all-types":
            return CompositionStrategy.single(frozenset(LesionType))
        raise ConfigError(f"strategy: unknown preset {value!r} (use dr-grades|all-types)")
    if not isinstance(value, dict):
        raise ConfigError(f"strategy: expected preset name or object, got {type(value).__name__}")
    _reject_unknown(value, {"rules"}, "strategy")
    rules_value = _require(value, "rules", "strategy")
    if not isinstance(rules_value, list) or not rules_value:
        raise ConfigError("strategy.rules: expected nonempty list")
    rules = []
    for i, rule in enumerate(rules_value):
        where = f"strategy.rules[{i}]"
        if not isinstance(rule, dict):
            raise ConfigError(f"{where}: expected object")
        _reject_unknown(rule, {"probability", "types"}, where)
        prob = _require(rule, "probability", where)
        if not isinstance(prob, (int, float)) or isinstance(prob, bool):
            raise ConfigError(f"{where}.probability: expected number, got {prob!r}")
        types = _parse_types(_require(rule, "types", where), f"{where}.types")
        try:
            rules.append(CompositionRule(float(prob), types))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    try:
        return CompositionStrategy(tuple(rules))
    except ValueError as exc:
        raise ConfigError(f"strategy.rules: {exc}") from exc


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root: expected object, got {type(data).__name__}")
    allowed = {"seed", "augment", "mixup", "strategy", "placement", "fov_threshold"}
    _reject_unknown(data, allowed, "config root")
    seed = _require(data, "seed", "config root")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed: expected integer, got {seed!r}")
    if not (0 <= seed < 2**64):
        raise ConfigError(f"seed: expected 64-bit unsigned integer, got {seed}")
    augment = _parse_augment(data.get("augment", "paper-best"))
    mixup = _parse_mixup(data.get("mixup", "random"))
    strategy = _parse_strategy(data.get("strategy", "all-types"))
    placement = data.get("placement", "unconstrained")
    if placement not in PLACEMENT_MODES:
        raise ConfigError(
            f"placement: must be one of {'|'.join(PLACEMENT_MODES)}, got {placement!r}"
        )
    threshold = data.get("fov_threshold", DEFAULT_FOV_THRESHOLD)
    if not isinstance(threshold, (int, float)) or isinstance(threshold, bool):
        raise ConfigError(f"fov_threshold: expected number, got {threshold!r}")
    if not (0.0 <= threshold < 1.0):
        raise ConfigError(f"fov_threshold: expected value in [0, 1), got {threshold}")
    return RunConfig(
        seed=seed,
        augment=augment,
        mixup=mixup,
        strategy=strategy,
        placement=placement,
        fov_threshold=float(threshold),
    )


def validate_config(text: str) -> RunConfig:
    """Parse and validate raw JSON config text; raises ConfigError naming the
    offending field."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(data)


def load_config(path: Union[str, Path]) -> tuple[RunConfig, str]:
    """Read a config file, returning the parsed config and the verbatim text
    (the text is copied unmodified into every artifact directory)."""
    text = Path(path).read_text()
    return validate_config(text), text
