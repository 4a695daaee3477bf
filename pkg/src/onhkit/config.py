"""Run configuration: one JSON document with strict key checking.

Sections (all optional, defaults apply): roi, augment, model, optimizer,
eval, synth. Unknown keys abort with their JSON path so typos never pass
silently.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .augment import AugmentSpec
from .climbers import ClimberConfig, preset_config
from .network import tiny_cnn_arch
from .roi import RoiConfig
from .synth import SynthSpec


class ConfigError(ValueError):
    """Raised for malformed or unknown configuration content."""


@dataclass(frozen=True)
class ModelConfig:
    arch: object = "tiny-cnn"
    input_side: int = 32
    freeze_layers: int = 0

    def arch_spec(self) -> list[str]:
        if self.arch == "tiny-cnn":
            return tiny_cnn_arch(self.input_side)
        if isinstance(self.arch, (list, tuple)):
            return list(self.arch)
        raise ConfigError(f"model.arch: expected 'tiny-cnn' or a layer list, got {self.arch!r}")


@dataclass(frozen=True)
class EvalConfig:
    k: int = 5
    seed: int = 0
    threshold: float = 0.5


@dataclass(frozen=True)
class SynthConfig:
    spec: SynthSpec
    count: int = 100


@dataclass(frozen=True)
class RunConfig:
    roi: RoiConfig
    augment: AugmentSpec
    model: ModelConfig
    optimizer: ClimberConfig
    eval: EvalConfig
    synth: SynthConfig


_TUPLE_FIELDS = {
    "rotation_deg",
    "shear",
    "zoom_frac",
    "shift_frac",
    "disc_radius",
    "cdr",
    "vessel_count",
}


def _build(cls, payload, path, extra_allowed=()):
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in payload.items():
        if key in extra_allowed:
            continue
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown key")
        if key in _TUPLE_FIELDS:
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise ConfigError(f"{path}.{key}: expected a [lo, hi] pair")
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _build_optimizer(payload):
    payload = dict(payload)
    preset = payload.pop("preset", None)
    names = {f.name for f in dataclasses.fields(ClimberConfig)}
    for key in payload:
        if key not in names:
            raise ConfigError(f"optimizer.{key}: unknown key")
    try:
        if preset is not None:
            return preset_config(preset, **payload)
        return ClimberConfig(**payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"optimizer: {exc}") from None


def _build_synth(payload):
    payload = dict(payload)
    count = payload.pop("count", 100)
    if not isinstance(count, int) or count < 0:
        raise ConfigError("synth.count: expected a non-negative integer")
    return SynthConfig(spec=_build(SynthSpec, payload, "synth"), count=count)


_SECTIONS = ("roi", "augment", "model", "optimizer", "eval", "synth")


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a JSON object")
    for key in doc:
        if key not in _SECTIONS:
            raise ConfigError(f"{key}: unknown section")
        if not isinstance(doc[key], dict):
            raise ConfigError(f"{key}: expected an object")
    cfg = RunConfig(
        roi=_build(RoiConfig, doc.get("roi", {}), "roi"),
        augment=_build(AugmentSpec, doc.get("augment", {}), "augment"),
        model=_build(ModelConfig, doc.get("model", {}), "model"),
        optimizer=_build_optimizer(doc.get("optimizer", {})),
        eval=_build(EvalConfig, doc.get("eval", {}), "eval"),
        synth=_build_synth(doc.get("synth", {})),
    )
    for section, obj in (
        ("roi", cfg.roi),
        ("augment", cfg.augment),
        ("optimizer", cfg.optimizer),
        ("synth", cfg.synth.spec),
    ):
        try:
            obj.validate()
        except ValueError as exc:
            raise ConfigError(f"{section}: {exc}") from None
    if cfg.eval.k < 2:
        raise ConfigError("eval.k: must be at least 2")
    if not 0.0 <= cfg.eval.threshold <= 1.0:
        raise ConfigError("eval.threshold: must lie in [0, 1]")
    if cfg.model.freeze_layers < 0:
        raise ConfigError("model.freeze_layers: must be non-negative")
    cfg.model.arch_spec()
    return cfg


def load_run_config(path=None) -> RunConfig:
    """Parse a JSON run config; None loads pure defaults."""
    if path is None:
        return run_config_from_dict({})
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return run_config_from_dict(doc)
