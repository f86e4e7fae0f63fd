"""Experiment configuration: dataclass sections, YAML parsing with strict key
checking, dotted overrides and serialisation."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

import yaml

from amafed.aggregator import MetaObjectiveCfg
from amafed.dataio import PartitionSpec
from amafed.losses import LossConfig
from amafed.model import TrainConfig

MODES = ("amafed", "fedavg")
ATTACKS = ("label_flip", "sign_flip")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 4
    n_samples: int = 4000
    dim: int = 8
    separation: float = 6.0
    priors: tuple[float, ...] | None = None
    seed: int | None = None  # None: use the master seed


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # "synthetic" or a CSV path
    label_column: str = "label"
    normal_class: int = 0
    train_ratio: float = 0.8
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)


@dataclass(frozen=True)
class PartitionConfig:
    n_clients: int = 10
    alpha: float = 0.3
    seed: int | None = None  # None: use the master seed
    val_fraction: float = 0.2

    def __post_init__(self):
        self.spec(0)  # validate eagerly

    def spec(self, master_seed: int) -> PartitionSpec:
        seed = master_seed if self.seed is None else self.seed
        return PartitionSpec(self.n_clients, self.alpha, seed, self.val_fraction)


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = (64, 32)
    activation: str = "relu"


@dataclass(frozen=True)
class PoisonSpec:
    clients: tuple[int, ...] = ()
    attack: str = "sign_flip"

    def __post_init__(self):
        if self.attack not in ATTACKS:
            raise ConfigError(f"unknown attack {self.attack!r}; expected one of {ATTACKS}")


@dataclass(frozen=True)
class FederationSettings:
    rounds: int = 10
    mode: str = "amafed"
    target_f1: float = 0.95
    poison: PoisonSpec | None = None

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("federation.rounds must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"federation.mode must be one of {MODES}")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "results"


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    meta: MetaObjectiveCfg = field(default_factory=MetaObjectiveCfg)
    federation: FederationSettings = field(default_factory=FederationSettings)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return to_document(self)

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, seed=seed)


# Document keys that differ from the dataclass attribute names.
_RENAMES = {
    (TrainConfig, "lambda"): "lam",
    (PartitionConfig, "K"): "n_clients",
}
_REVERSE = {(cls, attr): key for (cls, key), attr in _RENAMES.items()}
# Internal fields that are not user-settable (seed is derived per client,
# weight_decay comes from loss.alpha).
_HIDDEN = {(TrainConfig, "seed"), (TrainConfig, "weight_decay")}


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _section_fields(cls):
    return {f.name: f for f in fields(cls) if (cls, f.name) not in _HIDDEN}


def _doc_key(cls, attr):
    return _REVERSE.get((cls, attr), attr)


def to_document(cfg: ExperimentConfig) -> dict:
    """Nested plain dict using the config-file key names."""

    def convert(obj):
        out = {}
        for name in _section_fields(type(obj)):
            value = getattr(obj, name)
            if is_dataclass(value):
                value = convert(value)
            else:
                value = _plain(value)
            out[_doc_key(type(obj), name)] = value
        return out

    return convert(cfg)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_document(cfg), sort_keys=False)


def _line_of(node) -> int | None:
    return node.start_mark.line + 1 if node is not None else None


def _find_child(node, key):
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            if k.value == key:
                return k, v
    return None, None


def _coerce(value, annotation: str, where: str, line):
    """Light type checking against the dataclass field's annotation string."""
    ann = annotation.replace(" ", "")
    if value is None:
        if "None" in ann:
            return None
        raise ConfigError(f"{where} may not be null", line)
    if ann.startswith("tuple"):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list", line)
        return tuple(value)
    if ann.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer", line)
        return value
    if ann.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number", line)
        return float(value)
    if ann.startswith("bool"):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false", line)
        return value
    if ann.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string", line)
        return value
    return value


_NESTED = {
    "data": DataConfig,
    "partition": PartitionConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "loss": LossConfig,
    "meta": MetaObjectiveCfg,
    "federation": FederationSettings,
    "output": OutputConfig,
    "synthetic": SyntheticSpec,
    "poison": PoisonSpec,
}


def _build(cls, data, node, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping", _line_of(node))
    allowed = {_doc_key(cls, name): f for name, f in _section_fields(cls).items()}
    kwargs = {}
    for key, value in data.items():
        key_node, value_node = _find_child(node, key)
        where = f"{path}.{key}" if path else key
        if key not in allowed:
            raise ConfigError(
                f"unknown key {where!r} (allowed: {', '.join(sorted(allowed))})",
                _line_of(key_node),
            )
        f = allowed[key]
        nested = _NESTED.get(f.name)
        if nested is not None and value is not None:
            kwargs[f.name] = _build(nested, value, value_node, where)
        else:
            kwargs[f.name] = _coerce(value, str(f.type), where, _line_of(value_node))
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        if exc.line is None:
            message = str(exc) if path and str(exc).startswith(path) else f"{path or 'config'}: {exc}"
            raise ConfigError(message, _line_of(node)) from exc
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}", _line_of(node)) from exc


def parse_config(text: str) -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {exc}", mark.line + 1 if mark else None) from exc
    if data is None:
        data = {}
    return _build(ExperimentConfig, data, node, "")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply ``section.key=value`` strings; values are parsed as YAML scalars."""
    doc = to_document(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: {exc}") from exc
        target = doc
        parts = dotted.strip().split(".")
        for part in parts[:-1]:
            if not isinstance(target.get(part), dict):
                if part in target and target[part] is None:
                    target[part] = {}
                else:
                    raise ConfigError(f"override {dotted!r}: no section {part!r}")
            target = target[part]
        target[parts[-1]] = value
    try:
        return parse_config(yaml.safe_dump(doc, sort_keys=False))
    except ConfigError as exc:
        # Line numbers would point into the regenerated document, not the user's file.
        message = str(exc).split(": ", 1)[1] if exc.line is not None else str(exc)
        raise ConfigError(f"after overrides: {message}") from exc


def config_from_document(doc: dict[str, Any]) -> ExperimentConfig:
    return parse_config(yaml.safe_dump(doc, sort_keys=False))
