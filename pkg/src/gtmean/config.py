"""JSON configuration for the command-line tools.

The file mirrors the library dataclasses as nested objects::

    {"gt_mean": {...}, "train": {..., "kind": {...}, "strategy": {...}},
     "sweep": {..., "kind": {...}}, "degradation": {...}}

Every key is optional. Unknown keys and invalid values are rejected with the
dotted path of the offending field. Sigma values of the sweep keep the exact
decimal text they were written with, because that text names output files.
"""

from __future__ import annotations

import dataclasses
import decimal
import enum
import json
from dataclasses import dataclass, field
from typing import Any

from .imaging import DomainError
from .landscape import SweepSpec
from .losses import GtMeanConfig, LambdaMode, LossKind
from .trainer import DegradationSpec, Strategy, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CliConfig:
    gt_mean: GtMeanConfig = field(default_factory=GtMeanConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepSpec = field(default_factory=lambda: SweepSpec(sigma_list=("0.05", "0.1", "0.2")))
    degradation: DegradationSpec = field(default_factory=DegradationSpec)

    def train_config(self) -> TrainConfig:
        """The training config with the shared GT-mean and degradation sections applied."""
        return dataclasses.replace(self.train, gt_cfg=self.gt_mean, degradation=self.degradation)


# fields that are filled from other sections and never appear in the file
_HIDDEN = {(TrainConfig, "gt_cfg"), (TrainConfig, "degradation")}


def _field_types(cls) -> dict[str, Any]:
    import typing

    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls) if (cls, f.name) not in _HIDDEN}


def _convert(value, typ, path: str):
    if dataclasses.is_dataclass(typ):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return _build(typ, value, path)
    if isinstance(typ, type) and issubclass(typ, enum.Enum):
        try:
            return typ(value)
        except ValueError:
            choices = ", ".join(m.value for m in typ)
            raise ConfigError(f"{path}: {value!r} is not one of {choices}") from None
    if isinstance(value, bool):
        raise ConfigError(f"{path}: booleans are not accepted")
    if typ is int:
        if not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if typ is float:
        if not isinstance(value, (int, float, decimal.Decimal)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    if typ is tuple:
        # sigma list: numbers keep their decimal text
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected a non-empty list")
        out = []
        for i, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, (int, str, decimal.Decimal)):
                raise ConfigError(f"{path}[{i}]: expected a number")
            text = str(item)
            try:
                number = float(text)
            except ValueError:
                raise ConfigError(f"{path}[{i}]: {text!r} is not a number") from None
            if not number >= 0 or number == float("inf"):
                raise ConfigError(f"{path}[{i}]: sigma must be finite and >= 0")
            out.append(text)
        return tuple(out)
    raise ConfigError(f"{path}: unsupported field type {typ}")


def _build(cls, data: dict, path: str):
    types = _field_types(cls)
    unknown = sorted(set(data) - set(types))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key(s): {', '.join(where + k for k in unknown)}")
    kwargs = {k: _convert(v, types[k], f"{path}.{k}" if path else k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except DomainError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def parse_config(text: str) -> CliConfig:
    try:
        data = json.loads(text, parse_float=decimal.Decimal)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return _build(CliConfig, data, "")


def load_config(path) -> CliConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _to_json(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _to_json(getattr(obj, k)) for k in sorted(_field_types(type(obj)))}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, tuple):
        return [str(x) for x in obj]
    return obj


def dump_config(cfg: CliConfig) -> str:
    """Canonical JSON: sorted keys, every default written out."""
    return json.dumps(_to_json(cfg), indent=2, sort_keys=True) + "\n"


__all__ = ["CliConfig", "ConfigError", "parse_config", "load_config", "dump_config", "LambdaMode", "LossKind", "Strategy"]
