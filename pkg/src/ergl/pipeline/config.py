"""Training configuration and the ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Union

from ..encoder import AUDIOSET_CLASSES, BACKBONE_PROFILES
from ..errors import ConfigurationError, MalformedFileError
from ..model import ModelConfig


@dataclass
class TrainConfig:
    n_events: int = 25
    u_layers: int = 2
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 0.01
    epochs: int = 300
    val_fraction: float = 0.30
    seed: int = 0
    profile: str = "full"
    dropout_conv: float = 0.2
    dropout_head: float = 0.5
    use_edges: bool = True
    manifest: str = ""
    labels: str = ""
    out_dir: str = "runs/ergl"

    def validate(self) -> "TrainConfig":
        if not 2 <= self.n_events <= AUDIOSET_CLASSES:
            raise ConfigurationError(f"n_events must be in [2, {AUDIOSET_CLASSES}], got {self.n_events}")
        if self.u_layers < 1:
            raise ConfigurationError(f"u_layers must be >= 1, got {self.u_layers}")
        if not 0 < self.val_fraction < 1:
            raise ConfigurationError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.batch_size < 2:
            raise ConfigurationError(f"batch_size must be >= 2 (batch norm), got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.profile not in BACKBONE_PROFILES:
            raise ConfigurationError(f"unknown profile {self.profile!r}; choose from {sorted(BACKBONE_PROFILES)}")
        for name in ("dropout_conv", "dropout_head"):
            p = getattr(self, name)
            if not 0 <= p < 1:
                raise ConfigurationError(f"{name} must be in [0, 1), got {p}")
        return self

    def model_config(self, n_scenes: int) -> ModelConfig:
        return ModelConfig(
            n_events=self.n_events,
            n_scenes=n_scenes,
            u_layers=self.u_layers,
            profile=self.profile,
            dropout_conv=self.dropout_conv,
            dropout_head=self.dropout_head,
            use_edges=self.use_edges,
        )

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "TrainConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigurationError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**{k: _coerce(known[k], v) for k, v in values.items()})

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(field: dataclasses.Field, value: Any) -> Any:
    kind = field.type if isinstance(field.type, str) else field.type.__name__
    if not isinstance(value, str):
        return value
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            low = value.strip().lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {value!r}")
    except ValueError as exc:
        raise ConfigurationError(f"config key {field.name}: {exc}") from None
    return value


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MalformedFileError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise MalformedFileError(f"{source}:{lineno}: empty key")
        values[key] = value
    return values


def load_config(path: Union[str, Path, None] = None, **overrides) -> TrainConfig:
    """Read a config file (if any) and apply non-None keyword overrides on top."""
    values: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(), str(path)))
        base = path.parent
        for key in ("manifest", "labels", "out_dir"):
            if key in values and values[key] and not Path(values[key]).is_absolute():
                values[key] = str(base / values[key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(values).validate()


def dump_config(config: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.to_dict().items())
