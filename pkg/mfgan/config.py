"""Run configuration: flat ``key=value`` files parsed with python-dotenv.

Example::

    # data
    interactions=data/interactions.tsv
    factors=data/factors.tsv
    factor_specs=category:categorical,price:numeric:50,popularity:popularity
    k_core=5

    # model / training (any TrainingConfig field)
    d=50
    lr=0.001
    variant=full

Keys are case-insensitive. Unknown keys are rejected. ``MFGAN_*`` variables
from the environment (or a ``.env`` file) fill in keys the file leaves out.
"""

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import dotenv_values, load_dotenv

from .discriminator import FactorKind, FactorSpec
from .errors import ConfigError
from .trainer import TrainingConfig

load_dotenv()

ENV_PREFIX = "MFGAN_"
EFFECTIVE_CONFIG_NAME = "config.effective"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    interactions: str = ""
    factors: str = ""
    factor_specs: str = ""
    k_core: int = 5
    max_users: int = 0
    out: str = "runs/mfgan"
    manifest: str = ""
    checkpoint: str = ""
    checkpoint_every: int = 1
    training: TrainingConfig = field(default_factory=TrainingConfig)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def manifest_dir(self) -> Path:
        return Path(self.manifest) if self.manifest else self.out_dir / "manifest"

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else self.out_dir / "checkpoints" / "latest.ckpt"

    @property
    def ledger_path(self) -> Path:
        return self.out_dir / "train.log"

    def factor_list(self) -> List[FactorSpec]:
        return parse_factor_specs(self.factor_specs)


def parse_factor_specs(text: str) -> List[FactorSpec]:
    """``name:kind[:bins]`` entries separated by commas."""
    specs = []
    for entry in (e.strip() for e in text.split(",")):
        if not entry:
            continue
        parts = entry.split(":")
        if len(parts) not in (2, 3) or not parts[0]:
            raise ConfigError(f"bad factor spec {entry!r}; expected name:kind[:bins]")
        try:
            kind = FactorKind(parts[1])
        except ValueError:
            raise ConfigError(f"factor {parts[0]}: unknown kind {parts[1]!r}") from None
        try:
            bins = int(parts[2]) if len(parts) == 3 else 50
        except ValueError:
            raise ConfigError(f"factor {parts[0]}: bin count must be an integer") from None
        specs.append(FactorSpec(parts[0], kind, bins))
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate factor names in {text!r}")
    return specs


def _convert(key: str, raw: str, annotation):
    kind = annotation if isinstance(annotation, type) else {"int": int, "float": float, "bool": bool}.get(
        str(annotation), str)
    raw = "" if raw is None else str(raw).strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None
    return raw


def _field_types(cls) -> Dict[str, object]:
    return {f.name: f.type for f in fields(cls) if f.name != "training"}


def apply_values(config: RunConfig, values: Dict[str, Optional[str]]) -> RunConfig:
    run_types = _field_types(RunConfig)
    train_types = _field_types(TrainingConfig)
    for key, raw in values.items():
        name = key.strip().lower()
        if name in run_types:
            setattr(config, name, _convert(name, raw, run_types[name]))
        elif name in train_types:
            setattr(config.training, name, _convert(name, raw, train_types[name]))
        else:
            raise ConfigError(f"unknown config key: {key}")
    return config


def _environment_values() -> Dict[str, str]:
    known = set(_field_types(RunConfig)) | set(_field_types(TrainingConfig))
    values = {}
    for key, value in os.environ.items():
        if key.startswith(ENV_PREFIX) and key[len(ENV_PREFIX):].lower() in known:
            values[key[len(ENV_PREFIX):].lower()] = value
    return values


def load_config(path=None, overrides: Optional[Dict[str, object]] = None, use_env: bool = True) -> RunConfig:
    """Defaults, then ``MFGAN_*`` environment, then the file, then ``overrides``."""
    config = RunConfig()
    if use_env:
        apply_values(config, _environment_values())
    if path:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        apply_values(config, dict(dotenv_values(path)))
    if overrides:
        apply_values(config, {k: str(v) for k, v in overrides.items() if v is not None})
    return validate_config(config)


def validate_config(config: RunConfig) -> RunConfig:
    if config.k_core < 1:
        raise ConfigError(f"k_core must be >= 1, got {config.k_core}")
    if config.max_users < 0:
        raise ConfigError("max_users must be >= 0")
    if config.checkpoint_every < 1:
        raise ConfigError("checkpoint_every must be >= 1")
    config.factor_list()
    config.training.validate()
    return config


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def dump_config(config: RunConfig) -> str:
    """Sorted ``key=value`` lines that :func:`load_config` reads back unchanged."""
    values = {name: getattr(config, name) for name in _field_types(RunConfig)}
    values.update({name: getattr(config.training, name) for name in _field_types(TrainingConfig)})
    return "".join(f"{k}={_format(values[k])}\n" for k in sorted(values))


def write_effective_config(config: RunConfig, out_dir=None) -> str:
    out = Path(out_dir) if out_dir else config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / EFFECTIVE_CONFIG_NAME
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_config(config))
    return str(path)
