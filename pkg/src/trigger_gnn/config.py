"""Run configuration: defaults, key-value files, environment and flag overrides.

Config files hold one ``key = value`` pair per line; ``#`` starts a comment.
Keys are :class:`RunConfig` field names. Precedence, lowest first: field
defaults, config file, ``TRIGGER_GNN_CHECKPOINT_DIR`` (checkpoint dir only),
command-line flags.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

CHECKPOINT_ENV = "TRIGGER_GNN_CHECKPOINT_DIR"

ABLATIONS = ("no_trigger", "no_global_node", "no_lexicon_edges", "no_sequential_edges",
             "unidirectional", "no_crf")

# fields that change the parameter layout or the forward computation
ARCHITECTURE_FIELDS = ("embed_dim", "hidden_dim", "steps", "global_init", "trigger_hidden_dim",
                       "lowercase") + ABLATIONS

PATH_FIELDS = ("train", "dev", "test", "triggers", "lexicon", "embeddings")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    train: Optional[str] = None
    dev: Optional[str] = None
    test: Optional[str] = None
    triggers: Optional[str] = None
    lexicon: Optional[str] = None
    embeddings: Optional[str] = None
    checkpoint_dir: str = "checkpoints"

    lr: float = 2e-4
    trigger_lr: Optional[float] = None
    embed_dim: int = 150
    hidden_dim: int = 150
    trigger_hidden_dim: Optional[int] = None
    dropout: float = 0.4
    aggregation_dropout: float = 0.3
    lambda_match: float = 1.3
    margin: float = 1.0
    steps: int = 3
    k_triggers: int = 3
    batch_size: int = 10
    epochs: int = 100
    trigger_epochs: int = 20
    patience: int = 10
    seed: int = 0
    global_init: str = "mean"
    lowercase: bool = True
    train_fraction: float = 1.0

    no_trigger: bool = False
    no_global_node: bool = False
    no_lexicon_edges: bool = False
    no_sequential_edges: bool = False
    unidirectional: bool = False
    no_crf: bool = False

    def __post_init__(self):
        if not 1 <= self.steps <= 6:
            raise ConfigError(f"steps must lie in 1..6, got {self.steps}")
        if self.global_init not in ("mean", "sum"):
            raise ConfigError(f"global_init must be 'mean' or 'sum', got {self.global_init!r}")
        if not 0.0 <= self.dropout < 1.0 or not 0.0 <= self.aggregation_dropout < 1.0:
            raise ConfigError("dropout rates must lie in [0, 1)")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1], got {self.train_fraction}")
        for name in ("lr", "margin", "embed_dim", "hidden_dim", "k_triggers", "batch_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0 or self.trigger_epochs < 0 or self.patience < 1:
            raise ConfigError("epochs must be non-negative and patience at least 1")

    def with_overrides(self, **values) -> "RunConfig":
        return replace(self, **coerce(values))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def architecture(self) -> Dict[str, Any]:
        arch = {name: getattr(self, name) for name in ARCHITECTURE_FIELDS}
        arch["trigger_hidden_dim"] = self.trigger_hidden_dim or self.hidden_dim
        return arch

    def config_hash(self) -> str:
        return architecture_hash(self.architecture())

    def check_paths(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"missing required path '{name}'")
            if not Path(value).exists():
                raise ConfigError(f"{name} path does not exist: {value}")

    def active_ablations(self):
        return [name for name in ABLATIONS if getattr(self, name)]


def architecture_hash(arch: Mapping[str, Any]) -> str:
    blob = json.dumps(dict(arch), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(name: str, raw: Any) -> Any:
    if name not in _TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    if not isinstance(raw, str):
        return raw
    kind = _TYPES[name]
    text = raw.strip()
    if "Optional" in kind and text.lower() in ("", "none", "null"):
        return None
    try:
        if "bool" in kind:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return text


def coerce(values: Mapping[str, Any]) -> Dict[str, Any]:
    return {k: _convert(k, v) for k, v in values.items()}


def parse_config_text(text: str) -> Dict[str, Any]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _convert(key, value)
    return out


def format_config(config: RunConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None,
                environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    values: Dict[str, Any] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    env = os.environ if environ is None else environ
    if env.get(CHECKPOINT_ENV):
        values["checkpoint_dir"] = env[CHECKPOINT_ENV]
    values.update(coerce({k: v for k, v in (overrides or {}).items() if v is not None}))
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
