"""Pipeline configuration loaded from YAML, with dotted command-line overrides."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from datetime import date
from pathlib import Path
from typing import Any

import yaml

from .embed import SkipGramConfig
from .han import HanConfig
from .ner import NerConfig
from .synthetic import SyntheticConfig


class ConfigError(ValueError):
    pass


@dataclass
class Paths:
    reports: str | None = None
    brat_dir: str | None = None
    embeddings: str | None = None
    sentence_model: str | None = None
    ner_model: str | None = None
    predictions: str | None = None
    out_dir: str | None = None


@dataclass
class EmbeddingSettings:
    min_count: int = 1
    dim: int = 50
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    min_lr: float = 1e-4
    batch_size: int = 256

    def skipgram(self, seed: int) -> SkipGramConfig:
        d = asdict(self)
        d.pop("min_count")
        return SkipGramConfig(seed=seed, **d)


@dataclass
class CrossValidationSettings:
    folds: int = 5


@dataclass
class ExtractSettings:
    chunk_size: int = 256
    decode: str | None = None
    threshold: float | None = None


@dataclass
class AdherenceSettings:
    grace_days: int = 0
    dataset_end: date | None = None


@dataclass
class PipelineConfig:
    seed: int | None = None
    paths: Paths = field(default_factory=Paths)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    embeddings: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    han: HanConfig = field(default_factory=HanConfig)
    ner: NerConfig = field(default_factory=NerConfig)
    ner_cv: CrossValidationSettings = field(default_factory=CrossValidationSettings)
    extract: ExtractSettings = field(default_factory=ExtractSettings)
    adherence: AdherenceSettings = field(default_factory=AdherenceSettings)
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def path(self, name: str) -> Path | None:
        value = getattr(self.paths, name)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required (set `seed:` in the config or pass --seed)")
        return self.seed

    def require_input(self, name: str, value: str | Path | None = None) -> Path:
        p = Path(value) if value is not None else self.path(name)
        if p is None:
            raise ConfigError(f"paths.{name} is not set")
        if not p.exists():
            raise ConfigError(f"paths.{name}: {p} does not exist")
        return p


_SECTIONS = {
    "paths": Paths,
    "synthetic": SyntheticConfig,
    "embeddings": EmbeddingSettings,
    "han": HanConfig,
    "ner": NerConfig,
    "ner_cv": CrossValidationSettings,
    "extract": ExtractSettings,
    "adherence": AdherenceSettings,
}


def _section(cls, name: str, values: Any):
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    unknown = set(values) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    try:
        if hasattr(cls, "from_dict"):
            return cls.from_dict(values)
        obj = cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: {e}") from e
    return obj


def _coerce_date(value) -> date | None:
    if value is None or isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError as e:
        raise ConfigError(f"adherence.dataset_end: {e}") from e


def build_config(raw: dict | None, base_dir: Path | None = None) -> PipelineConfig:
    raw = dict(raw or {})
    unknown = set(raw) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    seed = raw.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise ConfigError("seed must be a non-negative integer")
    parts = {name: _section(cls, name, raw.get(name)) for name, cls in _SECTIONS.items()}
    adh = parts["adherence"]
    adh.dataset_end = _coerce_date(adh.dataset_end)
    if not isinstance(adh.grace_days, int) or adh.grace_days < 0:
        raise ConfigError("adherence.grace_days must be a non-negative integer")
    if parts["extract"].chunk_size < 1:
        raise ConfigError("extract.chunk_size must be >= 1")
    if parts["ner_cv"].folds < 0 or parts["ner_cv"].folds == 1:
        raise ConfigError("ner_cv.folds must be 0 (off) or >= 2")
    if parts["embeddings"].min_count < 1:
        raise ConfigError("embeddings.min_count must be >= 1")
    return PipelineConfig(seed=seed, base_dir=base_dir or Path.cwd(), **parts)


def apply_override(raw: dict, assignment: str) -> None:
    """Apply ``section.key=value`` (value parsed as YAML) to a raw config dict."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} walks into a non-mapping")
    try:
        node[parts[-1]] = yaml.safe_load(value)
    except yaml.YAMLError as e:
        raise ConfigError(f"override {key!r}: {e}") from e


def load_config(path: str | Path | None, overrides: list[str] | tuple[str, ...] = ()) -> PipelineConfig:
    raw: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        base = path.resolve().parent
    for o in overrides:
        apply_override(raw, o)
    return build_config(raw, base)


def dump_config(cfg: PipelineConfig) -> str:
    """Canonical YAML of the effective configuration (paths as given)."""
    d = {"seed": cfg.seed}
    for name in _SECTIONS:
        d[name] = _plain(asdict(getattr(cfg, name)))
    return yaml.safe_dump(d, sort_keys=True, default_flow_style=False)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, date):
        return x.isoformat()
    return x
