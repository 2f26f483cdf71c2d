"""Pipeline configuration: TOML file, flag overrides, dataclass defaults.

Precedence is flags > file > defaults. Every key is reachable from the CLI as
``--set section.key=value``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .encoder import EncoderConfig


@dataclass
class PathsConfig:
    corpus: str = ""
    labels: str = ""
    anchors: str = ""
    lexicon: str = ""
    workdir: str = "workdir"


@dataclass
class LinkingConfig:
    prune_total: int = 2
    catalog_k: int = 1000
    anchors_format: str = "auto"


@dataclass
class ExtractConfig:
    include_titles: bool = True
    max_entities: int = 10
    min_tokens: int = 5


@dataclass
class AnalyticsConfig:
    k: int = 20
    top_pairs: int = 100
    shrinkage: float | str = "lw"  # Ledoit-Wolf, or a numeric relative ridge
    min_group: int = 3
    min_support: int = 1
    heatmap_pairs: int = 10
    heatmap_min_sentences: int = 10
    symmetrized: bool = False
    reduce: bool = True
    pca_pairs: int = 4
    pca_components: int = 2
    holdout: list[str] = field(default_factory=list)
    holdout_frac: float = 0.2
    lasso_c: float = 1.0
    ridge_alpha: float = 1.0
    svm_c: float = 0.1
    rbf_c: float = 2.0
    rbf_gamma: float | str = 0.01  # numeric or "scale"


@dataclass
class ProbeConfig:
    n_per_class: int = 200
    top_k: int = 10
    temperature: float = 1.0
    average_orderings: bool = False
    probe_pairs: int = 10


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    linking: LinkingConfig = field(default_factory=LinkingConfig)
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    analytics: AnalyticsConfig = field(default_factory=AnalyticsConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    seed: int = 0
    threads: int = 1

    def flat(self) -> dict:
        """Flattened 'section.key' view, for manifests."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if dataclasses.is_dataclass(value):
                for sub in fields(value):
                    out[f"{f.name}.{sub.name}"] = getattr(value, sub.name)
            else:
                out[f.name] = value
        return out


_FLOAT_KEYWORDS = ("scale", "lw")  # symbolic values for float-or-mode fields


def _coerce(raw: str, current):
    if isinstance(current, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        if raw.strip() in _FLOAT_KEYWORDS:
            return raw.strip()
        return float(raw)
    if isinstance(current, (list, tuple)):
        return [v for v in (x.strip() for x in raw.split(",")) if v]
    return raw


def _apply(cfg: PipelineConfig, dotted: str, value) -> None:
    parts = dotted.split(".")
    target = cfg
    for part in parts[:-1]:
        if not hasattr(target, part):
            raise KeyError(f"unknown config section: {dotted!r}")
        target = getattr(target, part)
    key = parts[-1]
    if not hasattr(target, key):
        raise KeyError(f"unknown config key: {dotted!r}")
    current = getattr(target, key)
    if isinstance(value, str) and not isinstance(current, str):
        value = _coerce(value, current)
    setattr(target, key, value)


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        for section, payload in data.items():
            if isinstance(payload, dict):
                for key, value in payload.items():
                    _apply(cfg, f"{section}.{key}", value)
            else:
                _apply(cfg, section, payload)
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"override must look like section.key=value: {item!r}")
        dotted, _, raw = item.partition("=")
        _apply(cfg, dotted.strip(), raw.strip())
    cfg.encoder.__post_init__()  # re-validate after raw setattr overrides
    return cfg
