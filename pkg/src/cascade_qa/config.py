"""Strict JSON configuration for the CLI and the HTTP service.

The file has a fixed schema with a ``version`` field; unknown keys anywhere
are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .reader import ReaderConfig


class ConfigError(ValueError):
    """Bad or incomplete pipeline configuration."""


PATH_KEYS = ("train", "dev", "test", "stats", "doc_ranker", "para_ranker", "reader")


@dataclass
class TrainSettings:
    aux_epochs: int = 5
    joint_epochs: int = 10
    patience: Optional[int] = None
    dev_metric: str = "token_f1"


@dataclass
class DocRankerSettings:
    l2: float = 1e-4
    epochs: int = 500
    step_size: float = 1.0


@dataclass
class ParaRankerSettings:
    rounds: int = 100
    max_depth: int = 4
    shrinkage: float = 0.1
    reg_lambda: float = 1.0
    min_gain: float = 0.0


@dataclass
class BenchSettings:
    k_values: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    n_values: list[int] = field(default_factory=lambda: [1, 2, 3])
    batch_size: int = 8
    repetitions: int = 5
    metric: str = "token_f1"


@dataclass
class PipelineConfig:
    version: int = 1
    seed: int = 0
    k_documents: int = 4
    n_paragraphs: int = 2
    max_paragraph_words: int = 600
    serve_port: int = 8131
    paths: dict[str, str] = field(default_factory=dict)
    reader: ReaderConfig = field(default_factory=ReaderConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    doc_ranker: DocRankerSettings = field(default_factory=DocRankerSettings)
    para_ranker: ParaRankerSettings = field(default_factory=ParaRankerSettings)
    bench: BenchSettings = field(default_factory=BenchSettings)

    def __post_init__(self):
        if self.k_documents < 1 or self.n_paragraphs < 1:
            raise ConfigError("k_documents and n_paragraphs must be >= 1")

    def path(self, name: str) -> Optional[Path]:
        value = self.paths.get(name)
        return Path(value) if value else None

    def require_path(self, name: str, must_exist: bool = False) -> Path:
        path = self.path(name)
        if path is None:
            raise ConfigError(f"config is missing paths.{name}")
        if must_exist and not path.exists():
            raise ConfigError(f"paths.{name} does not exist: {path}")
        return path


def _build(cls, data: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where} section: {exc}") from exc


def parse_config(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    if data.get("version") != 1:
        raise ConfigError(f"unsupported config version {data.get('version')!r}")
    top_allowed = {f.name for f in fields(PipelineConfig)}
    unknown = set(data) - top_allowed
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")

    paths = data.get("paths", {})
    if not isinstance(paths, dict):
        raise ConfigError("paths must be an object")
    bad_paths = set(paths) - set(PATH_KEYS)
    if bad_paths:
        raise ConfigError(f"unknown key(s) in paths: {', '.join(sorted(bad_paths))}")

    return PipelineConfig(
        version=1,
        seed=int(data.get("seed", 0)),
        k_documents=int(data.get("k_documents", 4)),
        n_paragraphs=int(data.get("n_paragraphs", 2)),
        max_paragraph_words=int(data.get("max_paragraph_words", 600)),
        serve_port=int(data.get("serve_port", 8131)),
        paths={k: str(v) for k, v in paths.items()},
        reader=_build(ReaderConfig, data.get("reader", {}), "reader"),
        train=_build(TrainSettings, data.get("train", {}), "train"),
        doc_ranker=_build(DocRankerSettings, data.get("doc_ranker", {}), "doc_ranker"),
        para_ranker=_build(ParaRankerSettings, data.get("para_ranker", {}), "para_ranker"),
        bench=_build(BenchSettings, data.get("bench", {}), "bench"),
    )


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(data)
