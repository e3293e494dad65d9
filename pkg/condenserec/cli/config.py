"""
Configuration of the condenserec command line.

A config file is a flat INI file with a single ``[condenserec]`` section
whose keys are dotted paths into ``PipelineConfig``::

    [condenserec]
    seed = 0
    dataset.items = data/items.tsv
    condense.K = 8
    condense.alpha = 0.2
    eval.k_list = 5,10

Command-line flags and ``--set key=value`` pairs override file values.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from collections.abc import Iterable
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from condenserec.base import CondenseConfig, EvoConfig, TrainConfig
from condenserec.constants import (
    DEFAULT_ALPHA,
    DEFAULT_API_KEY_ENV,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CHILDREN,
    DEFAULT_CONTENT_DIM,
    DEFAULT_EPOCHS,
    DEFAULT_GENERATIONS,
    DEFAULT_HASH_BUCKETS,
    DEFAULT_INTEREST_COUNT,
    DEFAULT_K_LIST,
    DEFAULT_KMEANS_MAX_ITER,
    DEFAULT_KMEANS_RESTARTS,
    DEFAULT_KMEANS_TOL,
    DEFAULT_LEARNING_RATE,
    DEFAULT_LLM_BASE_URL,
    DEFAULT_LLM_MAX_ASYNC,
    DEFAULT_LLM_MODEL,
    DEFAULT_MAX_RETRIES,
    DEFAULT_NEGATIVE_RATIO,
    DEFAULT_SPLIT_RATIOS,
    DEFAULT_SUMMARY_BUDGET,
    DEFAULT_TIMEOUT,
    DEFAULT_TOP_M,
    DEFAULT_USER_DIM,
    K_LIST_PRESETS,
)
from condenserec.exceptions import ConfigError
from condenserec.llm import LlmConfig
from condenserec.utils import get_env_value

CONFIG_SECTION = "condenserec"


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSection(_Section):
    items: Optional[str] = None
    behaviors: Optional[str] = None
    split: list[float] = Field(default_factory=lambda: list(DEFAULT_SPLIT_RATIOS))

    @field_validator("split", mode="before")
    @classmethod
    def _split_ratios(cls, value: Any) -> Any:
        return _split_list(value)


class TrainSection(_Section):
    lr: float = Field(DEFAULT_LEARNING_RATE, gt=0)
    negative_ratio: int = Field(DEFAULT_NEGATIVE_RATIO, ge=1)
    epochs: int = Field(DEFAULT_EPOCHS, ge=1)
    batch_size: int = Field(DEFAULT_BATCH_SIZE, ge=1)
    n_buckets: int = Field(DEFAULT_HASH_BUCKETS, ge=1)
    d_c: int = Field(DEFAULT_CONTENT_DIM, ge=1)
    d_u: int = Field(DEFAULT_USER_DIM, ge=1)


class CondenseSection(_Section):
    K: int = Field(8, ge=1)
    m: int = Field(DEFAULT_TOP_M, ge=1)
    alpha: float = Field(DEFAULT_ALPHA, ge=0)
    kmeans_max_iter: int = Field(DEFAULT_KMEANS_MAX_ITER, ge=1)
    kmeans_tol: float = Field(DEFAULT_KMEANS_TOL, ge=0)
    kmeans_restarts: int = Field(DEFAULT_KMEANS_RESTARTS, ge=1)
    scope: Literal["full", "user_only", "content_only"] = "full"
    interest_source: Literal["llm", "random_tokens"] = "llm"
    interest_count: int = Field(DEFAULT_INTEREST_COUNT, ge=1)
    impression_mode: Literal["pooled", "history_positives"] = "pooled"


class EvoSection(_Section):
    generations: int = Field(DEFAULT_GENERATIONS, ge=1)
    children: int = Field(DEFAULT_CHILDREN, ge=1)
    sample_size: Optional[int] = Field(None, ge=1)


class LlmSection(_Section):
    kind: Literal["mock", "openai"] = "mock"
    model: str = get_env_value("LLM_MODEL", DEFAULT_LLM_MODEL)
    base_url: str = get_env_value("LLM_BINDING_HOST", DEFAULT_LLM_BASE_URL)
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout: int = Field(get_env_value("TIMEOUT", DEFAULT_TIMEOUT, int), ge=1)
    max_retries: int = Field(DEFAULT_MAX_RETRIES, ge=1)
    max_async: int = Field(get_env_value("MAX_ASYNC", DEFAULT_LLM_MAX_ASYNC, int), ge=1)
    mock_mode: Literal["extractive", "echo"] = "extractive"
    summary_budget: int = Field(DEFAULT_SUMMARY_BUDGET, ge=1)
    interest_count: int = Field(DEFAULT_INTEREST_COUNT, ge=1)
    prompt_file: Optional[str] = None


class EvalSection(_Section):
    k_list: list[int] = Field(default_factory=lambda: list(DEFAULT_K_LIST))
    baseline_user_ratio: Optional[float] = Field(None, gt=0, le=1)
    """Fixed user ratio for the sampled baselines; matched to the condensed size when unset."""

    baseline_token_ratio: Optional[float] = Field(None, gt=0, le=1)

    @field_validator("k_list", mode="before")
    @classmethod
    def _split_k_list(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip() in K_LIST_PRESETS:
            return list(K_LIST_PRESETS[value.strip()])
        return _split_list(value)

    @field_validator("k_list")
    @classmethod
    def _positive(cls, values: list[int]) -> list[int]:
        if not values or any(k < 1 for k in values):
            raise ValueError("k_list needs at least one cutoff, all >= 1")
        return values


class PipelineConfig(_Section):
    seed: int = 0
    output_dir: str = "output"
    dataset: DatasetSection = Field(default_factory=DatasetSection)
    train: TrainSection = Field(default_factory=TrainSection)
    condense: CondenseSection = Field(default_factory=CondenseSection)
    evo: EvoSection = Field(default_factory=EvoSection)
    llm: LlmSection = Field(default_factory=LlmSection)
    eval: EvalSection = Field(default_factory=EvalSection)

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.train.model_dump())

    def condense_config(self) -> CondenseConfig:
        return CondenseConfig(
            seed=self.seed,
            negative_ratio=self.train.negative_ratio,
            **self.condense.model_dump(),
        )

    def evo_config(self) -> EvoConfig:
        return EvoConfig(seed=self.seed, **self.evo.model_dump())

    def llm_config(self) -> LlmConfig:
        values = self.llm.model_dump(exclude={"prompt_file"})
        return LlmConfig(seed=self.seed, **values)

    def canonical_json(self) -> str:
        return self.model_dump_json()

    def config_hash(self) -> str:
        return hashlib.md5(self.canonical_json().encode("utf-8")).hexdigest()


def _set_dotted(data: dict[str, Any], key: str, value: Any) -> None:
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"Invalid config key {key!r}")
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"Config key {key!r} nests under a scalar value")
        node = child
    node[parts[-1]] = value


def read_config_file(path: str) -> dict[str, Any]:
    """Nested dict of the dotted keys in the ``[condenserec]`` section of ``path``."""
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case, e.g. condense.K
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from e
    unknown = [s for s in parser.sections() if s != CONFIG_SECTION]
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {unknown}, expected [{CONFIG_SECTION}]")
    data: dict[str, Any] = {}
    if parser.has_section(CONFIG_SECTION):
        for key, value in parser.items(CONFIG_SECTION):
            _set_dotted(data, key, value)
    return data


def parse_overrides(pairs: Iterable[str]) -> dict[str, Any]:
    data: dict[str, Any] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"Override {pair!r} is not of the form key=value")
        _set_dotted(data, key, value.strip())
    return data


def merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_pipeline_config(
    path: str | None = None, overrides: Iterable[str] = (), **flags: Any
) -> PipelineConfig:
    """Build the config from file, then ``--set`` pairs, then explicit flags.

    ``flags`` maps dotted keys to values; None values are ignored.
    """
    data = read_config_file(path) if path else {}
    data = merge(data, parse_overrides(overrides))
    for key, value in flags.items():
        if value is not None:
            flag_data: dict[str, Any] = {}
            _set_dotted(flag_data, key, value)
            data = merge(data, flag_data)
    return PipelineConfig.model_validate(data)
