from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field, field_validator


class MetricsReport(BaseModel):
    k_list: list[int]
    ndcg: dict[int, float]
    recall: dict[int, float]
    quality_pct: Optional[float] = None
    n_groups: int = 0
    skipped_groups: int = 0  # groups without any positive

    @field_validator("ndcg", "recall")
    @classmethod
    def _in_unit_interval(cls, values: dict[int, float]) -> dict[int, float]:
        for k, value in values.items():
            if not 0.0 <= value <= 1.0 + 1e-12:
                raise ValueError(f"metric at k={k} outside [0, 1]: {value}")
        return values

    def metric_items(self) -> list[tuple[str, float]]:
        """(name, value) pairs, NDCG first, each in k order."""
        return [(f"ndcg@{k}", self.ndcg[k]) for k in self.k_list] + [
            (f"recall@{k}", self.recall[k]) for k in self.k_list
        ]

    def as_row(self) -> dict[str, float]:
        return dict(self.metric_items())


class SweepRow(BaseModel):
    value: float
    """The swept hyperparameter (alpha or K)."""

    quality_pct: float
    n_users: int
    n_items: int
    overall_ratio: float
    metrics: dict[str, float] = Field(default_factory=dict)


class CompareRow(BaseModel):
    variant: str
    metrics: dict[str, float]
    quality_pct: float
    overall_ratio: Optional[float] = None


class RunManifest(BaseModel):
    command: str
    config_hash: str
    seed: int
    package_version: str
    numpy_version: str
    python_version: str
    inputs: dict[str, str] = Field(default_factory=dict)
    """md5 digest of every input file, by path."""

    outputs: list[str] = Field(default_factory=list)
