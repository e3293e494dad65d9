from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Literal

from condenserec.constants import (
    DEFAULT_ALPHA,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CHILDREN,
    DEFAULT_CONTENT_DIM,
    DEFAULT_EPOCHS,
    DEFAULT_GENERATIONS,
    DEFAULT_HASH_BUCKETS,
    DEFAULT_INTEREST_COUNT,
    DEFAULT_KMEANS_MAX_ITER,
    DEFAULT_KMEANS_RESTARTS,
    DEFAULT_KMEANS_TOL,
    DEFAULT_LEARNING_RATE,
    DEFAULT_NEGATIVE_RATIO,
    DEFAULT_TOP_M,
    DEFAULT_USER_DIM,
)
from condenserec.exceptions import DatasetValidationError, InvalidArgumentError

_FORBIDDEN_CHARS = ("\t", "\n", "\r")


def _check_field(name: str, value: str, *, owner: str) -> None:
    if not isinstance(value, str):
        raise DatasetValidationError(f"{owner}: field {name!r} must be a string")
    if any(ch in value for ch in _FORBIDDEN_CHARS):
        raise DatasetValidationError(
            f"{owner}: field {name!r} contains a TAB or newline"
        )


def _check_id(value: str, *, kind: str) -> None:
    if not isinstance(value, str) or not value:
        raise DatasetValidationError(f"{kind} id must be a nonempty string")
    if any(ch.isspace() for ch in value):
        raise DatasetValidationError(f"{kind} id {value!r} contains whitespace")


@dataclass(frozen=True)
class Item:
    """A recommendable item and its textual content."""

    id: str
    title: str
    abstract: str = ""
    category: str = ""

    def __post_init__(self) -> None:
        _check_id(self.id, kind="item")
        for name in ("title", "abstract", "category"):
            _check_field(name, getattr(self, name), owner=f"item {self.id}")
        if not self.title.strip():
            raise DatasetValidationError(f"item {self.id}: title is empty")


def item_content(item: Item) -> str:
    """Title, abstract and category concatenated into one sequence."""
    return " ".join(
        part for part in (item.title, item.abstract, item.category) if part
    )


@dataclass(frozen=True)
class ClickHistory:
    """Ordered click history of one user; repeated clicks keep the first occurrence."""

    user_id: str
    item_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        _check_id(self.user_id, kind="user")
        seen: dict[str, None] = {}
        for item_id in self.item_ids:
            _check_id(item_id, kind="item")
            seen.setdefault(item_id, None)
        object.__setattr__(self, "item_ids", tuple(seen))

    def __len__(self) -> int:
        return len(self.item_ids)


@dataclass(frozen=True)
class Impression:
    user_id: str
    candidate_item_id: str
    label: int

    def __post_init__(self) -> None:
        _check_id(self.user_id, kind="user")
        _check_id(self.candidate_item_id, kind="item")
        if self.label not in (0, 1) or isinstance(self.label, bool):
            raise DatasetValidationError(
                f"impression ({self.user_id}, {self.candidate_item_id}): "
                f"label must be 0 or 1, got {self.label!r}"
            )


@dataclass(frozen=True)
class Dataset:
    """Items, click histories and labeled impressions.

    The dataset is immutable; every operation that changes it builds a new
    one. Impressions are kept grouped by user, in the order users appear,
    with each user's impressions in input order.
    """

    items: dict[str, Item] = field(default_factory=dict)
    users: dict[str, ClickHistory] = field(default_factory=dict)
    impressions: tuple[Impression, ...] = ()

    def __post_init__(self) -> None:
        user_order = {user_id: i for i, user_id in enumerate(self.users)}
        fallback = len(user_order)
        ordered = sorted(
            self.impressions, key=lambda imp: user_order.get(imp.user_id, fallback)
        )
        object.__setattr__(self, "impressions", tuple(ordered))

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_users(self) -> int:
        return len(self.users)

    def impressions_by_user(self) -> dict[str, list[Impression]]:
        groups: dict[str, list[Impression]] = {user_id: [] for user_id in self.users}
        for imp in self.impressions:
            groups.setdefault(imp.user_id, []).append(imp)
        return groups

    def positives(self) -> list[Impression]:
        return [imp for imp in self.impressions if imp.label == 1]


@dataclass(frozen=True)
class DatasetStats:
    n_items: int
    n_users: int
    avg_tokens_per_item: float
    avg_history_len: float
    n_pos: int
    n_neg: int
    density: float
    """Positive impressions over n_users * n_items; 0 for an empty dataset."""


@dataclass(frozen=True)
class SizeReport:
    """Serialized sizes of a candidate dataset relative to a reference."""

    item_bytes: int
    user_bytes: int
    overall_bytes: int
    item_ratio: float
    user_ratio: float
    overall_ratio: float


@dataclass
class TrainConfig:
    """Configuration for training the recommender."""

    lr: float = float(os.getenv("LEARNING_RATE", DEFAULT_LEARNING_RATE))
    """Adam step size."""

    negative_ratio: int = DEFAULT_NEGATIVE_RATIO
    """Number of negatives sampled per positive in each softmax group."""

    epochs: int = DEFAULT_EPOCHS
    """Passes over the positive impressions."""

    batch_size: int = DEFAULT_BATCH_SIZE
    """Softmax groups per Adam step."""

    seed: int = 0
    """Seeds parameter initialization, shuffling and negative sampling."""

    n_buckets: int = DEFAULT_HASH_BUCKETS
    """Rows of the hashed token embedding table."""

    d_c: int = DEFAULT_CONTENT_DIM
    """Content (item) embedding width."""

    d_u: int = DEFAULT_USER_DIM
    """User embedding width."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise InvalidArgumentError(f"learning rate must be > 0, got {self.lr}")
        if self.negative_ratio < 1:
            raise InvalidArgumentError(
                f"negative_ratio must be >= 1, got {self.negative_ratio}"
            )
        for name in ("epochs", "batch_size", "n_buckets", "d_c", "d_u"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")


CondenseScope = Literal["full", "user_only", "content_only"]
InterestSource = Literal["llm", "random_tokens"]
ImpressionMode = Literal["pooled", "history_positives"]


@dataclass
class CondenseConfig:
    """Configuration for dataset condensation."""

    K: int = 8
    """Number of clusters, hence of synthetic users."""

    m: int = DEFAULT_TOP_M
    """Members merged per synthetic user, capped at the cluster size."""

    alpha: float = DEFAULT_ALPHA
    """Weight of the interest distance in the selection score."""

    kmeans_max_iter: int = DEFAULT_KMEANS_MAX_ITER
    kmeans_tol: float = DEFAULT_KMEANS_TOL
    kmeans_restarts: int = DEFAULT_KMEANS_RESTARTS

    seed: int = 0

    scope: CondenseScope = "full"
    """Which levels to condense:
    - "full": synthetic users and condensed item contents.
    - "user_only": synthetic users, original item contents.
    - "content_only": original users, condensed item contents.
    """

    interest_source: InterestSource = "llm"
    """Where user interests come from:
    - "llm": extracted by the LLM backend from the click history.
    - "random_tokens": uniformly sampled tokens of the history contents.
    """

    interest_count: int = DEFAULT_INTEREST_COUNT
    """Tokens drawn per user when interest_source is "random_tokens"."""

    impression_mode: ImpressionMode = "pooled"
    """How synthetic users get training impressions:
    - "pooled": union of the source members' impressions, first label kept.
    - "history_positives": every history item positive, sampled negatives.
    """

    negative_ratio: int = DEFAULT_NEGATIVE_RATIO
    """Negatives per history item in "history_positives" mode."""

    def __post_init__(self) -> None:
        if self.K < 1:
            raise InvalidArgumentError(f"K must be >= 1, got {self.K}")
        if self.m < 1:
            raise InvalidArgumentError(f"m must be >= 1, got {self.m}")
        if self.alpha < 0:
            raise InvalidArgumentError(f"alpha must be >= 0, got {self.alpha}")
        if self.kmeans_max_iter < 1 or self.kmeans_restarts < 1:
            raise InvalidArgumentError("kmeans_max_iter and kmeans_restarts must be >= 1")
        if self.kmeans_tol < 0:
            raise InvalidArgumentError("kmeans_tol must be >= 0")
        if self.scope not in ("full", "user_only", "content_only"):
            raise InvalidArgumentError(f"unknown scope {self.scope!r}")
        if self.interest_source not in ("llm", "random_tokens"):
            raise InvalidArgumentError(
                f"unknown interest_source {self.interest_source!r}"
            )
        if self.impression_mode not in ("pooled", "history_positives"):
            raise InvalidArgumentError(
                f"unknown impression_mode {self.impression_mode!r}"
            )
        if self.interest_count < 1 or self.negative_ratio < 1:
            raise InvalidArgumentError("interest_count and negative_ratio must be >= 1")


@dataclass
class EvoConfig:
    """Configuration for prompt evolution."""

    generations: int = DEFAULT_GENERATIONS
    """Number of generations E."""

    children: int = DEFAULT_CHILDREN
    """Child prompts N derived from each generation's parent."""

    sample_size: int | None = None
    """Items scored per candidate prompt. None scores every item."""

    seed: int = 0
    """Fixes the scoring sample; every generation scores the same items."""

    def __post_init__(self) -> None:
        if self.generations < 1 or self.children < 1:
            raise InvalidArgumentError("generations and children must be >= 1")
        if self.sample_size is not None and self.sample_size < 1:
            raise InvalidArgumentError("sample_size must be >= 1 when set")
