from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

from condenserec.base import CondenseConfig, Dataset, EvoConfig, TrainConfig
from condenserec.condenser import CondenseReport, condense_dataset
from condenserec.constants import DEFAULT_K_LIST
from condenserec.evaluate import (
    baseline_majority,
    baseline_random,
    evaluate,
    matched_baseline_ratios,
)
from condenserec.exceptions import InvalidArgumentError
from condenserec.llm import LlmBackend, LlmConfig, create_llm_backend
from condenserec.prompt import PromptTemplate, default_prompt
from condenserec.prompt_evolution import EvoTrace, evolve_prompts
from condenserec.recmodel import RecModelParams, train
from condenserec.types import MetricsReport
from condenserec.utils import always_get_an_event_loop, logger

BaselineKind = Literal["random", "majority"]


@dataclass
class CondensePipeline:
    """Train, condense, evolve and evaluate with one set of configurations.

    Every async method has a synchronous twin running it on the current
    event loop.
    """

    train_config: TrainConfig = field(default_factory=TrainConfig)
    condense_config: CondenseConfig = field(default_factory=CondenseConfig)
    evo_config: EvoConfig = field(default_factory=EvoConfig)
    llm_config: LlmConfig = field(default_factory=LlmConfig)

    k_list: tuple[int, ...] = DEFAULT_K_LIST
    """Cutoffs of NDCG@k and Recall@k."""

    prompt: PromptTemplate | None = None
    """Content condensation prompt; the shipped default when None."""

    interest_prompt: PromptTemplate | None = None
    backend: LlmBackend | None = None

    def __post_init__(self) -> None:
        if self.prompt is None:
            self.prompt = default_prompt("condense_item")
        if self.interest_prompt is None:
            self.interest_prompt = default_prompt("extract_interests")
        self.k_list = tuple(self.k_list)

    def get_backend(self) -> LlmBackend:
        if self.backend is None:
            self.backend = create_llm_backend(self.llm_config)
            logger.info(f"Using LLM backend {self.backend!r}")
        return self.backend

    def train_model(self, dataset: Dataset) -> RecModelParams:
        return train(dataset, self.train_config)

    def evaluate(self, params: RecModelParams, test: Dataset) -> MetricsReport:
        return evaluate(params, test, self.k_list)

    async def acondense(
        self,
        train_set: Dataset,
        params: RecModelParams | None = None,
        condense_config: CondenseConfig | None = None,
    ) -> tuple[Dataset, CondenseReport]:
        """Condense ``train_set``; trains the user encoder on it unless ``params`` is given."""
        if params is None:
            params = self.train_model(train_set)
        return await condense_dataset(
            train_set,
            condense_config or self.condense_config,
            self.prompt,
            self.get_backend(),
            params,
            interest_prompt=self.interest_prompt,
        )

    def condense(
        self,
        train_set: Dataset,
        params: RecModelParams | None = None,
        condense_config: CondenseConfig | None = None,
    ) -> tuple[Dataset, CondenseReport]:
        loop = always_get_an_event_loop()
        return loop.run_until_complete(self.acondense(train_set, params, condense_config))

    async def aevolve(
        self, dataset: Dataset, initial: PromptTemplate | None = None
    ) -> tuple[list[PromptTemplate], EvoTrace]:
        return await evolve_prompts(
            initial or self.prompt,
            list(dataset.items.values()),
            self.evo_config,
            self.get_backend(),
        )

    def evolve(
        self, dataset: Dataset, initial: PromptTemplate | None = None
    ) -> tuple[list[PromptTemplate], EvoTrace]:
        loop = always_get_an_event_loop()
        return loop.run_until_complete(self.aevolve(dataset, initial))

    def baseline(
        self,
        kind: BaselineKind,
        train_set: Dataset,
        user_ratio: float,
        token_ratio: float,
    ) -> Dataset:
        seed = self.condense_config.seed
        if kind == "random":
            return baseline_random(train_set, user_ratio, token_ratio, seed)
        if kind == "majority":
            return baseline_majority(train_set, user_ratio, token_ratio, seed)
        raise InvalidArgumentError(f"unknown baseline {kind!r}")

    def matched_baselines(
        self, condensed: Dataset, train_set: Dataset, kinds: Sequence[BaselineKind] = ("random", "majority")
    ) -> dict[str, Dataset]:
        """Baselines sampled at the size of ``condensed``."""
        user_ratio, token_ratio = matched_baseline_ratios(condensed, train_set)
        logger.info(
            f"Matched baseline ratios: users {user_ratio:.4f}, tokens {token_ratio:.4f}"
        )
        return {kind: self.baseline(kind, train_set, user_ratio, token_ratio) for kind in kinds}
