from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from condenserec.base import EvoConfig, Item, item_content
from condenserec.exceptions import InvalidArgumentError, LlmError
from condenserec.llm import LlmBackend
from condenserec.operate import condense_item, generate_child_prompts
from condenserec.prompt import PromptTemplate
from condenserec.textenc import EmbeddingVector, HashingTextEncoder, cosine_similarity
from condenserec.utils import gather_with_limit, logger

TextEncoder = Callable[[str], EmbeddingVector]

FAILED_ITEM_SIMILARITY = -1.0


@dataclass
class CandidateScore:
    index: int
    prompt: PromptTemplate
    score: float


@dataclass
class GenerationRecord:
    generation: int
    candidates: list[CandidateScore]
    selected_index: int

    @property
    def selected(self) -> CandidateScore:
        return self.candidates[self.selected_index]


@dataclass
class EvoTrace:
    generations: list[GenerationRecord] = field(default_factory=list)
    aborted: str | None = None
    """Diagnostic of the generation that could not be completed, if any."""

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "generation": record.generation,
                "candidate_index": candidate.index,
                "prompt_id": candidate.prompt.id,
                "score": candidate.score,
                "selected": int(candidate.index == record.selected_index),
            }
            for record in self.generations
            for candidate in record.candidates
        ]
        return pd.DataFrame(
            rows,
            columns=["generation", "candidate_index", "prompt_id", "score", "selected"],
        )

    def write(self, path: str) -> None:
        self.to_frame().to_csv(path, sep="\t", index=False, float_format="%.12g")


async def similarity_scores(
    prompt: PromptTemplate,
    contents: Sequence[Item],
    backend: LlmBackend,
    encoder: TextEncoder | None = None,
) -> list[float]:
    """Cosine similarity between each item's full content and its condensation.

    Items whose condensation fails after retries get -1.
    """
    encoder = encoder or HashingTextEncoder()

    async def _one(item: Item) -> float:
        try:
            condensed = await condense_item(backend, prompt, item)
        except LlmError as e:
            logger.warning(f"Prompt {prompt.id} failed on item {item.id}: {e}")
            return FAILED_ITEM_SIMILARITY
        return cosine_similarity(encoder(item_content(item)), encoder(condensed))

    return await gather_with_limit([_one(item) for item in contents], backend.max_async)


async def score_prompt(
    prompt: PromptTemplate,
    contents: Sequence[Item],
    backend: LlmBackend,
    encoder: TextEncoder | None = None,
) -> float:
    """Summed content-vs-condensation similarity over ``contents``."""
    if not contents:
        raise InvalidArgumentError("cannot score a prompt on an empty item list")
    total = 0.0
    for value in await similarity_scores(prompt, contents, backend, encoder):
        total += value
    return total


def scoring_sample(contents: Sequence[Item], config: EvoConfig) -> list[Item]:
    """The fixed item subset every candidate prompt is scored on."""
    if config.sample_size is None or config.sample_size >= len(contents):
        return list(contents)
    rng = np.random.default_rng(config.seed)
    picked = np.sort(rng.choice(len(contents), size=config.sample_size, replace=False))
    return [contents[i] for i in picked]


def select_best(scores: Sequence[float]) -> int:
    """Index of the highest score; the lowest index wins ties."""
    best = 0
    for i, value in enumerate(scores):
        if value > scores[best]:
            best = i
    return best


async def evolve_prompts(
    initial: PromptTemplate,
    contents: Sequence[Item],
    config: EvoConfig,
    backend: LlmBackend,
    encoder: TextEncoder | None = None,
) -> tuple[list[PromptTemplate], EvoTrace]:
    """Evolve ``initial`` for ``config.generations`` generations.

    Returns the winner of every completed generation, last one being the
    final prompt, and the full trace. A generation whose children cannot be
    obtained stops the run; earlier winners are still returned.
    """
    if not contents:
        raise InvalidArgumentError("prompt evolution needs at least one item")
    sample = scoring_sample(contents, config)
    winners: list[PromptTemplate] = []
    trace = EvoTrace()
    parent = initial

    for generation in range(1, config.generations + 1):
        try:
            children = await generate_child_prompts(backend, parent, config.children)
        except LlmError as e:
            trace.aborted = f"generation {generation}: {e}"
            logger.error(f"Prompt evolution stopped at generation {generation}: {e}")
            break

        candidates = []
        for index, child in enumerate(children):
            value = await score_prompt(child, sample, backend, encoder)
            candidates.append(CandidateScore(index=index, prompt=child, score=value))
        selected = select_best([c.score for c in candidates])
        trace.generations.append(
            GenerationRecord(
                generation=generation, candidates=candidates, selected_index=selected
            )
        )
        parent = candidates[selected].prompt
        winners.append(parent)
        logger.info(
            f"Generation {generation}: selected {parent.id} "
            f"(score {candidates[selected].score:.4f} over {len(sample)} items)"
        )

    return winners, trace
