import asyncio

import pandas as pd
import pytest

from condenserec.base import EvoConfig, item_content
from condenserec.exceptions import InvalidArgumentError
from condenserec.llm import LlmRequest
from condenserec.llm.mock import MockBackend
from condenserec.operate import condense_item
from condenserec.prompt import default_prompt
from condenserec.prompt_evolution import (
    FAILED_ITEM_SIMILARITY,
    evolve_prompts,
    score_prompt,
    scoring_sample,
    select_best,
    similarity_scores,
)
from condenserec.textenc import cosine_similarity, encode_text


class RefusingBackend:
    max_async = 1

    async def complete(self, request: LlmRequest) -> str:
        return ""


@pytest.fixture
def items(small_synthetic):
    dataset, _ = small_synthetic
    return list(dataset.items.values())[:10]


def test_echo_prompt_scores_item_count(items):
    value = asyncio.run(score_prompt(default_prompt("condense_item"), items, MockBackend(mode="echo")))
    assert value == pytest.approx(len(items), abs=1e-6)


def test_score_matches_direct_computation(items):
    prompt = default_prompt("condense_item")
    backend = MockBackend(summary_budget=6)
    expected = 0.0
    for item in items:
        condensed = asyncio.run(condense_item(backend, prompt, item))
        expected += cosine_similarity(encode_text(item_content(item)), encode_text(condensed))
    assert asyncio.run(score_prompt(prompt, items, backend)) == pytest.approx(expected, abs=1e-9)
    assert expected < len(items)


def test_failed_items_score_minus_one(items):
    values = asyncio.run(similarity_scores(default_prompt("condense_item"), items[:3], RefusingBackend()))
    assert values == [FAILED_ITEM_SIMILARITY] * 3


def test_score_prompt_needs_items():
    with pytest.raises(InvalidArgumentError):
        asyncio.run(score_prompt(default_prompt("condense_item"), [], MockBackend()))


def test_select_best_prefers_lowest_index_on_ties():
    assert select_best([0.2, 0.7, 0.7, 0.1]) == 1
    assert select_best([0.5]) == 0
    assert select_best([-1.0, -1.0]) == 0


def test_scoring_sample_is_fixed_subset(items):
    assert scoring_sample(items, EvoConfig()) == items
    config = EvoConfig(sample_size=4, seed=2)
    sample = scoring_sample(items, config)
    assert len(sample) == 4
    assert sample == scoring_sample(items, config)
    positions = [items.index(item) for item in sample]
    assert positions == sorted(positions)


def test_evolution_selects_argmax_every_generation(items, tmp_path):
    config = EvoConfig(generations=3, children=4, seed=0)
    winners, trace = asyncio.run(
        evolve_prompts(default_prompt("condense_item"), items, config, MockBackend(summary_budget=6))
    )
    assert len(winners) == 3
    assert trace.aborted is None

    frame = trace.to_frame()
    assert len(frame) == 12
    for generation, winner in enumerate(winners, start=1):
        rows = frame[frame["generation"] == generation].reset_index(drop=True)
        best = rows.loc[rows["score"].idxmax()]
        assert best["prompt_id"] == winner.id
        assert best["selected"] == 1
        assert rows["selected"].sum() == 1
    assert winners[1].id.startswith(winners[0].id)

    path = tmp_path / "trace.tsv"
    trace.write(str(path))
    written = pd.read_csv(path, sep="\t")
    assert list(written.columns) == ["generation", "candidate_index", "prompt_id", "score", "selected"]
    assert len(written) == 12


def test_evolution_is_deterministic(items):
    config = EvoConfig(generations=2, children=3)
    first, trace_a = asyncio.run(evolve_prompts(default_prompt("condense_item"), items, config, MockBackend()))
    second, trace_b = asyncio.run(evolve_prompts(default_prompt("condense_item"), items, config, MockBackend()))
    assert first == second
    pd.testing.assert_frame_equal(trace_a.to_frame(), trace_b.to_frame())


def test_evolution_stops_when_children_fail(items):
    winners, trace = asyncio.run(
        evolve_prompts(default_prompt("condense_item"), items, EvoConfig(generations=2, children=2), RefusingBackend())
    )
    assert winners == []
    assert trace.generations == []
    assert trace.aborted.startswith("generation 1")


def test_evolution_needs_items():
    with pytest.raises(InvalidArgumentError):
        asyncio.run(evolve_prompts(default_prompt("condense_item"), [], EvoConfig(), MockBackend()))
