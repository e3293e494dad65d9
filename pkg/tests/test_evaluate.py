import asyncio
import itertools
import math

import numpy as np
import pytest
from pydantic import ValidationError

from condenserec.base import ClickHistory, CondenseConfig, Dataset, Impression, Item, TrainConfig, item_content
from condenserec.evaluate import (
    adjusted_rand_index,
    baseline_majority,
    baseline_random,
    evaluate,
    matched_baseline_ratios,
    ndcg_at_k,
    quality,
    rank_labels,
    recall_at_k,
    sweep_alpha,
    sweep_k,
)
from condenserec.exceptions import EvaluationError, InvalidArgumentError
from condenserec.pipeline import CondensePipeline
from condenserec.recmodel import init_params, score
from condenserec.types import MetricsReport
from condenserec.utils import DEFAULT_TOKENIZER, Tokenizer


def _words(text):
    return Tokenizer(lowercase=False).tokenize(text)


def _brute_ndcg(labels, k):
    dcg = sum(labels[i] / math.log2(i + 2) for i in range(min(k, len(labels))))
    ideal = sorted(labels, reverse=True)
    idcg = sum(ideal[i] / math.log2(i + 2) for i in range(min(k, len(ideal))))
    return dcg / idcg if idcg > 0 else 0.0


def _brute_recall(labels, k):
    total = sum(labels)
    return sum(labels[:k]) / total if total else 0.0


def _report(n5, n10, r5, r10):
    return MetricsReport(k_list=[5, 10], ndcg={5: n5, 10: n10}, recall={5: r5, 10: r10})


def test_metrics_match_definitions_exhaustively():
    for length in range(1, 9):
        for labels in itertools.product((0, 1), repeat=length):
            labels = list(labels)
            for k in range(1, 9):
                assert ndcg_at_k(labels, k) == pytest.approx(_brute_ndcg(labels, k), abs=1e-12)
                assert recall_at_k(labels, k) == pytest.approx(_brute_recall(labels, k), abs=1e-12)


def test_metric_examples():
    assert ndcg_at_k([1, 0, 0], 5) == 1.0
    assert ndcg_at_k([0, 1, 0], 2) == pytest.approx(1 / math.log2(3), abs=1e-4)
    assert ndcg_at_k([0, 0, 0], 3) == 0.0
    assert recall_at_k([1, 0, 0], 1) == 1.0
    assert recall_at_k([0, 0, 1], 2) == 0.0
    assert recall_at_k([1, 0, 1, 0], 2) == 0.5
    with pytest.raises(InvalidArgumentError):
        ndcg_at_k([1], 0)


def test_rank_labels_breaks_ties_by_id():
    assert rank_labels(["b", "a"], [1, 0], [0.5, 0.5]) == [0, 1]
    scores = [0.3, -1.2, 2.5, 0.1]
    ids, labels = ["n1", "n2", "n3", "n4"], [0, 1, 1, 0]
    assert rank_labels(ids, labels, scores) == rank_labels(ids, labels, [2 * s for s in scores])


def test_quality_reproduces_published_ratio():
    condensed = _report(0.3071, 0.3691, 0.4377, 0.6150)
    original = _report(0.3176, 0.3783, 0.4534, 0.6270)
    assert quality(condensed, original) == pytest.approx(97.22, abs=0.01)


def test_quality_edge_cases():
    original = _report(0.4, 0.5, 0.6, 0.8)
    assert quality(original, original) == pytest.approx(100.0)
    assert quality(_report(0.2, 0.25, 0.3, 0.4), original) == pytest.approx(50.0)
    with pytest.raises(EvaluationError):
        quality(original, _report(0.0, 0.5, 0.6, 0.8))
    other_k = MetricsReport(k_list=[1, 5], ndcg={1: 0.1, 5: 0.2}, recall={1: 0.1, 5: 0.2})
    with pytest.raises(EvaluationError):
        quality(other_k, original)


def test_metrics_report_rejects_out_of_range():
    with pytest.raises(ValidationError):
        _report(1.5, 0.5, 0.5, 0.5)
    assert list(_report(0.1, 0.2, 0.3, 0.4).as_row()) == ["ndcg@5", "ndcg@10", "recall@5", "recall@10"]


@pytest.fixture
def random_test_set(small_synthetic):
    dataset, _ = small_synthetic
    rng = np.random.default_rng(21)
    ids = list(dataset.items)
    users, impressions = {}, []
    for u in range(50):
        user_id = f"t{u:02d}"
        users[user_id] = ClickHistory(user_id, tuple(str(i) for i in rng.choice(ids, size=3, replace=False)))
        candidates = rng.choice(ids, size=6, replace=False)
        labels = rng.integers(0, 2, size=6)
        labels[0] = 1
        impressions.extend(Impression(user_id, str(c), int(l)) for c, l in zip(candidates, labels))
    return Dataset(items=dataset.items, users=users, impressions=tuple(impressions))


def test_evaluate_matches_brute_force(random_test_set):
    params = init_params(TrainConfig(n_buckets=256, d_c=16, d_u=8), np.random.default_rng(3))
    report = evaluate(params, random_test_set, (1, 5))
    expected = {("ndcg", k): [] for k in (1, 5)} | {("recall", k): [] for k in (1, 5)}
    for user_id, group in random_test_set.impressions_by_user().items():
        history = random_test_set.users[user_id]
        scored = sorted(
            group,
            key=lambda imp: (
                -score(params, history, random_test_set.items[imp.candidate_item_id], random_test_set.items),
                imp.candidate_item_id,
            ),
        )
        labels = [imp.label for imp in scored]
        for k in (1, 5):
            expected[("ndcg", k)].append(_brute_ndcg(labels, k))
            expected[("recall", k)].append(_brute_recall(labels, k))
    assert report.n_groups == 50
    for k in (1, 5):
        assert report.ndcg[k] == pytest.approx(np.mean(expected[("ndcg", k)]), abs=1e-9)
        assert report.recall[k] == pytest.approx(np.mean(expected[("recall", k)]), abs=1e-9)


def test_evaluate_without_positive_groups_fails(tiny_dataset):
    negatives = Dataset(
        items=tiny_dataset.items,
        users=tiny_dataset.users,
        impressions=tuple(i for i in tiny_dataset.impressions if i.label == 0),
    )
    params = init_params(TrainConfig(n_buckets=16, d_c=4, d_u=2), np.random.default_rng(0))
    with pytest.raises(EvaluationError):
        evaluate(params, negatives)


# baselines


def test_full_ratio_baseline_keeps_everything(tiny_dataset):
    sampled = baseline_random(tiny_dataset, 1.0, 1.0, seed=0)
    assert sampled.users == tiny_dataset.users
    assert sampled.impressions == tiny_dataset.impressions
    for item_id, item in tiny_dataset.items.items():
        assert sampled.items[item_id].title == " ".join(_words(item_content(item)))
    assert baseline_majority(tiny_dataset, 1.0, 1.0).n_users == tiny_dataset.n_users


def test_random_baseline_sizes_and_determinism(small_synthetic):
    dataset, _ = small_synthetic
    first = baseline_random(dataset, 0.25, 0.5, seed=4)
    assert first.n_users == math.ceil(0.25 * dataset.n_users)
    assert first == baseline_random(dataset, 0.25, 0.5, seed=4)
    for item_id, item in first.items.items():
        n_tokens = DEFAULT_TOKENIZER.count(item_content(dataset.items[item_id]))
        assert DEFAULT_TOKENIZER.count(item.title) == math.ceil(0.5 * n_tokens)


def test_majority_baseline_takes_longest_histories(small_synthetic):
    dataset, _ = small_synthetic
    sampled = baseline_majority(dataset, 0.3, 0.5)
    kept = [len(dataset.users[u]) for u in sampled.users]
    dropped = [len(h) for u, h in dataset.users.items() if u not in sampled.users]
    assert min(kept) >= max(dropped)
    assert np.mean(kept) >= np.mean([len(h) for h in dataset.users.values()])


def test_baseline_ratio_validation(tiny_dataset):
    with pytest.raises(InvalidArgumentError):
        baseline_random(tiny_dataset, 0.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        baseline_majority(tiny_dataset, 0.5, 1.5)


def test_sampling_and_matching_count_the_same_tokens():
    items = {
        "a": Item("a", "Well-known U.S. firm", "Hits record; shares up", "finance"),
        "b": Item("b", "Plain words only here", "", "news"),
    }
    users = {"u1": ClickHistory("u1", ("a",)), "u2": ClickHistory("u2", ("b",))}
    impressions = (Impression("u1", "b", 1), Impression("u2", "a", 1))
    dataset = Dataset(items=items, users=users, impressions=impressions)

    sampled = baseline_random(dataset, 1.0, 0.5, seed=0)
    for item_id, item in items.items():
        n_tokens = DEFAULT_TOKENIZER.count(item_content(item))
        assert DEFAULT_TOKENIZER.count(sampled.items[item_id].title) == math.ceil(0.5 * n_tokens)
        assert set(sampled.items[item_id].title.split()) <= set(_words(item_content(item)))

    _, token_ratio = matched_baseline_ratios(sampled, dataset)
    expected = np.mean([5, 3]) / np.mean([10, 5])
    assert token_ratio == pytest.approx(expected)


def test_matched_ratios_of_identical_datasets(tiny_dataset):
    assert matched_baseline_ratios(tiny_dataset, tiny_dataset) == (1.0, 1.0)


def test_adjusted_rand_index():
    assert adjusted_rand_index([0, 0, 1, 1], [1, 1, 0, 0]) == pytest.approx(1.0)
    assert adjusted_rand_index([0, 0, 0, 1, 1, 1], [0, 0, 1, 1, 2, 2]) == pytest.approx(0.242424, abs=1e-6)
    with pytest.raises(InvalidArgumentError):
        adjusted_rand_index([0, 1], [0])


# sweeps


@pytest.fixture
def sweep_pipeline(fast_train_config):
    return CondensePipeline(
        train_config=fast_train_config,
        condense_config=CondenseConfig(K=2, m=2, seed=0),
        k_list=(1, 5),
    )


def test_sweep_alpha_echoes_values(sweep_pipeline, small_split):
    train_set, _, test = small_split
    rows = asyncio.run(sweep_alpha(sweep_pipeline, train_set, test, [0.0, 0.5]))
    assert [row.value for row in rows] == [0.0, 0.5]
    assert all(row.n_users == 2 for row in rows)
    assert all(set(row.metrics) == {"ndcg@1", "ndcg@5", "recall@1", "recall@5"} for row in rows)


def test_sweep_k_sets_user_count(sweep_pipeline, small_split):
    train_set, _, test = small_split
    rows = asyncio.run(sweep_k(sweep_pipeline, train_set, test, [2, 3]))
    assert [row.n_users for row in rows] == [2, 3]
    assert all(0.0 < row.overall_ratio < 1.0 for row in rows)
