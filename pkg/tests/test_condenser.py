import asyncio
from collections import Counter

import numpy as np
import pytest

from condenserec.base import ClickHistory, CondenseConfig, TrainConfig
from condenserec.condenser import (
    ClusterModel,
    _assign,
    cluster_users,
    condense_contents,
    condense_dataset,
    interest_centroids,
    kmeans,
    kmeans_plusplus_init,
    lloyd,
    select_members,
    selection_scores,
    synthesize_users,
)
from condenserec.datamodel import serialize_behaviors, serialize_items, split_dataset, validate_dataset
from condenserec.evaluate import adjusted_rand_index, evaluate, quality
from condenserec.exceptions import InvalidArgumentError
from condenserec.llm.mock import MockBackend
from condenserec.pipeline import CondensePipeline
from condenserec.prompt import default_prompt
from condenserec.recmodel import train
from condenserec.synthetic import SyntheticBenchmarkSpec, generate_synthetic
from condenserec.textenc import EmbeddingVector
from condenserec.utils import DEFAULT_TOKENIZER


def _vec(values):
    return EmbeddingVector.from_array(values)


def _blobs(rng, n_per_blob=20):
    a = rng.normal(0.0, 0.1, size=(n_per_blob, 2))
    b = rng.normal(0.0, 0.1, size=(n_per_blob, 2)) + 10.0
    return np.vstack([a, b])


# k-means


def test_two_planted_blobs_are_recovered():
    X = _blobs(np.random.default_rng(0))
    _, labels, _ = kmeans(X, 2, max_iter=50, tol=1e-6, restarts=2, seed=0)
    assert len(set(labels[:20])) == 1
    assert len(set(labels[20:])) == 1
    assert labels[0] != labels[-1]


def test_k_equal_to_n_gives_zero_inertia():
    X = np.random.default_rng(1).normal(size=(12, 3))
    _, labels, history = kmeans(X, 12, max_iter=20, tol=1e-6, restarts=1, seed=0)
    assert sorted(labels.tolist()) == list(range(12))
    assert history[-1] == pytest.approx(0.0, abs=1e-12)


def test_inertia_never_increases():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 8))
    init = kmeans_plusplus_init(X, 6, rng)
    _, _, history = lloyd(X, init, max_iter=100, tol=0.0)
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


def test_kmeans_rejects_bad_k():
    X = np.zeros((3, 2))
    with pytest.raises(InvalidArgumentError):
        kmeans(X, 0, max_iter=5, tol=0.0, restarts=1, seed=0)
    with pytest.raises(InvalidArgumentError):
        kmeans(X, 4, max_iter=5, tol=0.0, restarts=1, seed=0)


def test_empty_cluster_is_repaired():
    X = np.array([[0.0], [0.1], [0.2]])
    centroids = np.array([[0.0], [100.0]])
    labels, _, _ = _assign(X, centroids)
    assert set(labels.tolist()) == {0, 1}


def test_kmeans_plusplus_handles_duplicate_points():
    X = np.zeros((4, 2))
    centers = kmeans_plusplus_init(X, 3, np.random.default_rng(0))
    assert centers.shape == (3, 2)


def test_scaling_embeddings_keeps_assignments():
    X = np.random.default_rng(3).normal(size=(60, 4))
    _, labels, _ = kmeans(X, 4, max_iter=100, tol=1e-8, restarts=2, seed=5)
    _, scaled, _ = kmeans(X * 3.0, 4, max_iter=100, tol=1e-8, restarts=2, seed=5)
    assert np.array_equal(labels, scaled)


def test_cluster_users_is_deterministic():
    rng = np.random.default_rng(4)
    embeddings = {f"u{i}": _vec(v) for i, v in enumerate(_blobs(rng))}
    config = CondenseConfig(K=2, seed=9)
    first = cluster_users(embeddings, 2, config)
    second = cluster_users(embeddings, 2, config)
    assert first.assignments == second.assignments
    assert set(first.members()) == {0, 1}


def test_cluster_users_rejects_mixed_dimensions():
    embeddings = {"u1": _vec([1.0, 0.0]), "u2": _vec([1.0, 0.0, 1.0])}
    with pytest.raises(InvalidArgumentError):
        cluster_users(embeddings, 1, CondenseConfig(K=1))


# selection


def _model(assignments, K, dim=2, centroids=None):
    return ClusterModel(
        K=K,
        centroids=np.zeros((K, dim)) if centroids is None else centroids,
        assignments=assignments,
    )


def test_interest_centroids_are_member_means():
    rng = np.random.default_rng(5)
    assignments = {f"u{i}": i % 3 for i in range(12)}
    interests = {u: _vec(rng.normal(size=4)) for u in assignments}
    model = _model(assignments, 3, dim=4)
    centroids = interest_centroids(model, interests)
    for k in range(3):
        members = [interests[u].values for u, c in assignments.items() if c == k]
        np.testing.assert_allclose(centroids[k], np.mean(members, axis=0), atol=1e-9)
    assert model.interest_centroids is centroids


def test_interest_centroid_of_single_member():
    model = _model({"u1": 0}, 1)
    centroids = interest_centroids(model, {"u1": _vec([0.3, 0.4])})
    np.testing.assert_allclose(centroids[0], [0.3, 0.4])


def test_users_without_interests_are_left_out_of_centroids():
    model = _model({"u1": 0, "u2": 0, "u3": 1}, 2)
    empty = EmbeddingVector(values=np.zeros(2), is_zero=True)
    centroids = interest_centroids(model, {"u1": _vec([0.6, 0.8]), "u2": empty, "u3": empty})
    np.testing.assert_allclose(centroids[0], [0.6, 0.8])
    np.testing.assert_allclose(centroids[1], [0.0, 0.0])


def test_interest_centroids_need_every_member():
    model = _model({"u1": 0, "u2": 0}, 1)
    with pytest.raises(InvalidArgumentError, match="u2"):
        interest_centroids(model, {"u1": _vec([1.0, 0.0])})


def test_alpha_zero_leaves_embedding_distance():
    rng = np.random.default_rng(6)
    K = 10
    assignments = {f"u{i:04d}": int(rng.integers(K)) for i in range(1000)}
    model = _model(assignments, K, dim=8, centroids=rng.normal(size=(K, 8)))
    users = {u: _vec(rng.normal(size=8)) for u in assignments}
    interests = {u: _vec(rng.normal(size=6)) for u in assignments}
    scores = selection_scores(model, users, interests, alpha=0.0)
    assert all(s.d_u == s.d_emb for s in scores.values())


def test_selection_score_arithmetic():
    model = _model({"u1": 0}, 1)
    model.interest_centroids = np.zeros((1, 2))
    scores = selection_scores(model, {"u1": _vec([0.2, 0.0])}, {"u1": _vec([0.3, 0.0])}, alpha=1.0)
    assert scores["u1"].d_emb == pytest.approx(0.2)
    assert scores["u1"].d_int == pytest.approx(0.3)
    assert scores["u1"].d_u == pytest.approx(0.5)


def test_user_at_both_centroids_scores_zero():
    model = _model({"u1": 0}, 1, centroids=np.array([[1.0, 0.0]]))
    for alpha in (0.0, 0.5, 3.0):
        model.interest_centroids = None
        scores = selection_scores(model, {"u1": _vec([1.0, 0.0])}, {"u1": _vec([0.0, 1.0])}, alpha)
        assert scores["u1"].d_u == 0.0


def test_negative_alpha_is_rejected():
    model = _model({"u1": 0}, 1)
    with pytest.raises(InvalidArgumentError):
        selection_scores(model, {"u1": _vec([1.0, 0.0])}, {"u1": _vec([1.0, 0.0])}, alpha=-0.1)


def _scored_model():
    model = _model({"u1": 0, "u2": 0, "u3": 0, "u4": 1}, 2)
    model.interest_centroids = np.zeros((2, 2))
    users = {"u1": _vec([0.3, 0.0]), "u2": _vec([0.1, 0.0]), "u3": _vec([0.2, 0.0]), "u4": _vec([0.5, 0.0])}
    interests = {u: _vec([0.0, 0.0]) for u in users}
    return model, selection_scores(model, users, interests, alpha=1.0)


def test_select_members_orders_by_ascending_score():
    model, scores = _scored_model()
    selected = select_members(model, scores, m=2)
    assert selected == {0: ["u2", "u3"], 1: ["u4"]}


def test_synthesize_users_merges_closest_histories():
    model, scores = _scored_model()
    histories = {
        "u1": ClickHistory("u1", ("x",)),
        "u2": ClickHistory("u2", ("a", "b")),
        "u3": ClickHistory("u3", ("b", "c")),
        "u4": ClickHistory("u4", ("d",)),
    }
    merged = synthesize_users(model, scores, histories, m=2)
    assert merged["syn-0"].item_ids == ("a", "b", "c")
    assert merged["syn-1"].item_ids == ("d",)
    single = synthesize_users(model, scores, histories, m=1)
    assert single["syn-0"].item_ids == ("a", "b")
    assert len(merged) == model.K


# contents and the full pipeline


def test_condense_contents_preserves_ids(tiny_dataset):
    items, failed = asyncio.run(
        condense_contents(tiny_dataset.items, default_prompt("condense_item"), MockBackend(summary_budget=4))
    )
    assert list(items) == list(tiny_dataset.items)
    assert failed == []
    assert items["n5"].title == "Chip maker expands"
    assert all(item.abstract == "" and item.category == "" for item in items.values())
    assert all(DEFAULT_TOKENIZER.count(item.title) <= 4 for item in items.values())


@pytest.fixture(scope="module")
def trained(small_split):
    train_set, _, _ = small_split
    params = train(train_set, TrainConfig(n_buckets=256, d_c=16, d_u=8, epochs=2, batch_size=16))
    return train_set, params


def test_condense_dataset_full_scope(trained):
    train_set, params = trained
    config = CondenseConfig(K=3, m=2, seed=0)
    condensed, report = asyncio.run(
        condense_dataset(train_set, config, default_prompt("condense_item"), MockBackend(), params)
    )
    validate_dataset(condensed)
    assert list(condensed.users) == ["syn-0", "syn-1", "syn-2"]
    assert set(condensed.items) <= set(train_set.items)
    assert len(report.provenance) == 3
    for entry in report.provenance:
        assert 1 <= len(entry.members) <= 2
        assert entry.scores == sorted(entry.scores)
    assert set(report.stage_seconds) == {"interests", "embeddings", "clustering", "synthesis", "content"}

    original_tokens = np.mean([DEFAULT_TOKENIZER.count(i.title + " " + i.abstract) for i in train_set.items.values()])
    condensed_tokens = np.mean([DEFAULT_TOKENIZER.count(i.title) for i in condensed.items.values()])
    assert condensed_tokens < original_tokens


def test_condense_dataset_is_deterministic(trained):
    train_set, params = trained
    config = CondenseConfig(K=3, m=2, seed=0)
    runs = [
        asyncio.run(condense_dataset(train_set, config, default_prompt("condense_item"), MockBackend(), params))
        for _ in range(2)
    ]
    (first, first_report), (second, second_report) = runs
    assert serialize_items(first) == serialize_items(second)
    assert serialize_behaviors(first) == serialize_behaviors(second)
    assert first_report.provenance_lines() == second_report.provenance_lines()


def test_identity_configuration_reproduces_histories(trained):
    train_set, params = trained
    config = CondenseConfig(K=train_set.n_users, m=1, seed=0)
    condensed, _ = asyncio.run(
        condense_dataset(train_set, config, default_prompt("condense_item"), MockBackend(mode="echo"), params)
    )
    assert condensed.n_users == train_set.n_users
    original = Counter(h.item_ids for h in train_set.users.values())
    synthetic = Counter(h.item_ids for h in condensed.users.values())
    assert synthetic == original


def test_content_only_scope_keeps_users(trained):
    train_set, params = trained
    config = CondenseConfig(K=3, scope="content_only")
    condensed, report = asyncio.run(
        condense_dataset(train_set, config, default_prompt("condense_item"), MockBackend(), params)
    )
    assert condensed.users == train_set.users
    assert report.cluster_model is None
    assert report.provenance == []


def test_user_only_scope_keeps_item_text(trained):
    train_set, params = trained
    config = CondenseConfig(K=3, scope="user_only", impression_mode="history_positives")
    condensed, _ = asyncio.run(
        condense_dataset(train_set, config, default_prompt("condense_item"), MockBackend(), params)
    )
    assert all(condensed.items[i] == train_set.items[i] for i in condensed.items)
    for sid, history in condensed.users.items():
        positives = {imp.candidate_item_id for imp in condensed.impressions if imp.user_id == sid and imp.label}
        assert positives == set(history.item_ids)


def test_random_token_interests(trained):
    train_set, params = trained
    config = CondenseConfig(K=3, interest_source="random_tokens", interest_count=3)
    _, report = asyncio.run(
        condense_dataset(train_set, config, default_prompt("condense_item"), MockBackend(), params)
    )
    assert all(1 <= len(v) <= 3 for v in report.interests.values())


def test_k_above_user_count_is_rejected(trained):
    train_set, params = trained
    config = CondenseConfig(K=train_set.n_users + 1)
    with pytest.raises(InvalidArgumentError):
        asyncio.run(condense_dataset(train_set, config, default_prompt("condense_item"), MockBackend(), params))


def test_planted_groups_are_recovered():
    spec = SyntheticBenchmarkSpec(groups=8, users_per_group=50, seed=0)
    dataset, labels = generate_synthetic(spec)
    train_set, _, _ = split_dataset(dataset, (0.8, 0.1, 0.1), seed=0)
    params = train(train_set, TrainConfig(n_buckets=1024, d_c=32, d_u=16, epochs=2, seed=0))
    config = CondenseConfig(K=8, m=5, alpha=0.2, seed=0)
    condensed, report = asyncio.run(
        condense_dataset(train_set, config, default_prompt("condense_item"), MockBackend(), params)
    )
    assigned = report.cluster_labels()
    users = sorted(assigned)
    ari = adjusted_rand_index([labels[u] for u in users], [assigned[u] for u in users])
    assert ari >= 0.9
    assert condensed.n_users == 8


def _benchmark_qualities(seed):
    dataset, _ = generate_synthetic(SyntheticBenchmarkSpec(groups=8, users_per_group=50, seed=seed))
    train_set, _, test_set = split_dataset(dataset, (0.8, 0.1, 0.1), seed=seed)
    pipeline = CondensePipeline(
        train_config=TrainConfig(seed=seed),
        condense_config=CondenseConfig(K=8, m=5, alpha=0.2, seed=seed),
    )
    params = pipeline.train_model(train_set)
    original = evaluate(params, test_set, pipeline.k_list)
    condensed, _ = pipeline.condense(train_set, params)
    qualities = {"condensed": quality(evaluate(pipeline.train_model(condensed), test_set, pipeline.k_list), original)}
    for kind, baseline in pipeline.matched_baselines(condensed, train_set).items():
        qualities[kind] = quality(evaluate(pipeline.train_model(baseline), test_set, pipeline.k_list), original)
    return qualities


@pytest.mark.slow
def test_condensed_set_keeps_quality_and_beats_baselines():
    runs = [_benchmark_qualities(seed) for seed in range(5)]
    medians = {kind: float(np.median([run[kind] for run in runs])) for kind in runs[0]}
    assert medians["condensed"] >= 90.0
    assert medians["condensed"] > medians["random"]
    assert medians["condensed"] > medians["majority"]
