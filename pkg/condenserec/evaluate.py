from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import replace
from typing import TYPE_CHECKING

import numpy as np

from condenserec.base import ClickHistory, Dataset, Item, item_content
from condenserec.constants import DEFAULT_K_LIST
from condenserec.datamodel import size_report
from condenserec.exceptions import EvaluationError, InvalidArgumentError
from condenserec.recmodel import RecModelParams, project_items, score_candidates
from condenserec.types import MetricsReport, SweepRow
from condenserec.utils import Tokenizer, logger

# case-preserving; token counts equal DEFAULT_TOKENIZER's
_SAMPLE_TOKENIZER = Tokenizer(lowercase=False)

if TYPE_CHECKING:
    from condenserec.pipeline import CondensePipeline


def _check_k(k: int) -> None:
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")


def ndcg_at_k(ranked_labels: Sequence[int], k: int) -> float:
    """Binary-gain NDCG@k of labels listed in model-score order."""
    _check_k(k)
    n_pos = int(sum(ranked_labels))
    if n_pos == 0:
        return 0.0
    dcg = sum(
        label / math.log2(i + 2) for i, label in enumerate(ranked_labels[:k]) if label
    )
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(k, n_pos)))
    return dcg / idcg


def recall_at_k(ranked_labels: Sequence[int], k: int) -> float:
    _check_k(k)
    n_pos = int(sum(ranked_labels))
    if n_pos == 0:
        return 0.0
    return int(sum(ranked_labels[:k])) / n_pos


def rank_labels(
    candidate_ids: Sequence[str], labels: Sequence[int], scores: Sequence[float]
) -> list[int]:
    """Labels sorted by descending score, ties broken by candidate id."""
    order = sorted(range(len(candidate_ids)), key=lambda i: (-scores[i], candidate_ids[i]))
    return [labels[i] for i in order]


def evaluate(
    params: RecModelParams, test: Dataset, k_list: Sequence[int] = DEFAULT_K_LIST
) -> MetricsReport:
    """Average NDCG@k and Recall@k over the per-user impression groups of ``test``.

    Groups without a positive, or whose user has no click history, are skipped.
    """
    for k in k_list:
        _check_k(k)
    projections = project_items(params, test.items)
    ndcg = {k: [] for k in k_list}
    recall = {k: [] for k in k_list}
    skipped = 0
    for user_id, group in test.impressions_by_user().items():
        if not group:
            continue
        labels = [imp.label for imp in group]
        history: ClickHistory = test.users[user_id]
        if not any(labels) or not history.item_ids:
            skipped += 1
            continue
        candidate_ids = [imp.candidate_item_id for imp in group]
        scores = score_candidates(params, history, candidate_ids, test.items, projections)
        ranked = rank_labels(candidate_ids, labels, scores.tolist())
        for k in k_list:
            ndcg[k].append(ndcg_at_k(ranked, k))
            recall[k].append(recall_at_k(ranked, k))

    n_groups = len(ndcg[k_list[0]]) if k_list else 0
    if n_groups == 0:
        raise EvaluationError("no impression group with a positive label to evaluate")
    if skipped:
        logger.info(f"Skipped {skipped} impression groups without positives or history")
    return MetricsReport(
        k_list=list(k_list),
        ndcg={k: float(np.mean(v)) for k, v in ndcg.items()},
        recall={k: float(np.mean(v)) for k, v in recall.items()},
        n_groups=n_groups,
        skipped_groups=skipped,
    )


def quality(condensed: MetricsReport, original: MetricsReport) -> float:
    """Mean ratio of condensed to original metrics, in percent."""
    cond = condensed.as_row()
    orig = original.as_row()
    if set(cond) != set(orig):
        raise EvaluationError(
            f"reports cover different metrics: {sorted(cond)} vs {sorted(orig)}"
        )
    ratios = []
    for name, value in orig.items():
        if value == 0:
            raise EvaluationError(f"original {name} is 0, quality is undefined")
        ratios.append(cond[name] / value)
    return sum(ratios) / len(ratios) * 100.0


# baselines


def _check_ratio(name: str, value: float) -> None:
    if not 0.0 < value <= 1.0:
        raise InvalidArgumentError(f"{name} must be in (0, 1], got {value}")


def _sampled_dataset(
    train: Dataset,
    selected: Sequence[str],
    token_ratio: float,
    rng: np.random.Generator,
) -> Dataset:
    keep = set(selected)
    users = {u: h for u, h in train.users.items() if u in keep}
    impressions = tuple(imp for imp in train.impressions if imp.user_id in keep)
    referenced = {i for h in users.values() for i in h.item_ids}
    referenced.update(imp.candidate_item_id for imp in impressions)
    items = {}
    for item_id, item in train.items.items():
        if item_id not in referenced:
            continue
        tokens = _SAMPLE_TOKENIZER.tokenize(item_content(item))
        if not tokens:
            items[item_id] = item
            continue
        n_keep = max(1, math.ceil(token_ratio * len(tokens)))
        picked = np.sort(rng.choice(len(tokens), size=n_keep, replace=False))
        items[item_id] = Item(id=item_id, title=" ".join(tokens[i] for i in picked))
    return Dataset(items=items, users=users, impressions=impressions)


def _n_selected(train: Dataset, user_ratio: float, token_ratio: float) -> int:
    _check_ratio("user_ratio", user_ratio)
    _check_ratio("token_ratio", token_ratio)
    n = math.ceil(user_ratio * train.n_users)
    if n == 0:
        raise InvalidArgumentError("baseline sample would contain no user")
    return n


def baseline_random(
    train: Dataset, user_ratio: float, token_ratio: float, seed: int = 0
) -> Dataset:
    """Uniform user sample plus an order-preserving uniform token sample per item."""
    n = _n_selected(train, user_ratio, token_ratio)
    rng = np.random.default_rng(seed)
    user_ids = list(train.users)
    picked = np.sort(rng.choice(len(user_ids), size=n, replace=False))
    return _sampled_dataset(train, [user_ids[i] for i in picked], token_ratio, rng)


def baseline_majority(
    train: Dataset, user_ratio: float, token_ratio: float, seed: int = 0
) -> Dataset:
    """The users with the longest histories plus the same token sampling."""
    n = _n_selected(train, user_ratio, token_ratio)
    rng = np.random.default_rng(seed)
    ranked = sorted(train.users, key=lambda u: (-len(train.users[u]), u))
    return _sampled_dataset(train, ranked[:n], token_ratio, rng)


def matched_baseline_ratios(condensed: Dataset, reference: Dataset) -> tuple[float, float]:
    """User and token ratios that make a sampled baseline about as large as ``condensed``.

    The user ratio follows the serialized size of the behaviors part; the
    token ratio follows the mean item length in tokens.
    """
    report = size_report(condensed, reference)
    floor = 1.0 / max(1, reference.n_users)
    user_ratio = min(1.0, max(floor, report.user_ratio))

    def _mean_tokens(dataset: Dataset) -> float:
        if not dataset.items:
            return 0.0
        return float(
            np.mean([_SAMPLE_TOKENIZER.count(item_content(i)) for i in dataset.items.values()])
        )

    ref_tokens = _mean_tokens(reference)
    token_ratio = _mean_tokens(condensed) / ref_tokens if ref_tokens else 1.0
    token_ratio = min(1.0, max(1e-3, token_ratio))
    return user_ratio, token_ratio


def adjusted_rand_index(labels_true: Sequence, labels_pred: Sequence) -> float:
    """Adjusted Rand index between two flat clusterings of the same points."""
    if len(labels_true) != len(labels_pred):
        raise InvalidArgumentError("label sequences differ in length")
    n = len(labels_true)
    if n < 2:
        return 1.0
    _, true_idx = np.unique(np.asarray(labels_true), return_inverse=True)
    _, pred_idx = np.unique(np.asarray(labels_pred), return_inverse=True)
    table = np.zeros((true_idx.max() + 1, pred_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (true_idx, pred_idx), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(table).sum()
    sum_rows = comb2(table.sum(axis=1)).sum()
    sum_cols = comb2(table.sum(axis=0)).sum()
    expected = sum_rows * sum_cols / comb2(n)
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


# sweeps


async def _sweep(
    pipeline: CondensePipeline,
    train: Dataset,
    test: Dataset,
    configs: list[tuple[float, object]],
) -> list[SweepRow]:
    params = pipeline.train_model(train)
    original = evaluate(params, test, pipeline.k_list)
    rows = []
    for value, condense_config in configs:
        condensed, _ = await pipeline.acondense(train, params, condense_config)
        report = evaluate(pipeline.train_model(condensed), test, pipeline.k_list)
        q = quality(report, original)
        rows.append(
            SweepRow(
                value=value,
                quality_pct=q,
                n_users=condensed.n_users,
                n_items=condensed.n_items,
                overall_ratio=size_report(condensed, train).overall_ratio,
                metrics=report.as_row(),
            )
        )
        logger.info(f"Sweep value {value}: quality {q:.2f}%")
    return rows


async def sweep_alpha(
    pipeline: CondensePipeline, train: Dataset, test: Dataset, alphas: Sequence[float]
) -> list[SweepRow]:
    """Quality of the condensed dataset for every alpha, all else fixed."""
    base = pipeline.condense_config
    return await _sweep(
        pipeline, train, test, [(float(a), replace(base, alpha=float(a))) for a in alphas]
    )


async def sweep_k(
    pipeline: CondensePipeline, train: Dataset, test: Dataset, k_values: Sequence[int]
) -> list[SweepRow]:
    """Quality of the condensed dataset for every cluster count, all else fixed."""
    base = pipeline.condense_config
    return await _sweep(
        pipeline, train, test, [(float(k), replace(base, K=int(k))) for k in k_values]
    )
