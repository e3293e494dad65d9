"""
Training-free condensation of a recommendation dataset.

Item contents are condensed into short titles by the LLM backend. Users are
embedded by the trained recommender, clustered with K-means, and every
cluster becomes one synthetic user whose history merges the histories of
the members closest to the cluster (by embedding distance plus a weighted
interest distance).
"""

from __future__ import annotations

import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from condenserec.base import (
    ClickHistory,
    CondenseConfig,
    Dataset,
    Impression,
    Item,
    item_content,
)
from condenserec.constants import DEFAULT_EMBEDDING_DIM, SYNTHETIC_USER_PREFIX
from condenserec.exceptions import ClusteringError, InvalidArgumentError, LlmError
from condenserec.llm import LlmBackend
from condenserec.operate import condense_item, extract_interests
from condenserec.prompt import PromptTemplate, default_prompt
from condenserec.recmodel import RecModelParams, project_items, user_embedding
from condenserec.textenc import EmbeddingVector, distance, encode_text, pool
from condenserec.utils import DEFAULT_TOKENIZER, gather_with_limit, logger


@dataclass
class ClusterModel:
    K: int
    centroids: np.ndarray
    """K x d_u user-embedding centroids."""

    assignments: dict[str, int]
    """Cluster index of every clustered user, in clustering order."""

    inertia: float = 0.0
    inertia_history: list[float] = field(default_factory=list)
    """Inertia after every assignment step of the winning restart."""

    interest_centroids: np.ndarray | None = None
    """K x d mean interest embeddings, filled by ``interest_centroids``."""

    def members(self) -> dict[int, list[str]]:
        groups: dict[int, list[str]] = {k: [] for k in range(self.K)}
        for user_id, k in self.assignments.items():
            groups[k].append(user_id)
        return groups


@dataclass(frozen=True)
class SelectionScore:
    user_id: str
    d_emb: float
    d_int: float
    d_u: float


@dataclass
class ProvenanceEntry:
    synthetic_id: str
    cluster: int
    members: list[str]
    """Merged members, ascending selection score."""

    scores: list[float]
    """Selection score of each merged member."""


@dataclass
class CondenseReport:
    provenance: list[ProvenanceEntry] = field(default_factory=list)
    cluster_model: ClusterModel | None = None
    selection: dict[str, SelectionScore] = field(default_factory=dict)
    interests: dict[str, list[str]] = field(default_factory=dict)
    failed_interest_users: list[str] = field(default_factory=list)
    failed_items: list[str] = field(default_factory=list)
    skipped_users: list[str] = field(default_factory=list)
    """Users left out of clustering because their click history is empty."""

    stage_seconds: dict[str, float] = field(default_factory=dict)

    def provenance_lines(self) -> list[str]:
        return [
            f"{entry.synthetic_id}\t{','.join(entry.members)}\t"
            + ",".join(f"{value:.6f}" for value in entry.scores)
            for entry in self.provenance
        ]

    def write_provenance(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for line in self.provenance_lines():
                f.write(line + "\n")

    def cluster_labels(self) -> dict[str, int]:
        """Cluster of every original user that ended up merged or clustered."""
        return dict(self.cluster_model.assignments) if self.cluster_model else {}


def synthetic_user_id(k: int) -> str:
    return f"{SYNTHETIC_USER_PREFIX}{k}"


# K-means


def _squared_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def kmeans_plusplus_init(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0.0:
            # every point coincides with a chosen center: pick among the rest
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(remaining[rng.integers(len(remaining))])
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _assign(X: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Nearest-centroid labels; empty clusters take the farthest point of the worst cluster."""
    K = centroids.shape[0]
    d2 = _squared_distances(X, centroids)
    labels = np.argmin(d2, axis=1)
    point_d2 = d2[np.arange(X.shape[0]), labels]
    for empty in range(K):
        if np.any(labels == empty):
            continue
        counts = np.bincount(labels, minlength=K)
        cluster_inertia = np.bincount(labels, weights=point_d2, minlength=K)
        cluster_inertia[counts < 2] = -1.0
        donor = int(np.argmax(cluster_inertia))
        if cluster_inertia[donor] < 0:
            raise ClusteringError("cannot repair an empty cluster: fewer points than clusters")
        candidates = np.flatnonzero(labels == donor)
        moved = int(candidates[np.argmax(point_d2[candidates])])
        labels[moved] = empty
        centroids[empty] = X[moved]
        point_d2[moved] = 0.0
    return labels, centroids, float(point_d2.sum())


def _cluster_means(X: np.ndarray, labels: np.ndarray, K: int) -> np.ndarray:
    sums = np.zeros((K, X.shape[1]))
    np.add.at(sums, labels, X)
    counts = np.bincount(labels, minlength=K).astype(np.float64)
    return sums / counts[:, None]


def lloyd(
    X: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations from ``centroids``; returns centroids, labels and inertia per step."""
    K = centroids.shape[0]
    tol_abs = tol * float(np.mean(np.var(X, axis=0)))
    centroids = centroids.copy()
    history: list[float] = []
    labels: np.ndarray | None = None
    for _ in range(max_iter):
        new_labels, centroids, inertia = _assign(X, centroids)
        history.append(inertia)
        if labels is not None and np.array_equal(new_labels, labels):
            return centroids, new_labels, history
        labels = new_labels
        updated = _cluster_means(X, labels, K)
        shift = float(((updated - centroids) ** 2).sum())
        centroids = updated
        if shift <= tol_abs:
            break
    labels, centroids, inertia = _assign(X, centroids)
    history.append(inertia)
    return centroids, labels, history


def kmeans(
    X: np.ndarray, K: int, *, max_iter: int, tol: float, restarts: int, seed: int
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Best of ``restarts`` k-means++ seeded runs, by final inertia."""
    n = X.shape[0]
    if K <= 0:
        raise InvalidArgumentError(f"K must be >= 1, got {K}")
    if K > n:
        raise InvalidArgumentError(f"K={K} exceeds the number of users ({n})")
    rng = np.random.default_rng(seed)
    best = None
    for restart in range(restarts):
        init = kmeans_plusplus_init(X, K, rng)
        centroids, labels, history = lloyd(X, init, max_iter, tol)
        logger.debug(f"k-means restart {restart}: inertia {history[-1]:.6f} in {len(history)} steps")
        if best is None or history[-1] < best[2][-1]:
            best = (centroids, labels, history)
    return best


def cluster_users(
    user_embeddings: Mapping[str, EmbeddingVector], K: int, config: CondenseConfig
) -> ClusterModel:
    if not user_embeddings:
        raise InvalidArgumentError("no user embeddings to cluster")
    dims = {v.dim for v in user_embeddings.values()}
    if len(dims) != 1:
        raise InvalidArgumentError(f"user embeddings have mixed dimensions {sorted(dims)}")
    user_ids = list(user_embeddings)
    X = np.stack([user_embeddings[u].values for u in user_ids])
    centroids, labels, history = kmeans(
        X,
        K,
        max_iter=config.kmeans_max_iter,
        tol=config.kmeans_tol,
        restarts=config.kmeans_restarts,
        seed=config.seed,
    )
    return ClusterModel(
        K=K,
        centroids=centroids,
        assignments={u: int(k) for u, k in zip(user_ids, labels)},
        inertia=history[-1],
        inertia_history=history,
    )


def interest_centroids(
    model: ClusterModel, interest_embeddings: Mapping[str, EmbeddingVector]
) -> np.ndarray:
    """Mean interest embedding of every cluster; stored on the model as well.

    Users without interests (zero embeddings) are left out of the mean. A
    cluster whose members all lack interests gets a zero centroid.
    """
    sums: np.ndarray | None = None
    counts = np.zeros(model.K)
    skipped = 0
    for user_id, k in model.assignments.items():
        if user_id not in interest_embeddings:
            raise InvalidArgumentError(f"no interest embedding for user {user_id}")
        embedding = interest_embeddings[user_id]
        if sums is None:
            sums = np.zeros((model.K, embedding.values.shape[0]))
        if embedding.is_zero:
            skipped += 1
            continue
        sums[k] += embedding.values
        counts[k] += 1
    if skipped:
        logger.info(f"{skipped} users without interests left out of the interest centroids")
    centroids = np.divide(
        sums, counts[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0
    )
    model.interest_centroids = centroids
    return centroids


def selection_scores(
    model: ClusterModel,
    user_embeddings: Mapping[str, EmbeddingVector],
    interest_embeddings: Mapping[str, EmbeddingVector],
    alpha: float,
) -> dict[str, SelectionScore]:
    """d_u = d_emb + alpha * d_int for every clustered user."""
    if alpha < 0:
        raise InvalidArgumentError(f"alpha must be >= 0, got {alpha}")
    if model.interest_centroids is None:
        interest_centroids(model, interest_embeddings)
    centroid_vectors = [EmbeddingVector(values=c) for c in model.centroids]
    interest_vectors = [EmbeddingVector(values=c) for c in model.interest_centroids]
    scores = {}
    for user_id, k in model.assignments.items():
        d_emb = distance(user_embeddings[user_id], centroid_vectors[k])
        d_int = distance(interest_embeddings[user_id], interest_vectors[k])
        scores[user_id] = SelectionScore(
            user_id=user_id, d_emb=d_emb, d_int=d_int, d_u=d_emb + alpha * d_int
        )
    return scores


def select_members(
    model: ClusterModel, scores: Mapping[str, SelectionScore], m: int
) -> dict[int, list[str]]:
    """The (at most) m members of every cluster with the smallest selection score."""
    if m < 1:
        raise InvalidArgumentError(f"m must be >= 1, got {m}")
    selected = {}
    for k, members in model.members().items():
        if not members:
            raise ClusteringError(f"cluster {k} has no members")
        ordered = sorted(members, key=lambda u: (scores[u].d_u, u))
        selected[k] = ordered[:m]
    return selected


def synthesize_users(
    model: ClusterModel,
    scores: Mapping[str, SelectionScore],
    histories: Mapping[str, ClickHistory],
    m: int,
) -> dict[str, ClickHistory]:
    """One synthetic user per cluster whose history is the union of its top members'."""
    synthetic = {}
    for k, members in select_members(model, scores, m).items():
        merged: dict[str, None] = {}
        for user_id in members:
            for item_id in histories[user_id].item_ids:
                merged.setdefault(item_id, None)
        sid = synthetic_user_id(k)
        synthetic[sid] = ClickHistory(user_id=sid, item_ids=tuple(merged))
    return synthetic


# interests and contents


def random_interests(
    history: ClickHistory, items: Mapping[str, Item], count: int, rng: np.random.Generator
) -> list[str]:
    tokens = [
        token
        for item_id in history.item_ids
        for token in DEFAULT_TOKENIZER.tokenize(item_content(items[item_id]))
    ]
    if not tokens:
        return []
    picked = rng.choice(len(tokens), size=min(count, len(tokens)), replace=False)
    return list(dict.fromkeys(tokens[i] for i in sorted(picked)))


def interest_embedding(interests: Sequence[str], dim: int = DEFAULT_EMBEDDING_DIM) -> EmbeddingVector:
    if not interests:
        return EmbeddingVector(values=np.zeros(dim), is_zero=True)
    return pool([encode_text(interest, dim) for interest in interests])


async def condense_contents(
    items: Mapping[str, Item], prompt: PromptTemplate, backend: LlmBackend
) -> tuple[dict[str, Item], list[str]]:
    """Replace every item by its condensed title; failed items keep their original title."""
    if not items:
        raise InvalidArgumentError("no items to condense")

    async def _one(item: Item) -> str | None:
        try:
            return await condense_item(backend, prompt, item)
        except LlmError as e:
            logger.warning(f"Condensing item {item.id} failed: {e}")
            return None

    ordered = list(items.values())
    titles = await gather_with_limit([_one(item) for item in ordered], backend.max_async)
    condensed: dict[str, Item] = {}
    failed: list[str] = []
    for item, title in zip(ordered, titles):
        if title is None:
            failed.append(item.id)
            title = item.title
        condensed[item.id] = Item(id=item.id, title=title)
    if failed:
        logger.warning(f"{len(failed)} of {len(ordered)} items kept their original title")
    return condensed, failed


async def collect_interests(
    train: Dataset,
    user_ids: Sequence[str],
    config: CondenseConfig,
    prompt: PromptTemplate,
    backend: LlmBackend,
) -> tuple[dict[str, list[str]], list[str]]:
    if config.interest_source == "random_tokens":
        rng = np.random.default_rng(config.seed)
        return {
            u: random_interests(train.users[u], train.items, config.interest_count, rng)
            for u in user_ids
        }, []

    async def _one(user_id: str) -> list[str] | None:
        try:
            return await extract_interests(backend, prompt, train.users[user_id], train.items)
        except LlmError as e:
            logger.warning(f"Interest extraction for {user_id} failed: {e}")
            return None

    results = await gather_with_limit([_one(u) for u in user_ids], backend.max_async)
    interests, failed = {}, []
    for user_id, value in zip(user_ids, results):
        if value is None:
            failed.append(user_id)
            value = []
        interests[user_id] = value
    return interests, failed


def synthetic_impressions(
    train: Dataset,
    synthetic: Mapping[str, ClickHistory],
    members: Mapping[int, list[str]],
    config: CondenseConfig,
) -> list[Impression]:
    impressions: list[Impression] = []
    if config.impression_mode == "pooled":
        groups = train.impressions_by_user()
        for k, member_ids in members.items():
            sid = synthetic_user_id(k)
            seen: set[str] = set()
            for user_id in member_ids:
                for imp in groups.get(user_id, []):
                    if imp.candidate_item_id in seen:
                        continue
                    seen.add(imp.candidate_item_id)
                    impressions.append(Impression(sid, imp.candidate_item_id, imp.label))
        return impressions

    rng = np.random.default_rng(config.seed)
    all_item_ids = list(train.items)
    for sid, history in synthetic.items():
        in_history = set(history.item_ids)
        outside = [i for i in all_item_ids if i not in in_history]
        seen = set()
        for item_id in history.item_ids:
            seen.add(item_id)
            impressions.append(Impression(sid, item_id, 1))
            if not outside:
                continue
            for idx in rng.choice(len(outside), size=config.negative_ratio, replace=True):
                candidate = outside[int(idx)]
                if candidate not in seen:
                    seen.add(candidate)
                    impressions.append(Impression(sid, candidate, 0))
    return impressions


async def condense_dataset(
    train: Dataset,
    config: CondenseConfig,
    prompt: PromptTemplate,
    backend: LlmBackend,
    rec_params: RecModelParams,
    interest_prompt: PromptTemplate | None = None,
) -> tuple[Dataset, CondenseReport]:
    """Condense ``train`` into K synthetic users over condensed item contents.

    ``rec_params`` must come from a model trained on ``train``. The returned
    report maps every synthetic user to the original users merged into it.
    """
    report = CondenseReport()
    interest_prompt = interest_prompt or default_prompt("extract_interests")

    if config.scope == "content_only":
        users, impressions = dict(train.users), list(train.impressions)
    else:
        eligible = [u for u, h in train.users.items() if h.item_ids]
        report.skipped_users = [u for u, h in train.users.items() if not h.item_ids]
        if report.skipped_users:
            logger.warning(f"{len(report.skipped_users)} users with empty histories are not clustered")
        if config.K > len(eligible):
            raise InvalidArgumentError(
                f"K={config.K} exceeds the number of users with a click history ({len(eligible)})"
            )

        start = time.perf_counter()
        report.interests, report.failed_interest_users = await collect_interests(
            train, eligible, config, interest_prompt, backend
        )
        report.stage_seconds["interests"] = time.perf_counter() - start

        start = time.perf_counter()
        projections = project_items(rec_params, train.items)
        user_embeddings = {
            u: user_embedding(rec_params, train.users[u], train.items, projections)
            for u in eligible
        }
        interest_embeddings = {u: interest_embedding(report.interests[u]) for u in eligible}
        report.stage_seconds["embeddings"] = time.perf_counter() - start

        start = time.perf_counter()
        model = cluster_users(user_embeddings, config.K, config)
        interest_centroids(model, interest_embeddings)
        report.cluster_model = model
        report.stage_seconds["clustering"] = time.perf_counter() - start

        start = time.perf_counter()
        report.selection = selection_scores(
            model, user_embeddings, interest_embeddings, config.alpha
        )
        members = select_members(model, report.selection, config.m)
        users = synthesize_users(model, report.selection, train.users, config.m)
        impressions = synthetic_impressions(train, users, members, config)
        report.provenance = [
            ProvenanceEntry(
                synthetic_id=synthetic_user_id(k),
                cluster=k,
                members=member_ids,
                scores=[report.selection[u].d_u for u in member_ids],
            )
            for k, member_ids in members.items()
        ]
        report.stage_seconds["synthesis"] = time.perf_counter() - start

    referenced: set[str] = set()
    for history in users.values():
        referenced.update(history.item_ids)
    referenced.update(imp.candidate_item_id for imp in impressions)
    kept = {item_id: item for item_id, item in train.items.items() if item_id in referenced}

    start = time.perf_counter()
    if config.scope == "user_only" or not kept:
        items = kept
    else:
        items, report.failed_items = await condense_contents(kept, prompt, backend)
    report.stage_seconds["content"] = time.perf_counter() - start

    condensed = Dataset(items=items, users=users, impressions=tuple(impressions))
    logger.info(
        f"Condensed {train.n_users} users / {train.n_items} items into "
        f"{condensed.n_users} users / {condensed.n_items} items"
    )
    return condensed, report
