"""
A compact content-based recommender trained with numpy.

Items are encoded by additive attention over hashed token embeddings of
their concatenated content; the encoding is projected into the user space,
users are attention pools over their projected history items, and a
candidate is scored by the dot product of the user vector and the
candidate's projection. Training minimizes sampled-softmax cross-entropy
over one positive and ``negative_ratio`` negatives with Adam.
"""

from __future__ import annotations

import json
import os
import struct
import time
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from condenserec.base import ClickHistory, Dataset, Item, TrainConfig, item_content
from condenserec.constants import DEFAULT_INIT_SCALE, PARAMS_FORMAT_VERSION, PARAMS_MAGIC
from condenserec.exceptions import (
    InvalidArgumentError,
    NanLossError,
    TrainingError,
)
from condenserec.textenc import EmbeddingVector, token_bucket
from condenserec.utils import DEFAULT_TOKENIZER, logger, write_json

PARAM_BLOCKS = ("E", "q_c", "q_u", "W")
_HEADER = struct.Struct("<4sIIII")


@dataclass
class RecModelParams:
    E: np.ndarray
    """Hashed token embedding table, n_buckets x d_c."""

    q_c: np.ndarray
    """Content attention query, d_c."""

    q_u: np.ndarray
    """User attention query, d_u."""

    W: np.ndarray
    """Content-to-user projection, d_c x d_u."""

    loss_history: list[float] = field(default_factory=list)
    """Mean training loss of every epoch."""

    train_seconds: float = 0.0

    @property
    def n_buckets(self) -> int:
        return int(self.E.shape[0])

    @property
    def d_c(self) -> int:
        return int(self.E.shape[1])

    @property
    def d_u(self) -> int:
        return int(self.W.shape[1])

    def blocks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_BLOCKS}

    def copy(self) -> RecModelParams:
        return RecModelParams(
            **{name: block.copy() for name, block in self.blocks().items()},
            loss_history=list(self.loss_history),
            train_seconds=self.train_seconds,
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(block)) for block in self.blocks().values())

    @classmethod
    def zeros(cls, n_buckets: int, d_c: int, d_u: int) -> RecModelParams:
        return cls(
            E=np.zeros((n_buckets, d_c)),
            q_c=np.zeros(d_c),
            q_u=np.zeros(d_u),
            W=np.zeros((d_c, d_u)),
        )


def init_params(config: TrainConfig, rng: np.random.Generator) -> RecModelParams:
    return RecModelParams(
        E=rng.normal(0.0, DEFAULT_INIT_SCALE, size=(config.n_buckets, config.d_c)),
        q_c=rng.normal(0.0, DEFAULT_INIT_SCALE, size=config.d_c),
        q_u=rng.normal(0.0, DEFAULT_INIT_SCALE, size=config.d_u),
        W=rng.normal(0.0, 1.0 / np.sqrt(config.d_c), size=(config.d_c, config.d_u)),
    )


@lru_cache(maxsize=1 << 16)
def token_features(item: Item, n_buckets: int) -> tuple[np.ndarray, np.ndarray]:
    """Bucket indices and signs of the item's content tokens, in order."""
    tokens = DEFAULT_TOKENIZER.tokenize(item_content(item))
    buckets = np.empty(len(tokens), dtype=np.int64)
    signs = np.empty(len(tokens), dtype=np.float64)
    for i, token in enumerate(tokens):
        buckets[i], signs[i] = token_bucket(token, n_buckets)
    return buckets, signs


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = np.exp(x - np.max(x))
    return shifted / shifted.sum()


@dataclass
class _ItemForward:
    buckets: np.ndarray
    signs: np.ndarray
    e: np.ndarray
    w: np.ndarray
    r: np.ndarray
    p: np.ndarray


def _item_forward(params: RecModelParams, item: Item) -> _ItemForward:
    buckets, signs = token_features(item, params.n_buckets)
    if len(buckets) == 0:
        r = np.zeros(params.d_c)
        return _ItemForward(buckets, signs, np.zeros((0, params.d_c)), np.zeros(0), r, params.W.T @ r)
    e = signs[:, None] * params.E[buckets]
    w = _softmax(e @ params.q_c)
    r = w @ e
    return _ItemForward(buckets, signs, e, w, r, params.W.T @ r)


def _user_forward(params: RecModelParams, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    beta = _softmax(P @ params.q_u)
    return beta, beta @ P


def encode_item(params: RecModelParams, item: Item) -> EmbeddingVector:
    return EmbeddingVector.from_array(_item_forward(params, item).r)


def project_items(
    params: RecModelParams, items: Mapping[str, Item], item_ids: Sequence[str] | None = None
) -> dict[str, np.ndarray]:
    """Projected (d_u) encodings of the given items, all items by default."""
    ids = items.keys() if item_ids is None else item_ids
    return {item_id: _item_forward(params, items[item_id]).p for item_id in ids}


def _history_matrix(
    params: RecModelParams,
    history: ClickHistory,
    items: Mapping[str, Item],
    projections: Mapping[str, np.ndarray] | None,
) -> np.ndarray:
    if not history.item_ids:
        raise InvalidArgumentError(
            f"cannot embed user {history.user_id}: empty click history"
        )
    rows = []
    for item_id in history.item_ids:
        if projections is not None and item_id in projections:
            rows.append(projections[item_id])
        else:
            rows.append(_item_forward(params, items[item_id]).p)
    return np.stack(rows)


def user_vector(
    params: RecModelParams,
    history: ClickHistory,
    items: Mapping[str, Item],
    projections: Mapping[str, np.ndarray] | None = None,
) -> np.ndarray:
    _, z = _user_forward(params, _history_matrix(params, history, items, projections))
    return z


def user_embedding(
    params: RecModelParams,
    history: ClickHistory,
    items: Mapping[str, Item],
    projections: Mapping[str, np.ndarray] | None = None,
) -> EmbeddingVector:
    return EmbeddingVector.from_array(user_vector(params, history, items, projections))


def score(
    params: RecModelParams,
    history: ClickHistory,
    candidate: Item,
    items: Mapping[str, Item],
) -> float:
    z = user_vector(params, history, items)
    return float(z @ _item_forward(params, candidate).p)


def score_candidates(
    params: RecModelParams,
    history: ClickHistory,
    candidate_ids: Sequence[str],
    items: Mapping[str, Item],
    projections: Mapping[str, np.ndarray] | None = None,
) -> np.ndarray:
    projections = projections if projections is not None else {}
    z = user_vector(params, history, items, projections)
    cand = np.stack(
        [
            projections[c] if c in projections else _item_forward(params, items[c]).p
            for c in candidate_ids
        ]
    )
    return cand @ z


@dataclass(frozen=True)
class TrainingGroup:
    """One softmax group: a user's history and candidates, the positive first."""

    history: tuple[str, ...]
    candidates: tuple[str, ...]


def loss_and_grads(
    params: RecModelParams,
    groups: Sequence[TrainingGroup],
    items: Mapping[str, Item],
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean sampled-softmax loss over ``groups`` and its gradient per block."""
    if not groups:
        raise InvalidArgumentError("loss needs at least one training group")

    forward: dict[str, _ItemForward] = {}

    def fwd(item_id: str) -> _ItemForward:
        if item_id not in forward:
            forward[item_id] = _item_forward(params, items[item_id])
        return forward[item_id]

    grads = {name: np.zeros_like(block) for name, block in params.blocks().items()}
    dp: dict[str, np.ndarray] = {}
    total = 0.0

    for group in groups:
        P = np.stack([fwd(i).p for i in group.history])
        beta, z = _user_forward(params, P)
        C = np.stack([fwd(i).p for i in group.candidates])
        logits = C @ z
        shifted = logits - np.max(logits)
        log_norm = np.log(np.exp(shifted).sum())
        total += float(log_norm - shifted[0])

        delta = np.exp(shifted - log_norm)
        delta[0] -= 1.0

        for k, item_id in enumerate(group.candidates):
            dp[item_id] = dp.get(item_id, 0.0) + delta[k] * z
        dz = delta @ C

        dg = beta * (P @ dz - dz @ z)
        grads["q_u"] += dg @ P
        dP = beta[:, None] * dz[None, :] + dg[:, None] * params.q_u[None, :]
        for j, item_id in enumerate(group.history):
            dp[item_id] = dp.get(item_id, 0.0) + dP[j]

    for item_id, d in dp.items():
        f = forward[item_id]
        grads["W"] += np.outer(f.r, d)
        if len(f.buckets) == 0:
            continue
        dr = params.W @ d
        da = f.w * (f.e @ dr - dr @ f.r)
        grads["q_c"] += da @ f.e
        de = f.w[:, None] * dr[None, :] + da[:, None] * params.q_c[None, :]
        np.add.at(grads["E"], f.buckets, f.signs[:, None] * de)

    n = len(groups)
    for name in grads:
        grads[name] /= n
    return total / n, grads


class AdamOptimizer:
    """Adam over the parameter blocks of a RecModelParams."""

    def __init__(
        self,
        params: RecModelParams,
        lr: float = 5e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(b) for name, b in params.blocks().items()}
        self.v = {name: np.zeros_like(b) for name, b in params.blocks().items()}

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        for name in PARAM_BLOCKS:
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * (g**2)
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            block = getattr(self.params, name)
            block -= self.lr * (m_hat / (np.sqrt(v_hat) + self.eps))


def _sample_negatives(
    rng: np.random.Generator,
    positive: str,
    pool: Sequence[str],
    all_item_ids: Sequence[str],
    item_index: Mapping[str, int],
    count: int,
) -> list[str]:
    candidates = [item_id for item_id in pool if item_id != positive]
    if len(candidates) >= count:
        picked = rng.choice(len(candidates), size=count, replace=False)
        return [candidates[i] for i in picked]
    if candidates:
        picked = rng.choice(len(candidates), size=count, replace=True)
        return [candidates[i] for i in picked]
    # no logged negatives: draw uniformly from the rest of the catalog
    if len(all_item_ids) < 2:
        return []
    pos_index = item_index[positive]
    drawn = rng.integers(len(all_item_ids) - 1, size=count)
    return [all_item_ids[i + 1 if i >= pos_index else i] for i in drawn]


def train(dataset: Dataset, config: TrainConfig | None = None) -> RecModelParams:
    """Train on every positive impression whose user has a nonempty history."""
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    params = init_params(config, rng)

    positives = [
        imp
        for imp in dataset.impressions
        if imp.label == 1 and dataset.users[imp.user_id].item_ids
    ]
    if not positives:
        raise TrainingError("training data has no positive impression with a click history")

    negatives: dict[str, list[str]] = {}
    for imp in dataset.impressions:
        if imp.label == 0:
            negatives.setdefault(imp.user_id, []).append(imp.candidate_item_id)
    all_item_ids = list(dataset.items)
    item_index = {item_id: i for i, item_id in enumerate(all_item_ids)}

    optimizer = AdamOptimizer(
        params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps
    )
    logger.info(
        f"Training on {len(positives)} positives, {len(dataset.users)} users, "
        f"{len(dataset.items)} items for {config.epochs} epochs"
    )
    start = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng.permutation(len(positives))
        epoch_losses = []
        for batch_index, batch_start in enumerate(range(0, len(order), config.batch_size)):
            groups = []
            for idx in order[batch_start : batch_start + config.batch_size]:
                imp = positives[idx]
                negs = _sample_negatives(
                    rng,
                    imp.candidate_item_id,
                    negatives.get(imp.user_id, ()),
                    all_item_ids,
                    item_index,
                    config.negative_ratio,
                )
                groups.append(
                    TrainingGroup(
                        history=dataset.users[imp.user_id].item_ids,
                        candidates=(imp.candidate_item_id, *negs),
                    )
                )
            loss, grads = loss_and_grads(params, groups, dataset.items)
            if not np.isfinite(loss):
                raise NanLossError(
                    epoch=epoch,
                    batch=batch_index,
                    diagnostics={
                        "loss": loss,
                        "grad_norm": float(
                            np.sqrt(sum(float(np.sum(g**2)) for g in grads.values()))
                        ),
                        "params_finite": params.is_finite(),
                    },
                )
            optimizer.step(grads)
            epoch_losses.append(loss)
        params.loss_history.append(float(np.mean(epoch_losses)))
        logger.info(f"Epoch {epoch + 1}/{config.epochs}: loss {params.loss_history[-1]:.4f}")

    params.train_seconds = time.perf_counter() - start
    if not params.is_finite():
        raise NanLossError(
            epoch=config.epochs - 1, batch=-1, diagnostics={"params_finite": False}
        )
    return params


def save_params(
    params: RecModelParams, path: str, config: TrainConfig | None = None
) -> str:
    """Write the binary parameter file and its JSON sidecar; returns the sidecar path."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(
            _HEADER.pack(
                PARAMS_MAGIC, PARAMS_FORMAT_VERSION, params.n_buckets, params.d_c, params.d_u
            )
        )
        for name in PARAM_BLOCKS:
            f.write(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())

    sidecar = f"{path}.json"
    write_json(
        {
            "format_version": PARAMS_FORMAT_VERSION,
            "dims": {"n_buckets": params.n_buckets, "d_c": params.d_c, "d_u": params.d_u},
            "config": asdict(config) if config is not None else None,
            "loss_history": params.loss_history,
            "final_loss": params.loss_history[-1] if params.loss_history else None,
        },
        sidecar,
    )
    return sidecar


def load_params(path: str) -> RecModelParams:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise TrainingError(f"{path}: truncated parameter file")
    magic, version, n_buckets, d_c, d_u = _HEADER.unpack_from(data)
    if magic != PARAMS_MAGIC:
        raise TrainingError(f"{path}: not a parameter file")
    if version != PARAMS_FORMAT_VERSION:
        raise TrainingError(f"{path}: unsupported format version {version}")

    shapes = {"E": (n_buckets, d_c), "q_c": (d_c,), "q_u": (d_u,), "W": (d_c, d_u)}
    offset = _HEADER.size
    blocks = {}
    for name in PARAM_BLOCKS:
        count = int(np.prod(shapes[name]))
        end = offset + 8 * count
        if end > len(data):
            raise TrainingError(f"{path}: truncated parameter block {name}")
        blocks[name] = (
            np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64).reshape(shapes[name])
        )
        offset = end
    params = RecModelParams(**blocks)

    sidecar = f"{path}.json"
    if os.path.exists(sidecar):
        with open(sidecar, encoding="utf-8") as f:
            meta = json.load(f)
        params.loss_history = list(meta.get("loss_history") or [])
    return params
