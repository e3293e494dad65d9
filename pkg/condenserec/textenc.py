from __future__ import annotations

from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from condenserec.constants import DEFAULT_EMBEDDING_DIM
from condenserec.exceptions import InvalidArgumentError
from condenserec.utils import DEFAULT_TOKENIZER, Tokenizer, stable_hash64

_NORM_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A fixed-dimension real vector.

    ``is_zero`` marks the all-zero vector (empty text, empty pool); such a
    vector is never reported as normalized.
    """

    values: np.ndarray
    normalized: bool = False
    is_zero: bool = False

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def from_array(cls, values, *, normalize: bool = False) -> EmbeddingVector:
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("embedding values must be finite")
        norm = float(np.linalg.norm(arr))
        if norm <= _NORM_EPS:
            return cls(values=np.zeros_like(arr), normalized=False, is_zero=True)
        if normalize:
            return cls(values=arr / norm, normalized=True, is_zero=False)
        return cls(values=arr, normalized=False, is_zero=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return (
            self.normalized == other.normalized
            and self.is_zero == other.is_zero
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def token_bucket(token: str, n_buckets: int) -> tuple[int, float]:
    """Bucket index and sign of a token under the keyed 64-bit hash.

    The low bits pick the bucket, the top bit picks the sign.
    """
    h = stable_hash64(token)
    sign = -1.0 if (h >> 63) & 1 else 1.0
    return h % n_buckets, sign


def hashed_term_weights(
    text: str, dim: int, tokenizer: Tokenizer = DEFAULT_TOKENIZER
) -> np.ndarray:
    """Signed, hashed bag of tokens with weight 1 + log(tf); not normalized."""
    values = np.zeros(dim, dtype=np.float64)
    counts = Counter(tokenizer.tokenize(text))
    # sorted so the float accumulation order does not depend on dict order
    for token in sorted(counts):
        bucket, sign = token_bucket(token, dim)
        values[bucket] += sign * (1.0 + np.log(counts[token]))
    return values


def encode_text(
    text: str, dim: int = DEFAULT_EMBEDDING_DIM, tokenizer: Tokenizer = DEFAULT_TOKENIZER
) -> EmbeddingVector:
    return EmbeddingVector.from_array(
        hashed_term_weights(text, dim, tokenizer), normalize=True
    )


def _check_same_dim(a: EmbeddingVector, b: EmbeddingVector) -> None:
    if a.dim != b.dim:
        raise InvalidArgumentError(f"dimension mismatch: {a.dim} != {b.dim}")


def pool(vectors: Sequence[EmbeddingVector]) -> EmbeddingVector:
    """Element-wise mean, then L2 normalization."""
    if not vectors:
        raise InvalidArgumentError("cannot pool an empty sequence of vectors")
    dims = {v.dim for v in vectors}
    if len(dims) != 1:
        raise InvalidArgumentError(f"cannot pool vectors of mixed dimensions {sorted(dims)}")
    mean = np.mean(np.stack([v.values for v in vectors]), axis=0)
    return EmbeddingVector.from_array(mean, normalize=True)


def distance(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Euclidean distance."""
    _check_same_dim(a, b)
    return float(np.linalg.norm(a.values - b.values))


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    _check_same_dim(a, b)
    if a.is_zero or b.is_zero:
        return 0.0
    denom = float(np.linalg.norm(a.values) * np.linalg.norm(b.values))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a.values, b.values) / denom)


class HashingTextEncoder:
    """Callable text encoder with a fixed dimension and tokenizer."""

    def __init__(
        self, dim: int = DEFAULT_EMBEDDING_DIM, tokenizer: Tokenizer = DEFAULT_TOKENIZER
    ) -> None:
        if dim < 1:
            raise InvalidArgumentError(f"embedding dimension must be >= 1, got {dim}")
        self.dim = dim
        self.tokenizer = tokenizer

    def __call__(self, text: str) -> EmbeddingVector:
        return encode_text(text, self.dim, self.tokenizer)

    def __repr__(self) -> str:
        return f"HashingTextEncoder(dim={self.dim})"
