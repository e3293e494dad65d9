"""
Planted-topic benchmark generator.

Items belong to one of G topics. Every item of a topic carries the topic's
planted word in its title and category; its abstract mixes topic words with
words shared by all topics. Each user belongs to one topic group and mostly
clicks items of that topic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from condenserec.base import ClickHistory, Dataset, Impression, Item
from condenserec.exceptions import InvalidArgumentError

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class SyntheticBenchmarkSpec:
    """Shape of a planted-topic benchmark."""

    groups: int = 8
    """Planted interest groups G, one topic each."""

    users_per_group: int = 50
    items_per_topic: int = 40

    vocab_per_topic: int = 30
    """Topic-specific words besides the planted one."""

    shared_vocab: int = 60
    """Words used by every topic."""

    history_min: int = 8
    history_max: int = 20
    """Click history lengths are uniform over [history_min, history_max]."""

    impressions_per_user: int = 50
    positive_rate: float = 0.2

    noise_rate: float = 0.1
    """Fraction of each history drawn from other topics (rounded down)."""

    title_words: int = 4
    abstract_words: int = 24
    seed: int = 0

    def __post_init__(self) -> None:
        for name in (
            "groups",
            "users_per_group",
            "items_per_topic",
            "vocab_per_topic",
            "history_min",
            "impressions_per_user",
            "title_words",
            "abstract_words",
        ):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if self.history_max < self.history_min:
            raise InvalidArgumentError("history_max must be >= history_min")
        if self.history_max >= self.items_per_topic:
            raise InvalidArgumentError("history_max must be below items_per_topic")
        if not 0.0 <= self.noise_rate < 1.0:
            raise InvalidArgumentError("noise_rate must be in [0, 1)")
        if not 0.0 < self.positive_rate <= 1.0:
            raise InvalidArgumentError("positive_rate must be in (0, 1]")
        if self.groups < 2 and (self.noise_rate > 0 or self.positive_rate < 1):
            raise InvalidArgumentError("noise and negatives need at least two groups")

    @property
    def n_users(self) -> int:
        return self.groups * self.users_per_group

    @property
    def n_items(self) -> int:
        return self.groups * self.items_per_topic


def _pseudo_words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < count:
        syllables = int(rng.integers(2, 4))
        word = "".join(
            _CONSONANTS[int(rng.integers(len(_CONSONANTS)))]
            + _VOWELS[int(rng.integers(len(_VOWELS)))]
            for _ in range(syllables)
        )
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def generate_synthetic(spec: SyntheticBenchmarkSpec) -> tuple[Dataset, dict[str, int]]:
    """Generate the benchmark; also returns the planted group of every user."""
    rng = np.random.default_rng(spec.seed)
    taken: set[str] = set()
    planted = _pseudo_words(rng, spec.groups, taken)
    topic_vocab = [_pseudo_words(rng, spec.vocab_per_topic, taken) for _ in range(spec.groups)]
    shared = _pseudo_words(rng, spec.shared_vocab, taken) if spec.shared_vocab else []

    items: dict[str, Item] = {}
    topic_items: list[list[str]] = []
    for g in range(spec.groups):
        ids = []
        for j in range(spec.items_per_topic):
            item_id = f"n{g * spec.items_per_topic + j:05d}"
            vocab = topic_vocab[g]
            title = [planted[g]] + [
                vocab[int(i)] for i in rng.integers(len(vocab), size=spec.title_words - 1)
            ]
            abstract = []
            for _ in range(spec.abstract_words):
                if shared and rng.random() < 0.3:
                    abstract.append(shared[int(rng.integers(len(shared)))])
                else:
                    abstract.append(vocab[int(rng.integers(len(vocab)))])
            items[item_id] = Item(
                id=item_id,
                title=" ".join(title).capitalize(),
                abstract=" ".join(abstract),
                category=planted[g],
            )
            ids.append(item_id)
        topic_items.append(ids)

    users: dict[str, ClickHistory] = {}
    impressions: list[Impression] = []
    labels: dict[str, int] = {}
    for g in range(spec.groups):
        own = topic_items[g]
        others = [i for h, ids in enumerate(topic_items) if h != g for i in ids]
        for j in range(spec.users_per_group):
            user_id = f"u{g * spec.users_per_group + j:05d}"
            length = int(rng.integers(spec.history_min, spec.history_max + 1))
            n_noise = math.floor(spec.noise_rate * length)
            clicked = [own[i] for i in rng.choice(len(own), size=length - n_noise, replace=False)]
            if n_noise:
                clicked += [others[i] for i in rng.choice(len(others), size=n_noise, replace=False)]
            clicked = [clicked[i] for i in rng.permutation(len(clicked))]
            users[user_id] = ClickHistory(user_id=user_id, item_ids=tuple(clicked))
            labels[user_id] = g

            in_history = set(clicked)
            fresh_own = [i for i in own if i not in in_history]
            fresh_other = [i for i in others if i not in in_history]
            n_pos = max(1, round(spec.positive_rate * spec.impressions_per_user))
            n_pos = min(n_pos, len(fresh_own))
            n_neg = min(spec.impressions_per_user - n_pos, len(fresh_other))
            group = [
                Impression(user_id, fresh_own[i], 1)
                for i in rng.choice(len(fresh_own), size=n_pos, replace=False)
            ] + [
                Impression(user_id, fresh_other[i], 0)
                for i in rng.choice(len(fresh_other), size=n_neg, replace=False)
            ]
            impressions.extend(group[i] for i in rng.permutation(len(group)))

    return Dataset(items=items, users=users, impressions=tuple(impressions)), labels
