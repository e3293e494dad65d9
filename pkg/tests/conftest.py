import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from condenserec.base import ClickHistory, Dataset, Impression, Item, TrainConfig  # noqa: E402
from condenserec.datamodel import split_dataset  # noqa: E402
from condenserec.synthetic import SyntheticBenchmarkSpec, generate_synthetic  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full planted-topic benchmark runs")


@pytest.fixture
def tiny_dataset() -> Dataset:
    items = {
        "n1": Item("n1", "Local team wins the final", "The home side beat rivals in a tense final match", "sports"),
        "n2": Item("n2", "Stocks rally on rate news", "Markets climbed after the central bank held rates", "finance"),
        "n3": Item("n3", "New phone released", "The company unveiled a phone with a larger battery", "tech"),
        "n4": Item("n4", "Coach signs extension", "The coach agreed to stay for three more seasons", "sports"),
        "n5": Item("n5", "Chip maker expands", "", "tech"),
    }
    users = {
        "u1": ClickHistory("u1", ("n1", "n4")),
        "u2": ClickHistory("u2", ("n2",)),
        "u3": ClickHistory("u3", ("n3", "n5", "n2")),
    }
    impressions = (
        Impression("u1", "n4", 1),
        Impression("u1", "n2", 0),
        Impression("u1", "n3", 0),
        Impression("u2", "n2", 1),
        Impression("u2", "n5", 0),
        Impression("u3", "n5", 1),
        Impression("u3", "n1", 0),
    )
    return Dataset(items=items, users=users, impressions=impressions)


@pytest.fixture(scope="session")
def small_spec() -> SyntheticBenchmarkSpec:
    return SyntheticBenchmarkSpec(
        groups=3,
        users_per_group=6,
        items_per_topic=12,
        vocab_per_topic=8,
        shared_vocab=10,
        history_min=3,
        history_max=6,
        impressions_per_user=30,
        seed=0,
    )


@pytest.fixture(scope="session")
def small_synthetic(small_spec):
    return generate_synthetic(small_spec)


@pytest.fixture(scope="session")
def small_split(small_synthetic):
    dataset, _ = small_synthetic
    return split_dataset(dataset, (0.8, 0.1, 0.1), seed=0)


@pytest.fixture
def fast_train_config() -> TrainConfig:
    return TrainConfig(n_buckets=256, d_c=16, d_u=8, epochs=2, batch_size=16, seed=0)


def write_dataset_files(tmp_path, items_text: str, behaviors_text: str):
    items_path = tmp_path / "items.tsv"
    behaviors_path = tmp_path / "behaviors.tsv"
    items_path.write_text(items_text, encoding="utf-8")
    behaviors_path.write_text(behaviors_text, encoding="utf-8")
    return str(items_path), str(behaviors_path)


@pytest.fixture
def write_files(tmp_path):
    def _write(items_text: str, behaviors_text: str):
        return write_dataset_files(tmp_path, items_text, behaviors_text)

    return _write
