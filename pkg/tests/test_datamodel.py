from collections import Counter

import numpy as np
import pytest

from condenserec.base import ClickHistory, Dataset, Impression, Item
from condenserec.datamodel import (
    BEHAVIORS_HEADER,
    ITEMS_HEADER,
    compute_density,
    dataset_stats,
    load_dataset,
    save_dataset,
    serialize_behaviors,
    serialize_items,
    size_report,
    split_dataset,
    validate_dataset,
)
from condenserec.exceptions import (
    DanglingReferenceError,
    DatasetParseError,
    DatasetValidationError,
    InvalidArgumentError,
)

ITEMS = (
    f"{ITEMS_HEADER}\n"
    "n1\tsports\tLocal team wins\tThe home side won\n"
    "n2\tfinance\tStocks rally\t\n"
)


def _random_dataset(rng: np.random.Generator) -> Dataset:
    words = ["alpha", "beta", "gamma", "delta", "Zeta", "eta", "theta", "x9", "über"]
    n_items = int(rng.integers(1, 8))
    items = {}
    for i in range(n_items):
        title = " ".join(rng.choice(words, size=int(rng.integers(1, 5))))
        abstract = " ".join(rng.choice(words, size=int(rng.integers(0, 6))))
        category = str(rng.choice(words)) if rng.random() < 0.5 else ""
        items[f"n{i}"] = Item(f"n{i}", title, abstract, category)
    ids = list(items)
    users = {}
    impressions = []
    for u in range(int(rng.integers(0, 6))):
        user_id = f"u{u}"
        history = tuple(rng.choice(ids, size=int(rng.integers(0, 4))))
        users[user_id] = ClickHistory(user_id, history)
        for _ in range(int(rng.integers(0, 4))):
            impressions.append(Impression(user_id, str(rng.choice(ids)), int(rng.integers(2))))
    return Dataset(items=items, users=users, impressions=tuple(impressions))


def test_load_small_dataset(write_files):
    paths = write_files(ITEMS, f"{BEHAVIORS_HEADER}\nu1\tn1\tn2-1 n1-0\n")
    dataset = load_dataset(*paths)
    assert dataset.n_items == 2
    assert dataset.n_users == 1
    assert dataset.items["n2"].abstract == ""
    assert dataset.users["u1"].item_ids == ("n1",)
    assert [(i.candidate_item_id, i.label) for i in dataset.impressions] == [("n2", 1), ("n1", 0)]


def test_dangling_reference_names_the_id(write_files):
    paths = write_files(ITEMS, f"{BEHAVIORS_HEADER}\nu1\tn1 X\t\n")
    with pytest.raises(DanglingReferenceError) as exc:
        load_dataset(*paths)
    assert exc.value.ref_id == "X"
    assert "X" in str(exc.value)


def test_dangling_impression_candidate(write_files):
    paths = write_files(ITEMS, f"{BEHAVIORS_HEADER}\nu1\tn1\tn7-1\n")
    with pytest.raises(DanglingReferenceError) as exc:
        load_dataset(*paths)
    assert exc.value.ref_id == "n7"


def test_parse_error_carries_line_number(write_files):
    paths = write_files(ITEMS + "n3\tonly three\tfields\n", f"{BEHAVIORS_HEADER}\n")
    with pytest.raises(DatasetParseError) as exc:
        load_dataset(*paths)
    assert exc.value.line_number == 4


def test_malformed_impression_label(write_files):
    paths = write_files(ITEMS, f"{BEHAVIORS_HEADER}\nu1\tn1\tn2-2\n")
    with pytest.raises(DatasetParseError) as exc:
        load_dataset(*paths)
    assert exc.value.line_number == 2


def test_duplicate_item_id_is_rejected(write_files):
    paths = write_files(ITEMS + "n1\tsports\tAgain\t\n", f"{BEHAVIORS_HEADER}\n")
    with pytest.raises(DatasetParseError):
        load_dataset(*paths)


def test_empty_title_is_a_parse_error(write_files):
    paths = write_files(ITEMS + "n3\tsports\t  \tabstract\n", f"{BEHAVIORS_HEADER}\n")
    with pytest.raises(DatasetParseError) as exc:
        load_dataset(*paths)
    assert exc.value.line_number == 4


def test_item_rejects_tabs_and_empty_title():
    with pytest.raises(DatasetValidationError):
        Item("n1", "bad\ttitle")
    with pytest.raises(DatasetValidationError):
        Item("n1", "")
    with pytest.raises(DatasetValidationError):
        Item("n 1", "ok")


def test_click_history_keeps_first_occurrence():
    history = ClickHistory("u1", ("n2", "n1", "n2", "n3", "n1"))
    assert history.item_ids == ("n2", "n1", "n3")
    assert len(history) == 3


def test_impression_label_must_be_binary():
    with pytest.raises(DatasetValidationError):
        Impression("u1", "n1", 2)
    with pytest.raises(DatasetValidationError):
        Impression("u1", "n1", True)


def test_empty_dataset_writes_headers_only(tmp_path):
    items_path, behaviors_path = tmp_path / "i.tsv", tmp_path / "b.tsv"
    save_dataset(Dataset(), str(items_path), str(behaviors_path))
    assert items_path.read_text(encoding="utf-8") == ITEMS_HEADER + "\n"
    assert behaviors_path.read_text(encoding="utf-8") == BEHAVIORS_HEADER + "\n"


def test_save_refuses_dangling_dataset(tmp_path):
    broken = Dataset(items={}, users={"u1": ClickHistory("u1", ("n1",))})
    items_path, behaviors_path = tmp_path / "i.tsv", tmp_path / "b.tsv"
    with pytest.raises(DanglingReferenceError):
        save_dataset(broken, str(items_path), str(behaviors_path))
    assert not items_path.exists()
    assert not behaviors_path.exists()


def test_save_then_load_is_identity(tmp_path, tiny_dataset):
    paths = (str(tmp_path / "i.tsv"), str(tmp_path / "b.tsv"))
    save_dataset(tiny_dataset, *paths)
    loaded = load_dataset(*paths)
    assert loaded == tiny_dataset

    again = (str(tmp_path / "i2.tsv"), str(tmp_path / "b2.tsv"))
    save_dataset(loaded, *again)
    for first, second in zip(paths, again):
        with open(first, "rb") as a, open(second, "rb") as b:
            assert a.read() == b.read()


def test_synthetic_sample_round_trips_bit_identically(tmp_path, small_synthetic):
    dataset, _ = small_synthetic
    paths = (str(tmp_path / "i.tsv"), str(tmp_path / "b.tsv"))
    save_dataset(dataset, *paths)
    loaded = load_dataset(*paths)
    assert serialize_items(loaded) == serialize_items(dataset)
    assert serialize_behaviors(loaded) == serialize_behaviors(dataset)


def test_fuzzed_datasets_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    paths = (str(tmp_path / "i.tsv"), str(tmp_path / "b.tsv"))
    for _ in range(200):
        dataset = _random_dataset(rng)
        validate_dataset(dataset)
        save_dataset(dataset, *paths)
        assert load_dataset(*paths) == dataset


def test_split_ten_impressions():
    items = {f"n{i}": Item(f"n{i}", f"title {i}") for i in range(10)}
    users = {"u1": ClickHistory("u1", ("n0",))}
    impressions = tuple(Impression("u1", f"n{i}", i % 2) for i in range(10))
    train, val, test = split_dataset(Dataset(items, users, impressions), (0.8, 0.1, 0.1), seed=3)
    assert (len(train.impressions), len(val.impressions), len(test.impressions)) == (8, 1, 1)
    assert train.impressions == impressions[:8]
    assert train.items is items and test.users is users


def test_split_is_a_deterministic_partition(small_synthetic):
    dataset, _ = small_synthetic
    parts = split_dataset(dataset, (0.8, 0.1, 0.1), seed=11)
    union = Counter(imp for part in parts for imp in part.impressions)
    assert union == Counter(dataset.impressions)
    assert split_dataset(dataset, (0.8, 0.1, 0.1), seed=11) == parts


def test_split_rejects_bad_ratios(tiny_dataset):
    with pytest.raises(InvalidArgumentError):
        split_dataset(tiny_dataset, (0.5, 0.3, 0.3))
    with pytest.raises(InvalidArgumentError):
        split_dataset(tiny_dataset, (1.0, 0.0, 0.0))


def test_split_with_globally_empty_part_is_an_error():
    items = {"n1": Item("n1", "one")}
    users = {"u1": ClickHistory("u1", ("n1",))}
    dataset = Dataset(items, users, (Impression("u1", "n1", 1),))
    with pytest.raises(InvalidArgumentError):
        split_dataset(dataset, (0.8, 0.1, 0.1))


def test_density_matches_large_news_corpus_counts():
    density_pct = compute_density(347_727, 94_057, 65_238) * 100
    assert density_pct == pytest.approx(0.0057, abs=1e-4)


def test_stats_of_empty_and_unit_datasets():
    empty = dataset_stats(Dataset())
    assert (empty.n_items, empty.n_users, empty.n_pos, empty.n_neg) == (0, 0, 0, 0)
    assert empty.density == 0.0
    assert empty.avg_tokens_per_item == 0.0

    unit = Dataset(
        {"n1": Item("n1", "one")},
        {"u1": ClickHistory("u1", ("n1",))},
        (Impression("u1", "n1", 1),),
    )
    assert dataset_stats(unit).density == 1.0


def test_stats_match_brute_force(tiny_dataset):
    stats = dataset_stats(tiny_dataset)
    assert stats.n_pos == 3
    assert stats.n_neg == 4
    assert stats.density == 3 / (3 * 5)
    assert stats.avg_history_len == pytest.approx(6 / 3)


def test_size_report_ratios(tiny_dataset):
    same = size_report(tiny_dataset, tiny_dataset)
    assert same.item_ratio == same.user_ratio == same.overall_ratio == 1.0

    fewer = Dataset(
        items=tiny_dataset.items,
        users={"u1": tiny_dataset.users["u1"]},
        impressions=tuple(i for i in tiny_dataset.impressions if i.user_id == "u1"),
    )
    report = size_report(fewer, tiny_dataset)
    assert report.user_ratio < 1.0
    assert report.item_ratio == 1.0
    assert report.overall_bytes == report.item_bytes + report.user_bytes
