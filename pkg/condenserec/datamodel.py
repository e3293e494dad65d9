"""
Loading, saving, splitting and measuring recommendation datasets.

On disk a dataset is two tab-separated UTF-8 files, each with a header row:

    items:      item_id<TAB>category<TAB>title<TAB>abstract
    behaviors:  user_id<TAB>h1 h2 h3<TAB>cand1-1 cand2-0

History and impression fields may be empty.
"""

from __future__ import annotations

import math
import os
from collections.abc import Sequence

import numpy as np

from condenserec.base import (
    ClickHistory,
    Dataset,
    DatasetStats,
    Impression,
    Item,
    SizeReport,
    item_content,
)
from condenserec.constants import DEFAULT_SPLIT_RATIOS
from condenserec.exceptions import (
    DanglingReferenceError,
    DatasetError,
    DatasetParseError,
    DatasetValidationError,
    InvalidArgumentError,
)
from condenserec.utils import DEFAULT_TOKENIZER, Tokenizer, logger

ITEMS_HEADER = "item_id\tcategory\ttitle\tabstract"
BEHAVIORS_HEADER = "user_id\thistory\timpressions"


def validate_dataset(dataset: Dataset) -> None:
    """Check referential integrity; raise on the first offending id."""
    for item_id, item in dataset.items.items():
        if item.id != item_id:
            raise DatasetValidationError(
                f"item keyed {item_id!r} carries id {item.id!r}"
            )
    for user_id, history in dataset.users.items():
        if history.user_id != user_id:
            raise DatasetValidationError(
                f"history keyed {user_id!r} carries user id {history.user_id!r}"
            )
        for item_id in history.item_ids:
            if item_id not in dataset.items:
                raise DanglingReferenceError(item_id, where=f"history of {user_id}")
    for imp in dataset.impressions:
        if imp.user_id not in dataset.users:
            raise DanglingReferenceError(imp.user_id, where="impression user")
        if imp.candidate_item_id not in dataset.items:
            raise DanglingReferenceError(
                imp.candidate_item_id, where=f"impression of {imp.user_id}"
            )


def serialize_items(dataset: Dataset) -> str:
    lines = [ITEMS_HEADER]
    for item in dataset.items.values():
        lines.append("\t".join((item.id, item.category, item.title, item.abstract)))
    return "\n".join(lines) + "\n"


def serialize_behaviors(dataset: Dataset) -> str:
    lines = [BEHAVIORS_HEADER]
    groups = dataset.impressions_by_user()
    for user_id, history in dataset.users.items():
        impressions = " ".join(
            f"{imp.candidate_item_id}-{imp.label}" for imp in groups.get(user_id, [])
        )
        lines.append("\t".join((user_id, " ".join(history.item_ids), impressions)))
    return "\n".join(lines) + "\n"


def _read_records(path: str, header: str, n_fields: int):
    if not os.path.exists(path):
        raise DatasetError(f"Dataset file not found: {path}")
    with open(path, encoding="utf-8", newline="") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if line_number == 1 and line == header:
                continue
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise DatasetParseError(
                    f"expected {n_fields} tab-separated fields, found {len(fields)}",
                    path=path,
                    line_number=line_number,
                )
            yield line_number, fields


def load_dataset(items_path: str, behaviors_path: str) -> Dataset:
    """Parse an items file and a behaviors file into a referentially intact Dataset."""
    items: dict[str, Item] = {}
    for line_number, (item_id, category, title, abstract) in _read_records(
        items_path, ITEMS_HEADER, 4
    ):
        if item_id in items:
            raise DatasetParseError(
                f"duplicate item id {item_id!r}", path=items_path, line_number=line_number
            )
        try:
            items[item_id] = Item(
                id=item_id, title=title, abstract=abstract, category=category
            )
        except DatasetValidationError as e:
            raise DatasetParseError(
                str(e), path=items_path, line_number=line_number
            ) from e

    users: dict[str, ClickHistory] = {}
    impressions: list[Impression] = []
    for line_number, (user_id, history_field, impressions_field) in _read_records(
        behaviors_path, BEHAVIORS_HEADER, 3
    ):
        if user_id in users:
            raise DatasetParseError(
                f"duplicate user id {user_id!r}",
                path=behaviors_path,
                line_number=line_number,
            )
        history_ids = history_field.split()
        for item_id in history_ids:
            if item_id not in items:
                raise DanglingReferenceError(
                    item_id, where=f"{behaviors_path}:{line_number}"
                )
        try:
            users[user_id] = ClickHistory(user_id=user_id, item_ids=tuple(history_ids))
            for token in impressions_field.split():
                candidate_id, sep, label = token.rpartition("-")
                if not sep or label not in ("0", "1"):
                    raise DatasetParseError(
                        f"malformed impression {token!r}, expected itemid-label",
                        path=behaviors_path,
                        line_number=line_number,
                    )
                if candidate_id not in items:
                    raise DanglingReferenceError(
                        candidate_id, where=f"{behaviors_path}:{line_number}"
                    )
                impressions.append(
                    Impression(
                        user_id=user_id,
                        candidate_item_id=candidate_id,
                        label=int(label),
                    )
                )
        except DatasetValidationError as e:
            raise DatasetParseError(
                str(e), path=behaviors_path, line_number=line_number
            ) from e

    dataset = Dataset(items=items, users=users, impressions=tuple(impressions))
    logger.info(
        f"Loaded dataset: {dataset.n_items} items, {dataset.n_users} users, "
        f"{len(dataset.impressions)} impressions"
    )
    return dataset


def save_dataset(dataset: Dataset, items_path: str, behaviors_path: str) -> None:
    """Write both files; invalid datasets are refused before anything is written."""
    validate_dataset(dataset)
    items_text = serialize_items(dataset)
    behaviors_text = serialize_behaviors(dataset)
    for path, text in ((items_path, items_text), (behaviors_path, behaviors_text)):
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    logger.debug(f"Saved dataset to {items_path} and {behaviors_path}")


def _check_ratios(ratios: Sequence[float]) -> tuple[float, float, float]:
    if len(ratios) != 3:
        raise InvalidArgumentError(f"expected three split ratios, got {len(ratios)}")
    if any(not r > 0 for r in ratios):
        raise InvalidArgumentError(f"split ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"split ratios must sum to 1, got {sum(ratios)}")
    return float(ratios[0]), float(ratios[1]), float(ratios[2])


def split_dataset(
    dataset: Dataset,
    ratios: Sequence[float] = DEFAULT_SPLIT_RATIOS,
    seed: int = 0,
) -> tuple[Dataset, Dataset, Dataset]:
    """Split impressions per user into train/validation/test parts.

    Each user's impressions keep their input order and are cut at
    floor(n * r_train + u) and floor(n * (r_train + r_val) + u), with one
    uniform offset u per user drawn from the seeded generator. Expected part
    sizes match the ratios exactly; items and histories are shared by all parts.
    """
    r_train, r_val, _ = _check_ratios(ratios)
    rng = np.random.default_rng(seed)

    parts: tuple[list[Impression], list[Impression], list[Impression]] = ([], [], [])
    for user_id, group in dataset.impressions_by_user().items():
        n = len(group)
        offset = rng.random()
        if n == 0:
            continue
        train_end = min(n, math.floor(n * r_train + offset))
        val_end = min(n, max(train_end, math.floor(n * (r_train + r_val) + offset)))
        parts[0].extend(group[:train_end])
        parts[1].extend(group[train_end:val_end])
        parts[2].extend(group[val_end:])

    for name, part in zip(("train", "validation", "test"), parts):
        if not part:
            raise InvalidArgumentError(
                f"split with ratios {tuple(ratios)} leaves the {name} part empty"
            )

    train, val, test = (
        Dataset(items=dataset.items, users=dataset.users, impressions=tuple(part))
        for part in parts
    )
    logger.info(
        f"Split {len(dataset.impressions)} impressions into "
        f"{len(train.impressions)}/{len(val.impressions)}/{len(test.impressions)}"
    )
    return train, val, test


def compute_density(n_pos: int, n_users: int, n_items: int) -> float:
    if n_users == 0 or n_items == 0:
        return 0.0
    return n_pos / (n_users * n_items)


def dataset_stats(dataset: Dataset, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> DatasetStats:
    n_items = dataset.n_items
    n_users = dataset.n_users
    n_pos = sum(1 for imp in dataset.impressions if imp.label == 1)
    n_neg = len(dataset.impressions) - n_pos
    total_tokens = sum(
        tokenizer.count(item_content(item)) for item in dataset.items.values()
    )
    total_history = sum(len(history) for history in dataset.users.values())
    return DatasetStats(
        n_items=n_items,
        n_users=n_users,
        avg_tokens_per_item=total_tokens / n_items if n_items else 0.0,
        avg_history_len=total_history / n_users if n_users else 0.0,
        n_pos=n_pos,
        n_neg=n_neg,
        density=compute_density(n_pos, n_users, n_items),
    )


def size_report(candidate: Dataset, reference: Dataset) -> SizeReport:
    """Serialized byte sizes of ``candidate`` and their ratios to ``reference``."""
    item_bytes = len(serialize_items(candidate).encode("utf-8"))
    user_bytes = len(serialize_behaviors(candidate).encode("utf-8"))
    ref_item_bytes = len(serialize_items(reference).encode("utf-8"))
    ref_user_bytes = len(serialize_behaviors(reference).encode("utf-8"))
    overall_bytes = item_bytes + user_bytes
    return SizeReport(
        item_bytes=item_bytes,
        user_bytes=user_bytes,
        overall_bytes=overall_bytes,
        item_ratio=item_bytes / ref_item_bytes,
        user_ratio=user_bytes / ref_user_bytes,
        overall_ratio=overall_bytes / (ref_item_bytes + ref_user_bytes),
    )
