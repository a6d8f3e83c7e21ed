from __future__ import annotations

from typing import Sequence

import numpy as np


def _sizes(n: int, ratio: Sequence[int]) -> tuple[int, int, int]:
    total = sum(ratio)
    a = n * ratio[0] // total
    b = n * ratio[1] // total
    return a, b, n - a - b


def split_subjects(subject_ids: Sequence, ratio=(7, 1, 2), seed: int = 0,
                   labels: Sequence | None = None) -> tuple[list, list, list]:
    """Seeded subject-level train/val/test split with floor-sized train and val.

    With ``labels`` the split is stratified: each class is split by the same
    rule and the parts are concatenated.
    """
    ids = list(subject_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("subject ids must be unique")
    if len(ids) < 3:
        raise ValueError(f"need at least 3 subjects, got {len(ids)}")
    rng = np.random.default_rng(seed)
    if labels is None:
        order = [ids[i] for i in rng.permutation(len(ids))]
        a, b, _ = _sizes(len(ids), ratio)
        return order[:a], order[a : a + b], order[a + b :]
    labels = list(labels)
    train, val, test = [], [], []
    for cls in sorted(set(labels)):
        members = [s for s, l in zip(ids, labels) if l == cls]
        if len(members) < 3:
            raise ValueError(f"class {cls!r} has {len(members)} subjects; stratified split needs at least 3")
        order = [members[i] for i in rng.permutation(len(members))]
        a, b, _ = _sizes(len(members), ratio)
        train += order[:a]
        val += order[a : a + b]
        test += order[a + b :]
    return train, val, test
