"""Stratified partitions used by cross-validation and subsampling."""

import numpy as np

from .errors import ValidationError
from .seeding import rng


def stratified_kfold(labels, n_folds, seed):
    """Partition row indices into ``n_folds`` stratified test folds.

    Each class is shuffled and dealt round-robin, continuing the rotation
    across classes so fold sizes differ by at most one overall and per-class
    counts differ by at most one between folds.
    """
    labels = np.asarray(labels)
    if n_folds < 2:
        raise ValidationError("need at least 2 folds")
    gen = rng(seed, 0)
    folds = [[] for _ in range(n_folds)]
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < n_folds:
            raise ValidationError(
                f"class {cls} has {idx.size} trials, fewer than {n_folds} folds"
            )
        idx = idx[gen.permutation(idx.size)]
        for j, i in enumerate(idx):
            folds[(offset + j) % n_folds].append(i)
        offset += idx.size
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


def stratified_subsample(labels, fraction, seed):
    """Draw a stratified training subset; the rest is the test set.

    Returns ``(train_idx, test_idx)``. Each class contributes
    ``round(fraction * class_size)`` trials (half up).
    """
    labels = np.asarray(labels)
    if not 0 < fraction < 1:
        raise ValidationError(f"fraction must be in (0, 1), got {fraction}")
    gen = rng(seed, 0)
    train, test = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        n_train = int(np.floor(fraction * idx.size + 0.5))
        if n_train < 2:
            raise ValidationError(
                f"fraction {fraction} leaves {n_train} training trials for class {cls}"
            )
        if n_train >= idx.size:
            raise ValidationError(f"fraction {fraction} leaves no test trials for class {cls}")
        idx = idx[gen.permutation(idx.size)]
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
