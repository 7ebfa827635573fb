"""Common Spatial Patterns for two-class motor imagery.

Filters come from jointly diagonalizing the class-mean trace-normalized
covariances; features are log relative variances of the filtered trial.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import _binary
from .errors import (
    DegenerateTrialError,
    ParseError,
    SingularMatrixError,
    ValidationError,
)
from .numerics import sym_eig

WHITEN_CLIP = 1e-10


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-trial feature rows with their class labels."""

    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {values.shape}")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != values.shape[0]:
            raise ValidationError("feature rows and labels differ in length")
        if not np.all(np.isfinite(values)):
            raise ValidationError("features contain NaN or Inf")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def subset(self, indices):
        return FeatureMatrix(self.values[indices], self.labels[indices])


@dataclass(frozen=True)
class CspModel:
    """Fitted CSP filters.

    ``w_full`` holds one spatial filter per row, ordered by the whitened
    class-1 eigenvalue (``eigenvalues``, descending). ``selected_rows`` are
    the first ``m`` and last ``m`` rows.
    """

    w_full: np.ndarray
    selected_rows: tuple
    m: int
    eigenvalues: np.ndarray
    class_means: tuple = ()

    @property
    def n_channels(self):
        return self.w_full.shape[1]

    @property
    def filters(self):
        return self.w_full[list(self.selected_rows)]


def normalized_covariance(trial):
    """``X X^T / trace(X X^T)`` for a ``channels x samples`` trial.

    Also accepts a stack ``(trials, channels, samples)``.
    """
    x = np.asarray(trial, dtype=float)
    if x.shape[-2] >= x.shape[-1]:
        raise ValidationError(
            f"need more samples ({x.shape[-1]}) than channels ({x.shape[-2]})"
        )
    cov = x @ np.swapaxes(x, -1, -2)
    tr = np.trace(cov, axis1=-2, axis2=-1)
    if np.any(tr <= 0) or not np.all(np.isfinite(tr)):
        raise DegenerateTrialError("trial has zero (or non-finite) total power")
    cov = cov / tr[..., None, None]
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


def fit_csp(train, m=3):
    """Fit CSP on an :class:`~spa_eeg.ingest.EpochSet` with labels 1 and 2."""
    n_channels = train.n_channels
    if m < 1 or 2 * m > n_channels:
        raise ValidationError(f"m={m} filter pairs need 1 <= 2m <= {n_channels} channels")
    counts = train.class_counts()
    if min(counts.values()) < 2:
        raise ValidationError(f"each class needs >= 2 trials, got {counts}")

    covs = normalized_covariance(train.data)
    r1 = covs[train.labels == 1].mean(axis=0)
    r2 = covs[train.labels == 2].mean(axis=0)
    composite = r1 + r2

    lam, u = sym_eig(composite)
    if not lam[0] > 0:
        raise SingularMatrixError("composite covariance is zero")
    floor = WHITEN_CLIP * lam[0]
    if lam[-1] < floor:
        warnings.warn(
            f"composite covariance is rank deficient; clipping "
            f"{int(np.sum(lam < floor))} eigenvalue(s) to {floor:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
        lam = np.maximum(lam, floor)
    whiten = u.T / np.sqrt(lam)[:, None]

    s1 = whiten @ r1 @ whiten.T
    lam1, b = sym_eig(0.5 * (s1 + s1.T))
    w = b.T @ whiten
    selected = tuple(range(m)) + tuple(range(n_channels - m, n_channels))
    return CspModel(w, selected, m, lam1, (r1, r2))


def csp_features(model, trial):
    """Log relative variance of each selected filter output.

    Accepts one ``channels x samples`` trial or a stack of them.
    """
    x = np.asarray(trial, dtype=float)
    if x.shape[-2] != model.n_channels:
        raise ValidationError(
            f"trial has {x.shape[-2]} channels, model expects {model.n_channels}"
        )
    z = model.filters @ x
    var = z.var(axis=-1)
    total = var.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise DegenerateTrialError("filtered trial has zero total variance")
    return np.log(var / total)


def transform_set(model, epochs):
    """Feature rows for every trial of an epoch set."""
    if epochs.n_trials == 0:
        return FeatureMatrix(np.zeros((0, 2 * model.m)), np.zeros(0, np.int64))
    return FeatureMatrix(csp_features(model, epochs.data), epochs.labels)


def save_csp(model, path):
    header = {
        "kind": "csp",
        "N": model.n_channels,
        "m": model.m,
        "selected_rows": list(model.selected_rows),
        "eigenvalues": [float(v) for v in model.eigenvalues],
        "dtype": "<f8",
    }
    _binary.write_blob(path, header, model.w_full, "<f8")


def load_csp(path):
    header, payload = _binary.read_blob(path, "<f8", lambda h: int(h["N"]) ** 2)
    if header.get("kind") != "csp":
        raise ParseError("not a CSP model file", offset=0)
    n = int(header["N"])
    return CspModel(
        payload.reshape(n, n),
        tuple(int(i) for i in header["selected_rows"]),
        int(header["m"]),
        np.asarray(header["eigenvalues"], dtype=float),
    )
