"""Spherical local manifold approximation (SPA) classifier.

For a query point, each class's ``k`` nearest training points are fitted
with a ``p``-dimensional sphere by spherical PCA (SPCA); the query goes to
the class whose sphere is closest.

SPCA steps, for points ``x_i`` with mean ``x_bar``:

1. ``V`` = top ``p + 1`` eigenvectors of the sample covariance.
2. Project into the affine subspace, ``xi_i = x_bar + V V^T (x_i - x_bar)``.
3. Algebraic least-squares center. Minimizing
   ``sum_i (|xi_i|^2 - 2 c^T xi_i + |c|^2 - r^2)^2`` over ``c`` after
   eliminating ``r`` gives the normal equations
   ``2 S c = sum_i (|xi_i|^2 - mean_j |xi_j|^2) (xi_i - xi_bar)`` with
   ``S = sum_i (xi_i - xi_bar)(xi_i - xi_bar)^T``. ``S`` is singular in the
   ambient space, so they are solved in the ``p + 1`` local coordinates.
4. ``r`` = mean distance from the projected points to ``c``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _binary
from .csp import FeatureMatrix
from .errors import (
    DegenerateFitError,
    InsufficientNeighborsError,
    ParseError,
    ShapeError,
    ValidationError,
)
from .numerics import SINGULAR_EIG, eigh_desc
from .splits import stratified_kfold

DEGENERATE_NORM = 1e-12
SINGULAR_RATIO = SINGULAR_EIG
# Bounds the (chunk, class_size, D) difference tensor built for kNN search.
_KNN_CHUNK_ELEMS = 2_000_000


@dataclass(frozen=True)
class Sphere:
    """``p``-sphere with center ``center``, radius ``radius`` in ``span(basis)``."""

    basis: np.ndarray
    center: np.ndarray
    radius: float

    @property
    def p(self):
        return self.basis.shape[1] - 1


def _moments(points):
    n = points.shape[-2]
    mean = points.mean(axis=-2)
    centered = points - mean[..., None, :]
    scatter = np.swapaxes(centered, -1, -2) @ centered / n
    return mean, scatter


def _spca(points, p, moments=None):
    # Vectorized over leading axes: points (..., n, D). ``moments`` may carry
    # a precomputed (mean, scatter) for these points.
    n, dim = points.shape[-2:]
    if n < p + 2:
        raise InsufficientNeighborsError(
            f"{n} points cannot determine a {p}-sphere (need >= {p + 2})"
        )
    if p < 1 or p + 1 > dim:
        raise ShapeError(f"p={p} needs 1 <= p+1 <= D={dim}")
    mean, scatter = _moments(points) if moments is None else moments
    vals, vecs = eigh_desc(scatter)
    return _spca_from_eig(points, p, mean, vals, vecs)


def _spca_from_eig(points, p, mean, vals, vecs):
    n = points.shape[-2]
    basis = vecs[..., : p + 1]
    local = (points - mean[..., None, :]) @ basis
    local = local - local.mean(axis=-2, keepdims=True)
    # In the eigenbasis the local scatter sum_i y_i y_i^T is n * diag(vals),
    # so the normal equations decouple.
    lam = vals[..., : p + 1]
    if np.any(~(lam[..., -1] > SINGULAR_RATIO * lam[..., 0])):
        raise DegenerateFitError("projected neighbors have singular scatter")
    sq = np.sum(local**2, axis=-1)
    sq = sq - sq.mean(axis=-1, keepdims=True)
    rhs = np.einsum("...i,...ij->...j", sq, local)
    c_local = 0.5 * rhs / (n * lam)
    center = mean + np.einsum("...ij,...j->...i", basis, c_local)
    radius = np.linalg.norm(local - c_local[..., None, :], axis=-1).mean(axis=-1)
    if np.any(~(radius > 0)):
        raise DegenerateFitError("fitted sphere has zero radius")
    return basis, center, radius


def spca_fit(points, p):
    """Fit a ``p``-dimensional sphere to an ``n x D`` point cloud."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ShapeError(f"points must be n x D, got {points.shape}")
    basis, center, radius = _spca(points, p)
    return Sphere(basis, center, float(radius))


def _project(basis, center, radius, x):
    # Vectorized: basis (..., D, q), center (..., D), radius (...), x (..., D).
    coef = np.einsum("...ij,...i->...j", basis, x - center)
    u = np.einsum("...ij,...j->...i", basis, coef)
    norm = np.linalg.norm(u, axis=-1)
    # Every sphere point is equidistant from a query at the center; pick the
    # first basis direction.
    degenerate = norm < DEGENERATE_NORM
    direction = np.where(
        degenerate[..., None], basis[..., 0], u / np.where(degenerate, 1.0, norm)[..., None]
    )
    return center + radius[..., None] * direction


def project_to_sphere(sphere, x):
    """Closest point on ``sphere`` to ``x``."""
    x = np.asarray(x, dtype=float)
    return _project(sphere.basis, sphere.center, np.asarray(sphere.radius), x)


def spa_distance(sphere, x):
    return float(np.linalg.norm(np.asarray(x, dtype=float) - project_to_sphere(sphere, x)))


def _sorted_neighbors(class_points, queries, k):
    # Row indices of the k nearest class points per query; exact ties keep
    # training-row order.
    n_c, dim = class_points.shape
    chunk = max(1, _KNN_CHUNK_ELEMS // max(1, n_c * dim))
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    for start in range(0, queries.shape[0], chunk):
        q = queries[start:start + chunk]
        d2 = np.sum((q[:, None, :] - class_points[None, :, :]) ** 2, axis=-1)
        out[start:start + chunk] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def knn_in_class(features, x, label, k):
    """The ``k`` rows of class ``label`` nearest to ``x`` (Euclidean)."""
    pts = features.values[features.labels == label]
    if pts.shape[0] < k:
        raise InsufficientNeighborsError(
            f"class {label} has {pts.shape[0]} points, fewer than k={k}"
        )
    idx = _sorted_neighbors(pts, np.asarray(x, dtype=float)[None, :], k)[0]
    return pts[idx]


@dataclass(frozen=True)
class SpaModel:
    """Training features plus neighborhood size ``k`` and sphere dimension ``p``."""

    train: FeatureMatrix
    k: int
    p: int
    class_labels: tuple = (1, 2)

    def __post_init__(self):
        if self.k < self.p + 2:
            raise ValidationError(f"k={self.k} must be >= p+2={self.p + 2}")
        smallest = min(int(np.sum(self.train.labels == c)) for c in self.class_labels)
        if self.k > smallest:
            raise ValidationError(f"k={self.k} exceeds smallest class size {smallest}")


def spa_fit(train, k, p):
    """Build an :class:`SpaModel`, clamping ``k`` to the smallest class."""
    smallest = min(int(np.sum(train.labels == c)) for c in (1, 2))
    if smallest == 0:
        raise ValidationError("both classes must be present")
    if k > smallest:
        warnings.warn(
            f"k={k} clamped to smallest class size {smallest}", RuntimeWarning, stacklevel=2
        )
        k = smallest
    return SpaModel(train, int(k), int(p))


def _class_distances(class_points, queries, neighbor_idx, p):
    neigh = class_points[neighbor_idx]
    basis, center, radius = _spca(neigh, p)
    proj = _project(basis, center, radius, queries)
    return np.linalg.norm(queries - proj, axis=-1)


def spa_distances(model, queries):
    """Distances ``(n_queries, 2)`` from each query to each class's local sphere."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    out = np.empty((queries.shape[0], len(model.class_labels)))
    for j, label in enumerate(model.class_labels):
        pts = model.train.values[model.train.labels == label]
        idx = _sorted_neighbors(pts, queries, model.k)
        try:
            out[:, j] = _class_distances(pts, queries, idx, model.p)
        except (DegenerateFitError, InsufficientNeighborsError) as exc:
            raise type(exc)(f"class {label}: {exc}") from None
    return out


def _decide(distances, class_labels=(1, 2)):
    # argmin takes the first minimum, so ties go to the smaller label.
    return np.asarray(class_labels)[np.argmin(distances, axis=1)]


def spa_predict(model, x):
    """Predicted label for one query, or an array of labels for a batch."""
    x = np.asarray(x, dtype=float)
    labels = _decide(spa_distances(model, x), model.class_labels)
    return int(labels[0]) if x.ndim == 1 else labels


def spa_predict_detailed(model, x):
    """``(label, d1, d2)`` for a single query."""
    d = spa_distances(model, x)[0]
    return int(_decide(d[None, :], model.class_labels)[0]), float(d[0]), float(d[1])


@dataclass(frozen=True)
class HyperparamGrid:
    p_values: tuple = (1, 2, 3, 4)
    k_min: int = 8
    k_step: int = 1
    k_max: int = 46

    def cells(self, smallest_class, dim):
        """Feasible ``(p, k)`` pairs, p-major. ``k`` is capped by the smallest
        class; when that falls below ``k_min`` the range collapses to it."""
        k_hi = min(self.k_max, smallest_class)
        k_lo = min(self.k_min, k_hi)
        ks = range(k_lo, k_hi + 1, self.k_step)
        return [(p, k) for p in self.p_values for k in ks if k >= p + 2 and p + 1 <= dim]


@dataclass(frozen=True)
class TuningResult:
    k: int
    p: int
    protocol: str
    scores: list = field(default_factory=list)

    @property
    def oracle_tuned(self):
        return self.protocol == "oracle_on_eval"


def _prefix_eigs(neighbors, queries, ks):
    # Mean, scatter and eigendecomposition of the first k sorted neighbors,
    # for every k in ks at once via prefix sums. Coordinates are taken
    # relative to the query to limit cancellation.
    rel = neighbors - queries[:, None, :]
    s1 = np.cumsum(rel, axis=1)
    s2 = np.cumsum(rel[..., :, None] * rel[..., None, :], axis=1)
    kk = np.asarray(ks)
    counts = kk[None, :, None].astype(float)
    mean = s1[:, kk - 1] / counts
    scatter = s2[:, kk - 1] / counts[..., None] - mean[..., :, None] * mean[..., None, :]
    scatter = 0.5 * (scatter + np.swapaxes(scatter, -1, -2))
    vals, vecs = eigh_desc(scatter)
    return mean + queries[:, None, :], vals, vecs


def _masked_distances(neigh, q, ks, p, mean, vals, vecs):
    # Query-to-sphere distances (n_q, K) for the prefix fits of every k in
    # ks at once; same algebra as _spca_from_eig with a validity mask over
    # the neighbor axis. NaN marks a degenerate fit.
    kk = np.asarray(ks)
    mask = (np.arange(neigh.shape[1])[None, :] < kk[:, None]).astype(float)
    basis = vecs[..., : p + 1]
    lam = vals[..., : p + 1]
    local = (neigh[:, None, :, :] - mean[:, :, None, :]) @ basis
    local = local * mask[None, :, :, None]
    counts = kk[None, :, None].astype(float)
    local = (local - local.sum(axis=2)[:, :, None, :] / counts[..., None]) * mask[None, :, :, None]
    sq = np.sum(local**2, axis=-1)
    sq = (sq - sq.sum(axis=2, keepdims=True) / counts) * mask[None]
    rhs = np.einsum("qkm,qkmj->qkj", sq, local)
    ok = lam[..., -1] > SINGULAR_RATIO * lam[..., 0]
    c_local = 0.5 * rhs / (counts * np.where(ok[..., None], lam, 1.0))
    center = mean + np.einsum("qkij,qkj->qki", basis, c_local)
    radius = (np.linalg.norm(local - c_local[:, :, None, :], axis=-1) * mask[None]).sum(axis=2)
    radius = radius / counts[..., 0]
    ok &= radius > 0
    qq = np.broadcast_to(q[:, None, :], center.shape)
    proj = _project(basis, center, np.where(ok, radius, 1.0), qq)
    d = np.linalg.norm(qq - proj, axis=-1)
    return np.where(ok, d, np.nan)


def _grid_accuracies(train, evals, cells):
    # Accuracy of every (p, k) cell on one train/eval split. Neighbors are
    # sorted once up to the largest k; one eigendecomposition per k serves
    # every p.
    ks = sorted({k for _, k in cells})
    col = {k: i for i, k in enumerate(ks)}
    q = evals.values
    per_class = []
    for label in (1, 2):
        pts = train.values[train.labels == label]
        neigh = pts[_sorted_neighbors(pts, q, ks[-1])]
        per_class.append((neigh, _prefix_eigs(neigh, q, ks)))
    acc = {}
    for p in sorted({p for p, _ in cells}):
        dists = [_masked_distances(neigh, q, ks, p, *eig) for neigh, eig in per_class]
        for pp, k in cells:
            if pp != p:
                continue
            d = np.column_stack([dd[:, col[k]] for dd in dists])
            if np.isnan(d).any():
                # A cell whose local fits collapse is unusable, not fatal.
                acc[(p, k)] = np.nan
            else:
                acc[(p, k)] = float(np.mean(_decide(d) == evals.labels))
    return acc


def tune_hyperparameters(train, grid=None, protocol="inner_cv", evals=None, seed=0,
                         inner_folds=5):
    """Select ``(k, p)`` by grid search.

    ``"inner_cv"`` scores each cell by stratified ``inner_folds``-fold CV on
    ``train`` alone. ``"oracle_on_eval"`` scores on ``evals`` directly and the
    result is flagged as oracle-tuned. Ties go to the earliest cell (smaller
    ``p``, then smaller ``k``).
    """
    grid = grid or HyperparamGrid()
    if protocol == "inner_cv":
        folds = stratified_kfold(train.labels, inner_folds, seed)
        splits = []
        for f in folds:
            mask = np.ones(train.n, bool)
            mask[f] = False
            splits.append((train.subset(mask), train.subset(f)))
    elif protocol == "oracle_on_eval":
        if evals is None:
            raise ValidationError("oracle_on_eval needs an evaluation set")
        splits = [(train, evals)]
    else:
        raise ValueError(f"unknown tuning protocol {protocol!r}")

    smallest = min(
        int(np.sum(tr.labels == c)) for tr, _ in splits for c in (1, 2)
    )
    cells = grid.cells(smallest, train.d)
    if not cells:
        raise ValidationError(
            f"no feasible (p, k) cell for smallest class {smallest} and D={train.d}"
        )
    totals = dict.fromkeys(cells, 0.0)
    for tr, ev in splits:
        for cell, a in _grid_accuracies(tr, ev, cells).items():
            totals[cell] += a / len(splits)
    usable = [c for c in cells if np.isfinite(totals[c])]
    if not usable:
        raise DegenerateFitError("every grid cell produced a degenerate sphere fit")
    best = max(usable, key=lambda c: (totals[c], -cells.index(c)))
    scores = [(p, k, totals[(p, k)]) for p, k in cells]
    return TuningResult(k=best[1], p=best[0], protocol=protocol, scores=scores)


def save_spa(model, path):
    n, d = model.train.values.shape
    header = {"kind": "spa", "k": model.k, "p": model.p, "n": n, "D": d, "dtype": "<f8"}
    payload = np.concatenate([model.train.values.reshape(-1), model.train.labels.astype(float)])
    _binary.write_blob(path, header, payload, "<f8")


def load_spa(path):
    header, payload = _binary.read_blob(
        path, "<f8", lambda h: int(h["n"]) * (int(h["D"]) + 1)
    )
    if header.get("kind") != "spa":
        raise ParseError("not an SPA model file", offset=0)
    n, d = int(header["n"]), int(header["D"])
    train = FeatureMatrix(payload[: n * d].reshape(n, d), payload[n * d:].astype(np.int64))
    return SpaModel(train, int(header["k"]), int(header["p"]))
