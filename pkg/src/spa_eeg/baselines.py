"""Comparison classifiers: LDA, MDRM, and tangent-space mapping.

The Riemannian pieces use the affine-invariant metric on SPD matrices,
``delta(A, B) = sqrt(sum_i log(lambda_i)^2)`` over the eigenvalues of
``B^-1 A``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, SingularMatrixError, ValidationError
from .numerics import (
    generalized_eigvals,
    solve_linear,
    spd_exp,
    spd_inv_sqrt,
    spd_log,
    spd_sqrt,
)


@dataclass(frozen=True)
class LdaModel:
    weights: np.ndarray
    bias: float
    classes: tuple = (1, 2)


def _two_class_split(x, y):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y).reshape(-1)
    groups = [x[y == c] for c in (1, 2)]
    if any(len(g) == 0 for g in groups):
        raise ValidationError("both classes must be present")
    return x, groups


def lda_fit(x, y, shrinkage=0.0):
    """Two-class Fisher LDA with optional shrinkage toward scaled identity.

    The pooled within-class covariance ``S`` becomes
    ``(1 - shrinkage) * S + shrinkage * trace(S) / d * I``.
    """
    if not 0.0 <= shrinkage <= 1.0:
        raise ValidationError(f"shrinkage must be in [0, 1], got {shrinkage}")
    x, (g1, g2) = _two_class_split(x, y)
    mu1, mu2 = g1.mean(axis=0), g2.mean(axis=0)
    resid = np.concatenate([g1 - mu1, g2 - mu2])
    dof = max(len(resid) - 2, 1)
    pooled = resid.T @ resid / dof
    d = pooled.shape[0]
    if shrinkage > 0:
        pooled = (1 - shrinkage) * pooled + shrinkage * np.trace(pooled) / d * np.eye(d)
    try:
        w = solve_linear(pooled, mu1 - mu2)
    except SingularMatrixError:
        raise SingularMatrixError(
            "pooled covariance is singular; use shrinkage > 0"
        ) from None
    return LdaModel(w, float(w @ (mu1 + mu2) / 2.0))


def lda_decision(model, x):
    return np.asarray(x, dtype=float) @ model.weights - model.bias


def lda_predict(model, x):
    """Label 1 where the decision value is positive, else 2."""
    x = np.asarray(x, dtype=float)
    score = lda_decision(model, x)
    labels = np.where(score > 0, 1, 2)
    return int(labels) if np.ndim(labels) == 0 else labels


def riemannian_distance(a, b):
    """Affine-invariant distance between two SPD matrices."""
    lam = generalized_eigvals(a, b)
    return float(np.sqrt(np.sum(np.log(lam) ** 2)))


def riemannian_mean(covs, tol=1e-9, max_iter=50):
    """Karcher mean of a set of SPD matrices under the affine-invariant metric.

    Starts from the log-Euclidean mean and iterates
    ``G <- G^1/2 exp(nu * mean_i log(G^-1/2 C_i G^-1/2)) G^1/2`` until the mean
    tangent vector has Frobenius norm <= ``tol``. The step ``nu`` follows a
    Barzilai-Borwein rule clipped to [0.05, 1]; a step that raises the
    residual is undone and halved. A fixed unit step diverges on widely
    spread sets.
    """
    covs = np.asarray(covs, dtype=float)
    if covs.ndim == 2:
        covs = covs[None]
    if covs.shape[0] == 0:
        raise ValidationError("cannot average an empty set")
    if covs.shape[0] == 1:
        return covs[0].copy()

    def tangent_at(g):
        g_ihalf = spd_inv_sqrt(g)
        return spd_log(g_ihalf @ covs @ g_ihalf).mean(axis=0)

    g = spd_exp(spd_log(covs).mean(axis=0))
    tangent = tangent_at(g)
    residual = np.linalg.norm(tangent)
    nu = 1.0
    for _ in range(max_iter):
        if residual <= tol:
            return g
        g_half = spd_sqrt(g)
        trial = g_half @ spd_exp(nu * tangent) @ g_half
        trial = 0.5 * (trial + trial.T)
        new_tangent = tangent_at(trial)
        new_residual = np.linalg.norm(new_tangent)
        if new_residual > residual:
            nu *= 0.5
            continue
        step, diff = nu * tangent, tangent - new_tangent
        curvature = np.sum(step * diff)
        if curvature > 0:
            nu = float(np.clip(np.sum(step * step) / curvature, 0.05, 1.0))
        g, tangent, residual = trial, new_tangent, new_residual
    if residual <= tol:
        return g
    raise ConvergenceError(f"Karcher mean did not converge in {max_iter} iterations", residual)


@dataclass(frozen=True)
class MdrmModel:
    means: np.ndarray  # (2, n, n), class 1 first
    classes: tuple = (1, 2)

    @property
    def n_channels(self):
        return self.means.shape[-1]


def mdrm_fit(covs, labels, tol=1e-9, max_iter=50):
    covs = np.asarray(covs, dtype=float)
    labels = np.asarray(labels).reshape(-1)
    groups = [covs[labels == c] for c in (1, 2)]
    if any(len(g) == 0 for g in groups):
        raise ValidationError("both classes must be present")
    return MdrmModel(np.stack([riemannian_mean(g, tol, max_iter) for g in groups]))


def mdrm_distances(model, covs):
    covs = np.asarray(covs, dtype=float)
    single = covs.ndim == 2
    covs = covs[None] if single else covs
    d = np.array([[riemannian_distance(c, m) for m in model.means] for c in covs])
    return d[0] if single else d


def mdrm_predict(model, covs):
    """Nearest class mean; ties go to class 1."""
    d = mdrm_distances(model, covs)
    labels = np.asarray(model.classes)[np.argmin(np.atleast_2d(d), axis=1)]
    return int(labels[0]) if np.ndim(d) == 1 else labels


@dataclass(frozen=True)
class TangentSpaceMap:
    reference: np.ndarray

    @property
    def dim(self):
        n = self.reference.shape[0]
        return n * (n + 1) // 2


def fit_tangent_space(covs, tol=1e-9, max_iter=50):
    """Tangent space anchored at the Karcher mean of ``covs``."""
    return TangentSpaceMap(riemannian_mean(covs, tol, max_iter))


def tangent_map(tsm, cov):
    """Upper-triangular vectorization of ``log(C_ref^-1/2 cov C_ref^-1/2)``.

    Off-diagonal entries are scaled by sqrt(2) so the Euclidean norm equals
    the Riemannian distance to the reference.
    """
    cov = np.asarray(cov, dtype=float)
    isqrt = spd_inv_sqrt(tsm.reference)
    logs = spd_log(isqrt @ cov @ isqrt)
    n = tsm.reference.shape[0]
    rows, cols = np.triu_indices(n)
    weights = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return logs[..., rows, cols] * weights
