"""Synthetic data: noisy samples from two manifolds, and mixed EEG-like sources.

Manifold samples follow the noisy-support model ``x = z + eps`` with ``z``
uniform on a class manifold and ``eps ~ N(0, sigma^2 I_D)``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .csp import FeatureMatrix
from .errors import ShapeError, ValidationError
from .ingest import EpochSet
from .seeding import rng


@dataclass(frozen=True)
class ManifoldSpec:
    """A ``p``-sphere, or a circular arc, embedded in ``R^D``.

    The sphere lives in the span of a ``D x (p+1)`` orthonormal frame: the
    first ``p + 1`` coordinate axes when ``frame_seed`` is None, otherwise a
    random frame drawn from that seed. Arcs (``p = 1`` only) cover angles
    ``arc[0]..arc[1]``.
    """

    ambient_dim: int
    intrinsic_dim: int = 1
    radius: float = 1.0
    center: tuple = None
    kind: str = "p_sphere"
    frame_seed: int = None
    arc: tuple = (0.0, 2 * np.pi)

    def __post_init__(self):
        if self.kind not in ("p_sphere", "arc"):
            raise ValidationError(f"unknown manifold kind {self.kind!r}")
        if self.intrinsic_dim < 1 or self.intrinsic_dim + 1 > self.ambient_dim:
            raise ValidationError("need 1 <= p and p + 1 <= D")
        if self.kind == "arc" and self.intrinsic_dim != 1:
            raise ValidationError("arcs are one-dimensional")
        if not self.radius > 0:
            raise ValidationError("radius must be positive")
        center = np.zeros(self.ambient_dim) if self.center is None else np.asarray(self.center, float)
        if center.shape != (self.ambient_dim,):
            raise ShapeError(f"center must have length {self.ambient_dim}")
        object.__setattr__(self, "center", tuple(center.tolist()))

    def frame(self):
        q = self.intrinsic_dim + 1
        if self.frame_seed is None:
            return np.eye(self.ambient_dim)[:, :q]
        g = rng(self.frame_seed, 0).standard_normal((self.ambient_dim, q))
        basis, r = np.linalg.qr(g)
        return basis * np.sign(np.diag(r))

    def embed(self, unit):
        """Map unit vectors in ``R^(p+1)`` onto the manifold."""
        return np.asarray(self.center) + self.radius * unit @ self.frame().T

    def sample_unit(self, n, gen):
        if self.intrinsic_dim == 1:
            lo, hi = self.arc if self.kind == "arc" else (0.0, 2 * np.pi)
            theta = gen.uniform(lo, hi, n)
            return np.column_stack([np.cos(theta), np.sin(theta)])
        g = gen.standard_normal((n, self.intrinsic_dim + 1))
        return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True)
class NoisySample:
    features: FeatureMatrix
    clean_points: np.ndarray
    sigma: float


def sample_two_manifolds(spec1, spec2, n_per_class, sigma, seed):
    """``n_per_class`` noisy points from each manifold; class 1 rows first."""
    if spec1.ambient_dim != spec2.ambient_dim:
        raise ShapeError("manifolds live in different ambient dimensions")
    if n_per_class < 1 or sigma < 0:
        raise ValidationError("need n_per_class >= 1 and sigma >= 0")
    clean, noisy = [], []
    for cls, spec in enumerate((spec1, spec2)):
        z = spec.embed(spec.sample_unit(n_per_class, rng(seed, cls, 0)))
        eps = rng(seed, cls, 1).standard_normal(z.shape) * sigma
        clean.append(z)
        noisy.append(z + eps)
    labels = np.repeat([1, 2], n_per_class)
    return NoisySample(FeatureMatrix(np.vstack(noisy), labels), np.vstack(clean), float(sigma))


def concentric_circles(ambient_dim=2, radii=(1.0, 3.0), frame_seed=None):
    """Two circles around the origin sharing one embedding plane."""
    return tuple(
        ManifoldSpec(ambient_dim, 1, r, frame_seed=frame_seed) for r in radii
    )


def _same_subspace(spec1, spec2, tol=1e-10):
    f1, f2 = spec1.frame(), spec2.frame()
    if f1.shape != f2.shape:
        return False
    proj = f1 @ f1.T
    dc = np.asarray(spec2.center) - np.asarray(spec1.center)
    return (np.linalg.norm(proj @ f2 - f2) < tol
            and np.linalg.norm(proj @ dc - dc) < tol * max(1.0, np.linalg.norm(dc)))


def min_separation(spec1, spec2, n_candidates=256):
    """Smallest Euclidean distance between two manifolds.

    Closed form for full spheres sharing an affine subspace; otherwise a
    candidate search followed by local refinement.
    """
    if spec1.ambient_dim != spec2.ambient_dim:
        raise ShapeError("manifolds live in different ambient dimensions")
    if spec1 == spec2:
        return 0.0
    full = spec1.kind == spec2.kind == "p_sphere"
    if full and _same_subspace(spec1, spec2):
        d = np.linalg.norm(np.asarray(spec1.center) - np.asarray(spec2.center))
        r1, r2 = spec1.radius, spec2.radius
        if d >= r1 + r2:
            return float(d - r1 - r2)
        if d <= abs(r1 - r2):
            return float(abs(r1 - r2) - d)
        return 0.0
    return _numeric_separation(spec1, spec2, n_candidates)


def _param_points(spec, n, gen):
    if spec.intrinsic_dim == 1:
        lo, hi = spec.arc if spec.kind == "arc" else (0.0, 2 * np.pi)
        return np.linspace(lo, hi, n)[:, None]
    g = gen.standard_normal((n, spec.intrinsic_dim + 1))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _param_to_point(spec, t):
    if spec.intrinsic_dim == 1:
        unit = np.array([np.cos(t[0]), np.sin(t[0])])
    else:
        unit = t / max(np.linalg.norm(t), 1e-300)
    return spec.embed(unit[None, :])[0]


def _numeric_separation(spec1, spec2, n):
    gen = rng(0, 0)
    t1, t2 = _param_points(spec1, n, gen), _param_points(spec2, n, gen)
    p1 = np.array([_param_to_point(spec1, t) for t in t1])
    p2 = np.array([_param_to_point(spec2, t) for t in t2])
    d = np.linalg.norm(p1[:, None, :] - p2[None, :, :], axis=-1)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    k1 = t1.shape[1]

    def bounds(spec, dim):
        if spec.kind == "arc":
            return [tuple(spec.arc)]
        return [(None, None)] * dim

    def objective(v):
        return np.linalg.norm(_param_to_point(spec1, v[:k1]) - _param_to_point(spec2, v[k1:]))

    res = scipy.optimize.minimize(
        objective,
        np.concatenate([t1[i], t2[j]]),
        method="L-BFGS-B",
        bounds=bounds(spec1, k1) + bounds(spec2, t2.shape[1]),
    )
    return float(min(res.fun, d[i, j]))


@dataclass(frozen=True)
class MixedSources:
    epochs: EpochSet
    mixing: np.ndarray


def sample_mixed_sources(n_channels, n_samples, profiles, n_trials_per_class, seed,
                         fs=250.0, condition=3.0):
    """Trials of independent Gaussian sources mixed by a fixed random matrix.

    ``profiles`` gives per-source variances for class 1 and class 2. The
    mixing matrix has singular values spread over ``[1, condition]``.
    """
    var = np.asarray(profiles, dtype=float)
    if var.shape != (2, n_channels) or np.any(var <= 0):
        raise ValidationError("profiles must be two positive rows of length n_channels")
    g = rng(seed, 0)
    q1, _ = np.linalg.qr(g.standard_normal((n_channels, n_channels)))
    q2, _ = np.linalg.qr(g.standard_normal((n_channels, n_channels)))
    mixing = q1 @ np.diag(np.linspace(condition, 1.0, n_channels)) @ q2.T
    trials = []
    for cls in range(2):
        src = rng(seed, 1 + cls).standard_normal((n_trials_per_class, n_channels, n_samples))
        trials.append(mixing @ (src * np.sqrt(var[cls])[None, :, None]))
    data = np.concatenate(trials)
    labels = np.repeat([1, 2], n_trials_per_class)
    order = rng(seed, 3).permutation(labels.size)
    return MixedSources(EpochSet(data[order], labels[order], fs), mixing)
