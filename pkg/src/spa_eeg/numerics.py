"""Dense symmetric linear algebra.

Every function accepts a single matrix of shape ``(n, n)`` or a stack of
them with shape ``(..., n, n)``. Matrices are plain float64 ndarrays.

Two eigensolvers are provided. :func:`sym_eig` uses LAPACK by default,
and :func:`jacobi_eigh` is a cyclic Jacobi rotation solver selectable with
``method="jacobi"``. Both return eigenvalues in descending order with a
fixed sign convention on the eigenvectors, so results are interchangeable.
"""

from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import ShapeError, SingularMatrixError

SYMMETRY_TOL = 1e-9
SINGULAR_EIG = 1e-12
JACOBI_TOL = 1e-12


class SymEigen(NamedTuple):
    """Eigendecomposition ``a = vectors @ diag(values) @ vectors.T``.

    ``values`` is sorted descending; column ``j`` of ``vectors`` pairs with
    ``values[..., j]``.
    """

    values: np.ndarray
    vectors: np.ndarray


def _as_square(a, name="a"):
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ShapeError(f"{name} must be square, got shape {a.shape}")
    return a


def _check_symmetric(a, name="a"):
    a = _as_square(a, name)
    scale = np.maximum(np.abs(a).max(axis=(-2, -1), initial=0.0), 1.0)
    asym = np.abs(a - np.swapaxes(a, -1, -2)).max(axis=(-2, -1), initial=0.0)
    if np.any(asym > SYMMETRY_TOL * scale):
        raise ShapeError(
            f"{name} is not symmetric (max asymmetry {np.max(asym):.3e})"
        )
    return a


def _canonical_signs(vectors):
    # Flip each column so its largest-magnitude entry is positive.
    idx = np.argmax(np.abs(vectors), axis=-2)
    pivots = np.take_along_axis(vectors, idx[..., None, :], axis=-2)
    signs = np.where(pivots < 0, -1.0, 1.0)
    return vectors * signs


def _sort_descending(values, vectors):
    order = np.argsort(-values, axis=-1, kind="stable")
    values = np.take_along_axis(values, order, axis=-1)
    vectors = np.take_along_axis(vectors, order[..., None, :], axis=-1)
    return values, vectors


def jacobi_eigh(a, tol=JACOBI_TOL, max_sweeps=100):
    """Cyclic Jacobi eigensolver for one symmetric matrix.

    Sweeps over all off-diagonal pairs, annihilating each with a plane
    rotation, until the off-diagonal Frobenius norm falls below
    ``tol * ||a||_F``. Returns the raw (unsorted) eigenvalues and
    eigenvectors in their original column order.
    """
    a = _check_symmetric(a)
    if a.ndim != 2:
        raise ShapeError("jacobi_eigh takes a single matrix")
    m = a.copy()
    n = m.shape[0]
    v = np.eye(n)
    target = tol * max(np.linalg.norm(m), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(m**2) - np.sum(np.diag(m) ** 2), 0.0))
        if off < target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p, q]
                diff = m[q, q] - m[p, p]
                if abs(apq) <= 1e-300 or abs(apq) < 1e-18 * abs(diff):
                    # Rotation angle underflows; the entry is already negligible.
                    m[p, q] = m[q, p] = 0.0
                    continue
                theta = diff / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.array([[c, s], [-s, c]])
                idx = [p, q]
                m[:, idx] = m[:, idx] @ rot
                m[idx, :] = rot.T @ m[idx, :]
                m[p, q] = m[q, p] = 0.0
                v[:, idx] = v[:, idx] @ rot
    return np.diag(m).copy(), v


def sym_eig(a, method="lapack"):
    """Eigendecomposition of a symmetric matrix (or stack of them).

    Parameters
    ----------
    a : array_like, shape (..., n, n)
        Symmetric within 1e-9 relative to its largest entry.
    method : {"lapack", "jacobi"}
        Backend. ``"jacobi"`` only accepts a single matrix.

    Returns
    -------
    SymEigen
        Values descending; each eigenvector's largest-magnitude component
        is positive. Equal eigenvalues keep the backend's column order.
    """
    a = _check_symmetric(a)
    if method == "lapack":
        values, vectors = np.linalg.eigh(a)
    elif method == "jacobi":
        values, vectors = jacobi_eigh(a)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    values, vectors = _sort_descending(values, vectors)
    return SymEigen(values, _canonical_signs(vectors))


def eigh_desc(a):
    """Unchecked batched eigendecomposition, values descending.

    Skips the symmetry check and sign canonicalization of :func:`sym_eig`;
    for hot loops whose callers do not depend on eigenvector signs.
    """
    values, vectors = np.linalg.eigh(a)
    return values[..., ::-1], vectors[..., ::-1]


def _spd_eig(a, name="a"):
    vals, vecs = sym_eig(a)
    low = vals[..., -1]
    if np.any(low <= SINGULAR_EIG):
        bad = float(np.min(low))
        raise SingularMatrixError(
            f"{name} is not positive definite: eigenvalue {bad:.3e} <= {SINGULAR_EIG:g}"
        )
    return vals, vecs


def _reassemble(vals, vecs):
    out = (vecs * vals[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def spd_inv_sqrt(a):
    """Inverse principal square root ``a^(-1/2)`` of an SPD matrix."""
    vals, vecs = _spd_eig(a)
    return _reassemble(1.0 / np.sqrt(vals), vecs)


def spd_sqrt(a):
    """Principal square root of an SPD matrix."""
    vals, vecs = _spd_eig(a)
    return _reassemble(np.sqrt(vals), vecs)


def spd_log(a):
    """Matrix logarithm of an SPD matrix; the result is symmetric."""
    vals, vecs = _spd_eig(a)
    return _reassemble(np.log(vals), vecs)


def spd_exp(s):
    """Matrix exponential of a symmetric matrix; the result is SPD."""
    vals, vecs = sym_eig(s)
    return _reassemble(np.exp(vals), vecs)


def generalized_eigvals(a, b):
    """Eigenvalues of ``inv(b) @ a`` for SPD ``a`` and ``b``, descending."""
    a = _check_symmetric(a, "a")
    b = _check_symmetric(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"size mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        return np.stack(
            [generalized_eigvals(x, y) for x, y in zip(a.reshape(-1, *a.shape[-2:]),
                                                      b.reshape(-1, *b.shape[-2:]))]
        ).reshape(a.shape[:-1])
    for name, m in (("a", a), ("b", b)):
        if np.linalg.eigvalsh(m)[0] <= SINGULAR_EIG:
            raise SingularMatrixError(f"{name} is not positive definite")
    vals = scipy.linalg.eigh(a, b, eigvals_only=True)
    return vals[::-1].copy()


def solve_linear(a, rhs):
    """Solve ``a @ x = rhs`` for symmetric ``a`` (or stacks of systems).

    Raises
    ------
    SingularMatrixError
        If the smallest eigenvalue magnitude is below ``1e-12`` times the
        largest. The caller decides on a fallback.
    """
    vals, vecs = sym_eig(a)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != vals.shape:
        raise ShapeError(f"rhs shape {rhs.shape} does not match system {vals.shape}")
    mags = np.abs(vals)
    big = mags.max(axis=-1)
    small = mags.min(axis=-1)
    if np.any(small <= SINGULAR_EIG * big) or np.any(big == 0.0):
        raise SingularMatrixError("linear system is singular to working precision")
    coef = np.einsum("...ij,...i->...j", vecs, rhs) / vals
    return np.einsum("...ij,...j->...i", vecs, coef)
