"""
Fitting a circle embedded in a higher-dimensional space
=======================================================

A p-sphere lives in a (p+1)-dimensional affine subspace. The fit first finds
that subspace by PCA, then solves the algebraic least-squares problem for
the center inside it. With noiseless points the recovery is exact.
"""

import numpy as np

from spa_eeg.spa import project_to_sphere, spca_fit

rng = np.random.default_rng(0)

# A circle of radius 2 in a random plane of R^6
frame, _ = np.linalg.qr(rng.standard_normal((6, 2)))
center = rng.uniform(-1, 1, 6)
theta = rng.uniform(0, 2 * np.pi, 30)
points = center + 2.0 * np.column_stack([np.cos(theta), np.sin(theta)]) @ frame.T

sphere = spca_fit(points, p=1)
print("center error:", np.abs(sphere.center - center).max())
print("radius:", sphere.radius)

# Add noise: the estimate degrades gracefully
noisy = points + 0.05 * rng.standard_normal(points.shape)
rough = spca_fit(noisy, p=1)
print("noisy center error:", np.abs(rough.center - center).max())
print("noisy radius:", rough.radius)

# Projecting a query onto the fitted circle. The result sits exactly on it.
query = center + rng.standard_normal(6)
foot = project_to_sphere(rough, query)
print("distance of projection from center:", np.linalg.norm(foot - rough.center))
