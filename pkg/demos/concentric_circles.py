"""
Local sphere classification of two concentric circles
=====================================================

Two circles of radii 1 and 3 share a center, so no linear rule separates
them. The classifier fits a small circle to the k nearest training points of
each class and assigns the query to the closer fitted circle. The error
grows as the noise level approaches the gap between the circles, i.e. as
delta^2 / sigma^2 shrinks.
"""

import numpy as np

from spa_eeg.spa import spa_fit, spa_predict
from spa_eeg.synth import concentric_circles, min_separation, sample_two_manifolds

specs = concentric_circles(ambient_dim=10, radii=(1.0, 3.0), frame_seed=1)
delta = min_separation(*specs)
print(f"minimum separation delta = {delta:.3f}")

for sigma in (0.01, 0.1, 0.25, 0.5, 1.0):
    train = sample_two_manifolds(*specs, 1000, sigma, seed=2)
    test = sample_two_manifolds(*specs, 250, sigma, seed=3)
    model = spa_fit(train.features, k=20, p=1)
    pred = spa_predict(model, test.features.values)
    error = 100 * np.mean(pred != test.features.labels)
    print(f"sigma {sigma:5.2f}  delta^2/sigma^2 {delta**2 / sigma**2:9.1f}  error {error:5.1f}%")
