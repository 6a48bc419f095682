"""Shared test helpers."""

import numpy as np


def random_points(rng, m, n, k, sparse=0.2):
    """``m`` random points of the partition-matroid polytope, some rows on the boundary or empty."""
    X = rng.dirichlet(np.ones(k + 1), size=(m, n))[:, :, 1:]
    if sparse:
        # push some rows to the boundary and zero out others
        full = rng.random((m, n)) < sparse
        X[full] /= X[full].sum(axis=1, keepdims=True)
        X[rng.random((m, n)) < sparse] = 0.0
    return X
