"""The multilinear extension ``F`` of a k-submodular function.

``F(x)`` is the expectation of ``f`` when each item ``i`` independently joins
part ``j`` with probability ``x[i, j]`` and stays unassigned with probability
``1 - sum_j x[i, j]``.  Exact routines contract the dense ``(k+1)^n`` table
with one weight vector per item; sampled routines draw the random orthant
vectors directly and never build the table.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import KSubFunction, check_guard
from .errors import ConfigError, DomainError
from .polytope import TOL, ConstraintSet, coordinate_room


@dataclass(frozen=True)
class EstimatorConfig:
    samples: int = 1000
    seed: int = 0
    epsilon: float = 0.1

    def __post_init__(self):
        if self.samples < 1:
            raise ConfigError("estimator needs at least one sample")

    @classmethod
    def for_accuracy(cls, epsilon: float, failure: float = 0.01, seed: int = 0) -> "EstimatorConfig":
        """Sample count ``ceil(4 ln(1/failure) / epsilon^2)``.

        With that many samples the mean is within ``epsilon * max|f|`` of ``F``
        except with probability ``failure``.
        """
        return cls(math.ceil(4 * math.log(1 / failure) / epsilon**2), seed, epsilon)

    def to_dict(self) -> dict:
        return asdict(self)


def check_point(x, n: int, k: int, tol: float = TOL) -> np.ndarray:
    """Validate ``x`` as a point of the partition-matroid polytope; return it as floats."""
    x = np.asarray(x, dtype=float)
    if x.shape != (n, k):
        raise DomainError(f"point has shape {x.shape}, expected {(n, k)}")
    if not np.all(np.isfinite(x)):
        raise DomainError("point has non-finite coordinates")
    if np.any(x < -tol) or np.any(x > 1 + tol):
        raise DomainError("coordinates must lie in [0, 1]")
    if np.any(x.sum(axis=1) > 1 + tol):
        raise DomainError("row sums must not exceed 1")
    return x


def item_weights(x: np.ndarray) -> np.ndarray:
    """``(n, k+1)`` per-item distribution: column 0 is the unassigned mass."""
    return np.concatenate([1.0 - x.sum(axis=1, keepdims=True), x], axis=1)


def _contract_except(T: np.ndarray, W: np.ndarray, keep: tuple[int, ...]) -> np.ndarray:
    n = W.shape[0]
    others = [i for i in range(n) if i not in keep]
    out = np.moveaxis(T, keep, tuple(range(len(keep)))) if keep else T
    for i in reversed(others):
        out = out @ W[i]
    return out


def eval_exact(f: KSubFunction, x) -> float:
    x = check_point(x, f.n, f.k)
    check_guard(f.n, f.k)
    return float(_contract_except(f.tensor(), item_weights(x), ()))


def grad_exact(f: KSubFunction, x) -> np.ndarray:
    """Exact ``(n, k)`` gradient of ``F`` at ``x``."""
    x = check_point(x, f.n, f.k)
    check_guard(f.n, f.k)
    T, W = f.tensor(), item_weights(x)
    grad = np.empty((f.n, f.k))
    for i in range(f.n):
        row = _contract_except(T, W, (i,))
        grad[i] = row[1:] - row[0]
    return grad


def hessian_entry_exact(f: KSubFunction, x, i1: int, j1: int, i2: int, j2: int) -> float:
    """Mixed second partial ``d^2 F / dx[i1, j1] dx[i2, j2]`` (parts 1-based)."""
    x = check_point(x, f.n, f.k)
    check_guard(f.n, f.k)
    for i, j in ((i1, j1), (i2, j2)):
        if not (0 <= i < f.n and 1 <= j <= f.k):
            raise DomainError(f"coordinate ({i}, {j}) outside [n] x [k]")
    if i1 == i2:
        return 0.0
    M = _contract_except(f.tensor(), item_weights(x), (i1, i2))
    return float(M[j1, j2] - M[0, j2] - M[j1, 0] + M[0, 0])


def hessian_exact(f: KSubFunction, x) -> np.ndarray:
    """Full ``(n, k, n, k)`` Hessian; same-item blocks are identically zero."""
    x = check_point(x, f.n, f.k)
    check_guard(f.n, f.k)
    T, W = f.tensor(), item_weights(x)
    H = np.zeros((f.n, f.k, f.n, f.k))
    for i1 in range(f.n):
        for i2 in range(i1 + 1, f.n):
            M = _contract_except(T, W, (i1, i2))
            block = M[1:, 1:] - M[:1, 1:] - M[1:, :1] + M[0, 0]
            H[i1, :, i2, :] = block
            H[i2, :, i1, :] = block.T
    return H


def check_points(X, n: int, k: int, tol: float = TOL) -> np.ndarray:
    """Batched :func:`check_point` for an ``(m, n, k)`` stack of points."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[1:] != (n, k):
        raise DomainError(f"points have shape {X.shape}, expected (m, {n}, {k})")
    if not np.all(np.isfinite(X)) or np.any(X < -tol) or np.any(X > 1 + tol):
        raise DomainError("coordinates must be finite and lie in [0, 1]")
    if np.any(X.sum(axis=2) > 1 + tol):
        raise DomainError("row sums must not exceed 1")
    return X


def _contract_batch(T: np.ndarray, W: np.ndarray, keep: tuple[int, ...]) -> np.ndarray:
    """Contract every item outside ``keep``; result has the kept axes first, then the batch axis."""
    n = W.shape[1]
    others = [i for i in range(n) if i not in keep]
    out = np.moveaxis(T, keep, tuple(range(len(keep)))) if keep else T
    out = out[..., None]
    for i in reversed(others):
        out = np.einsum("...am,ma->...m", out, W[:, i])
    return out


def eval_exact_batch(f: KSubFunction, X) -> np.ndarray:
    """``F`` at each of the ``m`` points stacked in ``X`` (shape ``(m, n, k)``)."""
    X = check_points(X, f.n, f.k)
    check_guard(f.n, f.k)
    W = np.concatenate([1.0 - X.sum(axis=2, keepdims=True), X], axis=2)
    return _contract_batch(f.tensor(), W, ())


def grad_exact_batch(f: KSubFunction, X) -> np.ndarray:
    """``(m, n, k)`` exact gradients."""
    X = check_points(X, f.n, f.k)
    check_guard(f.n, f.k)
    T = f.tensor()
    W = np.concatenate([1.0 - X.sum(axis=2, keepdims=True), X], axis=2)
    grad = np.empty(X.shape)
    for i in range(f.n):
        rows = _contract_batch(T, W, (i,))
        grad[:, i] = (rows[1:] - rows[0]).T
    return grad


def hessian_exact_batch(f: KSubFunction, X) -> np.ndarray:
    """``(m, n, k, n, k)`` exact Hessians."""
    X = check_points(X, f.n, f.k)
    check_guard(f.n, f.k)
    T = f.tensor()
    W = np.concatenate([1.0 - X.sum(axis=2, keepdims=True), X], axis=2)
    H = np.zeros((X.shape[0], f.n, f.k, f.n, f.k))
    for i1 in range(f.n):
        for i2 in range(i1 + 1, f.n):
            M = _contract_batch(T, W, (i1, i2))
            block = np.moveaxis(M[1:, 1:] - M[:1, 1:] - M[1:, :1] + M[0, 0], -1, 0)
            H[:, i1, :, i2, :] = block
            H[:, i2, :, i1, :] = block.transpose(0, 2, 1)
    return H


def sample_states(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Turn uniforms ``u`` of shape ``(t, n)`` into ``t`` random orthant vectors at ``x``."""
    cum = np.cumsum(x, axis=1)
    count = (u[:, :, None] >= cum[None, :, :]).sum(axis=2)
    k = x.shape[1]
    return np.where(count == k, 0, count + 1)


def _mean(values: np.ndarray) -> float:
    # centred on the first sample, so identical samples average exactly
    return float(values[0] + np.mean(values - values[0]))


def eval_sampled(f: KSubFunction, x, cfg: EstimatorConfig) -> float:
    x = check_point(x, f.n, f.k)
    rng = np.random.default_rng(cfg.seed)
    u = rng.random((cfg.samples, f.n))
    return _mean(f.evaluate_many(sample_states(x, u)))


def grad_sampled(
    f: KSubFunction,
    x,
    delta: float,
    cfg: EstimatorConfig,
    constraints: ConstraintSet | None = None,
    common_random_numbers: bool = True,
) -> np.ndarray:
    """Forward-difference gradient estimate with step ``delta``.

    Coordinates whose probe ``x + delta * e_{i,j}`` leaves the polytope (or
    ``constraints``, when given) come back as ``nan``.  With common random
    numbers the probe reuses the uniforms of the base sample, so only the
    probed item's assignment changes.
    """
    x = check_point(x, f.n, f.k)
    if delta <= 0:
        raise ConfigError("probe step must be positive")
    n, k = f.n, f.k
    room = np.minimum((1.0 - x.sum(axis=1))[:, None], 1.0 - x)
    if constraints is not None:
        room = np.minimum(room, coordinate_room(constraints, x))
    rng = np.random.default_rng(cfg.seed)
    u = rng.random((cfg.samples, n))
    base_states = sample_states(x, u)
    base = _mean(f.evaluate_many(base_states))
    grad = np.full((n, k), np.nan)
    for i in range(n):
        for j in range(k):
            if room[i, j] < delta - TOL:
                continue
            probe = x.copy()
            probe[i, j] += delta
            if common_random_numbers:
                states = base_states.copy()
                states[:, i] = sample_states(probe[i : i + 1], u[:, i : i + 1])[:, 0]
                shifted = _mean(f.evaluate_many(states))
                grad[i, j] = (shifted - base) / delta
            else:
                fresh = rng.random((cfg.samples, n))
                shifted = _mean(f.evaluate_many(sample_states(probe, fresh)))
                grad[i, j] = (shifted - base) / delta
    return grad
