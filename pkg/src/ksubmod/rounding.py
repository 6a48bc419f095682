"""Dependent randomized rounding over the partition-matroid polytope.

Every elementary step picks two fractional coordinates ``a`` (value
``gamma``) and ``b`` (value ``beta``) and moves along ``e_a - e_b`` until one
of them becomes integral: up by ``min(1 - gamma, beta)`` or down by
``min(gamma, 1 - beta)``, with probabilities making the move a martingale.
When the pair lies in one row the up-move has probability
``gamma / (beta + gamma)``.

Without total-size preservation each row carries a phantom "unassigned"
coordinate holding ``1 - sum_j x[i, j]`` and all steps stay inside a row.
With preservation the phantom is frozen: rows are first reduced to at most
one fractional coordinate, then fractional coordinates of different rows
are paired, which keeps ``sum(x)`` fixed.  A leftover single fractional
coordinate (non-integral total) is settled by one Bernoulli step.

``pipage`` pairs the first two fractional coordinates in index order;
``swap`` pairs two uniformly random fractional coordinates.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import KSubFunction, OrthantVector, max_marginal, validate_monotone
from .errors import ConfigError, PreconditionError
from .extension import check_point, eval_exact

SNAP = 1e-9

Rounder = Callable[[np.ndarray, bool, np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class RoundingConfig:
    method: str = "pipage"
    seed: int = 0
    trials: int = 1

    def __post_init__(self):
        if self.method not in ("pipage", "swap"):
            raise ConfigError(f"unknown rounding method {self.method!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


def _snap(V: np.ndarray) -> None:
    V[V < SNAP] = 0.0
    V[V > 1.0 - SNAP] = 1.0


def _pick_pairs(frac: np.ndarray, method: str, rng: np.random.Generator):
    """Indices of two fractional entries along the last axis (first two, or random two)."""
    if method == "swap":
        keys = np.where(frac, rng.random(frac.shape), np.inf)
    else:
        keys = np.where(frac, np.arange(frac.shape[-1], dtype=float), np.inf)
    order = np.argsort(keys, axis=-1, kind="stable")
    return order[..., 0], order[..., 1]


def _pair_steps(V: np.ndarray, method: str, rng: np.random.Generator, steps: np.ndarray) -> None:
    """Run elementary steps inside each group (last axis) until at most one entry is fractional."""
    trial_axes = tuple(range(1, V.ndim - 1))
    while True:
        frac = (V > 0.0) & (V < 1.0)
        active = frac.sum(axis=-1) >= 2
        if not active.any():
            return
        a, b = _pick_pairs(frac, method, rng)
        u = rng.random(active.shape)
        gamma = np.take_along_axis(V, a[..., None], axis=-1)[..., 0]
        beta = np.take_along_axis(V, b[..., None], axis=-1)[..., 0]
        up = np.minimum(1.0 - gamma, beta)
        down = np.minimum(gamma, 1.0 - beta)
        with np.errstate(invalid="ignore", divide="ignore"):
            p_up = down / (up + down)
        move = np.where(u < p_up, up, -down)
        move = np.where(active, move, 0.0)
        np.put_along_axis(V, a[..., None], (gamma + move)[..., None], axis=-1)
        np.put_along_axis(V, b[..., None], (beta - move)[..., None], axis=-1)
        _snap(V)
        steps += active.sum(axis=trial_axes) if trial_axes else active


def _settle_singletons(V: np.ndarray, rng: np.random.Generator, steps: np.ndarray) -> None:
    frac = (V > 0.0) & (V < 1.0)
    u = rng.random(V.shape)
    if frac.any():
        V[frac] = (u[frac] < V[frac]).astype(float)
        steps += frac.reshape(V.shape[0], -1).sum(axis=1)


def round_batch(
    x, preserve_total_size: bool = False, cfg: RoundingConfig = RoundingConfig(), trials: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Round ``x`` independently ``trials`` times (default ``cfg.trials``).

    Returns the ``(trials, n)`` assignments and the number of elementary
    steps each trial took.
    """
    x = np.asarray(x, dtype=float)
    n, k = x.shape
    check_point(x, n, k)
    trials = cfg.trials if trials is None else trials
    rng = np.random.default_rng(cfg.seed)
    steps = np.zeros(trials, dtype=np.int64)
    if preserve_total_size:
        V = np.broadcast_to(np.clip(x, 0.0, 1.0), (trials, n, k)).copy()
        _snap(V)
        _pair_steps(V, cfg.method, rng, steps)
        flat = V.reshape(trials, n * k)
        _pair_steps(flat, cfg.method, rng, steps)
        _settle_singletons(flat, rng, steps)
        real = flat.reshape(trials, n, k)
    else:
        phantom = np.clip(1.0 - x.sum(axis=1, keepdims=True), 0.0, 1.0)
        V = np.broadcast_to(np.concatenate([phantom, np.clip(x, 0.0, 1.0)], axis=1), (trials, n, k + 1)).copy()
        _snap(V)
        _pair_steps(V, cfg.method, rng, steps)
        _settle_singletons(V, rng, steps)
        real = V[:, :, 1:]
    assigned = real.max(axis=2) >= 1.0
    states = np.where(assigned, real.argmax(axis=2) + 1, 0)
    return states.astype(np.int64), steps


def round(x, preserve_total_size: bool = False, cfg: RoundingConfig = RoundingConfig()) -> OrthantVector:  # noqa: A001
    """Round a fractional point to a single orthant vector."""
    states, _ = round_batch(x, preserve_total_size, cfg, trials=1)
    return tuple(int(a) for a in states[0])


def _default_rounder(method: str) -> Rounder:
    def rounder(x, preserve, rng, trials):
        seed = int(rng.integers(2**63))
        return round_batch(x, preserve, RoundingConfig(method, seed, trials))[0]

    return rounder


def biased_rounder(shrink: float = 0.01) -> Rounder:
    """Deliberately wrong rounder for harness self-tests.

    Rows are sampled independently with every probability multiplied by
    ``shrink``, so marginals are off and the tail checks must flag it.
    """

    def rounder(x, preserve, rng, trials):
        x = np.asarray(x, dtype=float) * shrink
        cum = np.cumsum(x, axis=1)
        u = rng.random((trials, x.shape[0]))
        count = (u[:, :, None] >= cum[None, :, :]).sum(axis=2)
        return np.where(count == x.shape[1], 0, count + 1)

    return rounder


@dataclass
class TailReport:
    kind: str
    trials: int
    seed: int
    reference: float
    mean_value: float
    stderr: float
    deltas: list = field(default_factory=list)
    thresholds: list = field(default_factory=list)
    frequencies: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    passed: list = field(default_factory=list)
    ok: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _binomial_slack(p: float, trials: int) -> float:
    return 3.0 * math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def _draw(x, preserve, cfg: RoundingConfig, rounder: Rounder | None) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    rounder = rounder or _default_rounder(cfg.method)
    return rounder(np.asarray(x, dtype=float), preserve, rng, cfg.trials)


def expectation_check(
    f: KSubFunction,
    x,
    cfg: RoundingConfig,
    preserve_total_size: bool = False,
    rounder: Rounder | None = None,
) -> TailReport:
    """Mean of ``f`` over rounded samples versus the exact extension value.

    Fails when the mean falls below ``F(x)`` by more than three standard errors.
    """
    x = check_point(x, f.n, f.k)
    reference = eval_exact(f, x)
    values = f.evaluate_many(_draw(x, preserve_total_size, cfg, rounder))
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(cfg.trials)) if cfg.trials > 1 else 0.0
    ok = mean >= reference - 3.0 * stderr - 1e-9 * max(1.0, abs(reference))
    return TailReport("expectation", cfg.trials, cfg.seed, reference, mean, stderr, ok=bool(ok))


def chernoff_upper_bound(mu: float, delta: float) -> float:
    """``(e^delta / (1+delta)^(1+delta))^mu``."""
    if delta == 0:
        return 1.0
    return math.exp(mu * (delta - (1.0 + delta) * math.log1p(delta)))


def upper_tail_check(
    a,
    x,
    mu: float,
    delta_grid: Sequence[float],
    cfg: RoundingConfig,
    preserve_total_size: bool = False,
    rounder: Rounder | None = None,
) -> TailReport:
    """Empirical ``Pr[X >= (1+delta) mu]`` for ``X = sum a[i,j] X[i,j]``."""
    a = np.asarray(a, dtype=float)
    x = check_point(x, *a.shape)
    if np.any(a < 0) or np.any(a > 1):
        raise PreconditionError("weights must lie in [0, 1]")
    expected = float((a * x).sum())
    if mu < expected - 1e-9:
        raise PreconditionError(f"mu = {mu} is below E[X] = {expected}")
    states = _draw(x, preserve_total_size, cfg, rounder)
    padded = np.concatenate([np.zeros((a.shape[0], 1)), a], axis=1)
    X = padded[np.arange(a.shape[0]), states].sum(axis=1)
    report = TailReport(
        "upper", cfg.trials, cfg.seed, float(mu), float(X.mean()),
        float(X.std(ddof=1) / math.sqrt(cfg.trials)) if cfg.trials > 1 else 0.0,
    )
    for delta in delta_grid:
        threshold = (1.0 + delta) * mu
        freq = float(np.mean(X >= threshold - 1e-12))
        bound = chernoff_upper_bound(mu, delta)
        passed = freq <= bound + _binomial_slack(bound, cfg.trials)
        report.deltas.append(float(delta))
        report.thresholds.append(threshold)
        report.frequencies.append(freq)
        report.bounds.append(bound)
        report.passed.append(bool(passed))
    report.ok = all(report.passed)
    return report


def lower_tail_check(
    f: KSubFunction,
    x,
    delta_grid: Sequence[float],
    cfg: RoundingConfig,
    preserve_total_size: bool = False,
    rounder: Rounder | None = None,
) -> TailReport:
    """Empirical ``Pr[f(R) <= (1-delta) F(x)]`` against ``exp(-F(x) delta^2 / 8)``.

    Requires a monotone ``f`` whose single-item marginals all lie in ``[0, 1]``.
    """
    x = check_point(x, f.n, f.k)
    mono = validate_monotone(f)
    if not mono.ok:
        raise PreconditionError(f"lower-tail bound needs a monotone function: {mono.describe()}")
    top = max_marginal(f)
    if top > 1.0 + 1e-9:
        raise PreconditionError(
            f"largest marginal gain is {top:g} > 1; rescale the instance first (e.g. zoo.normalized)"
        )
    mu0 = eval_exact(f, x)
    values = f.evaluate_many(_draw(x, preserve_total_size, cfg, rounder))
    report = TailReport(
        "lower", cfg.trials, cfg.seed, mu0, float(values.mean()),
        float(values.std(ddof=1) / math.sqrt(cfg.trials)) if cfg.trials > 1 else 0.0,
    )
    for delta in delta_grid:
        threshold = (1.0 - delta) * mu0
        freq = float(np.mean(values <= threshold + 1e-12))
        bound = math.exp(-mu0 * delta**2 / 8.0)
        passed = delta == 0 or freq <= bound + _binomial_slack(bound, cfg.trials)
        report.deltas.append(float(delta))
        report.thresholds.append(threshold)
        report.frequencies.append(freq)
        report.bounds.append(bound)
        report.passed.append(bool(passed))
    report.ok = all(report.passed)
    return report
