"""Continuous maximization of the multilinear extension.

* :func:`meta_maximize` walks from the origin in steps of ``delta`` along
  directions chosen by a pluggable rule until the constraint boundary.
* :func:`argmax_gradient_rule` puts each item on its best-gradient part.
* :func:`knapsack_greedy` moves one coordinate at a time, picking the best
  gradient-to-cost ratio (monotone functions, knapsack constraint).
* :func:`knapsack_full_pipeline` adds partial enumeration, pruning of
  large-value / large-cost coordinates and randomized rounding.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .core import KSubFunction, OrthantVector, ResidualFunction, singleton_gains
from .errors import ConfigError, DomainError, PreconditionError, RuleContractError
from .extension import EstimatorConfig, eval_exact, eval_sampled, grad_exact, grad_sampled
from .polytope import TOL, ConstraintSet, Knapsack, coordinate_room, integral_feasible, step_limits
from .rounding import RoundingConfig
from .rounding import round as round_point

BOUNDARY = 1e-12

DirectionRule = Callable[[np.ndarray, np.ndarray, ConstraintSet, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class OptimizerConfig:
    delta: float | None = None
    use_sampling: bool = False
    estimator: EstimatorConfig = EstimatorConfig()
    max_iters: int = 100_000
    seed: int = 0

    def step_size(self, n: int, k: int) -> float:
        """Configured ``delta`` or the default ``1 / (4 n k)``."""
        delta = self.delta if self.delta is not None else 1.0 / (4 * max(n, 1) * k)
        if not 0.0 < delta <= 1.0:
            raise ConfigError(f"step size must lie in (0, 1], got {delta}")
        return delta

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "use_sampling": self.use_sampling,
            "estimator": self.estimator.to_dict(),
            "max_iters": self.max_iters,
            "seed": self.seed,
        }


@dataclass
class RunReport:
    algorithm: str
    final_point: np.ndarray
    final_value: float
    iterations: int
    boundary_reason: str
    seed: int
    delta: float
    value_oracle: str = "exact"
    per_iteration: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["final_point"] = np.asarray(self.final_point).tolist()
        return out

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


class _Oracle:
    """Exact or sampled value/gradient access with per-iteration seeds."""

    def __init__(self, f: KSubFunction, cfg: OptimizerConfig, delta: float, constraints: ConstraintSet):
        self.f, self.cfg, self.delta, self.constraints = f, cfg, delta, constraints

    def _est(self, t: int, tag: int) -> EstimatorConfig:
        est = self.cfg.estimator
        return EstimatorConfig(est.samples, derive_seed(self.cfg.seed, t, tag), est.epsilon)

    def value(self, s: np.ndarray, t: int) -> float:
        if self.cfg.use_sampling:
            return eval_sampled(self.f, s, self._est(t, 0))
        return eval_exact(self.f, s)

    def gradient(self, s: np.ndarray, t: int) -> np.ndarray:
        if self.cfg.use_sampling:
            return grad_sampled(self.f, s, self.delta, self._est(t, 1), self.constraints)
        return grad_exact(self.f, s)


def _kahan_add(s: np.ndarray, comp: np.ndarray, increment: np.ndarray) -> None:
    y = increment - comp
    total = s + y
    comp[...] = (total - s) - y
    s[...] = total


def _check_direction(v, n: int, k: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (n, k) or not np.all(np.isfinite(v)):
        raise RuleContractError(f"direction must be a finite {n}x{k} matrix")
    if np.any(v < 0):
        raise RuleContractError("direction has a negative entry")
    rows = v.sum(axis=1)
    if np.any(rows > 1 + TOL):
        raise RuleContractError("direction row sum exceeds 1")
    if np.any((rows > TOL) & (rows < 1 - TOL)):
        raise RuleContractError("active direction rows must sum to exactly 1")
    return v


def _reason(limits: dict[str, float]) -> str:
    binding = min(limits, key=limits.get)
    return "polytope" if binding == "polytope" else "budget"


def argmax_gradient_rule(gradient, state, c: ConstraintSet, rng=None) -> np.ndarray:
    """One-hot row per item on its largest gradient entry (ties: smallest part).

    Zeroed coordinates and unavailable (``nan``) entries are never chosen; a
    row with nothing available stays all-zero.
    """
    g = np.where(np.isnan(gradient), -np.inf, np.asarray(gradient, dtype=float))
    if c.zeroed:
        g[c.zero_mask()] = -np.inf
    v = np.zeros_like(g)
    rows = np.flatnonzero(np.isfinite(g).any(axis=1))
    v[rows, np.argmax(g[rows], axis=1)] = 1.0
    return v


def plugin_direction_rule(distribution_table, mode: str = "all") -> DirectionRule:
    """Direction rule emitting fixed per-part probabilities.

    ``distribution_table`` is a length-``k`` row (shared by every item) or an
    ``(n, k)`` table.  ``mode="all"`` activates every row each iteration;
    ``mode="single"`` activates only the first item whose row still has room.
    """
    table = np.asarray(distribution_table, dtype=float)
    if table.ndim not in (1, 2) or table.size == 0:
        raise ConfigError("distribution table must be a row or a matrix")
    if not np.all(np.isfinite(table)) or np.any(table < 0):
        raise ConfigError("distribution entries must be finite and nonnegative")
    if np.any(np.abs(table.sum(axis=-1) - 1.0) > 1e-9):
        raise ConfigError("each distribution row must sum to 1")
    if mode not in ("all", "single"):
        raise ConfigError(f"unknown plug-in mode {mode!r}")

    def rule(gradient, state, c, rng=None):
        n, k = np.shape(state)
        full = np.broadcast_to(table, (n, k)) if table.ndim == 1 else table
        if full.shape != (n, k):
            raise ConfigError(f"distribution table has shape {full.shape}, expected {(n, k)}")
        if mode == "all":
            return np.array(full, dtype=float)
        v = np.zeros((n, k))
        open_rows = np.flatnonzero(np.asarray(state).sum(axis=1) < 1 - BOUNDARY)
        if open_rows.size:
            v[open_rows[0]] = full[open_rows[0]]
        return v

    rule.__name__ = f"plugin_{mode}"
    return rule


def _require_nonnegative(f: KSubFunction) -> None:
    if f(f.empty()) < 0:
        raise PreconditionError("f(empty) must be nonnegative")


def _check_dims(f: KSubFunction, c: ConstraintSet) -> None:
    if (c.n, c.k) != (f.n, f.k):
        raise DomainError(f"constraint set is {c.n}x{c.k}, function is {f.n}x{f.k}")


def meta_maximize(f: KSubFunction, c: ConstraintSet, rule: DirectionRule, cfg: OptimizerConfig = OptimizerConfig()) -> RunReport:
    """Step ``s <- s + delta * v`` from the origin until the boundary along ``v``.

    The last step is clamped to the boundary when a full ``delta`` step would
    leave the feasible region.
    """
    _check_dims(f, c)
    _require_nonnegative(f)
    n, k = f.n, f.k
    delta = cfg.step_size(n, k)
    unconstrained = c.total_size_cap is None and c.knapsack is None and c.individual_caps is None
    if rule is argmax_gradient_rule and unconstrained and abs(1 / delta - round(1 / delta)) > 1e-9:
        raise ConfigError("unconstrained argmax-gradient runs need a step size dividing 1")
    oracle = _Oracle(f, cfg, delta, c)
    rng = np.random.default_rng(cfg.seed)
    s = np.zeros((n, k))
    comp = np.zeros((n, k))
    value = oracle.value(s, 0)
    records = []
    reason = "max_iters"
    for t in range(cfg.max_iters):
        v = _check_direction(rule(oracle.gradient(s, t), s.copy(), c, rng), n, k)
        if not v.any():
            reason = "polytope"
            break
        limits = step_limits(c, s, v)
        theta = min(limits.values())
        if theta <= BOUNDARY:
            reason = _reason(limits)
            break
        step = min(delta, theta)
        _kahan_add(s, comp, step * v)
        new_value = oracle.value(s, t + 1)
        records.append(
            {
                "t": t,
                "coords": [[int(i), int(j) + 1] for i, j in np.argwhere(v > 0)],
                "step": step,
                "gain": new_value - value,
            }
        )
        value = new_value
    return RunReport(
        algorithm=f"meta:{getattr(rule, '__name__', 'rule')}",
        final_point=s,
        final_value=value,
        iterations=len(records),
        boundary_reason=reason,
        seed=cfg.seed,
        delta=delta,
        value_oracle="sampled" if cfg.use_sampling else "exact",
        per_iteration=records,
        meta={"config": cfg.to_dict()},
    )


def knapsack_greedy(f: KSubFunction, c: ConstraintSet, cfg: OptimizerConfig = OptimizerConfig()) -> RunReport:
    """Coordinate-wise continuous greedy under a knapsack (plus zeroed coordinates).

    Each iteration moves ``delta`` along the single coordinate with the best
    gradient-to-cost ratio among those with room for a full ``delta`` step.
    Once no coordinate has that much room, the best coordinate with any room
    left takes a clamped step, so the budget is used up exactly.
    """
    _check_dims(f, c)
    if c.knapsack is None:
        raise ConfigError("knapsack_greedy needs a knapsack constraint")
    if not f.monotone:
        raise PreconditionError("knapsack_greedy needs a monotone function")
    _require_nonnegative(f)
    n, k = f.n, f.k
    delta = cfg.step_size(n, k)
    oracle = _Oracle(f, cfg, delta, c)
    costs = c.costs
    s = np.zeros((n, k))
    comp = np.zeros((n, k))
    value = oracle.value(s, 0)
    records = []
    reason = "max_iters"
    for t in range(cfg.max_iters):
        room = coordinate_room(c, s)
        movable = room > BOUNDARY
        if not movable.any():
            reason = "budget" if c.budget - float(costs @ s.sum(axis=1)) <= 1e-9 * max(1.0, c.budget) else "polytope"
            break
        full = room >= delta - TOL
        candidates = full if full.any() else movable
        ratio = oracle.gradient(s, t) / costs[:, None]
        ratio = np.where(candidates & ~np.isnan(ratio), ratio, -np.inf)
        flat = int(np.argmax(ratio))
        if not np.isfinite(ratio.flat[flat]):
            reason = "polytope"
            break
        i, j = divmod(flat, k)
        step = min(delta, float(room[i, j]))
        increment = np.zeros((n, k))
        increment[i, j] = step
        _kahan_add(s, comp, increment)
        new_value = oracle.value(s, t + 1)
        records.append({"t": t, "coords": [[i, j + 1]], "step": step, "gain": new_value - value})
        value = new_value
    return RunReport(
        algorithm="knapsack_greedy",
        final_point=s,
        final_value=value,
        iterations=len(records),
        boundary_reason=reason,
        seed=cfg.seed,
        delta=delta,
        value_oracle="sampled" if cfg.use_sampling else "exact",
        per_iteration=records,
        meta={"config": cfg.to_dict()},
    )


@dataclass
class PipelineCandidate:
    """One guessed prefix ``A`` with its reduced fractional solution."""

    fixed: dict
    free_items: tuple
    run: RunReport | None
    zeroed_count: int


def _seed_sets(n: int, k: int, size_cap: int):
    for size in range(size_cap + 1):
        for items in itertools.combinations(range(n), size):
            for parts in itertools.product(range(1, k + 1), repeat=size):
                yield dict(zip(items, parts))


def _vector(n: int, fixed: dict, free_items=(), reduced=()) -> list[int]:
    s = [0] * n
    for i, j in fixed.items():
        s[i] = j
    for i, j in zip(free_items, reduced):
        s[i] = int(j)
    return s


def _enumeration_size(eps: float) -> int:
    # 1 / 0.2**4 evaluates to 624.99...; the slack keeps exact powers exact
    return math.floor(1 / eps**4 + 1e-9)


def _check_eps(eps: float) -> None:
    if not 0.0 < eps < 0.25:
        raise ConfigError(f"eps must satisfy 0 < eps < 1/4, got {eps}")


def pipeline_candidates(
    f: KSubFunction, c: ConstraintSet, eps: float, cfg: OptimizerConfig = OptimizerConfig(), m_cap: int = 2
) -> list[PipelineCandidate]:
    """Enumerate prefixes ``A`` and solve each reduced fractional problem.

    For every knapsack-feasible partial assignment ``A`` of at most
    ``min(m_cap, 1/eps^4)`` items: zero out coordinates whose marginal over
    ``A`` exceeds ``eps^4 f(A)`` or whose item costs more than ``eps^3 B'``
    (``B'`` the budget left after ``A``), then run :func:`knapsack_greedy` on
    ``g(x) = f(x ⊔ A) - f(A)`` with the remaining budget scaled by ``1 - eps``.
    """
    _check_dims(f, c)
    _check_eps(eps)
    if c.knapsack is None:
        raise ConfigError("the knapsack pipeline needs a knapsack constraint")
    if not f.monotone:
        raise PreconditionError("the knapsack pipeline needs a monotone function")
    n, k = f.n, f.k
    size_cap = min(m_cap, _enumeration_size(eps), n)
    costs = c.costs
    out = []
    for fixed in _seed_sets(n, k, size_cap):
        if any((i, j) in c.zeroed for i, j in fixed.items()):
            continue
        if not integral_feasible(c, _vector(n, fixed)):
            continue
        g = ResidualFunction(f, fixed)
        f_a = g.offset
        left = c.budget - sum(costs[i] for i in fixed)
        if g.n == 0:
            out.append(PipelineCandidate(fixed, (), None, 0))
            continue
        gains = singleton_gains(g)
        reduced_costs = costs[list(g.free_items)]
        drop = (gains > eps**4 * f_a) | (reduced_costs[:, None] > eps**3 * left)
        for r, i in enumerate(g.free_items):
            for j in range(1, k + 1):
                if (i, j) in c.zeroed:
                    drop[r, j - 1] = True
        zeroed = frozenset((r, j + 1) for r, j in zip(*np.nonzero(drop)))
        reduced = ConstraintSet(
            g.n, k, knapsack=Knapsack(tuple(reduced_costs), max(left, 0.0)), zeroed=zeroed, scale=1.0 - eps
        )
        run = knapsack_greedy(g, reduced, cfg)
        out.append(PipelineCandidate(fixed, g.free_items, run, len(zeroed)))
    return out


def knapsack_full_pipeline(
    f: KSubFunction,
    c: ConstraintSet,
    eps: float,
    cfg: OptimizerConfig = OptimizerConfig(),
    rounding_cfg: RoundingConfig = RoundingConfig(),
    m_cap: int = 2,
    candidates: list[PipelineCandidate] | None = None,
) -> tuple[OrthantVector, float, RunReport]:
    """Partial enumeration + reduced continuous greedy + rounding, best feasible result.

    ``candidates`` may be passed in (from :func:`pipeline_candidates`) to reuse
    the deterministic fractional stage across rounding seeds.
    """
    _check_eps(eps)
    if candidates is None:
        candidates = pipeline_candidates(f, c, eps, cfg, m_cap)
    n = f.n
    best = None
    feasible = 0
    for idx, cand in enumerate(candidates):
        if cand.run is None:
            rounded: tuple = ()
        else:
            rcfg = RoundingConfig(rounding_cfg.method, derive_seed(rounding_cfg.seed, idx), 1)
            rounded = round_point(cand.run.final_point, False, rcfg)
        s = _vector(n, cand.fixed, cand.free_items, rounded)
        if not integral_feasible(c, s):
            continue
        feasible += 1
        value = f(s)
        if best is None or value > best[1]:
            best = (tuple(s), value, cand)
    if best is None:
        raise PreconditionError("no candidate produced a feasible solution")
    s, value, cand = best
    continuous = f(_vector(n, cand.fixed)) + (cand.run.final_value if cand.run else 0.0)
    run = cand.run or RunReport("knapsack_greedy", np.zeros((0, f.k)), 0.0, 0, "polytope", cfg.seed, cfg.step_size(1, f.k))
    report = RunReport(
        algorithm="knapsack_full",
        final_point=run.final_point,
        final_value=run.final_value,
        iterations=run.iterations,
        boundary_reason=run.boundary_reason,
        seed=cfg.seed,
        delta=run.delta,
        value_oracle=run.value_oracle,
        per_iteration=run.per_iteration,
        meta={
            "eps": eps,
            "m_cap": m_cap,
            "theoretical_enumeration": _enumeration_size(eps),
            "effective_enumeration": min(m_cap, _enumeration_size(eps), n),
            "candidates": len(candidates),
            "feasible_candidates": feasible,
            "seed_set": {str(i): j for i, j in cand.fixed.items()},
            "free_items": list(cand.free_items),
            "zeroed_count": cand.zeroed_count,
            "rounding": rounding_cfg.to_dict(),
            "config": cfg.to_dict(),
            "value": value,
            "continuous_value": continuous,
        },
    )
    return s, value, report
