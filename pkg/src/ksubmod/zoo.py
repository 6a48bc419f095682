"""Generators for small, verified k-submodular test instances.

Every generator validates its output by enumeration before returning it, so
the advertised ``monotone`` flag and k-submodularity are never assumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CoverageFunction,
    KSubFunction,
    TabularFunction,
    all_states,
    max_marginal,
    validate_ksubmodular,
    validate_monotone,
)
from .errors import PreconditionError
from .polytope import Knapsack


@dataclass(frozen=True)
class ZooInstance:
    name: str
    function: KSubFunction
    seed: int | None = None


def random_coverage(
    n: int,
    k: int,
    rng: np.random.Generator,
    universe_size: int | None = None,
    density: float = 0.3,
) -> CoverageFunction:
    """Random coverage function with uniform(0.1, 1] weights.

    Each ``(item, part)`` covers every universe element independently with
    probability ``density``, and at least one element.
    """
    if universe_size is None:
        universe_size = max(4, 2 * n)
    weights = rng.uniform(0.1, 1.0, size=universe_size).round(6)
    covers = {}
    for i in range(n):
        for j in range(1, k + 1):
            hit = np.flatnonzero(rng.random(universe_size) < density)
            if hit.size == 0:
                hit = rng.integers(universe_size, size=1)
            covers[(i, j)] = [int(u) for u in hit]
    f = CoverageFunction(n, k, universe_size, weights, covers, monotone=True)
    _ensure(f, monotone=True)
    return f


def random_facility_location(n: int, k: int, rng: np.random.Generator, customers: int | None = None) -> TabularFunction:
    """``f(S) = sum_u max_{(i, j) assigned} w[u, i, j]`` (0 when nothing assigned)."""
    customers = customers or max(3, n)
    w = rng.uniform(0.0, 1.0, size=(customers, n, k)).round(6)
    padded = np.concatenate([np.zeros((customers, n, 1)), w], axis=2)
    states = all_states(n, k)
    best = np.zeros((states.shape[0], customers))
    for i in range(n):
        best = np.maximum(best, padded[:, i, :][:, states[:, i]].T)
    f = TabularFunction(n, k, best.sum(axis=1), monotone=True)
    _ensure(f, monotone=True)
    return f


def random_modular(n: int, k: int, rng: np.random.Generator) -> TabularFunction:
    """Additive function with nonnegative per-(item, part) gains."""
    gains = np.concatenate([np.zeros((n, 1)), rng.uniform(0.0, 1.0, size=(n, k)).round(6)], axis=1)
    states = all_states(n, k)
    values = gains[np.arange(n), states].sum(axis=1)
    return TabularFunction(n, k, values, monotone=True)


def cut_penalized(base: KSubFunction, penalty: float) -> TabularFunction:
    """``base - penalty * (# pairs of assigned items in different parts)``.

    Raises :class:`PreconditionError` if the sum is not k-submodular or has a
    negative entry; callers retry with a smaller penalty.
    """
    states = all_states(base.n, base.k)
    assigned = states > 0
    m = assigned.sum(axis=1)
    same = sum(
        (states == j).sum(axis=1) * ((states == j).sum(axis=1) - 1) // 2 for j in range(1, base.k + 1)
    )
    cross = m * (m - 1) // 2 - same
    values = base.table() - penalty * cross
    f = TabularFunction(base.n, base.k, values, monotone=False)
    if np.any(values < 0):
        raise PreconditionError("penalized function has negative values")
    report = validate_ksubmodular(f)
    if not report.ok:
        raise PreconditionError(report.describe())
    if validate_monotone(f).ok:
        f.monotone = True
    return f


def random_nonmonotone(n: int, k: int, rng: np.random.Generator, attempts: int = 10) -> TabularFunction:
    """Coverage plus modular gains minus a cut penalty, bisecting the penalty.

    Small penalties keep the function monotone and large ones break pairwise
    monotonicity; the modular term keeps the band in between non-empty, since
    coverage gains alone saturate to zero.  A fresh base is drawn when the
    band is missed.
    """
    if k < 2 or n < 2:
        raise PreconditionError("cut penalties need n >= 2 and k >= 2")
    for _ in range(attempts):
        cover = random_coverage(n, k, rng)
        extra = random_modular(n, k, rng)
        base = TabularFunction(n, k, cover.table() + extra.table(), monotone=True)
        lo, hi = 0.0, max_marginal(base)
        for _ in range(30):
            mid = round((lo + hi) / 2, 6)
            try:
                f = cut_penalized(base, mid)
            except PreconditionError:
                hi = mid
                continue
            if not f.monotone:
                return f
            lo = mid
    raise PreconditionError("could not build a non-monotone k-submodular instance")


def random_knapsack(n: int, rng: np.random.Generator) -> Knapsack:
    """Costs uniform(0.5, 2), budget uniform between the cheapest item and the total cost."""
    costs = rng.uniform(0.5, 2.0, size=n).round(4)
    budget = round(float(rng.uniform(costs.min(), costs.sum())), 4)
    return Knapsack(tuple(float(c) for c in costs), budget)


def normalized(f: KSubFunction) -> TabularFunction:
    """Tabular copy of ``f`` scaled so every single-item marginal lies in ``[0, 1]``."""
    top = max_marginal(f)
    scale = 1.0 / top if top > 0 else 1.0
    return TabularFunction(f.n, f.k, np.asarray(f.table()) * scale, monotone=f.monotone)


def handwritten() -> list[ZooInstance]:
    """Corner cases written out by hand."""
    return [
        ZooInstance("two-part-single", TabularFunction(1, 2, [0.0, 3.0, 1.0], monotone=True)),
        ZooInstance("zero", TabularFunction(2, 2, np.zeros(9), monotone=True)),
        ZooInstance("constant", TabularFunction(2, 3, np.full(16, 2.5), monotone=True)),
        ZooInstance(
            "unit-pair",
            # 1 as soon as anything is assigned
            TabularFunction(2, 2, [0, 1, 1, 1, 1, 1, 1, 1, 1], monotone=True),
        ),
        ZooInstance("submodular-k1", TabularFunction(2, 1, [0.0, 2.0, 1.0, 2.5], monotone=True)),
    ]


FAMILIES = ("coverage", "facility", "modular")


def generate(family: str, n: int, k: int, seed: int) -> KSubFunction:
    rng = np.random.default_rng(seed)
    if family == "coverage":
        return random_coverage(n, k, rng)
    if family == "facility":
        return random_facility_location(n, k, rng)
    if family == "modular":
        return random_modular(n, k, rng)
    if family == "nonmonotone":
        return random_nonmonotone(n, k, rng)
    raise ValueError(f"unknown family {family!r}")


# (n, k) grid of the randomly generated part of the monotone zoo
MONOTONE_SIZES = (
    (2, 2), (3, 1), (3, 2), (3, 3), (4, 2), (4, 3), (5, 2),
    (5, 3), (6, 2), (6, 3), (7, 2), (7, 3), (8, 2), (8, 3),
)


def monotone_zoo(seed: int = 0, include_handwritten: bool = True) -> list[ZooInstance]:
    """The full monotone zoo: ``n <= 8``, ``k <= 3``, every family per size."""
    out = list(handwritten()) if include_handwritten else []
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(MONOTONE_SIZES) * len(FAMILIES))
    it = iter(children)
    for n, k in MONOTONE_SIZES:
        for family in FAMILIES:
            child_seed = int(next(it).generate_state(1)[0])
            out.append(ZooInstance(f"{family}-n{n}-k{k}", generate(family, n, k, child_seed), child_seed))
    return out


def small_zoo(count: int = 50, seed: int = 0, max_n: int = 6, max_k: int = 3) -> list[ZooInstance]:
    """``count`` validated instances with ``n <= max_n``, ``k <= max_k``, mixed families."""
    rng = np.random.default_rng(seed)
    families = FAMILIES + ("nonmonotone",)
    out = []
    while len(out) < count:
        family = families[len(out) % len(families)]
        n = int(rng.integers(1 if family != "nonmonotone" else 2, max_n + 1))
        k = int(rng.integers(1 if family != "nonmonotone" else 2, max_k + 1))
        child = int(rng.integers(2**31))
        try:
            f = generate(family, n, k, child)
        except PreconditionError:
            continue
        out.append(ZooInstance(f"{family}-n{n}-k{k}-{len(out)}", f, child))
    return out


def _ensure(f: KSubFunction, monotone: bool) -> None:
    report = validate_ksubmodular(f)
    if not report.ok:
        raise PreconditionError(f"generated instance is not k-submodular: {report.describe()}")
    if monotone:
        report = validate_monotone(f)
        if not report.ok:
            raise PreconditionError(f"generated instance is not monotone: {report.describe()}")
