"""Feasible regions over fractional points ``x in [0, 1]^{n x k}``.

The base region is the partition-matroid polytope (row sums at most one).
A :class:`ConstraintSet` layers optional restrictions on top of it: a total
size cap, per-part size caps, a knapsack, zeroed coordinates and a scale
factor applied to every cap and budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

TOL = 1e-9


@dataclass(frozen=True)
class Knapsack:
    costs: tuple[float, ...]
    budget: float

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))
        object.__setattr__(self, "budget", float(self.budget))
        if any(c <= 0 for c in self.costs):
            raise DomainError("knapsack costs must be strictly positive")


@dataclass(frozen=True)
class ConstraintSet:
    n: int
    k: int
    total_size_cap: float | None = None
    knapsack: Knapsack | None = None
    zeroed: frozenset = field(default_factory=frozenset)
    scale: float = 1.0
    individual_caps: tuple[float, ...] | None = None

    def __post_init__(self):
        if isinstance(self.knapsack, dict):
            object.__setattr__(self, "knapsack", Knapsack(**self.knapsack))
        elif isinstance(self.knapsack, (tuple, list)):
            object.__setattr__(self, "knapsack", Knapsack(*self.knapsack))
        object.__setattr__(self, "zeroed", frozenset((int(i), int(j)) for i, j in self.zeroed))
        if not 0.0 < self.scale <= 1.0:
            raise DomainError(f"scale must lie in (0, 1], got {self.scale}")
        for i, j in self.zeroed:
            if not (0 <= i < self.n and 1 <= j <= self.k):
                raise DomainError(f"zeroed pair ({i}, {j}) outside [n] x [k]")
        if self.knapsack is not None and len(self.knapsack.costs) != self.n:
            raise DomainError("knapsack needs one cost per item")
        if self.individual_caps is not None:
            caps = tuple(float(b) for b in self.individual_caps)
            if len(caps) != self.k:
                raise DomainError("individual caps need one entry per part")
            object.__setattr__(self, "individual_caps", caps)

    @classmethod
    def unconstrained(cls, n: int, k: int) -> "ConstraintSet":
        return cls(n, k)

    @property
    def costs(self) -> np.ndarray:
        return np.asarray(self.knapsack.costs) if self.knapsack else np.zeros(self.n)

    @property
    def budget(self) -> float | None:
        return None if self.knapsack is None else self.scale * self.knapsack.budget

    @property
    def size_cap(self) -> float | None:
        return None if self.total_size_cap is None else self.scale * self.total_size_cap

    def zero_mask(self) -> np.ndarray:
        """Boolean ``(n, k)`` mask of the zeroed coordinates (column ``j-1`` is part ``j``)."""
        mask = np.zeros((self.n, self.k), dtype=bool)
        for i, j in self.zeroed:
            mask[i, j - 1] = True
        return mask

    def replace(self, **changes) -> "ConstraintSet":
        data = {
            "n": self.n,
            "k": self.k,
            "total_size_cap": self.total_size_cap,
            "knapsack": self.knapsack,
            "zeroed": self.zeroed,
            "scale": self.scale,
            "individual_caps": self.individual_caps,
        }
        data.update(changes)
        return ConstraintSet(**data)

    def to_dict(self) -> dict:
        out: dict = {}
        if self.total_size_cap is not None:
            out["total_size"] = self.total_size_cap
        if self.individual_caps is not None:
            out["individual"] = list(self.individual_caps)
        if self.knapsack is not None:
            out["knapsack"] = {"costs": list(self.knapsack.costs), "budget": self.knapsack.budget}
        if self.zeroed:
            out["zeroed"] = [[i, j] for i, j in sorted(self.zeroed)]
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out

    @classmethod
    def from_dict(cls, n: int, k: int, data: dict | None) -> "ConstraintSet":
        data = data or {}
        unknown = set(data) - {"total_size", "individual", "knapsack", "zeroed", "scale"}
        if unknown:
            raise DomainError(f"unknown constraint fields {sorted(unknown)}")
        knap = data.get("knapsack")
        return cls(
            n,
            k,
            total_size_cap=data.get("total_size"),
            knapsack=None if knap is None else Knapsack(knap["costs"], knap["budget"]),
            zeroed=frozenset(tuple(p) for p in data.get("zeroed", [])),
            scale=data.get("scale", 1.0),
            individual_caps=data.get("individual"),
        )


def _check_shape(c: ConstraintSet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (c.n, c.k):
        raise DomainError(f"point has shape {x.shape}, expected {(c.n, c.k)}")
    return x


def is_feasible(c: ConstraintSet, x, tol: float = TOL) -> bool:
    x = _check_shape(c, x)
    if np.any(x < -tol) or np.any(x > 1 + tol):
        return False
    if np.any(x.sum(axis=1) > 1 + tol):
        return False
    if c.size_cap is not None and x.sum() > c.size_cap + tol:
        return False
    if c.individual_caps is not None:
        caps = c.scale * np.asarray(c.individual_caps)
        if np.any(x.sum(axis=0) > caps + tol):
            return False
    if c.knapsack is not None and float(c.costs @ x.sum(axis=1)) > c.budget + tol:
        return False
    if c.zeroed and np.any(x[c.zero_mask()] > tol):
        return False
    return True


def step_limits(c: ConstraintSet, x, v) -> dict[str, float]:
    """Largest feasible step along ``v`` for each active constraint family.

    Keys are ``"polytope"`` (row sums, cube, zeroed coordinates), and when
    present ``"total_size"``, ``"individual"`` and ``"budget"``.
    """
    x = _check_shape(c, x)
    v = _check_shape(c, v)
    if np.any(v < 0):
        raise DomainError("direction must be entrywise nonnegative")
    limits: dict[str, float] = {}

    rows_v = v.sum(axis=1)
    active = rows_v > 0
    theta = np.inf
    if active.any():
        room = 1.0 - x.sum(axis=1)
        theta = float(np.min(room[active] / rows_v[active]))
    coord = v > 0
    if coord.any():
        theta = min(theta, float(np.min((1.0 - x[coord]) / v[coord])))
    if c.zeroed and np.any(v[c.zero_mask()] > 0):
        theta = 0.0
    limits["polytope"] = max(theta, 0.0)

    total_v = float(v.sum())
    if c.size_cap is not None:
        limits["total_size"] = max((c.size_cap - float(x.sum())) / total_v, 0.0) if total_v > 0 else np.inf
    if c.individual_caps is not None:
        cols_v = v.sum(axis=0)
        caps = c.scale * np.asarray(c.individual_caps)
        used = cols_v > 0
        limits["individual"] = (
            max(float(np.min((caps[used] - x.sum(axis=0)[used]) / cols_v[used])), 0.0) if used.any() else np.inf
        )
    if c.knapsack is not None:
        spend = float(c.costs @ rows_v)
        left = c.budget - float(c.costs @ x.sum(axis=1))
        limits["budget"] = max(left / spend, 0.0) if spend > 0 else np.inf
    return limits


def max_step(c: ConstraintSet, x, v) -> float:
    """Largest ``theta >= 0`` with ``x + theta * v`` feasible (``inf`` if ``v = 0``)."""
    return min(step_limits(c, x, v).values())


def coordinate_room(c: ConstraintSet, x) -> np.ndarray:
    """``(n, k)`` array: :func:`max_step` along each unit direction ``e_{i,j}``."""
    x = _check_shape(c, x)
    rows = x.sum(axis=1)
    room = np.minimum((1.0 - rows)[:, None], 1.0 - x)
    if c.size_cap is not None:
        room = np.minimum(room, c.size_cap - float(x.sum()))
    if c.individual_caps is not None:
        caps = c.scale * np.asarray(c.individual_caps)
        room = np.minimum(room, (caps - x.sum(axis=0))[None, :])
    if c.knapsack is not None:
        left = c.budget - float(c.costs @ rows)
        room = np.minimum(room, (left / c.costs)[:, None])
    if c.zeroed:
        room[c.zero_mask()] = 0.0
    return np.maximum(room, 0.0)


def one_hot(s: Sequence[int], k: int) -> np.ndarray:
    """Fractional point of an orthant vector."""
    s = np.asarray(s, dtype=np.int64)
    x = np.zeros((s.size, k))
    rows = np.flatnonzero(s > 0)
    x[rows, s[rows] - 1] = 1.0
    return x


def integral_feasible_many(c: ConstraintSet, states: np.ndarray) -> np.ndarray:
    """Vectorized :func:`integral_feasible` over the rows of ``states``."""
    states = np.asarray(states, dtype=np.int64)
    if states.ndim != 2 or states.shape[1] != c.n:
        raise DomainError(f"states must have {c.n} columns")
    ok = np.ones(states.shape[0], dtype=bool)
    assigned = states > 0
    if c.size_cap is not None:
        ok &= assigned.sum(axis=1) <= c.size_cap + TOL
    if c.individual_caps is not None:
        for j, cap in enumerate(c.individual_caps, start=1):
            ok &= (states == j).sum(axis=1) <= c.scale * cap + TOL
    if c.knapsack is not None:
        ok &= assigned.astype(float) @ c.costs <= c.budget + TOL
    for i, j in c.zeroed:
        ok &= states[:, i] != j
    return ok


def integral_feasible(c: ConstraintSet, s: Iterable[int]) -> bool:
    s = np.asarray(list(s), dtype=np.int64)
    if s.shape != (c.n,):
        raise DomainError(f"orthant vector must have length {c.n}")
    return bool(integral_feasible_many(c, s.reshape(1, -1))[0])
