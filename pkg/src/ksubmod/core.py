"""k-submodular function representations, validators and the brute-force oracle.

An integral solution (an *orthant vector*) is a length-``n`` sequence over
``{0, 1, ..., k}``: entry ``0`` leaves the item unassigned, entry ``j >= 1``
puts it into part ``S_j``.  States are enumerated item-major in base
``k + 1`` with item 0 as the most significant digit, so flat table order
coincides with lexicographic order of the assignment tuples.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, GuardRefusal, PreconditionError

DEFAULT_GUARD_BITS = 24.0
GUARD_ENV = "KSUB_GUARD_BITS"

OrthantVector = tuple  # tuple[int, ...]


def guard_bits() -> float:
    raw = os.environ.get(GUARD_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_GUARD_BITS
    return float(raw)


def check_guard(n: int, k: int, bits: float | None = None) -> int:
    """Return ``(k+1)**n`` or raise :class:`GuardRefusal` if it is too large."""
    bits = guard_bits() if bits is None else bits
    if n * math.log2(k + 1) > bits + 1e-12:
        raise GuardRefusal(
            f"(k+1)^n = {k + 1}^{n} states exceeds the enumeration guard of "
            f"2^{bits:g} (set {GUARD_ENV} to override)"
        )
    return (k + 1) ** n


def all_states(n: int, k: int) -> np.ndarray:
    """All ``(k+1)**n`` assignments as an ``(M, n)`` array, lexicographic order."""
    check_guard(n, k)
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((k + 1,) * n, dtype=np.int64)
    return grids.reshape(n, -1).T.copy()


def state_index(states: np.ndarray, k: int) -> np.ndarray:
    """Flat table index of each row of ``states`` (or of a single state)."""
    states = np.asarray(states, dtype=np.int64)
    n = states.shape[-1]
    powers = (k + 1) ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return states @ powers


def as_orthant(assignment: Iterable[int], n: int, k: int) -> OrthantVector:
    s = tuple(int(a) for a in assignment)
    if len(s) != n:
        raise DomainError(f"orthant vector has length {len(s)}, expected {n}")
    for a in s:
        if a < 0 or a > k:
            raise DomainError(f"assignment entry {a} outside 0..{k}")
    return s


class KSubFunction:
    """Evaluation oracle ``f : (k+1)^V -> R``.

    Subclasses implement :meth:`evaluate_many`.  Instances are treated as
    immutable; the dense table is computed lazily and cached.
    """

    kind = "abstract"

    def __init__(self, n: int, k: int, monotone: bool = False):
        if n < 0 or k < 1:
            raise DomainError(f"need n >= 0 and k >= 1, got n={n}, k={k}")
        self.n = int(n)
        self.k = int(k)
        self.monotone = bool(monotone)
        self._table: np.ndarray | None = None
        self._max_singleton_gain: float | None = None

    def evaluate_many(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, assignment: Sequence[int]) -> float:
        s = as_orthant(assignment, self.n, self.k)
        return float(self.evaluate_many(np.asarray([s], dtype=np.int64).reshape(1, self.n))[0])

    def table(self) -> np.ndarray:
        """Values at every state, flat, in :func:`all_states` order (guarded)."""
        if self._table is None:
            values = np.asarray(self.evaluate_many(all_states(self.n, self.k)), dtype=float)
            values.setflags(write=False)
            self._table = values
        return self._table

    def tensor(self) -> np.ndarray:
        return self.table().reshape((self.k + 1,) * self.n)

    @property
    def max_singleton_gain(self) -> float:
        """``max_{i,j}`` of the marginal gain of ``i -> j`` at the empty solution."""
        if self._max_singleton_gain is None:
            self._max_singleton_gain = float(singleton_gains(self).max(initial=0.0))
        return self._max_singleton_gain

    def empty(self) -> OrthantVector:
        return (0,) * self.n


class TabularFunction(KSubFunction):
    """Dense table over all ``(k+1)**n`` states in base-``(k+1)`` index order."""

    kind = "tabular"

    def __init__(self, n: int, k: int, table: Sequence[float], monotone: bool = False):
        super().__init__(n, k, monotone)
        size = check_guard(n, k)
        values = np.array(table, dtype=float).reshape(-1)
        if values.size != size:
            raise DomainError(f"table has {values.size} entries, expected (k+1)^n = {size}")
        values.setflags(write=False)
        self._table = values

    def evaluate_many(self, states: np.ndarray) -> np.ndarray:
        return self._table[state_index(states, self.k)]


class CoverageFunction(KSubFunction):
    """Weighted coverage: ``f(S) = sum of weights of universe elements covered``.

    ``covers`` maps ``(item, part)`` (part 1-based) to an iterable of universe
    indices.  Monotone and k-submodular for nonnegative weights.
    """

    kind = "coverage"

    def __init__(
        self,
        n: int,
        k: int,
        universe_size: int,
        weights: Sequence[float],
        covers: Mapping[tuple[int, int], Iterable[int]],
        monotone: bool = True,
    ):
        super().__init__(n, k, monotone)
        self.universe_size = int(universe_size)
        w = np.array(weights, dtype=float)
        if w.shape != (self.universe_size,):
            raise DomainError("weights must have one entry per universe element")
        if np.any(w < 0):
            raise DomainError("coverage weights must be nonnegative")
        w.setflags(write=False)
        self.weights = w
        mask = np.zeros((n, k + 1, self.universe_size), dtype=bool)
        normalized: dict[tuple[int, int], tuple[int, ...]] = {}
        for (item, part), covered in covers.items():
            if not (0 <= item < n and 1 <= part <= k):
                raise DomainError(f"cover key ({item}, {part}) outside [n] x [k]")
            idx = tuple(sorted({int(u) for u in covered}))
            if idx and (idx[0] < 0 or idx[-1] >= self.universe_size):
                raise DomainError(f"cover of ({item}, {part}) references unknown element")
            normalized[(int(item), int(part))] = idx
            mask[item, part, list(idx)] = True
        mask.setflags(write=False)
        self.covers = dict(sorted(normalized.items()))
        self._mask = mask

    def evaluate_many(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        covered = np.zeros((states.shape[0], self.universe_size), dtype=bool)
        for i in range(self.n):
            covered |= self._mask[i, states[:, i]]
        # row-wise reduction: same summation order for any batch size
        return np.where(covered, self.weights, 0.0).sum(axis=1)


class ResidualFunction(KSubFunction):
    """``g(s) = f(s ⊔ A) - f(A)`` on the items not fixed by the partial solution ``A``."""

    kind = "residual"

    def __init__(self, base: KSubFunction, fixed: Mapping[int, int]):
        self.base = base
        self.fixed = {int(i): int(j) for i, j in sorted(fixed.items()) if j != 0}
        self.free_items = tuple(i for i in range(base.n) if i not in self.fixed)
        super().__init__(len(self.free_items), base.k, base.monotone)
        anchor = np.zeros(base.n, dtype=np.int64)
        for i, j in self.fixed.items():
            anchor[i] = j
        self._anchor = anchor
        self.offset = float(base.evaluate_many(anchor.reshape(1, -1))[0])

    def embed(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64).reshape(-1, self.n)
        full = np.tile(self._anchor, (states.shape[0], 1))
        full[:, list(self.free_items)] = states
        return full

    def evaluate_many(self, states: np.ndarray) -> np.ndarray:
        return self.base.evaluate_many(self.embed(states)) - self.offset


def singleton_gains(f: KSubFunction) -> np.ndarray:
    """``(n, k)`` matrix of marginal gains at the empty solution."""
    n, k = f.n, f.k
    states = np.zeros((n * k + 1, n), dtype=np.int64)
    for i in range(n):
        for j in range(1, k + 1):
            states[1 + i * k + (j - 1), i] = j
    values = f.evaluate_many(states)
    return (values[1:] - values[0]).reshape(n, k)


def marginal_gain(f: KSubFunction, x: Sequence[int], item: int, part: int) -> float:
    """``f(x with item -> part) - f(x)``; ``item`` must be unassigned in ``x``."""
    s = list(as_orthant(x, f.n, f.k))
    if not 0 <= item < f.n:
        raise DomainError(f"item {item} outside 0..{f.n - 1}")
    if not 1 <= part <= f.k:
        raise PreconditionError(f"part {part} outside 1..{f.k}")
    if s[item] != 0:
        raise PreconditionError(f"item {item} is already assigned to part {s[item]}")
    t = list(s)
    t[item] = part
    values = f.evaluate_many(np.asarray([s, t], dtype=np.int64))
    return float(values[1] - values[0])


def marginal_tensor(f: KSubFunction) -> np.ndarray:
    """Gains ``Δ_{e,i} f(x)`` for all ``e``, ``i`` and states ``x`` with ``e`` unassigned.

    Shape ``(n, k) + (k+1,)*(n-1)``; the trailing axes index the other items.
    """
    T = f.tensor()
    n, k = f.n, f.k
    out = np.empty((n, k) + (k + 1,) * (n - 1))
    for e in range(n):
        base = np.take(T, 0, axis=e)
        for i in range(1, k + 1):
            out[e, i - 1] = np.take(T, i, axis=e) - base
    return out


def max_marginal(f: KSubFunction) -> float:
    """Largest single-item marginal gain over every state (guarded)."""
    if f.n == 0:
        return 0.0
    return float(marginal_tensor(f).max())


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    check: str = "ok"
    witness: dict | None = field(default=None)

    def __bool__(self) -> bool:
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "ok"
        parts = ", ".join(f"{key}={value}" for key, value in (self.witness or {}).items())
        return f"violation of {self.check}: {parts}"


def _first_true(mask: np.ndarray) -> tuple[int, ...] | None:
    if mask.ndim == 0:
        return () if bool(mask) else None
    hits = np.argwhere(mask)
    return tuple(int(v) for v in hits[0]) if hits.size else None


def _other_state(n: int, k: int, e: int, flat_idx: tuple[int, ...]) -> list[int]:
    s = list(flat_idx)
    s.insert(e, 0)
    return s


def _tolerance(f: KSubFunction, tol: float | None) -> float:
    if tol is not None:
        return tol
    return 1e-9 * max(1.0, float(np.abs(f.table()).max(initial=0.0)))


def validate_ksubmodular(f: KSubFunction, tol: float | None = None) -> ValidationReport:
    """Check orthant submodularity and pairwise monotonicity by enumeration.

    Together the two conditions characterize k-submodularity.  Orthant
    submodularity is checked on covering pairs ``x < y`` (``y`` assigns one
    more item), which implies it for all comparable pairs.
    """
    check_guard(f.n, f.k)
    if f.n == 0:
        return ValidationReport(True)
    tol = _tolerance(f, tol)
    n, k = f.n, f.k
    gains = marginal_tensor(f)

    for e in range(n):
        for i in range(k):
            for j in range(i + 1, k):
                total = gains[e, i] + gains[e, j]
                bad = _first_true(total < -tol)
                if bad is not None:
                    x = _other_state(n, k, e, bad)
                    return ValidationReport(
                        False,
                        "pairwise_monotonicity",
                        {
                            "state": x,
                            "item": e,
                            "parts": [i + 1, j + 1],
                            "gains": [float(gains[e, i][bad]), float(gains[e, j][bad])],
                        },
                    )

    for e in range(n):
        for i in range(k):
            g = gains[e, i]
            for pos in range(n - 1):
                other = pos if pos < e else pos + 1
                at_x = np.take(g, 0, axis=pos)
                for p in range(1, k + 1):
                    drop = at_x - np.take(g, p, axis=pos)
                    bad = _first_true(drop < -tol)
                    if bad is not None:
                        rest = list(bad)
                        rest.insert(pos, 0)
                        x = _other_state(n, k, e, tuple(rest))
                        y = list(x)
                        y[other] = p
                        return ValidationReport(
                            False,
                            "orthant_submodularity",
                            {
                                "x": x,
                                "y": y,
                                "item": e,
                                "part": i + 1,
                                "gain_x": float(at_x[bad]),
                                "gain_y": float(np.take(g, p, axis=pos)[bad]),
                            },
                        )
    return ValidationReport(True)


def validate_monotone(f: KSubFunction, tol: float | None = None) -> ValidationReport:
    """``ok`` iff every single-item marginal gain is nonnegative at every state."""
    check_guard(f.n, f.k)
    if f.n == 0:
        return ValidationReport(True)
    tol = _tolerance(f, tol)
    gains = marginal_tensor(f)
    bad = np.argwhere(gains < -tol)
    if bad.size:
        e, i, *rest = (int(v) for v in bad[0])
        return ValidationReport(
            False,
            "monotonicity",
            {
                "state": _other_state(f.n, f.k, e, tuple(rest)),
                "item": e,
                "part": i + 1,
                "gain": float(gains[(e, i, *rest)]),
            },
        )
    return ValidationReport(True)


def brute_force_max(f: KSubFunction, constraints=None) -> tuple[OrthantVector, float]:
    """Exact maximizer over all feasible orthant vectors.

    Ties go to the lexicographically smallest assignment.  ``constraints`` is
    an optional :class:`ksubmod.polytope.ConstraintSet`.
    """
    from .polytope import integral_feasible_many

    states = all_states(f.n, f.k)
    values = f.table()
    if constraints is not None:
        feasible = integral_feasible_many(constraints, states)
        if not feasible.any():
            raise PreconditionError("no feasible orthant vector")
        masked = np.where(feasible, values, -np.inf)
    else:
        masked = values
    best = int(np.argmax(masked))
    return tuple(int(a) for a in states[best]), float(values[best])
