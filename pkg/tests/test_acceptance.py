"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every criterion is a function returning an :class:`Outcome` whose ``body`` is
a JSON-serialisable record of the run without timings; the determinism
criterion re-executes the others and compares those bodies byte for byte.

Run alone with ``pytest tests/test_acceptance.py -v`` (lines appear in the
terminal summary) or ``python tests/test_acceptance.py``.
"""

import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import random_points  # noqa: E402
from ksubmod import zoo  # noqa: E402
from ksubmod.core import all_states, brute_force_max, validate_ksubmodular  # noqa: E402
from ksubmod.extension import (  # noqa: E402
    EstimatorConfig,
    eval_exact,
    eval_exact_batch,
    eval_sampled,
    grad_exact_batch,
    hessian_exact_batch,
)
from ksubmod.optimize import (  # noqa: E402
    OptimizerConfig,
    argmax_gradient_rule,
    derive_seed,
    knapsack_full_pipeline,
    knapsack_greedy,
    meta_maximize,
    pipeline_candidates,
)
from ksubmod.polytope import ConstraintSet, one_hot  # noqa: E402
from ksubmod.rounding import RoundingConfig, lower_tail_check, round_batch, upper_tail_check  # noqa: E402
from ksubmod.rounding import round as round_point  # noqa: E402

TOL = 1e-9
TRIALS = 10_000
METHODS = ("pipage", "swap")

LINES: list[str] = []


@dataclass
class Outcome:
    ok: bool
    summary: str
    body: dict = field(default_factory=dict)
    seconds: float = 0.0


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    out.seconds = time.perf_counter() - start
    return out


def _report(number: int, title: str, out: Outcome, budget: float | None) -> None:
    in_time = budget is None or out.seconds < budget
    verdict = "PASS" if out.ok and in_time else "FAIL"
    limit = f" / {budget:g} s" if budget is not None else ""
    line = f"{verdict} [{number}] {title}: {out.summary} ({out.seconds:.1f} s{limit})"
    LINES.append(line)
    print(line)


def _body_text(out: Outcome) -> str:
    return json.dumps(out.body, sort_keys=True)


# --- shared instance sets ----------------------------------------------------

_CACHE: dict = {}


def small() -> list:
    if "small" not in _CACHE:
        _CACHE["small"] = zoo.small_zoo(50, seed=0)
    return _CACHE["small"]


def monotone() -> list:
    if "monotone" not in _CACHE:
        _CACHE["monotone"] = zoo.monotone_zoo(seed=0)
    return _CACHE["monotone"]


def _ratio(value: float, opt: float) -> float:
    if opt <= 0:
        return 1.0 if value >= opt - TOL else 0.0
    return value / opt


# --- criteria ----------------------------------------------------------------


def criterion_1() -> Outcome:
    """Extension agrees with ``f`` at every vertex of the 50-instance zoo."""
    worst, rows, invalid = 0.0, [], []
    for inst in small():
        f = inst.function
        if not validate_ksubmodular(f).ok:
            invalid.append(inst.name)
        X = np.stack([one_hot(s, f.k) for s in all_states(f.n, f.k)])
        err = float(np.abs(eval_exact_batch(f, X) - f.table()).max())
        worst = max(worst, err)
        rows.append([inst.name, err])
    ok = worst <= 1e-12 and not invalid and len(rows) == 50
    return Outcome(ok, f"max |F - f| = {worst:.1e} over {len(rows)} instances", {"errors": rows, "invalid": invalid})


def _property_violations(f, rng, m: int = 1000) -> dict:
    n, k = f.n, f.k
    X = random_points(rng, m, n, k)
    idx = np.arange(m)
    counts = {}

    # affine in each coordinate: midpoint of two values on a random coordinate line
    i, j = rng.integers(n, size=m), rng.integers(k, size=m)
    top = 1.0 - (X[idx, i].sum(axis=1) - X[idx, i, j])
    a, b = rng.uniform(0, top), rng.uniform(0, top)
    pts = []
    for v in (a, b, (a + b) / 2):
        Y = X.copy()
        Y[idx, i, j] = v
        pts.append(eval_exact_batch(f, Y))
    counts["multilinearity"] = int((np.abs(pts[2] - (pts[0] + pts[1]) / 2) > TOL).sum())

    H = hessian_exact_batch(f, X)
    same = np.zeros((n, k, n, k), dtype=bool)
    for r in range(n):
        same[r, :, r, :] = True
    counts["hessian_same_item"] = int((np.abs(H[:, same]) > TOL).sum())
    counts["hessian_sign"] = int((H[:, ~same] > TOL).sum())

    G = grad_exact_batch(f, X)
    pair = 0
    for j1 in range(k):
        for j2 in range(j1 + 1, k):
            pair += int((G[:, :, j1] + G[:, :, j2] < -TOL).sum())
    counts["pairwise_gradient"] = pair
    counts["gradient_nonnegative"] = int((G < -TOL).sum()) if f.monotone else 0

    # nonnegative directions: concave midpoint and antitone gradient
    room = 1.0 - X.sum(axis=2)
    D = rng.dirichlet(np.ones(k), size=(m, n)) * (room * rng.random((m, n)))[:, :, None]
    F0, Fh, F1 = eval_exact_batch(f, X), eval_exact_batch(f, X + D / 2), eval_exact_batch(f, X + D)
    counts["concave_nonnegative"] = int((Fh < (F0 + F1) / 2 - TOL).sum())
    counts["gradient_antitone"] = int((G < grad_exact_batch(f, X + D) - TOL).sum())

    # exchange directions e_(i1,j1) - e_(i2,j2) with i1 != i2: convex midpoint
    if n >= 2:
        i1 = rng.integers(n, size=m)
        i2 = (i1 + rng.integers(1, n, size=m)) % n
        j1, j2 = rng.integers(k, size=m), rng.integers(k, size=m)
        t = np.minimum(1.0 - X[idx, i1].sum(axis=1), X[idx, i2, j2])
        Y = X.copy()
        Y[idx, i1, j1] += t
        Y[idx, i2, j2] -= t
        Y = np.clip(Y, 0.0, 1.0)
        E0, Eh, E1 = eval_exact_batch(f, X), eval_exact_batch(f, (X + Y) / 2), eval_exact_batch(f, Y)
        counts["convex_exchange"] = int((Eh > (E0 + E1) / 2 + TOL).sum())
    else:
        counts["convex_exchange"] = 0
    return counts


def criterion_2() -> Outcome:
    """Curvature and gradient properties at 1000 random points per instance."""
    totals: dict[str, int] = {}
    rows = []
    for index, inst in enumerate(small()):
        counts = _property_violations(inst.function, np.random.default_rng(derive_seed(2, index)))
        rows.append([inst.name, counts])
        for key, value in counts.items():
            totals[key] = totals.get(key, 0) + value
    bad = sum(totals.values())
    return Outcome(bad == 0, f"{bad} violations over {len(rows)} x 1000 points", {"totals": totals, "instances": rows})


def criterion_3() -> Outcome:
    """Gradient equals the one-sided difference quotient at 100 points per instance."""
    worst, checked, skipped = 0.0, 0, 0
    for index, inst in enumerate(small()):
        f = inst.function
        n, k = f.n, f.k
        rng = np.random.default_rng(derive_seed(3, index))
        X = random_points(rng, 100, n, k)
        G = grad_exact_batch(f, X)
        base = eval_exact_batch(f, X)
        probes, quotients = [], []
        for m, x in enumerate(X):
            room = 1.0 - x.sum(axis=1)
            for i in range(n):
                for j in range(k):
                    if room[i] >= 1e-3:
                        h = rng.uniform(1e-3, room[i])
                    elif x[i, j] >= 1e-3:
                        h = -rng.uniform(1e-3, x[i, j])
                    else:
                        skipped += 1
                        continue
                    y = x.copy()
                    y[i, j] += h
                    probes.append(y)
                    quotients.append((m, i, j, h))
        values = eval_exact_batch(f, np.stack(probes))
        for value, (m, i, j, h) in zip(values, quotients):
            worst = max(worst, abs((value - base[m]) / h - G[m, i, j]))
        checked += len(quotients)
    return Outcome(
        worst <= TOL,
        f"max |quotient - gradient| = {worst:.1e} over {checked} coordinates ({skipped} without room)",
        {"worst": worst, "checked": checked, "skipped": skipped},
    )


def criterion_4() -> Outcome:
    """Argmax-gradient greedy at delta = 1/16, rounded, against the brute-force optimum."""
    rows, failures = [], []
    for inst in monotone():
        f = inst.function
        opt = brute_force_max(f)[1]
        run = meta_maximize(f, ConstraintSet(f.n, f.k), argmax_gradient_rule, OptimizerConfig(delta=1 / 16, seed=0))
        first = f(round_point(run.final_point, False, RoundingConfig(seed=0)))
        values = np.array([f(round_point(run.final_point, False, RoundingConfig(seed=s))) for s in range(20)])
        stderr = float(values.std(ddof=1) / math.sqrt(len(values)))
        mean = float(values.mean())
        ratio_ok = first >= 0.45 * opt - TOL
        mean_ok = mean >= run.final_value - 3 * stderr - TOL
        if not (ratio_ok and mean_ok):
            failures.append(inst.name)
        rows.append([inst.name, opt, run.final_value, first, mean, stderr, run.iterations, run.boundary_reason])
    worst = min(_ratio(r[3], r[1]) for r in rows)
    return Outcome(
        not failures,
        f"worst f(rounded)/OPT = {worst:.3f} over {len(rows)} instances, {len(failures)} failing",
        {"rows": rows, "failures": failures},
    )


def _knapsack_instance(index: int, f):
    kn = zoo.random_knapsack(f.n, np.random.default_rng(derive_seed(5, index)))
    return ConstraintSet(f.n, f.k, knapsack=kn)


def criterion_5() -> Outcome:
    """Knapsack greedy value against the integral brute-force optimum under random budgets."""
    rows, failures = [], []
    for index, inst in enumerate(monotone()):
        f = inst.function
        c = _knapsack_instance(index, f)
        opt = brute_force_max(f, c)[1]
        run = knapsack_greedy(f, c)
        ratio = _ratio(run.final_value, opt)
        if ratio < 0.45:
            failures.append(inst.name)
        rows.append([inst.name, c.budget, opt, run.final_value, ratio, run.iterations, run.boundary_reason])
    worst = min(r[4] for r in rows)
    return Outcome(
        not failures,
        f"worst F/OPT = {worst:.3f} over {len(rows)} instances, {len(failures)} failing",
        {"rows": rows, "failures": failures},
    )


PIPELINE_INSTANCES = 10
PIPELINE_SEEDS = 50


def criterion_6() -> Outcome:
    """Full knapsack pipeline on coverage instances, 50 rounding seeds each."""
    eps, m_cap = 0.2, 2
    rows, failures = [], []
    for index in range(PIPELINE_INSTANCES):
        rng = np.random.default_rng(derive_seed(6, index))
        f = zoo.random_coverage(6, 2, rng)
        c = ConstraintSet(6, 2, knapsack=zoo.random_knapsack(6, rng))
        opt = brute_force_max(f, c)[1]
        candidates = pipeline_candidates(f, c, eps, OptimizerConfig(), m_cap)
        ratios = []
        for seed in range(PIPELINE_SEEDS):
            _, value, _ = knapsack_full_pipeline(
                f, c, eps, OptimizerConfig(), RoundingConfig(seed=seed), m_cap, candidates=candidates
            )
            ratios.append(_ratio(value, opt))
        best = max(ratios)
        success = sum(r >= 0.5 - 2 * eps for r in ratios) / len(ratios)
        if best < 0.45 or success < 0.9:
            failures.append(index)
        rows.append([index, opt, best, success, min(ratios)])
    worst_best = min(r[2] for r in rows)
    worst_success = min(r[3] for r in rows)
    return Outcome(
        not failures,
        f"worst best-of-seeds ratio {worst_best:.3f}, worst per-seed success {worst_success:.0%}",
        {"rows": rows, "failures": failures},
    )


CONCENTRATION_INSTANCES = 50


def criterion_7() -> Outcome:
    """Sampled extension within 0.1 max|f| of the exact value in at least 95% of 1000 seeds."""
    eps = 0.1
    samples = EstimatorConfig.for_accuracy(eps).samples
    rows, failures = [], []
    chosen = small()[:: len(small()) // CONCENTRATION_INSTANCES]
    for index, inst in enumerate(chosen):
        f = inst.function
        x = random_points(np.random.default_rng(derive_seed(7, index)), 1, f.n, f.k)[0]
        exact = eval_exact(f, x)
        scale = float(np.abs(f.table()).max())
        misses = sum(
            abs(eval_sampled(f, x, EstimatorConfig(samples, seed, eps)) - exact) > eps * scale for seed in range(1000)
        )
        freq = misses / 1000
        if freq > 0.05:
            failures.append(inst.name)
        rows.append([inst.name, exact, freq])
    worst = max(r[2] for r in rows)
    return Outcome(
        not failures,
        f"t = {samples}, worst miss frequency {worst:.3f} over {len(rows)} instances",
        {"samples": samples, "rows": rows, "failures": failures},
    )


MARGINAL_INSTANCES = 5
TAIL_DELTAS = (0.1, 0.25, 0.5, 0.75, 1.0)


def _marginal_deviation(x, states, k) -> float:
    """Largest deviation of empirical marginals, in units of binomial stderr."""
    worst = 0.0
    trials = len(states)
    for j in range(k):
        freq = (states == j + 1).mean(axis=0)
        p = x[:, j]
        stderr = np.sqrt(p * (1 - p) / trials)
        dev = np.abs(freq - p)
        exact = stderr == 0
        if np.any(dev[exact] > 1e-12):
            return math.inf
        if (~exact).any():
            worst = max(worst, float((dev[~exact] / stderr[~exact]).max()))
    return worst


def criterion_8() -> Outcome:
    """Rounding: marginals, total-size conservation, upper and lower tails on the normalized zoo."""
    body: dict = {"marginals": [], "total_size": [], "upper": [], "lower": []}
    problems = []

    for index, inst in enumerate(small()[:: len(small()) // MARGINAL_INSTANCES]):
        f = inst.function
        rng = np.random.default_rng(derive_seed(8, index))
        x = random_points(rng, 1, f.n, f.k)[0]
        for method in METHODS:
            for preserve in (False, True):
                seed = derive_seed(8, index, METHODS.index(method), int(preserve))
                states, _ = round_batch(x, preserve, RoundingConfig(method, seed, TRIALS))
                dev = _marginal_deviation(x, states, f.k)
                body["marginals"].append([inst.name, method, preserve, dev])
                if dev > 3.0:
                    problems.append(f"marginals {inst.name} {method} preserve={preserve}")
        # integral total size: scale a dense point down to the floor of its mass
        y = random_points(rng, 1, f.n, f.k, sparse=0)[0]
        total = math.floor(y.sum())
        if total >= 1:
            y *= total / y.sum()
            for method in METHODS:
                states, _ = round_batch(y, True, RoundingConfig(method, derive_seed(8, index, 9), TRIALS))
                exact = float(np.mean((states > 0).sum(axis=1) == total))
                body["total_size"].append([inst.name, method, total, exact])
                if exact != 1.0:
                    problems.append(f"total size {inst.name} {method}")

    for index, inst in enumerate(monotone()):
        f = zoo.normalized(inst.function)
        rng = np.random.default_rng(derive_seed(80, index))
        greedy = meta_maximize(f, ConstraintSet(f.n, f.k), argmax_gradient_rule, OptimizerConfig(delta=1 / 16)).final_point
        dense = random_points(rng, 1, f.n, f.k, sparse=0)[0]
        costs = zoo.random_knapsack(f.n, rng).costs
        weights = np.repeat((np.asarray(costs) / max(costs))[:, None], f.k, axis=1)
        for method in METHODS:
            cfg = RoundingConfig(method, derive_seed(80, index, METHODS.index(method)), TRIALS)
            for label, x in (("greedy", greedy), ("dense", dense)):
                low = lower_tail_check(f, x, TAIL_DELTAS, cfg)
                body["lower"].append([inst.name, method, label, low.reference, low.frequencies, low.bounds])
                if not low.ok:
                    problems.append(f"lower tail {inst.name} {method} {label}")
            mu = float((weights * dense).sum())
            up = upper_tail_check(weights, dense, mu, TAIL_DELTAS, cfg)
            body["upper"].append([inst.name, method, mu, up.frequencies, up.bounds])
            if not up.ok:
                problems.append(f"upper tail {inst.name} {method}")

    worst_dev = max(r[3] for r in body["marginals"])
    summary = (
        f"worst marginal deviation {worst_dev:.2f} stderr, {len(body['total_size'])} total-size runs, "
        f"{len(body['upper'])} upper and {len(body['lower'])} lower tail reports, {len(problems)} problems"
    )
    body["problems"] = problems
    return Outcome(not problems, summary, body)


CRITERIA = {
    1: ("extension equals f at vertices", criterion_1, 10),
    2: ("curvature property suite", criterion_2, 60),
    3: ("gradient vs difference quotient", criterion_3, None),
    4: ("unconstrained greedy guarantee", criterion_4, 300),
    5: ("knapsack greedy guarantee", criterion_5, 300),
    6: ("full knapsack pipeline", criterion_6, 600),
    7: ("sampling concentration", criterion_7, None),
    8: ("rounding invariants and tails", criterion_8, 300),
}

_FIRST: dict[int, Outcome] = {}


def run_criterion(number: int) -> Outcome:
    if number not in _FIRST:
        _FIRST[number] = _timed(CRITERIA[number][1])
    return _FIRST[number]


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    title, _, budget = CRITERIA[number]
    out = run_criterion(number)
    _report(number, title, out, budget)
    assert out.ok, out.summary
    assert budget is None or out.seconds < budget, f"took {out.seconds:.1f} s, budget {budget} s"


@pytest.mark.slow
def test_criterion_9_determinism():
    def rerun():
        differing = []
        for number in sorted(CRITERIA):
            first = run_criterion(number)
            again = _timed(CRITERIA[number][1])
            if _body_text(first) != _body_text(again) or first.ok != again.ok:
                differing.append(number)
        return Outcome(not differing, f"criteria 1-8 re-executed, bodies differ for {differing or 'none'}", {"differing": differing})

    out = _timed(rerun)
    _report(9, "determinism", out, None)
    assert out.ok, out.summary


def main() -> int:
    ok = True
    for number in sorted(CRITERIA):
        title, _, budget = CRITERIA[number]
        out = run_criterion(number)
        _report(number, title, out, budget)
        ok &= out.ok and (budget is None or out.seconds < budget)
    try:
        test_criterion_9_determinism()
    except AssertionError:
        ok = False
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
