"""Command line entry point: ``ksub validate | maximize | round | tailcheck | gen``.

Exit codes are a stable contract::

    0   success
    1   validation failure or violated bound
    2   enumeration guard refused the instance
    64  input could not be parsed
    65  invalid configuration
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import zoo
from .core import brute_force_max, check_guard, max_marginal, validate_ksubmodular, validate_monotone
from .errors import ConfigError, DomainError, GuardRefusal, ParseError, PreconditionError, RuleContractError
from .extension import EstimatorConfig, check_point
from .io import Instance, dump_instance, load_instance, load_point
from .optimize import (
    OptimizerConfig,
    argmax_gradient_rule,
    derive_seed,
    knapsack_full_pipeline,
    knapsack_greedy,
    meta_maximize,
    plugin_direction_rule,
)
from .polytope import ConstraintSet, integral_feasible
from .rounding import (
    RoundingConfig,
    biased_rounder,
    expectation_check,
    lower_tail_check,
    round_batch,
    upper_tail_check,
)

EXIT_OK, EXIT_FAIL, EXIT_GUARD, EXIT_PARSE, EXIT_CONFIG = 0, 1, 2, 64, 65

ALGORITHMS = ("greedy_unconstrained", "knapsack_greedy", "knapsack_full", "plugin")

# frozen: downstream tooling diffs these files
CSV_COLUMNS = (
    "instance",
    "seed",
    "algorithm",
    "continuous_value",
    "integral_value",
    "opt",
    "ratio",
    "iterations",
    "boundary_reason",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- experiment spec


@dataclass
class ExperimentSpec:
    """Everything a ``maximize`` batch needs; built from a JSON file and/or flags."""

    instances: list = field(default_factory=list)
    generate: dict | None = None
    algorithm: str = "greedy_unconstrained"
    seeds: list = field(default_factory=lambda: [0])
    optimizer: OptimizerConfig = OptimizerConfig()
    rounding: RoundingConfig = RoundingConfig()
    eps: float = 0.2
    m_cap: int = 2
    plugin: dict = field(default_factory=dict)
    oracle: bool = True
    out: str | None = None
    format: str = "csv"
    workers: int = 1

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path = Path(".")) -> "ExperimentSpec":
        if not isinstance(doc, dict):
            raise ParseError("experiment spec must be a JSON object")
        known = set(cls.__dataclass_fields__) | {"estimator"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown experiment fields {sorted(unknown)}")
        try:
            opt = dict(doc.get("optimizer", {}))
            opt["estimator"] = EstimatorConfig(**doc.get("estimator", {}))
            optimizer = OptimizerConfig(**opt)
            rounding = RoundingConfig(**doc.get("rounding", {}))
        except TypeError as exc:
            raise ConfigError(f"bad config block: {exc}") from exc
        return cls(
            instances=[str(base_dir / p) for p in doc.get("instances", [])],
            generate=doc.get("generate"),
            algorithm=doc.get("algorithm", "greedy_unconstrained"),
            seeds=[int(s) for s in doc.get("seeds", [0])],
            optimizer=optimizer,
            rounding=rounding,
            eps=float(doc.get("eps", 0.2)),
            m_cap=int(doc.get("m_cap", 2)),
            plugin=dict(doc.get("plugin", {})),
            oracle=bool(doc.get("oracle", True)),
            out=doc.get("out"),
            format=doc.get("format", "csv"),
            workers=int(doc.get("workers", 1)),
        )

    def check(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.format not in ("csv", "structured"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.algorithm == "knapsack_full" and not 0.0 < self.eps < 0.25:
            raise ConfigError(f"knapsack_full needs 0 < eps < 1/4, got {self.eps}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for path in self.instances:
            if not Path(path).is_file():
                raise ConfigError(f"instance file {path} does not exist")
        if self.generate is not None:
            missing = {"family", "n", "k"} - set(self.generate)
            if missing:
                raise ConfigError(f"generator spec lacks {sorted(missing)}")
            if self.oracle:
                check_guard(int(self.generate["n"]), int(self.generate["k"]))

    def to_dict(self) -> dict:
        return {
            "instances": self.instances,
            "generate": self.generate,
            "algorithm": self.algorithm,
            "seeds": self.seeds,
            "optimizer": self.optimizer.to_dict(),
            "rounding": self.rounding.to_dict(),
            "eps": self.eps,
            "m_cap": self.m_cap,
            "plugin": self.plugin,
            "oracle": self.oracle,
        }


def generated_instances(gen: dict) -> list[tuple[Instance, int]]:
    """Materialize a generator spec; returns instances with their generator seeds."""
    family, n, k = gen["family"], int(gen["n"]), int(gen["k"])
    count, seed = int(gen.get("count", 1)), int(gen.get("seed", 0))
    out = []
    for idx in range(count):
        child = derive_seed(seed, idx)
        try:
            f = zoo.generate(family, n, k, child)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if gen.get("normalize"):
            f = zoo.normalized(f)
        knapsack = zoo.random_knapsack(n, np.random.default_rng(derive_seed(seed, idx, 1))) if gen.get("knapsack") else None
        c = ConstraintSet(n, k, total_size_cap=gen.get("total_size"), knapsack=knapsack)
        out.append((Instance(f, c, f"{family}-n{n}-k{k}-{idx}"), child))
    return out


# ---------------------------------------------------------------- maximize


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _ratio(value: float, opt: float | None) -> float | None:
    if opt is None:
        return None
    if opt <= 0:
        return 1.0 if value >= opt else 0.0
    return value / opt


def run_one(spec: ExperimentSpec, inst: Instance, seed: int) -> dict:
    """One (instance, seed) run; returns the CSV row plus the full report."""
    f, c = inst.function, inst.constraints
    cfg = OptimizerConfig(
        spec.optimizer.delta, spec.optimizer.use_sampling, spec.optimizer.estimator, spec.optimizer.max_iters, seed
    )
    rcfg = RoundingConfig(spec.rounding.method, seed, 1)
    preserve = c.total_size_cap is not None
    started = time.perf_counter()
    integral = None
    if spec.algorithm in ("greedy_unconstrained", "plugin"):
        if spec.algorithm == "plugin":
            table = spec.plugin.get("distribution", [1.0 / f.k] * f.k)
            rule = plugin_direction_rule(table, spec.plugin.get("mode", "all"))
        else:
            rule = argmax_gradient_rule
        report = meta_maximize(f, c, rule, cfg)
        state = round_batch(report.final_point, preserve, rcfg, trials=1)[0][0]
        if integral_feasible(c, state):
            integral = float(f(state))
        continuous = report.final_value
    elif spec.algorithm == "knapsack_greedy":
        report = knapsack_greedy(f, c, cfg)
        continuous = report.final_value
        state = round_batch(report.final_point, False, rcfg, trials=1)[0][0]
        if integral_feasible(c, state):
            integral = float(f(state))
    else:
        _, value, report = knapsack_full_pipeline(f, c, spec.eps, cfg, rcfg, spec.m_cap)
        integral = float(value)
        continuous = report.meta["continuous_value"]
    elapsed = time.perf_counter() - started

    opt = None
    if spec.oracle:
        try:
            opt = float(brute_force_max(f, c)[1])
        except GuardRefusal:
            opt = None
    # the fractional greedy is compared on its continuous value; the rest on the rounded one
    scored = continuous if spec.algorithm == "knapsack_greedy" else integral
    ratio = None if scored is None else _ratio(scored, opt)
    row = {
        "instance": inst.name,
        "seed": seed,
        "algorithm": spec.algorithm,
        "continuous_value": float(continuous),
        "integral_value": integral,
        "opt": opt,
        "ratio": ratio,
        "iterations": report.iterations,
        "boundary_reason": report.boundary_reason,
    }
    return {"row": row, "report": report.to_dict(), "wall_time": elapsed}


def run_experiment(spec: ExperimentSpec) -> tuple[list[dict], dict]:
    """Run every (instance, seed) pair; results come back in deterministic order."""
    spec.check()
    instances = [(load_instance(p), None) for p in spec.instances]
    if spec.generate is not None:
        instances += generated_instances(spec.generate)
    jobs = [(inst, seed) for inst, _ in instances for seed in spec.seeds]
    with ThreadPoolExecutor(max_workers=spec.workers) as pool:
        results = list(pool.map(lambda job: run_one(spec, *job), jobs))
    header = {
        "created": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "algorithm": spec.algorithm,
        "seeds": spec.seeds,
        "generator_seeds": {inst.name: gs for inst, gs in instances if gs is not None},
        "wall_time_s": {f"{r['row']['instance']}@{r['row']['seed']}": round(r["wall_time"], 4) for r in results},
    }
    return results, header


def render_csv(results: list[dict], header: dict) -> str:
    buf = io.StringIO()
    for key, value in header.items():
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in results:
        writer.writerow([_fmt(r["row"][col]) for col in CSV_COLUMNS])
    return buf.getvalue()


def render_structured(results: list[dict], header: dict, spec: ExperimentSpec) -> str:
    doc = {
        "header": header,
        "spec": spec.to_dict(),
        "runs": [{"row": r["row"], "report": r["report"]} for r in results],
    }
    return json.dumps(doc, indent=1) + "\n"


def csv_body(text: str) -> str:
    """The part of a CSV report that must be reproducible (header comments dropped)."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_maximize(args) -> int:
    if args.spec:
        try:
            doc = json.loads(Path(args.spec).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read spec {args.spec}: {exc}") from exc
        spec = ExperimentSpec.from_dict(doc, Path(args.spec).parent)
    else:
        spec = ExperimentSpec()
    spec.instances += args.instance or []
    if args.algorithm:
        spec.algorithm = args.algorithm
    if args.seed:
        spec.seeds = args.seed
    if args.delta is not None or args.sampling:
        spec.optimizer = OptimizerConfig(
            args.delta if args.delta is not None else spec.optimizer.delta,
            spec.optimizer.use_sampling or args.sampling,
            spec.optimizer.estimator,
            spec.optimizer.max_iters,
        )
    if args.eps is not None:
        spec.eps = args.eps
    if args.m_cap is not None:
        spec.m_cap = args.m_cap
    if args.method:
        spec.rounding = RoundingConfig(args.method)
    if args.no_oracle:
        spec.oracle = False
    if args.workers is not None:
        spec.workers = args.workers
    spec.format = args.format or spec.format
    out = args.out or spec.out
    results, header = run_experiment(spec)
    text = render_csv(results, header) if spec.format == "csv" else render_structured(results, header, spec)
    _emit(text, out)
    return EXIT_OK


# ---------------------------------------------------------------- validate / gen


def cmd_validate(args) -> int:
    inst = load_instance(args.instance)
    f = inst.function
    check_guard(f.n, f.k)
    report = validate_ksubmodular(f)
    if not report.ok:
        print(f"FAIL {report.describe()}")
        return EXIT_FAIL
    if f.monotone:
        mono = validate_monotone(f)
        if not mono.ok:
            print(f"FAIL declared monotone but {mono.describe()}")
            return EXIT_FAIL
    print(f"ok n={f.n} k={f.k} monotone={f.monotone} max_marginal={max_marginal(f):.6g}")
    return EXIT_OK


def cmd_gen(args) -> int:
    gen = {
        "family": args.family,
        "n": args.n,
        "k": args.k,
        "count": args.count,
        "seed": args.seed[0] if args.seed else 0,
        "knapsack": args.knapsack,
        "normalize": args.normalize,
        "total_size": args.total_size,
    }
    check_guard(args.n, args.k)
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    print(f"# generator seed {gen['seed']}")
    for inst, child in generated_instances(gen):
        path = out_dir / f"{inst.name}.json"
        dump_instance(path, inst.function, inst.constraints)
        print(f"{path}\t{child}")
    return EXIT_OK


# ---------------------------------------------------------------- round / tailcheck


def cmd_round(args) -> int:
    x = load_point(args.point)
    trials = args.trials or 1
    seed = args.seed[0] if args.seed else 0
    cfg = RoundingConfig(args.method or "pipage", seed, trials)
    try:
        check_point(x, *x.shape)
    except DomainError as exc:
        raise ParseError(str(exc)) from exc
    states, steps = round_batch(x, args.preserve_total_size, cfg)
    values = None
    if args.instance:
        inst = load_instance(args.instance)
        if (inst.function.n, inst.function.k) != x.shape:
            raise ConfigError("point and instance dimensions differ")
        values = inst.function.evaluate_many(states).tolist()
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("trial", "assignment", "steps", "value"))
        for t in range(trials):
            writer.writerow(
                (t, " ".join(map(str, states[t])), int(steps[t]), "" if values is None else repr(values[t]))
            )
        text = buf.getvalue()
    else:
        doc = {
            "rounding": cfg.to_dict(),
            "preserve_total_size": args.preserve_total_size,
            "assignments": states.tolist(),
            "steps": steps.tolist(),
            "values": values,
        }
        text = json.dumps(doc, indent=1) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def _deltas(text: str | None, default: tuple[float, ...]) -> list[float]:
    if not text:
        return list(default)
    try:
        return [float(d) for d in text.split(",")]
    except ValueError as exc:
        raise ParseError(f"bad delta grid {text!r}") from exc


def cmd_tailcheck(args) -> int:
    inst = load_instance(args.instance)
    f = inst.function
    check_guard(f.n, f.k)
    if args.normalize:
        f = zoo.normalized(f)
    seed = args.seed[0] if args.seed else 0
    if args.point:
        x = load_point(args.point)
    else:
        delta = args.delta if args.delta is not None else 1.0 / 16
        x = meta_maximize(f, ConstraintSet(f.n, f.k), argmax_gradient_rule, OptimizerConfig(delta=delta, seed=seed)).final_point
    method = "pipage" if args.rounder in (None, "fake") else args.rounder
    cfg = RoundingConfig(method, seed, args.trials or 10_000)
    rounder = biased_rounder() if args.rounder == "fake" else None
    try:
        if args.mode == "lower":
            report = lower_tail_check(f, x, _deltas(args.deltas, (0.25, 0.5, 0.75, 1.0)), cfg, args.preserve_total_size, rounder)
        elif args.mode == "upper":
            a = load_point(args.weights) if args.weights else np.ones((f.n, f.k))
            mu = args.mu if args.mu is not None else float((a * np.asarray(x)).sum())
            report = upper_tail_check(a, x, mu, _deltas(args.deltas, (0.1, 0.25, 0.5, 1.0)), cfg, args.preserve_total_size, rounder)
        else:
            report = expectation_check(f, x, cfg, args.preserve_total_size, rounder)
    except PreconditionError as exc:
        hint = " (rerun with --normalize, or generate with `ksub gen --normalize`)" if "rescale" in str(exc) else ""
        raise ConfigError(f"{exc}{hint}") from exc
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if report.kind == "expectation":
            writer.writerow(("kind", "reference", "mean", "stderr", "passed"))
            writer.writerow((report.kind, repr(report.reference), repr(report.mean_value), repr(report.stderr), report.ok))
        else:
            writer.writerow(("kind", "delta", "threshold", "frequency", "bound", "passed"))
            for row in zip(report.deltas, report.thresholds, report.frequencies, report.bounds, report.passed):
                writer.writerow((report.kind, *map(repr, row[:4]), row[4]))
        text = buf.getvalue()
    else:
        text = json.dumps(report.to_dict(), indent=1) + "\n"
    _emit(text, args.out)
    return EXIT_OK if report.ok else EXIT_FAIL


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ksub", description="k-submodular maximization via the multilinear extension")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check k-submodularity (and declared monotonicity) of an instance")
    p.add_argument("--instance", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("maximize", help="run an optimizer over instances and seeds")
    p.add_argument("--instance", action="append", help="instance file (repeatable)")
    p.add_argument("--spec", help="experiment spec (JSON)")
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--seed", type=int, action="append", help="run seed (repeatable)")
    p.add_argument("--delta", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--m-cap", type=int, dest="m_cap")
    p.add_argument("--method", choices=("pipage", "swap"))
    p.add_argument("--sampling", action="store_true", help="use sampled value/gradient oracles")
    p.add_argument("--no-oracle", action="store_true", help="skip the brute-force OPT column")
    p.add_argument("--workers", type=int)
    p.add_argument("--format", choices=("csv", "structured"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_maximize)

    p = sub.add_parser("round", help="round a fractional point")
    p.add_argument("--point", required=True, help='JSON file holding {"x": [[...], ...]}')
    p.add_argument("--instance", help="evaluate the rounded states on this instance")
    p.add_argument("--seed", type=int, action="append")
    p.add_argument("--trials", type=int)
    p.add_argument("--method", choices=("pipage", "swap"))
    p.add_argument("--preserve-total-size", action="store_true")
    p.add_argument("--format", choices=("csv", "structured"), default="structured")
    p.add_argument("--out")
    p.set_defaults(func=cmd_round)

    p = sub.add_parser("tailcheck", help="Monte-Carlo tail/expectation checks of the rounding")
    p.add_argument("--instance", required=True)
    p.add_argument("--mode", choices=("lower", "upper", "expectation"), default="lower")
    p.add_argument("--point", help="fractional point (default: unconstrained greedy output)")
    p.add_argument("--weights", help="upper mode: (n, k) weight matrix in [0, 1] (default all ones)")
    p.add_argument("--mu", type=float, help="upper mode: mean bound (default E[X])")
    p.add_argument("--deltas", help="comma separated delta grid")
    p.add_argument("--delta", type=float, help="greedy step for the default point")
    p.add_argument("--seed", type=int, action="append")
    p.add_argument("--trials", type=int)
    p.add_argument("--rounder", choices=("pipage", "swap", "fake"))
    p.add_argument("--preserve-total-size", action="store_true")
    p.add_argument("--normalize", action="store_true", help="rescale so every marginal lies in [0, 1]")
    p.add_argument("--format", choices=("csv", "structured"), default="structured")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tailcheck)

    p = sub.add_parser("gen", help="write random zoo instances")
    p.add_argument("--family", choices=zoo.FAMILIES + ("nonmonotone",), default="coverage")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, action="append")
    p.add_argument("--knapsack", action="store_true", help="attach random costs and budget")
    p.add_argument("--total-size", type=float)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except GuardRefusal as exc:
        print(f"guard refused: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ConfigError, PreconditionError, DomainError, RuleContractError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
