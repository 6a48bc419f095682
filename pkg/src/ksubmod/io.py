"""JSON instance documents and report serialization.

Instance document::

    {"kind": "tabular" | "coverage", "n": 3, "k": 2, "monotone": true,
     "table": [...]                                   # tabular
     "universe_size": 5, "weights": [...],            # coverage
     "covers": [{"item": 0, "part": 1, "covered": [0, 3]}, ...],
     "constraints": {"total_size": 2, "knapsack": {"costs": [...], "budget": 4},
                     "zeroed": [[0, 1]], "scale": 1.0}}   # optional
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CoverageFunction, KSubFunction, TabularFunction
from .errors import DomainError, GuardRefusal, ParseError
from .polytope import ConstraintSet


@dataclass(frozen=True)
class Instance:
    function: KSubFunction
    constraints: ConstraintSet
    name: str = ""


def function_to_dict(f: KSubFunction) -> dict:
    if isinstance(f, CoverageFunction):
        return {
            "kind": "coverage",
            "n": f.n,
            "k": f.k,
            "monotone": f.monotone,
            "universe_size": f.universe_size,
            "weights": [float(w) for w in f.weights],
            "covers": [
                {"item": i, "part": j, "covered": list(covered)} for (i, j), covered in f.covers.items()
            ],
        }
    return {
        "kind": "tabular",
        "n": f.n,
        "k": f.k,
        "monotone": f.monotone,
        "table": [float(v) for v in f.table()],
    }


def instance_to_dict(f: KSubFunction, constraints: ConstraintSet | None = None) -> dict:
    out = function_to_dict(f)
    if constraints is not None:
        block = constraints.to_dict()
        if block:
            out["constraints"] = block
    return out


def parse_instance(doc: dict, name: str = "") -> Instance:
    if not isinstance(doc, dict):
        raise ParseError("instance document must be a JSON object")
    try:
        kind = doc["kind"]
        n, k = int(doc["n"]), int(doc["k"])
        monotone = bool(doc.get("monotone", False))
        if kind == "tabular":
            f: KSubFunction = TabularFunction(n, k, doc["table"], monotone=monotone)
        elif kind == "coverage":
            covers = {}
            for entry in doc["covers"]:
                key = (int(entry["item"]), int(entry["part"]))
                if key in covers:
                    raise ParseError(f"duplicate cover entry {key}")
                covers[key] = entry["covered"]
            f = CoverageFunction(n, k, int(doc["universe_size"]), doc["weights"], covers, monotone=monotone)
        else:
            raise ParseError(f"unknown instance kind {kind!r}")
        constraints = ConstraintSet.from_dict(n, k, doc.get("constraints"))
    except GuardRefusal:
        raise
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError, DomainError) as exc:
        raise ParseError(f"malformed instance: {exc}") from exc
    return Instance(f, constraints, name)


def load_instance(path: str | Path) -> Instance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return parse_instance(doc, name=path.stem)


def dump_instance(path: str | Path, f: KSubFunction, constraints: ConstraintSet | None = None) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(f, constraints), indent=1) + "\n")


def load_point(path: str | Path) -> np.ndarray:
    """Read a fractional point: either ``{"x": [[...], ...]}`` or a bare matrix."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read point {path}: {exc}") from exc
    matrix = doc.get("x") if isinstance(doc, dict) else doc
    try:
        x = np.asarray(matrix, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"point is not a numeric matrix: {exc}") from exc
    if x.ndim != 2:
        raise ParseError("point must be a 2-d matrix")
    return x
