"""Solver-agnostic algebraic model.

A :class:`ModelInstance` holds variables (keyed by tuples such as
``("p", g, t)``), and four constraint families:

* linear rows ``lo <= a.x <= hi``
* quadratic rows ``lo <= x'Qx + a.x <= hi`` (Q given as sparse triplets)
* rotated cones ``sum_k x_k**2 <= x_i * x_j`` with ``x_i, x_j >= 0``
* a linear objective ``c.x + c0`` (always minimized)

Blocks built by separate modules are themselves ``ModelInstance`` objects and
are combined with :meth:`ModelInstance.merge`, which identifies variables by key.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Hashable, Iterable, Mapping

import numpy as np
import scipy.sparse as sp

INF = math.inf
EXCHANGE_FORMAT = "ucac-problem-1"

VarKey = tuple


@dataclass
class LinearRow:
    idx: list[int]
    coef: list[float]
    lo: float
    hi: float
    name: Hashable = None


@dataclass
class QuadraticRow:
    idx: list[int]
    coef: list[float]
    qi: list[int]
    qj: list[int]
    qcoef: list[float]
    lo: float
    hi: float
    name: Hashable = None

    def is_convex_diagonal(self) -> bool:
        """True when the row is ``sum a_k x_k**2 + lin <= hi`` with ``a_k >= 0``."""
        return (
            self.lo == -INF
            and self.hi < INF
            and all(i == j for i, j in zip(self.qi, self.qj))
            and all(c >= 0 for c in self.qcoef)
        )


@dataclass
class ConeRow:
    squares: list[int]
    i: int
    j: int
    name: Hashable = None


@dataclass
class ModelInstance:
    name: str = "model"
    keys: list[VarKey] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    binary: list[bool] = field(default_factory=list)
    linear: list[LinearRow] = field(default_factory=list)
    quadratic: list[QuadraticRow] = field(default_factory=list)
    cones: list[ConeRow] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    _index: dict[VarKey, int] = field(default_factory=dict, repr=False)

    # -- variables ---------------------------------------------------------

    def add_var(self, key: VarKey, lb: float = -INF, ub: float = INF, binary: bool = False) -> int:
        """Declare a variable (or intersect bounds if it already exists)."""
        if key in self._index:
            i = self._index[key]
            self.lb[i] = max(self.lb[i], lb)
            self.ub[i] = min(self.ub[i], ub)
            self.binary[i] = self.binary[i] or binary
            return i
        i = len(self.keys)
        self._index[key] = i
        self.keys.append(key)
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        return i

    def index(self, key: VarKey) -> int:
        return self._index[key]

    def __contains__(self, key: VarKey) -> bool:
        return key in self._index

    @property
    def n_vars(self) -> int:
        return len(self.keys)

    def fix(self, key: VarKey, value: float) -> None:
        i = self._index[key]
        self.lb[i] = self.ub[i] = float(value)

    def set_bounds(self, key: VarKey, lb: float, ub: float) -> None:
        i = self._index[key]
        self.lb[i], self.ub[i] = float(lb), float(ub)

    def binary_indices(self) -> list[int]:
        return [i for i, b in enumerate(self.binary) if b]

    # -- rows ----------------------------------------------------------------

    def _terms(self, terms: Mapping[VarKey, float]) -> tuple[list[int], list[float]]:
        idx, coef = [], []
        for key, c in terms.items():
            if c != 0:
                idx.append(self._index[key])
                coef.append(float(c))
        return idx, coef

    def add_linear(self, terms: Mapping[VarKey, float], lo: float = -INF, hi: float = INF, name=None) -> None:
        idx, coef = self._terms(terms)
        self.linear.append(LinearRow(idx, coef, float(lo), float(hi), name))

    def add_quadratic(
        self,
        terms: Mapping[VarKey, float],
        quad: Iterable[tuple[VarKey, VarKey, float]],
        lo: float = -INF,
        hi: float = INF,
        name=None,
    ) -> None:
        idx, coef = self._terms(terms)
        qi, qj, qc = [], [], []
        for a, b, c in quad:
            if c != 0:
                qi.append(self._index[a])
                qj.append(self._index[b])
                qc.append(float(c))
        self.quadratic.append(QuadraticRow(idx, coef, qi, qj, qc, float(lo), float(hi), name))

    def add_rotated_cone(self, squares: Iterable[VarKey], i: VarKey, j: VarKey, name=None) -> None:
        self.cones.append(
            ConeRow([self._index[k] for k in squares], self._index[i], self._index[j], name)
        )

    def set_objective(self, terms: Mapping[VarKey, float], constant: float = 0.0) -> None:
        self.objective = {}
        self.objective_constant = float(constant)
        self.add_objective(terms)

    def add_objective(self, terms: Mapping[VarKey, float], constant: float = 0.0) -> None:
        for key, c in terms.items():
            i = self._index[key]
            self.objective[i] = self.objective.get(i, 0.0) + float(c)
        self.objective_constant += float(constant)

    # -- composition -------------------------------------------------------

    def merge(self, block: "ModelInstance") -> "ModelInstance":
        """Append another block in place; shared keys refer to one variable."""
        remap = [
            self.add_var(key, lo, hi, bin_)
            for key, lo, hi, bin_ in zip(block.keys, block.lb, block.ub, block.binary)
        ]
        for row in block.linear:
            self.linear.append(LinearRow([remap[i] for i in row.idx], list(row.coef), row.lo, row.hi, row.name))
        for row in block.quadratic:
            self.quadratic.append(
                QuadraticRow(
                    [remap[i] for i in row.idx], list(row.coef),
                    [remap[i] for i in row.qi], [remap[i] for i in row.qj], list(row.qcoef),
                    row.lo, row.hi, row.name,
                )
            )
        for cone in block.cones:
            self.cones.append(ConeRow([remap[i] for i in cone.squares], remap[cone.i], remap[cone.j], cone.name))
        for i, c in block.objective.items():
            self.objective[remap[i]] = self.objective.get(remap[i], 0.0) + c
        self.objective_constant += block.objective_constant
        return self

    def copy(self) -> "ModelInstance":
        out = ModelInstance(self.name)
        return out.merge(self)

    # -- evaluation ----------------------------------------------------------

    def vector(self, point: Mapping[VarKey, float], default: float = 0.0) -> np.ndarray:
        return np.array([float(point.get(k, default)) for k in self.keys])

    def point(self, x: np.ndarray) -> dict[VarKey, float]:
        return {k: float(v) for k, v in zip(self.keys, x)}

    def objective_value(self, x: np.ndarray) -> float:
        return self.objective_constant + sum(c * x[i] for i, c in self.objective.items())

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for i, v in self.objective.items():
            c[i] = v
        return c

    def linear_matrix(self) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
        rows, cols, vals = [], [], []
        for r, row in enumerate(self.linear):
            rows.extend([r] * len(row.idx))
            cols.extend(row.idx)
            vals.extend(row.coef)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.linear), self.n_vars))
        lo = np.array([row.lo for row in self.linear])
        hi = np.array([row.hi for row in self.linear])
        return A, lo, hi

    def violations(self, x: np.ndarray, relative_to_bounds: bool = False) -> dict[str, float]:
        """Largest violation per constraint family at ``x`` (0 when satisfied)."""
        x = np.asarray(x, dtype=float)
        lb, ub = np.array(self.lb), np.array(self.ub)
        out = {"bounds": float(max(0.0, np.max(lb - x, initial=0.0), np.max(x - ub, initial=0.0)))}
        worst = 0.0
        for row in self.linear:
            v = float(np.dot(row.coef, x[row.idx])) if row.idx else 0.0
            worst = max(worst, row.lo - v, v - row.hi)
        out["linear"] = worst
        worst = 0.0
        for row in self.quadratic:
            v = quadratic_row_value(row, x)
            worst = max(worst, row.lo - v, v - row.hi)
        out["quadratic"] = worst
        worst = 0.0
        for cone in self.cones:
            lhs = float(np.sum(x[cone.squares] ** 2))
            worst = max(worst, lhs - x[cone.i] * x[cone.j], -x[cone.i], -x[cone.j])
        out["cone"] = worst
        binviol = 0.0
        for i in self.binary_indices():
            binviol = max(binviol, abs(x[i] - round(x[i])))
        out["integrality"] = binviol
        return out

    def max_violation(self, x: np.ndarray) -> float:
        return max(self.violations(x).values())

    # -- exchange format -------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        names = [key_to_name(k) for k in self.keys]

        def num(v: float) -> float | str:
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")

        def label(name) -> str | None:
            if name is None:
                return None
            return key_to_name(name) if isinstance(name, tuple) else str(name)

        return {
            "format": EXCHANGE_FORMAT,
            "name": self.name,
            "variables": [
                {"name": n, "lb": num(lo), "ub": num(hi), "type": "B" if b else "C"}
                for n, lo, hi, b in zip(names, self.lb, self.ub, self.binary)
            ],
            "objective": {
                "linear": [[i, c] for i, c in sorted(self.objective.items())],
                "constant": self.objective_constant,
            },
            "linear_rows": [
                {"idx": r.idx, "coef": r.coef, "lo": num(r.lo), "hi": num(r.hi), "name": label(r.name)}
                for r in self.linear
            ],
            "quadratic_rows": [
                {
                    "idx": r.idx, "coef": r.coef, "qi": r.qi, "qj": r.qj, "qcoef": r.qcoef,
                    "lo": num(r.lo), "hi": num(r.hi), "name": label(r.name),
                }
                for r in self.quadratic
            ],
            "rotated_cones": [
                {"squares": c.squares, "i": c.i, "j": c.j, "name": label(c.name)} for c in self.cones
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelInstance":
        if data.get("format") != EXCHANGE_FORMAT:
            raise ValueError(f"not a {EXCHANGE_FORMAT} document")
        m = cls(str(data.get("name", "model")))

        def unlabel(text):
            return None if text is None else name_to_key(text)

        for v in data["variables"]:
            m.add_var(name_to_key(v["name"]), float(v["lb"]), float(v["ub"]), v["type"] == "B")
        for i, c in data["objective"]["linear"]:
            m.objective[int(i)] = float(c)
        m.objective_constant = float(data["objective"].get("constant", 0.0))
        for r in data["linear_rows"]:
            m.linear.append(LinearRow(list(r["idx"]), list(r["coef"]), float(r["lo"]), float(r["hi"]),
                                      unlabel(r.get("name"))))
        for r in data["quadratic_rows"]:
            m.quadratic.append(
                QuadraticRow(
                    list(r["idx"]), list(r["coef"]), list(r["qi"]), list(r["qj"]), list(r["qcoef"]),
                    float(r["lo"]), float(r["hi"]), unlabel(r.get("name")),
                )
            )
        for c in data["rotated_cones"]:
            m.cones.append(ConeRow(list(c["squares"]), int(c["i"]), int(c["j"]), unlabel(c.get("name"))))
        return m

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "ModelInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def quadratic_row_value(row: QuadraticRow, x: np.ndarray) -> float:
    v = float(np.dot(row.coef, x[row.idx])) if row.idx else 0.0
    if row.qi:
        v += float(np.dot(row.qcoef, x[row.qi] * x[row.qj]))
    return v


_NAME_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\[(.*)\]$")


def key_to_name(key: VarKey) -> str:
    head, *rest = key
    return f"{head}[{','.join(str(r) for r in rest)}]"


def name_to_key(name: str) -> VarKey:
    m = _NAME_RE.match(name)
    if not m:
        return (name,)
    parts = [p for p in m.group(2).split(",") if p != ""]
    return (m.group(1), *(int(p) if re.fullmatch(r"-?\d+", p) else p for p in parts))
