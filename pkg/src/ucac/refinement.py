"""Integer cuts, reverse-cone estimators, cycle constraints and partition grids.

The reverse side of the lifted identity, ``c^2 + s^2 >= c_bb c_kk``, is relaxed
per (branch, period) with two piecewise pieces joined by ``cs >= cc``:

* ``cs <= `` secant over-estimator of ``c^2 + s^2`` on each (c, s) cell;
* ``cc >= `` McCormick under-estimators of ``c_bb c_kk`` on each bus-magnitude cell.

Every true point satisfies ``secant >= c^2 + s^2 = c_bb c_kk >= McCormick``, so the
composite is a valid relaxation.  Cells are selected by binaries (``sigma`` for
(c, s) cells, ``phi`` for magnitude cells) with disaggregated copies.

Cycle constraints bound ``theta = -arctan(s / c)`` per (c, s) cell between planes
and require the signed sum of ``theta`` around a cycle to vanish.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .case import BoundsStore, CycleSet, NetworkCase
from .model import ModelInstance, key_to_name, name_to_key

CELL_EPS = 1e-12
PLANE_GRID = 41
MIN_CELL_WIDTH = 1e-4  # relative to the initial box side


@dataclass(frozen=True)
class Rect:
    """Axis-aligned cell ``[lo1, hi1] x [lo2, hi2]``."""

    lo1: float
    hi1: float
    lo2: float
    hi2: float

    def contains(self, a: float, b: float, tol: float = 1e-9) -> bool:
        return self.lo1 - tol <= a <= self.hi1 + tol and self.lo2 - tol <= b <= self.hi2 + tol

    def clip(self, lo1: float, hi1: float, lo2: float, hi2: float) -> "Rect | None":
        r = Rect(max(self.lo1, lo1), min(self.hi1, hi1), max(self.lo2, lo2), min(self.hi2, hi2))
        if r.lo1 > r.hi1 + CELL_EPS or r.lo2 > r.hi2 + CELL_EPS:
            return None
        return Rect(r.lo1, max(r.lo1, r.hi1), r.lo2, max(r.lo2, r.hi2))

    def split(self, axis: int) -> tuple["Rect", "Rect"]:
        if axis == 0:
            mid = 0.5 * (self.lo1 + self.hi1)
            return Rect(self.lo1, mid, self.lo2, self.hi2), Rect(mid, self.hi1, self.lo2, self.hi2)
        mid = 0.5 * (self.lo2 + self.hi2)
        return Rect(self.lo1, self.hi1, self.lo2, mid), Rect(self.lo1, self.hi1, mid, self.hi2)

    def quarters(self) -> list["Rect"]:
        out = []
        for half in self.split(0):
            out.extend(half.split(1))
        return out

    def as_list(self) -> list[float]:
        return [self.lo1, self.hi1, self.lo2, self.hi2]


@dataclass
class PartitionGrid:
    """Cells over the (c, s) box and over the (c_bb, c_kk) box of one branch-period."""

    box_cs: Rect
    box_cc: Rect
    cs_cells: list[Rect]
    cc_cells: list[Rect]

    @classmethod
    def initial(cls, box_cs: Rect, box_cc: Rect) -> "PartitionGrid":
        return cls(box_cs, box_cc, box_cs.quarters(), box_cc.quarters())

    def to_dict(self) -> dict:
        return {
            "box_cs": self.box_cs.as_list(), "box_cc": self.box_cc.as_list(),
            "cs_cells": [r.as_list() for r in self.cs_cells],
            "cc_cells": [r.as_list() for r in self.cc_cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionGrid":
        return cls(Rect(*d["box_cs"]), Rect(*d["box_cc"]),
                   [Rect(*r) for r in d["cs_cells"]], [Rect(*r) for r in d["cc_cells"]])


@dataclass
class RefinementState:
    """Everything the inner and outer loops accumulate between solves."""

    grids: dict[tuple[int, int], PartitionGrid] = field(default_factory=dict)
    cycles: set[tuple[int, int]] = field(default_factory=set)  # (cycle index, period)
    cuts: list[tuple[int, ...]] = field(default_factory=list)  # flattened y, row-major (g, t)
    bounds: dict[tuple[int, ...], BoundsStore] = field(default_factory=dict)  # per commitment
    bound_cutoffs: dict[tuple[int, ...], float] = field(default_factory=dict)
    # what a warm restart needs to keep a valid certificate
    visited: dict[tuple[int, ...], float] = field(default_factory=dict)  # certified bound per commitment
    z_L_frozen: float = -math.inf
    incumbent: dict | None = None  # {"cost", "y", "x"}

    def to_dict(self) -> dict:
        return {
            "grids": [[l, t, g.to_dict()] for (l, t), g in sorted(self.grids.items())],
            "cycles": sorted([list(c) for c in self.cycles]),
            "cuts": [list(c) for c in self.cuts],
            "bounds": [
                {"y": list(k), "cutoff": _num(self.bound_cutoffs.get(k, math.inf)), "store": b.to_dict()}
                for k, b in self.bounds.items()
            ],
            "visited": [{"y": list(k), "bound": _num(v)} for k, v in self.visited.items()],
            "z_L_frozen": _num(self.z_L_frozen),
            "incumbent": None if self.incumbent is None else {
                "cost": self.incumbent["cost"],
                "y": [list(map(int, row)) for row in self.incumbent["y"]],
                "x": {key_to_name(k): float(v) for k, v in self.incumbent["x"].items()},
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RefinementState":
        st = cls()
        for l, t, g in data.get("grids", []):
            st.grids[int(l), int(t)] = PartitionGrid.from_dict(g)
        st.cycles = {(int(c), int(t)) for c, t in data.get("cycles", [])}
        st.cuts = [tuple(int(v) for v in c) for c in data.get("cuts", [])]
        for entry in data.get("bounds", []):
            key = tuple(int(v) for v in entry["y"])
            st.bounds[key] = BoundsStore.from_dict(entry["store"])
            st.bound_cutoffs[key] = float(entry["cutoff"])
        for entry in data.get("visited", []):
            st.visited[tuple(int(v) for v in entry["y"])] = float(entry["bound"])
        st.z_L_frozen = float(data.get("z_L_frozen", "-inf"))
        inc = data.get("incumbent")
        if inc is not None:
            st.incumbent = {"cost": float(inc["cost"]), "y": [list(r) for r in inc["y"]],
                            "x": {name_to_key(n): float(v) for n, v in inc["x"].items()}}
        return st

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "RefinementState":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _num(v: float):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


# ---------------------------------------------------------------------------
# integer cuts


def integer_cut_terms(y: Iterable[int], n_gen: int, horizon: int) -> tuple[dict, float]:
    """Coefficients and right-hand side of the cut excluding assignment ``y``."""
    y = np.asarray(list(y), dtype=int).reshape(n_gen, horizon)
    terms = {}
    for g in range(n_gen):
        for t in range(horizon):
            terms["y", g, t] = 1.0 if y[g, t] == 1 else -1.0
    return terms, float(y.sum() - 1)


def add_integer_cut(model: ModelInstance, y, n_gen: int, horizon: int) -> ModelInstance:
    terms, rhs = integer_cut_terms(y, n_gen, horizon)
    model.add_linear(terms, hi=rhs, name=("integer_cut",) + tuple(int(v) for v in np.ravel(y)))
    return model


def integer_cut_violated(cut_y, y) -> bool:
    """True when assignment ``y`` violates the cut generated by ``cut_y``."""
    cut_y = np.ravel(cut_y).astype(int)
    y = np.ravel(y).astype(float)
    lhs = float(np.sum(np.where(cut_y == 1, y, -y)))
    return lhs > cut_y.sum() - 1 + 1e-9


# ---------------------------------------------------------------------------
# estimator values (used by tests and diagnostics)


def secant_value(cell: Rect, c: float, s: float) -> float:
    """Over-estimate of ``c^2 + s^2`` on ``cell``."""
    return (cell.lo1 + cell.hi1) * c + (cell.lo2 + cell.hi2) * s - (cell.lo1 * cell.hi1 + cell.lo2 * cell.hi2)


def mccormick_rows(cell: Rect, cbb: float, ckk: float) -> tuple[float, float]:
    """The two under-estimates of ``cbb * ckk`` on ``cell`` (lower, upper corner)."""
    low = cell.lo1 * ckk + cell.lo2 * cbb - cell.lo1 * cell.lo2
    high = cell.hi1 * ckk + cell.hi2 * cbb - cell.hi1 * cell.hi2
    return low, high


def mccormick_value(cell: Rect, cbb: float, ckk: float) -> float:
    return max(mccormick_rows(cell, cbb, ckk))


# ---------------------------------------------------------------------------
# arctan planes


@dataclass(frozen=True)
class PlaneCoefficients:
    """``theta >= alpha_n s + beta_n c + gamma_lo_n`` and ``theta <= ... + gamma_hi_n``."""

    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    gamma_lo: tuple[float, ...]
    gamma_hi: tuple[float, ...]
    const_bounds: tuple[float, float] | None = None  # used instead of planes near c = 0

    def lower(self, c: float, s: float) -> float:
        if self.const_bounds is not None:
            return self.const_bounds[0]
        return max(a * s + b * c + g for a, b, g in zip(self.alpha, self.beta, self.gamma_lo))

    def upper(self, c: float, s: float) -> float:
        if self.const_bounds is not None:
            return self.const_bounds[1]
        return min(a * s + b * c + g for a, b, g in zip(self.alpha, self.beta, self.gamma_hi))


class CellStraddlesAxis(ValueError):
    """The cell reaches c <= 0, where the angle expression changes branch."""


def arctan_value(c, s):
    return -np.arctan2(s, c)


def arctan_gradient(c: float, s: float) -> tuple[float, float]:
    """(d/dc, d/ds) of ``-arctan(s / c)``."""
    r2 = c * c + s * s
    return s / r2, -c / r2


@lru_cache(maxsize=100000)
def arctan_planes(cell: Rect, c_eps: float = 1e-3) -> PlaneCoefficients:
    """Planes bracketing ``-arctan(s/c)`` on a cell with ``c > 0``.

    Tangent planes at two opposite corners are shifted down (under) and up
    (over) by the extreme residual on a 41 x 41 sample grid plus a margin that
    bounds the residual between samples: with grid steps ``h_c, h_s`` and the
    Hessian entries bounded by ``1 / (c^2 + s^2)``, bilinear interpolation
    error is at most ``(h_c^2 + h_s^2) / (8 r_min^2)``.

    Cells touching ``c <= c_eps`` get constant bounds on [-pi/2, pi/2] instead
    (sign-tightened); cells with ``c < 0`` anywhere are refused.
    """
    if cell.lo1 < 0:
        raise CellStraddlesAxis(f"cell {cell} reaches c < 0")
    if cell.lo2 == 0 and cell.hi2 == 0:
        return PlaneCoefficients((0.0,), (0.0,), (0.0,), (0.0,))
    if cell.lo1 <= c_eps:
        lo = 0.0 if cell.hi2 <= 0 else -math.pi / 2
        hi = 0.0 if cell.lo2 >= 0 else math.pi / 2
        return PlaneCoefficients((), (), (), (), const_bounds=(lo, hi))
    cs = np.linspace(cell.lo1, cell.hi1, PLANE_GRID)
    ss = np.linspace(cell.lo2, cell.hi2, PLANE_GRID)
    C, S = np.meshgrid(cs, ss, indexing="ij")
    F = arctan_value(C, S)
    hc = (cell.hi1 - cell.lo1) / (PLANE_GRID - 1)
    hs = (cell.hi2 - cell.lo2) / (PLANE_GRID - 1)
    s_abs_min = 0.0 if cell.lo2 <= 0 <= cell.hi2 else min(abs(cell.lo2), abs(cell.hi2))
    margin = (hc * hc + hs * hs) / (8.0 * (cell.lo1**2 + s_abs_min**2)) + 1e-12
    alphas, betas, glo, ghi = [], [], [], []
    for c0, s0 in ((cell.lo1, cell.lo2), (cell.hi1, cell.hi2)):
        dc, ds = arctan_gradient(c0, s0)
        plane = float(arctan_value(c0, s0)) + dc * (C - c0) + ds * (S - s0)
        base = float(arctan_value(c0, s0)) - dc * c0 - ds * s0
        alphas.append(ds)
        betas.append(dc)
        glo.append(base - float(np.max(plane - F)) - margin)
        ghi.append(base + float(np.max(F - plane)) + margin)
    return PlaneCoefficients(tuple(alphas), tuple(betas), tuple(glo), tuple(ghi))


# ---------------------------------------------------------------------------
# blocks


def clipped_cells(cells: list[Rect], lo1: float, hi1: float, lo2: float, hi2: float) -> list[Rect]:
    out = []
    for cell in cells:
        r = cell.clip(lo1, hi1, lo2, hi2)
        if r is not None:
            out.append(r)
    return out


def cs_cells_for(grid: PartitionGrid, bounds: BoundsStore, l: int, t: int) -> list[Rect]:
    return clipped_cells(grid.cs_cells, *bounds.c[l, t], *bounds.s[l, t])


def cc_cells_for(case: NetworkCase, grid: PartitionGrid, bounds: BoundsStore, l: int, t: int) -> list[Rect]:
    br = case.branches[l]
    return clipped_cells(grid.cc_cells, *bounds.cbb[br.from_bus, t], *bounds.cbb[br.to_bus, t])


def build_overestimator_OE(l: int, t: int, cells: list[Rect]) -> ModelInstance:
    """Piecewise secant over-estimator of ``c^2 + s^2`` on the (c, s) cells."""
    m = ModelInstance("oe")
    c, s, cs = ("c", l, t), ("s", l, t), ("cs", l, t)
    m.add_var(c)
    m.add_var(s)
    m.add_var(cs)
    sum_c, sum_s, sum_cs, sum_sigma = {c: -1.0}, {s: -1.0}, {cs: -1.0}, {}
    for i, cell in enumerate(cells):
        sig, ci, si, csi = ("sigma", l, t, i), ("c_cell", l, t, i), ("s_cell", l, t, i), ("cs_cell", l, t, i)
        m.add_var(sig, 0, 1, binary=True)
        m.add_var(ci, min(cell.lo1, 0.0), max(cell.hi1, 0.0))
        m.add_var(si, min(cell.lo2, 0.0), max(cell.hi2, 0.0))
        m.add_var(csi)
        m.add_linear(
            {csi: 1.0, ci: -(cell.lo1 + cell.hi1), si: -(cell.lo2 + cell.hi2),
             sig: cell.lo1 * cell.hi1 + cell.lo2 * cell.hi2},
            hi=0.0, name=("oe_secant", l, t, i),
        )
        m.add_linear({ci: 1.0, sig: -cell.lo1}, lo=0.0, name=("oe_c_lo", l, t, i))
        m.add_linear({ci: 1.0, sig: -cell.hi1}, hi=0.0, name=("oe_c_hi", l, t, i))
        m.add_linear({si: 1.0, sig: -cell.lo2}, lo=0.0, name=("oe_s_lo", l, t, i))
        m.add_linear({si: 1.0, sig: -cell.hi2}, hi=0.0, name=("oe_s_hi", l, t, i))
        sum_c[ci] = 1.0
        sum_s[si] = 1.0
        sum_cs[csi] = 1.0
        sum_sigma[sig] = 1.0
    m.add_linear(sum_c, 0.0, 0.0, name=("oe_sum_c", l, t))
    m.add_linear(sum_s, 0.0, 0.0, name=("oe_sum_s", l, t))
    m.add_linear(sum_cs, 0.0, 0.0, name=("oe_sum_cs", l, t))
    m.add_linear(sum_sigma, 1.0, 1.0, name=("oe_select", l, t))
    return m


def build_underestimator_UE(l: int, t: int, b: int, k: int, cells: list[Rect]) -> ModelInstance:
    """Piecewise McCormick under-estimator of ``c_bb c_kk`` with fresh bus copies."""
    m = ModelInstance("ue")
    cbb, ckk, cc = ("cbb", b, t), ("cbb", k, t), ("cc", l, t)
    m.add_var(cbb)
    m.add_var(ckk)
    m.add_var(cc)
    sum_b, sum_k, sum_cc, sum_phi = {cbb: -1.0}, {ckk: -1.0}, {cc: -1.0}, {}
    for i, cell in enumerate(cells):
        phi, bi, ki, cci = ("phi", l, t, i), ("cbb_cell", l, t, i), ("ckk_cell", l, t, i), ("cc_cell", l, t, i)
        m.add_var(phi, 0, 1, binary=True)
        m.add_var(bi, min(cell.lo1, 0.0), max(cell.hi1, 0.0))
        m.add_var(ki, min(cell.lo2, 0.0), max(cell.hi2, 0.0))
        m.add_var(cci)
        # cc >= lo_b * ckk + lo_k * cbb - lo_b lo_k  and the same at the upper corner
        m.add_linear({cci: 1.0, ki: -cell.lo1, bi: -cell.lo2, phi: cell.lo1 * cell.lo2},
                     lo=0.0, name=("ue_low", l, t, i))
        m.add_linear({cci: 1.0, ki: -cell.hi1, bi: -cell.hi2, phi: cell.hi1 * cell.hi2},
                     lo=0.0, name=("ue_high", l, t, i))
        m.add_linear({bi: 1.0, phi: -cell.lo1}, lo=0.0, name=("ue_b_lo", l, t, i))
        m.add_linear({bi: 1.0, phi: -cell.hi1}, hi=0.0, name=("ue_b_hi", l, t, i))
        m.add_linear({ki: 1.0, phi: -cell.lo2}, lo=0.0, name=("ue_k_lo", l, t, i))
        m.add_linear({ki: 1.0, phi: -cell.hi2}, hi=0.0, name=("ue_k_hi", l, t, i))
        sum_b[bi] = 1.0
        sum_k[ki] = 1.0
        sum_cc[cci] = 1.0
        sum_phi[phi] = 1.0
    m.add_linear(sum_b, 0.0, 0.0, name=("ue_sum_b", l, t))
    m.add_linear(sum_k, 0.0, 0.0, name=("ue_sum_k", l, t))
    m.add_linear(sum_cc, 0.0, 0.0, name=("ue_sum_cc", l, t))
    m.add_linear(sum_phi, 1.0, 1.0, name=("ue_select", l, t))
    return m


def build_reverse_cone_link(l: int, t: int) -> ModelInstance:
    m = ModelInstance("link")
    m.add_var(("cs", l, t))
    m.add_var(("cc", l, t))
    m.add_linear({("cs", l, t): 1.0, ("cc", l, t): -1.0}, lo=0.0, name=("reverse_cone", l, t))
    return m


def build_angle_block(l: int, t: int, cells: list[Rect]) -> ModelInstance:
    """Per-cell plane rows for ``theta = -arctan(s/c)``, reusing the OE cell variables."""
    m = ModelInstance("angle")
    theta = ("theta", l, t)
    m.add_var(theta, -math.pi / 2, math.pi / 2)
    total = {theta: -1.0}
    for i, cell in enumerate(cells):
        sig, ci, si, th = ("sigma", l, t, i), ("c_cell", l, t, i), ("s_cell", l, t, i), ("theta_cell", l, t, i)
        for key in (sig, ci, si):
            m.add_var(key)
        m.add_var(th)
        planes = arctan_planes(cell)
        if planes.const_bounds is not None:
            lo, hi = planes.const_bounds
            m.add_linear({th: 1.0, sig: -lo}, lo=0.0, name=("angle_lo", l, t, i))
            m.add_linear({th: 1.0, sig: -hi}, hi=0.0, name=("angle_hi", l, t, i))
        else:
            for n, (a, b, glo, ghi) in enumerate(zip(planes.alpha, planes.beta, planes.gamma_lo, planes.gamma_hi)):
                m.add_linear({th: 1.0, si: -a, ci: -b, sig: -glo}, lo=0.0, name=("angle_under", l, t, i, n))
                m.add_linear({th: 1.0, si: -a, ci: -b, sig: -ghi}, hi=0.0, name=("angle_over", l, t, i, n))
        total[th] = 1.0
    m.add_linear(total, 0.0, 0.0, name=("angle_sum", l, t))
    return m


def cycle_is_admissible(case: NetworkCase, cycle) -> bool:
    """Angle sums can only wrap when the limits around the cycle reach 2*pi."""
    return (
        all(case.branches[l].angle_max <= math.pi / 2 for l in cycle.branches)
        and sum(case.branches[l].angle_max for l in cycle.branches) < 2 * math.pi - 1e-9
    )


def build_cycle_CC(case: NetworkCase, cycles: CycleSet, active: set[tuple[int, int]],
                   cells_of: Mapping[tuple[int, int], list[Rect]]) -> ModelInstance:
    """Angle blocks for branches on active cycles plus one KVL row per (cycle, period)."""
    m = ModelInstance("cycles")
    done: set[tuple[int, int]] = set()
    for ci, t in sorted(active):
        cyc = cycles.cycles[ci]
        for l in cyc.branches:
            if (l, t) not in cells_of:
                raise KeyError(f"cycle {ci}: branch {l} at period {t} has no partition grid")
            if (l, t) not in done:
                m.merge(build_angle_block(l, t, cells_of[l, t]))
                done.add((l, t))
        m.add_linear({("theta", l, t): float(sg) for l, sg in zip(cyc.branches, cyc.signs)},
                     0.0, 0.0, name=("kvl", ci, t))
    return m


# ---------------------------------------------------------------------------
# refinement


def kvl_residuals(case: NetworkCase, cycles: CycleSet, point: Mapping[tuple, float]) -> dict[tuple[int, int], float]:
    out = {}
    for ci, cyc in enumerate(cycles):
        for t in case.periods:
            total = 0.0
            for l, sg in zip(cyc.branches, cyc.signs):
                total += sg * float(arctan_value(point.get(("c", l, t), 1.0), point.get(("s", l, t), 0.0)))
            out[ci, t] = abs(total)
    return out


def _bisect(cells: list[Rect], box: Rect, a: float, b: float) -> bool:
    w1 = max(box.hi1 - box.lo1, 1e-12)
    w2 = max(box.hi2 - box.lo2, 1e-12)
    for i, cell in enumerate(cells):
        if cell.contains(a, b):
            n1 = (cell.hi1 - cell.lo1) / w1
            n2 = (cell.hi2 - cell.lo2) / w2
            if max(n1, n2) < MIN_CELL_WIDTH:
                return False
            cells[i:i + 1] = list(cell.split(0 if n1 >= n2 else 1))
            return True
    return False


def initial_boxes(case: NetworkCase, base: BoundsStore, l: int, t: int) -> tuple[Rect, Rect]:
    br = case.branches[l]
    return (
        Rect(*base.c[l, t], *base.s[l, t]),
        Rect(*base.cbb[br.from_bus, t], *base.cbb[br.to_bus, t]),
    )


def refine_partitions(
    case: NetworkCase,
    state: RefinementState,
    base: BoundsStore,
    violations: list[tuple[tuple[int, int], float]],
    point: Mapping[tuple, float],
    k: int = 10,
    eps: float = 1e-4,
    cycles: CycleSet | None = None,
    kvl_eps: float = 1e-4,
) -> bool:
    """Add 2x2 grids or bisect the cell holding ``point`` for the worst violations.

    ``violations`` pairs (branch, period) with a cone violation, largest first.
    When ``cycles`` is given, cycles whose KVL residual exceeds ``kvl_eps`` are
    activated and their branches join the candidate list.  Returns whether the
    state changed.
    """
    changed = False
    candidates: dict[tuple[int, int], float] = {}
    for key, eps_v in violations[:k]:
        if eps_v >= eps:
            candidates[key] = max(candidates.get(key, 0.0), eps_v)
    if cycles is not None:
        resid = kvl_residuals(case, cycles, point)
        worst = sorted(((r, key) for key, r in resid.items() if r > kvl_eps), reverse=True)[:k]
        for r, (ci, t) in worst:
            cyc = cycles.cycles[ci]
            if not cycle_is_admissible(case, cyc):
                continue
            if (ci, t) not in state.cycles:
                state.cycles.add((ci, t))
                changed = True
            for l in cyc.branches:
                candidates[l, t] = max(candidates.get((l, t), 0.0), r)
    for (l, t), _ in sorted(candidates.items(), key=lambda kv: -kv[1]):
        if (l, t) not in state.grids:
            state.grids[l, t] = PartitionGrid.initial(*initial_boxes(case, base, l, t))
            changed = True
            continue
        grid = state.grids[l, t]
        br = case.branches[l]
        c, s = point.get(("c", l, t)), point.get(("s", l, t))
        if c is not None and s is not None:
            changed |= _bisect(grid.cs_cells, grid.box_cs, c, s)
        cb, ck = point.get(("cbb", br.from_bus, t)), point.get(("cbb", br.to_bus, t))
        if cb is not None and ck is not None:
            changed |= _bisect(grid.cc_cells, grid.box_cc, cb, ck)
    return changed
