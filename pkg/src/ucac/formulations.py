"""Master problems and the nonlinear subproblem, plus lifting utilities.

* ``build_master_M``: UC skeleton + lifted network with the rotated cone
  ``c^2 + s^2 <= c_bb c_kk`` per branch-period; only ``y`` is binary.
* ``build_master_Mf``: the same relaxation with the commitment fixed, the
  commitment's bound store, and every active partition/cycle block.
* ``build_subproblem_SP``: UC skeleton + rectangular network with the
  commitment fixed (a continuous nonconvex problem).

Only one ``(c, s)`` pair is stored per branch, oriented from -> to.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .acopf import build_rpqv, flow_coefficients, _balance_terms
from .case import BoundsStore, CycleSet, NetworkCase, cycle_basis, initial_cs_bounds
from .model import INF, ModelInstance
from .refinement import (
    RefinementState,
    add_integer_cut,
    arctan_value,
    build_cycle_CC,
    build_overestimator_OE,
    build_reverse_cone_link,
    build_underestimator_UE,
    cc_cells_for,
    cs_cells_for,
)
from .uc import CommitmentTrajectory, build_uc_skeleton, fix_commitment, validate_commitment


class CommitmentError(ValueError):
    """A commitment violates the unit-commitment logic constraints."""


def build_lifted_network(case: NetworkCase, bounds: BoundsStore) -> ModelInstance:
    """Network block in the lifted (c_bb, c, s) variables."""
    m = ModelInstance("lifted-network")
    for t in case.periods:
        for b in range(case.n_bus):
            m.add_var(("cbb", b, t), *bounds.cbb[b, t])
        for l, br in enumerate(case.branches):
            m.add_var(("c", l, t), *bounds.c[l, t])
            m.add_var(("s", l, t), *bounds.s[l, t])
            smax = br.s_max if math.isfinite(br.s_max) else INF
            for name in ("pf", "qf", "pt", "qt"):
                m.add_var((name, l, t), -smax, smax)
        for g in range(case.n_gen):
            m.add_var(("p", g, t))
            m.add_var(("q", g, t))
        for i in range(len(case.sync_condensers)):
            m.add_var(("qsc", i, t))

    for t in case.periods:
        for l, br in enumerate(case.branches):
            b, k = br.from_bus, br.to_bus
            c, s = ("c", l, t), ("s", l, t)
            for name, (a_self, a_c, a_s) in flow_coefficients(case, l).items():
                own = ("cbb", b, t) if name in ("pf", "qf") else ("cbb", k, t)
                m.add_linear({(name, l, t): -1.0, own: a_self, c: a_c, s: a_s}, 0.0, 0.0, name=(name, l, t))
            m.add_rotated_cone([c, s], ("cbb", b, t), ("cbb", k, t), name=("soc", l, t))
            if math.isfinite(br.s_max):
                for pn, qn in (("pf", "qf"), ("pt", "qt")):
                    m.add_quadratic({}, [((pn, l, t), (pn, l, t), 1.0), ((qn, l, t), (qn, l, t), 1.0)],
                                    hi=br.s_max**2, name=("thermal_" + pn[1], l, t))
            if br.angle_max < math.pi / 2 - 1e-12:
                tan = math.tan(br.angle_max)
                m.add_linear({s: 1.0, c: -tan}, hi=0.0, name=("angle_hi", l, t))
                m.add_linear({s: -1.0, c: -tan}, hi=0.0, name=("angle_lo", l, t))
        for b, bus in enumerate(case.buses):
            p_terms, q_terms = _balance_terms(case, b, t)
            p_terms[("cbb", b, t)] = bus.g_sh
            q_terms[("cbb", b, t)] = -bus.b_sh
            m.add_linear(p_terms, -case.p_demand[b, t], -case.p_demand[b, t], name=("p_balance", b, t))
            m.add_linear(q_terms, -case.q_demand[b, t], -case.q_demand[b, t], name=("q_balance", b, t))
    return m


def build_master_M(case: NetworkCase, refinement: RefinementState | None = None,
                   bounds: BoundsStore | None = None) -> ModelInstance:
    """Mixed-integer SOC master; carries the integer cuts of ``refinement``."""
    m = build_uc_skeleton(case)
    m.name = "master"
    m.merge(build_lifted_network(case, bounds or initial_cs_bounds(case)))
    if refinement is not None:
        for y in refinement.cuts:
            add_integer_cut(m, y, case.n_gen, case.horizon)
    return m


def commitment_bounds_store(case: NetworkCase, refinement: RefinementState | None,
                            d: CommitmentTrajectory) -> BoundsStore:
    if refinement is not None and d.key() in refinement.bounds:
        return refinement.bounds[d.key()]
    return initial_cs_bounds(case)


def build_master_Mf(case: NetworkCase, d: CommitmentTrajectory, refinement: RefinementState | None = None,
                    bounds: BoundsStore | None = None, cycles: CycleSet | None = None) -> ModelInstance:
    """SOC relaxation at a fixed commitment with partition and cycle blocks."""
    _check(case, d)
    store = bounds or commitment_bounds_store(case, refinement, d)
    m = build_uc_skeleton(case)
    m.name = "master-fixed"
    m.merge(build_lifted_network(case, store))
    fix_commitment(m, case, d)
    if refinement is not None:
        add_refinement_blocks(m, case, refinement, store, cycles)
    return m


def add_refinement_blocks(m: ModelInstance, case: NetworkCase, refinement: RefinementState,
                          store: BoundsStore, cycles: CycleSet | None = None) -> ModelInstance:
    cells_of = {}
    for (l, t), grid in sorted(refinement.grids.items()):
        br = case.branches[l]
        cs_cells = cs_cells_for(grid, store, l, t)
        cc_cells = cc_cells_for(case, grid, store, l, t)
        cells_of[l, t] = cs_cells
        m.merge(build_overestimator_OE(l, t, cs_cells))
        m.merge(build_underestimator_UE(l, t, br.from_bus, br.to_bus, cc_cells))
        m.merge(build_reverse_cone_link(l, t))
    if refinement.cycles:
        cyc = cycles if cycles is not None else cycle_basis(case)
        m.merge(build_cycle_CC(case, cyc, refinement.cycles, cells_of))
    return m


def build_subproblem_SP(case: NetworkCase, d: CommitmentTrajectory) -> ModelInstance:
    """Nonconvex multi-period network dispatch at a fixed commitment."""
    _check(case, d)
    m = build_uc_skeleton(case)
    m.name = "subproblem"
    m.merge(build_rpqv(case))
    fix_commitment(m, case, d)
    return m


def _check(case: NetworkCase, d: CommitmentTrajectory) -> None:
    problems = validate_commitment(d, case)
    if problems:
        raise CommitmentError("commitment violates logic constraints:\n  " + "\n  ".join(problems))


# ---------------------------------------------------------------------------
# lifting


@dataclass
class LiftedPoint:
    cbb: dict[tuple[int, int], float] = field(default_factory=dict)
    c: dict[tuple[int, int], float] = field(default_factory=dict)
    s: dict[tuple[int, int], float] = field(default_factory=dict)

    def as_point(self) -> dict[tuple, float]:
        out = {("cbb",) + k: v for k, v in self.cbb.items()}
        out.update({("c",) + k: v for k, v in self.c.items()})
        out.update({("s",) + k: v for k, v in self.s.items()})
        return out


def lift_pair(vb: complex, vk: complex) -> tuple[float, float, float, float]:
    """(c_bb, c_kk, c_bk, s_bk) for two complex voltages."""
    return (
        vb.real**2 + vb.imag**2,
        vk.real**2 + vk.imag**2,
        vb.real * vk.real + vb.imag * vk.imag,
        vb.real * vk.imag - vk.real * vb.imag,
    )


def lift_voltage_to_cs(case: NetworkCase, v: np.ndarray) -> LiftedPoint:
    """Lift complex voltages of shape (n_bus, T) to (c_bb, c, s)."""
    out = LiftedPoint()
    for t in case.periods:
        for b in range(case.n_bus):
            out.cbb[b, t] = float(v[b, t].real ** 2 + v[b, t].imag ** 2)
        for l, br in enumerate(case.branches):
            _, _, c, s = lift_pair(complex(v[br.from_bus, t]), complex(v[br.to_bus, t]))
            out.c[l, t] = c
            out.s[l, t] = s
    return out


def point_from_lifted(point: Mapping[tuple, float]) -> LiftedPoint:
    out = LiftedPoint()
    for key, val in point.items():
        if key[0] in ("cbb", "c", "s") and len(key) == 3:
            getattr(out, key[0])[key[1], key[2]] = float(val)
    return out


def cone_violations(case: NetworkCase, point: LiftedPoint | Mapping[tuple, float]) -> list[tuple[tuple[int, int], float]]:
    """``c_bb c_kk - (c^2 + s^2)`` clipped at 0 per (branch, period), largest first."""
    if not isinstance(point, LiftedPoint):
        point = point_from_lifted(point)
    out = []
    for (l, t), c in point.c.items():
        br = case.branches[l]
        s = point.s[l, t]
        eps = point.cbb[br.from_bus, t] * point.cbb[br.to_bus, t] - (c * c + s * s)
        out.append(((l, t), max(0.0, eps)))
    out.sort(key=lambda kv: (-kv[1], kv[0]))
    return out


def recover_voltages(case: NetworkCase, point: Mapping[tuple, float]) -> np.ndarray:
    """Voltages consistent with the lifted magnitudes and spanning-tree angles."""
    v = np.zeros((case.n_bus, case.horizon), dtype=complex)
    adj: list[list[tuple[int, int]]] = [[] for _ in range(case.n_bus)]
    for l, br in enumerate(case.branches):
        adj[br.from_bus].append((br.to_bus, l))
        adj[br.to_bus].append((br.from_bus, l))
    for t in case.periods:
        mag = [math.sqrt(max(point.get(("cbb", b, t), 1.0), 0.0)) for b in range(case.n_bus)]
        ang = [None] * case.n_bus
        for root in case.reference_buses():
            ang[root] = 0.0
            queue = deque([root])
            while queue:
                b = queue.popleft()
                for k, l in adj[b]:
                    if ang[k] is not None:
                        continue
                    # s_bk = |v_b||v_k| sin(theta_k - theta_b)
                    diff = math.atan2(point.get(("s", l, t), 0.0), point.get(("c", l, t), 1.0))
                    ang[k] = ang[b] + (diff if case.branches[l].from_bus == b else -diff)
                    queue.append(k)
        for b in range(case.n_bus):
            v[b, t] = mag[b] * complex(math.cos(ang[b]), math.sin(ang[b]))
    return v


def subproblem_start(case: NetworkCase, sp: ModelInstance, relaxed: Mapping[tuple, float] | None) -> np.ndarray:
    """Warm start for the subproblem from a relaxation point (flat start if absent)."""
    start: dict[tuple, float] = {}
    if relaxed:
        start.update({k: v for k, v in relaxed.items() if k in sp})
        v = recover_voltages(case, relaxed)
    else:
        v = np.ones((case.n_bus, case.horizon), dtype=complex)
    for b in range(case.n_bus):
        for t in case.periods:
            start["vr", b, t] = float(v[b, t].real)
            start["vj", b, t] = float(v[b, t].imag)
    return sp.vector(start)


def lift_solution(case: NetworkCase, solution: Mapping[tuple, float], refinement: RefinementState | None = None,
                  bounds: BoundsStore | None = None, cycles: CycleSet | None = None) -> dict[tuple, float]:
    """Map a rectangular-voltage solution into the variables of (M)/(Mf)."""
    point = dict(solution)
    v = np.zeros((case.n_bus, case.horizon), dtype=complex)
    for b in range(case.n_bus):
        for t in case.periods:
            v[b, t] = complex(solution.get(("vr", b, t), 0.0), solution.get(("vj", b, t), 0.0))
    lifted = lift_voltage_to_cs(case, v)
    point.update(lifted.as_point())
    if refinement is None:
        return point
    store = bounds or initial_cs_bounds(case)
    for (l, t), grid in refinement.grids.items():
        br = case.branches[l]
        c, s = lifted.c[l, t], lifted.s[l, t]
        cb, ck = lifted.cbb[br.from_bus, t], lifted.cbb[br.to_bus, t]
        cs_cells = cs_cells_for(grid, store, l, t)
        cc_cells = cc_cells_for(case, grid, store, l, t)
        point["cs", l, t] = c * c + s * s
        point["cc", l, t] = cb * ck
        point["theta", l, t] = float(arctan_value(c, s))
        hit = next((i for i, cell in enumerate(cs_cells) if cell.contains(c, s, 0.0)), None)
        if hit is None:
            hit = next(i for i, cell in enumerate(cs_cells) if cell.contains(c, s))
        for i in range(len(cs_cells)):
            on = i == hit
            point["sigma", l, t, i] = 1.0 if on else 0.0
            point["c_cell", l, t, i] = c if on else 0.0
            point["s_cell", l, t, i] = s if on else 0.0
            point["cs_cell", l, t, i] = point["cs", l, t] if on else 0.0
            point["theta_cell", l, t, i] = point["theta", l, t] if on else 0.0
        hit = next((i for i, cell in enumerate(cc_cells) if cell.contains(cb, ck, 0.0)), None)
        if hit is None:
            hit = next(i for i, cell in enumerate(cc_cells) if cell.contains(cb, ck))
        for i in range(len(cc_cells)):
            on = i == hit
            point["phi", l, t, i] = 1.0 if on else 0.0
            point["cbb_cell", l, t, i] = cb if on else 0.0
            point["ckk_cell", l, t, i] = ck if on else 0.0
            point["cc_cell", l, t, i] = point["cc", l, t] if on else 0.0
    return point
