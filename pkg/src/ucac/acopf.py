"""Rectangular power-voltage network model and physical residual checks.

Flows use the rectangular products

    c_bk = vr_b vr_k + vj_b vj_k,   s_bk = vr_b vj_k - vr_k vj_b

so that ``p_f = G_ff |v_b|^2 + G_ft c_bk - B_ft s_bk`` and, on the to side,
``p_t = G_tt |v_k|^2 + G_tf c_bk + B_tf s_bk`` (``s_kb = -s_bk``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .case import NetworkCase
from .model import INF, ModelInstance

FEAS_TOL = 1e-6


def flow_coefficients(case: NetworkCase, l: int) -> dict[str, tuple[float, float, float]]:
    """Coefficients of (c_bb or c_kk, c_bk, s_bk) in each flow of branch ``l``."""
    a = case.admittances[l]
    return {
        "pf": (a.g_ff, a.g_ft, -a.b_ft),
        "qf": (-a.b_ff, -a.b_ft, -a.g_ft),
        "pt": (a.g_tt, a.g_tf, a.b_tf),
        "qt": (-a.b_tt, -a.b_tf, a.g_tf),
    }


def branch_flows(case: NetworkCase, l: int, vb: complex, vk: complex) -> dict[str, float]:
    """Flows on branch ``l`` for complex bus voltages (rectangular formulas)."""
    cbb = abs(vb) ** 2
    ckk = abs(vk) ** 2
    c = vb.real * vk.real + vb.imag * vk.imag
    s = vb.real * vk.imag - vk.real * vb.imag
    out = {}
    for name, (a_self, a_c, a_s) in flow_coefficients(case, l).items():
        own = cbb if name in ("pf", "qf") else ckk
        out[name] = a_self * own + a_c * c + a_s * s
    return out


def _voltage_products(b: int, k: int, t: int):
    vrb, vjb, vrk, vjk = ("vr", b, t), ("vj", b, t), ("vr", k, t), ("vj", k, t)
    sq_b = [(vrb, vrb, 1.0), (vjb, vjb, 1.0)]
    sq_k = [(vrk, vrk, 1.0), (vjk, vjk, 1.0)]
    c = [(vrb, vrk, 1.0), (vjb, vjk, 1.0)]
    s = [(vrb, vjk, 1.0), (vrk, vjb, -1.0)]
    return sq_b, sq_k, c, s


def _scaled(terms, factor):
    return [(a, b, factor * v) for a, b, v in terms]


def build_rpqv(case: NetworkCase) -> ModelInstance:
    """Nonconvex network block: balances, flows, voltage box, thermal limits.

    Also fixes ``vj = 0`` and ``vr >= 0`` at one reference bus per connected
    component and bounds each branch's angle difference by its ``angle_max``.
    """
    m = ModelInstance("rpqv")
    T = case.horizon
    refs = set(case.reference_buses())
    for t in range(T):
        for b, bus in enumerate(case.buses):
            vmax = bus.v_max
            if b in refs:
                m.add_var(("vr", b, t), 0.0, vmax)
                m.add_var(("vj", b, t), 0.0, 0.0)
            else:
                m.add_var(("vr", b, t), -vmax, vmax)
                m.add_var(("vj", b, t), -vmax, vmax)
        for l, br in enumerate(case.branches):
            smax = br.s_max if math.isfinite(br.s_max) else INF
            for name in ("pf", "qf", "pt", "qt"):
                m.add_var((name, l, t), -smax, smax)
        for g in range(case.n_gen):
            m.add_var(("p", g, t))
            m.add_var(("q", g, t))
        for i in range(len(case.sync_condensers)):
            m.add_var(("qsc", i, t))

    for t in range(T):
        for l, br in enumerate(case.branches):
            b, k = br.from_bus, br.to_bus
            sq_b, sq_k, c, s = _voltage_products(b, k, t)
            for name, (a_self, a_c, a_s) in flow_coefficients(case, l).items():
                own = sq_b if name in ("pf", "qf") else sq_k
                quad = _scaled(own, a_self) + _scaled(c, a_c) + _scaled(s, a_s)
                m.add_quadratic({(name, l, t): -1.0}, quad, 0.0, 0.0, name=(name, l, t))
            if math.isfinite(br.s_max):
                for pn, qn in (("pf", "qf"), ("pt", "qt")):
                    m.add_quadratic(
                        {}, [((pn, l, t), (pn, l, t), 1.0), ((qn, l, t), (qn, l, t), 1.0)],
                        hi=br.s_max**2, name=("thermal_" + pn[1], l, t),
                    )
            add_angle_rows_quadratic(m, br.angle_max, c, s, (l, t))

        for b, bus in enumerate(case.buses):
            sq = [(("vr", b, t), ("vr", b, t), 1.0), (("vj", b, t), ("vj", b, t), 1.0)]
            m.add_quadratic({}, sq, bus.v_min**2, bus.v_max**2, name=("voltage", b, t))
            p_terms, q_terms = _balance_terms(case, b, t)
            m.add_quadratic(p_terms, _scaled(sq, bus.g_sh), -case.p_demand[b, t], -case.p_demand[b, t],
                            name=("p_balance", b, t))
            m.add_quadratic(q_terms, _scaled(sq, -bus.b_sh), -case.q_demand[b, t], -case.q_demand[b, t],
                            name=("q_balance", b, t))
    return m


def _balance_terms(case: NetworkCase, b: int, t: int) -> tuple[dict, dict]:
    p_terms: dict = {}
    q_terms: dict = {}
    for l in case.branches_in(b):
        p_terms[("pt", l, t)] = p_terms.get(("pt", l, t), 0.0) + 1.0
        q_terms[("qt", l, t)] = q_terms.get(("qt", l, t), 0.0) + 1.0
    for l in case.branches_out(b):
        p_terms[("pf", l, t)] = p_terms.get(("pf", l, t), 0.0) + 1.0
        q_terms[("qf", l, t)] = q_terms.get(("qf", l, t), 0.0) + 1.0
    for g in case.generators_at(b):
        p_terms[("p", g, t)] = -1.0
        q_terms[("q", g, t)] = -1.0
    for i in case.condensers_at(b):
        q_terms[("qsc", i, t)] = -1.0
    return p_terms, q_terms


def add_angle_rows_quadratic(m: ModelInstance, angle_max: float, c, s, tag) -> None:
    """|angle difference| <= angle_max written on the products c, s (c >= 0 side)."""
    if angle_max > math.pi / 2:
        return
    if angle_max >= math.pi / 2 - 1e-12:
        m.add_quadratic({}, c, lo=0.0, name=("angle",) + tag)
        return
    tan = math.tan(angle_max)
    # -tan*c <= s <= tan*c
    m.add_quadratic({}, s + _scaled(c, -tan), hi=0.0, name=("angle_hi",) + tag)
    m.add_quadratic({}, _scaled(s, -1.0) + _scaled(c, -tan), hi=0.0, name=("angle_lo",) + tag)


@dataclass
class ResidualReport:
    max_by_family: dict[str, float] = field(default_factory=dict)
    l1_by_family: dict[str, float] = field(default_factory=dict)
    feas_tol: float = FEAS_TOL

    @property
    def max_residual(self) -> float:
        return max(self.max_by_family.values(), default=0.0)

    @property
    def feasible(self) -> bool:
        return self.max_residual <= self.feas_tol

    def add(self, family: str, value: float) -> None:
        v = max(0.0, float(value))
        self.max_by_family[family] = max(self.max_by_family.get(family, 0.0), v)
        self.l1_by_family[family] = self.l1_by_family.get(family, 0.0) + v


def voltages(solution: Mapping[tuple, float], case: NetworkCase) -> np.ndarray:
    """Complex bus voltages, shape (n_bus, T)."""
    v = np.zeros((case.n_bus, case.horizon), dtype=complex)
    for b in range(case.n_bus):
        for t in case.periods:
            v[b, t] = complex(solution.get(("vr", b, t), 0.0), solution.get(("vj", b, t), 0.0))
    return v


def rpqv_residuals(solution: Mapping[tuple, float], case: NetworkCase, feas_tol: float = FEAS_TOL) -> ResidualReport:
    """Residuals of the network equations at a point with voltages and injections.

    Flow variables missing from ``solution`` are computed from the voltages.
    """
    rep = ResidualReport(feas_tol=feas_tol)
    v = voltages(solution, case)
    for t in case.periods:
        flows = {}
        for l, br in enumerate(case.branches):
            exact = branch_flows(case, l, v[br.from_bus, t], v[br.to_bus, t])
            for name, val in exact.items():
                given = solution.get((name, l, t))
                if given is None:
                    given = val
                rep.add("flow_" + name, abs(given - val))
                flows[name, l] = given
            for side in ("f", "t"):
                if math.isfinite(br.s_max):
                    mag2 = flows["p" + side, l] ** 2 + flows["q" + side, l] ** 2
                    rep.add("thermal_" + side, mag2 - br.s_max**2)
            c = (v[br.from_bus, t] * v[br.to_bus, t].conjugate()).real
            s = -(v[br.from_bus, t] * v[br.to_bus, t].conjugate()).imag
            if br.angle_max <= math.pi / 2:
                rep.add("angle", abs(s) * math.cos(br.angle_max) - c * math.sin(br.angle_max))
        for b, bus in enumerate(case.buses):
            vm2 = abs(v[b, t]) ** 2
            rep.add("voltage", max(bus.v_min**2 - vm2, vm2 - bus.v_max**2))
            p = sum(flows["pt", l] for l in case.branches_in(b)) + sum(flows["pf", l] for l in case.branches_out(b))
            q = sum(flows["qt", l] for l in case.branches_in(b)) + sum(flows["qf", l] for l in case.branches_out(b))
            p += bus.g_sh * vm2 + case.p_demand[b, t]
            q += -bus.b_sh * vm2 + case.q_demand[b, t]
            p -= sum(solution.get(("p", g, t), 0.0) for g in case.generators_at(b))
            q -= sum(solution.get(("q", g, t), 0.0) for g in case.generators_at(b))
            q -= sum(solution.get(("qsc", i, t), 0.0) for i in case.condensers_at(b))
            rep.add("p_balance", abs(p))
            rep.add("q_balance", abs(q))
    return rep
