"""Three-binary unit-commitment skeleton: constraints, logic checks and costs.

Periods are indexed ``0 .. T-1`` internally; hour ``t + 1`` in reports.
History terms (``u``/``w`` before the first period) are constants derived from
each generator's ``initial_status``: a unit on for ``h`` hours started up at
index ``-h``, a unit off for ``h`` hours shut down at index ``-h``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .case import Generator, NetworkCase
from .model import ModelInstance

log = logging.getLogger(__name__)


def history(gen: Generator) -> tuple[dict[int, float], dict[int, float]]:
    """Constant startup/shutdown indicators for indices before period 0."""
    h = abs(gen.initial_status)
    if gen.initial_status > 0:
        return {-h: 1.0}, {}
    return {}, {-h: 1.0}


def initial_on(gen: Generator) -> float:
    return 1.0 if gen.initial_status > 0 else 0.0


def startup_window(gen: Generator, tau: int, t: int) -> range:
    """Shutdown indices that allow a type-``tau`` start at period ``t``.

    A start after ``h`` offline hours uses segment ``tau`` when
    ``T_tau <= h < T_{tau+1}``; the last segment has no upper limit.
    """
    segs = gen.startup_segments
    lo = t - segs[tau + 1].hours_offline + 1
    hi = t - segs[tau].hours_offline
    return range(lo, hi + 1)


@dataclass
class CommitmentTrajectory:
    """Commitment decisions ``d = [y, u, w]`` plus startup-segment indicators."""

    y: np.ndarray  # (G, T)
    u: np.ndarray
    w: np.ndarray
    delta: list[np.ndarray] = field(default_factory=list)  # per gen, (S_g, T)

    @classmethod
    def from_y(cls, case: NetworkCase, y) -> "CommitmentTrajectory":
        """Complete ``y`` with the startups, shutdowns and cheapest allowed segments."""
        y = np.asarray(y, dtype=float).reshape(case.n_gen, case.horizon)
        u = np.zeros_like(y)
        w = np.zeros_like(y)
        for g, gen in enumerate(case.generators):
            prev = initial_on(gen)
            for t in case.periods:
                diff = y[g, t] - prev
                u[g, t] = max(diff, 0.0)
                w[g, t] = max(-diff, 0.0)
                prev = y[g, t]
        d = cls(y, u, w)
        d.delta = derive_segments(case, u, w)
        return d

    def key(self) -> tuple[int, ...]:
        return tuple(int(round(v)) for v in self.y.ravel())

    def to_dict(self) -> dict:
        return {
            "y": self.y.tolist(),
            "u": self.u.tolist(),
            "w": self.w.tolist(),
            "delta": [d.tolist() for d in self.delta],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CommitmentTrajectory":
        return cls(
            np.asarray(data["y"], float),
            np.asarray(data["u"], float),
            np.asarray(data["w"], float),
            [np.asarray(d, float) for d in data.get("delta", [])],
        )


def _w_value(case: NetworkCase, w: np.ndarray, g: int, t: int) -> float:
    if t >= 0:
        return float(w[g, t]) if t < case.horizon else 0.0
    return history(case.generators[g])[1].get(t, 0.0)


def _u_value(case: NetworkCase, u: np.ndarray, g: int, t: int) -> float:
    if t >= 0:
        return float(u[g, t]) if t < case.horizon else 0.0
    return history(case.generators[g])[0].get(t, 0.0)


def derive_segments(case: NetworkCase, u: np.ndarray, w: np.ndarray) -> list[np.ndarray]:
    """Assign each startup to the cheapest segment its offline time allows."""
    out = []
    for g, gen in enumerate(case.generators):
        S = len(gen.startup_segments)
        delta = np.zeros((S, case.horizon))
        for t in case.periods:
            if u[g, t] <= 0:
                continue
            chosen = S - 1
            for tau in range(S - 1):
                if sum(_w_value(case, w, g, tp) for tp in startup_window(gen, tau, t)) > 0.5:
                    chosen = tau
                    break
            delta[chosen, t] = u[g, t]
        out.append(delta)
    return out


def validate_commitment(d: CommitmentTrajectory, case: NetworkCase, tol: float = 1e-6) -> list[str]:
    """Every violated logic, minimum up/down time or segment constraint."""
    problems = []
    G, T = case.n_gen, case.horizon
    for name in ("y", "u", "w"):
        arr = getattr(d, name)
        if arr.shape != (G, T):
            return [f"{name}: expected shape {(G, T)}, got {arr.shape}"]
    for g, gen in enumerate(case.generators):
        for t in range(T):
            yv = d.y[g, t]
            if min(abs(yv), abs(yv - 1)) > tol:
                problems.append(f"{gen.id} t={t + 1}: y={yv} is not binary")
            prev = d.y[g, t - 1] if t > 0 else initial_on(gen)
            if abs((yv - prev) - (d.u[g, t] - d.w[g, t])) > tol:
                problems.append(f"{gen.id} t={t + 1}: logic y_t - y_t-1 = u_t - w_t violated")
            for name in ("u", "w"):
                v = getattr(d, name)[g, t]
                if v < -tol or v > 1 + tol:
                    problems.append(f"{gen.id} t={t + 1}: {name}={v} outside [0, 1]")
            ups = sum(_u_value(case, d.u, g, tp) for tp in range(t - gen.min_up + 1, t + 1))
            if ups > yv + tol:
                problems.append(f"{gen.id} t={t + 1}: minimum up time {gen.min_up}h violated")
            downs = sum(_w_value(case, d.w, g, tp) for tp in range(t - gen.min_down + 1, t + 1))
            if downs > 1 - yv + tol:
                problems.append(f"{gen.id} t={t + 1}: minimum down time {gen.min_down}h violated")
        if d.delta:
            delta = d.delta[g]
            S = len(gen.startup_segments)
            for t in range(T):
                if abs(delta[:, t].sum() - d.u[g, t]) > tol:
                    problems.append(f"{gen.id} t={t + 1}: startup segments do not sum to u")
                for tau in range(S - 1):
                    allowed = sum(_w_value(case, d.w, g, tp) for tp in startup_window(gen, tau, t))
                    if delta[tau, t] > allowed + tol:
                        problems.append(f"{gen.id} t={t + 1}: startup segment {tau + 1} not allowed")
    return problems


def build_uc_skeleton(case: NetworkCase) -> ModelInstance:
    """Variables, constraints and objective of the UC skeleton (no network)."""
    m = ModelInstance("uc-skeleton")
    T = case.horizon
    for g, gen in enumerate(case.generators):
        S = len(gen.startup_segments)
        if S == 0:
            raise ValueError(f"generator {gen.id}: no startup segments")
        longest = max(gen.min_up, gen.min_down, gen.startup_segments[-1].hours_offline)
        if longest > T + abs(gen.initial_status):
            log.warning("generator %s: history window exceeds horizon + recorded status; clamped", gen.id)
        for t in range(T):
            m.add_var(("y", g, t), 0, 1, binary=True)
            m.add_var(("u", g, t), 0, 1)
            m.add_var(("w", g, t), 0, 1)
            for tau in range(S):
                m.add_var(("delta", g, tau, t), 0, 1)
            m.add_var(("p", g, t), 0, max(gen.p_max, 0.0))
            m.add_var(("r", g, t), 0, max(gen.p_max, 0.0))
            m.add_var(("q", g, t), min(gen.q_min, 0.0), max(gen.q_max, 0.0))
            m.add_var(("cp", g, t))
    for sc_i, sc in enumerate(case.sync_condensers):
        for t in range(T):
            m.add_var(("qsc", sc_i, t), sc.q_min, sc.q_max)

    objective: dict = {}
    for g, gen in enumerate(case.generators):
        hist_u, hist_w = history(gen)
        y0 = initial_on(gen)
        S = len(gen.startup_segments)
        for t in range(T):
            y, u, w = ("y", g, t), ("u", g, t), ("w", g, t)
            p, r, q, cp = ("p", g, t), ("r", g, t), ("q", g, t), ("cp", g, t)

            # production cost epigraph
            lin = {p: gen.cost1, y: gen.cost0, cp: -1.0}
            if gen.cost2 > 0:
                m.add_quadratic(lin, [(p, p, gen.cost2)], hi=0.0, name=("cost", g, t))
            else:
                m.add_linear(lin, hi=0.0, name=("cost", g, t))
            objective[cp] = 1.0

            # startup segments
            for tau in range(S - 1):
                terms = {("delta", g, tau, t): 1.0}
                const = 0.0
                for tp in startup_window(gen, tau, t):
                    if tp >= 0:
                        terms[("w", g, tp)] = terms.get(("w", g, tp), 0.0) - 1.0
                    else:
                        const += hist_w.get(tp, 0.0)
                m.add_linear(terms, hi=const, name=("segment", g, tau, t))
            seg = {("delta", g, tau, t): 1.0 for tau in range(S)}
            seg[u] = -1.0
            m.add_linear(seg, 0.0, 0.0, name=("segment_sum", g, t))
            for tau, s in enumerate(gen.startup_segments):
                objective[("delta", g, tau, t)] = s.cost
            objective[w] = gen.shutdown_cost

            # minimum up / down time
            terms, const = {y: -1.0}, 0.0
            for tp in range(t - gen.min_up + 1, t + 1):
                if tp >= 0:
                    terms[("u", g, tp)] = terms.get(("u", g, tp), 0.0) + 1.0
                else:
                    const += hist_u.get(tp, 0.0)
            m.add_linear(terms, hi=-const, name=("min_up", g, t))
            terms, const = {y: 1.0}, 0.0
            for tp in range(t - gen.min_down + 1, t + 1):
                if tp >= 0:
                    terms[("w", g, tp)] = terms.get(("w", g, tp), 0.0) + 1.0
                else:
                    const += hist_w.get(tp, 0.0)
            m.add_linear(terms, hi=1.0 - const, name=("min_down", g, t))

            # logic
            if t == 0:
                m.add_linear({y: 1.0, u: -1.0, w: 1.0}, y0, y0, name=("logic", g, t))
            else:
                m.add_linear({y: 1.0, ("y", g, t - 1): -1.0, u: -1.0, w: 1.0}, 0.0, 0.0, name=("logic", g, t))

            # capacity, written on output above minimum: p - Pmin*y
            span = gen.p_max - gen.p_min
            base = {p: 1.0, r: 1.0, y: -gen.p_min - span}
            su = {u: gen.p_max - gen.startup_capability}
            sd = {("w", g, t + 1): gen.p_max - gen.shutdown_capability} if t + 1 < T else {}
            if gen.min_up == 1:
                m.add_linear({**base, **su}, hi=0.0, name=("capacity_su", g, t))
                m.add_linear({**base, **sd}, hi=0.0, name=("capacity_sd", g, t))
            else:
                m.add_linear({**base, **su, **sd}, hi=0.0, name=("capacity", g, t))
            m.add_linear({p: 1.0, y: -gen.p_min}, lo=0.0, name=("p_floor", g, t))

            # ramping on output above minimum
            if t == 0:
                prev_shift = gen.initial_p - gen.p_min * y0
                m.add_linear({p: 1.0, y: -gen.p_min, r: 1.0}, hi=gen.ramp_up + prev_shift, name=("ramp_up", g, t))
                m.add_linear({p: -1.0, y: gen.p_min}, hi=gen.ramp_down - prev_shift, name=("ramp_down", g, t))
            else:
                pp, yp = ("p", g, t - 1), ("y", g, t - 1)
                m.add_linear(
                    {p: 1.0, y: -gen.p_min, r: 1.0, pp: -1.0, yp: gen.p_min},
                    hi=gen.ramp_up, name=("ramp_up", g, t),
                )
                m.add_linear(
                    {p: -1.0, y: gen.p_min, pp: 1.0, yp: -gen.p_min},
                    hi=gen.ramp_down, name=("ramp_down", g, t),
                )

            # reactive limits
            m.add_linear({q: 1.0, y: -gen.q_min}, lo=0.0, name=("q_min", g, t))
            m.add_linear({q: 1.0, y: -gen.q_max}, hi=0.0, name=("q_max", g, t))

    for t in range(T):
        m.add_linear(
            {("r", g, t): 1.0 for g in range(case.n_gen)}, lo=float(case.reserve[t]), name=("reserve", t)
        )
    m.set_objective(objective)
    return m


def commitment_bounds(case: NetworkCase, d: CommitmentTrajectory) -> dict[tuple, float]:
    """Variable values that fix a model's commitment to ``d``."""
    fixed = {}
    if not d.delta:
        d.delta = derive_segments(case, d.u, d.w)
    for g in range(case.n_gen):
        for t in case.periods:
            fixed["y", g, t] = float(round(d.y[g, t]))
            fixed["u", g, t] = float(d.u[g, t])
            fixed["w", g, t] = float(d.w[g, t])
            for tau in range(d.delta[g].shape[0]):
                fixed["delta", g, tau, t] = float(d.delta[g][tau, t])
    return fixed


def fix_commitment(model: ModelInstance, case: NetworkCase, d: CommitmentTrajectory) -> ModelInstance:
    for key, value in commitment_bounds(case, d).items():
        if key in model:
            model.fix(key, value)
    return model


@dataclass(frozen=True)
class CostBreakdown:
    production: float
    startup: float
    shutdown: float

    @property
    def total(self) -> float:
        return self.production + self.startup + self.shutdown


def evaluate_cost(solution: Mapping[tuple, float], case: NetworkCase) -> CostBreakdown:
    """Total cost of a point; production uses max(quadratic, epigraph value)."""
    fp = fsu = fsd = 0.0
    for g, gen in enumerate(case.generators):
        for t in case.periods:
            p = solution.get(("p", g, t), 0.0)
            y = solution.get(("y", g, t), 0.0)
            quad = gen.cost2 * p * p + gen.cost1 * p + gen.cost0 * y
            cp = solution.get(("cp", g, t))
            fp += quad if cp is None else max(quad, cp)
            for tau, seg in enumerate(gen.startup_segments):
                fsu += seg.cost * solution.get(("delta", g, tau, t), 0.0)
            fsd += gen.shutdown_cost * solution.get(("w", g, t), 0.0)
    return CostBreakdown(fp, fsu, fsd)
