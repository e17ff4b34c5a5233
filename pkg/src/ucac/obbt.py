"""Optimization-based bounds tightening of the lifted (c, s) variables.

Each target variable is minimized and maximized over the continuous
relaxation of the fixed-commitment master, optionally with an objective
cutoff row.  Only certified dual bounds are used to move a variable bound, and
a failed solve leaves the old bound in place.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .backends import SolveRequest, Status, external_command, solve_conic
from .backends.conic import compile_model, solve_template
from .case import BoundsStore, CycleSet, NetworkCase
from .formulations import build_master_Mf
from .model import ModelInstance
from .refinement import RefinementState
from .uc import CommitmentTrajectory

log = logging.getLogger(__name__)

CUTOFF_SLACK = 1e-7  # relative widening of the cutoff row against round-off


@dataclass
class ObbtOutcome:
    bounds: BoundsStore
    infeasible: bool = False  # the cutoff row made the relaxation empty
    cutoff: float = math.inf  # right-hand side actually used
    solves: int = 0
    failures: int = 0
    tightened: list[tuple[str, int, int]] = field(default_factory=list)
    wall_time: float = 0.0


def cutoff_value(z_cutoff: float) -> float:
    if not math.isfinite(z_cutoff):
        return math.inf
    return z_cutoff + CUTOFF_SLACK * max(1.0, abs(z_cutoff))


def add_cutoff_row(model: ModelInstance, rhs: float) -> None:
    """``objective <= rhs`` as a linear row."""
    terms = {model.keys[i]: c for i, c in model.objective.items() if c != 0}
    model.add_linear(terms, hi=rhs - model.objective_constant, name=("cutoff",))


def relaxed_copy(model: ModelInstance) -> ModelInstance:
    out = model.copy()
    out.binary = [False] * out.n_vars
    return out


class _Prober:
    """Repeated min/max of single variables over one convex model."""

    def __init__(self, model: ModelInstance, deadline: float):
        self.model = model
        self.deadline = deadline
        self.external = external_command("conic") is not None
        self.tpl = None if self.external else compile_model(model)
        self.lb = np.array(model.lb, dtype=float)
        self.ub = np.array(model.ub, dtype=float)

    def probe(self, key, sense: float):
        """Certified lower bound of ``sense * x[key]``; None when the solve failed."""
        remaining = self.deadline - time.perf_counter()
        if remaining <= 0:
            return None, Status.TIME_LIMIT
        i = self.model.index(key)
        if self.external:
            m = self.model.copy()
            m.set_objective({key: sense})
            res = solve_conic(SolveRequest(m, time_limit=remaining))
        else:
            c = np.zeros(self.tpl.n)
            c[i] = sense
            tpl = dataclasses.replace(self.tpl, c=c, c0=0.0)
            res = solve_template(tpl, self.lb, self.ub, remaining)
        if res.status == Status.INFEASIBLE:
            return None, Status.INFEASIBLE
        if res.status != Status.OPTIMAL or not math.isfinite(res.bound):
            return None, res.status
        return res.bound, res.status


def run_obbt(
    case: NetworkCase,
    d: CommitmentTrajectory,
    refinement: RefinementState | None,
    z_cutoff: float,
    targets,
    bounds: BoundsStore,
    cycles: CycleSet | None = None,
    time_limit: float = 3600.0,
) -> ObbtOutcome:
    """Tighten ``c``/``s`` bounds of the target (branch, period) pairs.

    ``bounds`` is the store the relaxation is built on; a tightened copy is
    returned.  When ``z_cutoff`` is finite the relaxation carries the row
    ``objective <= z_cutoff`` (slightly widened), so the new bounds are only
    valid for points at least as good as the cutoff.
    """
    start = time.perf_counter()
    deadline = start + time_limit
    rhs = cutoff_value(z_cutoff)
    out = ObbtOutcome(bounds=bounds.copy(), cutoff=rhs)
    model = relaxed_copy(build_master_Mf(case, d, refinement, bounds=bounds, cycles=cycles))
    if math.isfinite(rhs):
        add_cutoff_row(model, rhs)
    prober = _Prober(model, deadline)
    for l, t in targets:
        for name in ("c", "s"):
            key = (name, l, t)
            store = getattr(out.bounds, name)
            lo, hi = store[l, t]
            lo_new, st_lo = prober.probe(key, 1.0)
            hi_neg, st_hi = prober.probe(key, -1.0)
            out.solves += 2
            if Status.INFEASIBLE in (st_lo, st_hi):
                if math.isfinite(rhs):
                    out.infeasible = True
                    out.wall_time = time.perf_counter() - start
                    return out
                # without a cutoff an empty relaxation is a modelling error upstream
                out.failures += 1
                continue
            new_lo = lo if lo_new is None else max(lo, lo_new)
            new_hi = hi if hi_neg is None else min(hi, -hi_neg)
            out.failures += (lo_new is None) + (hi_neg is None)
            if new_lo > new_hi:
                # certified bounds crossing by round-off: keep a point interval
                mid = 0.5 * (new_lo + new_hi)
                new_lo = new_hi = mid
            if new_lo > lo or new_hi < hi:
                out.tightened.append((name, l, t))
            store[l, t] = (new_lo, new_hi)
    out.wall_time = time.perf_counter() - start
    log.debug("obbt: %d solves, %d tightened, %d failures", out.solves, len(out.tightened), out.failures)
    return out


def select_targets(violations, k: int = 20, eps: float = 1e-4) -> list[tuple[int, int]]:
    """The ``k`` (branch, period) pairs with the largest violation of at least ``eps``.

    ``violations`` is a list of ``((branch, period), size)``; a pair listed
    more than once counts with its largest size.
    """
    worst: dict[tuple[int, int], float] = {}
    for key, v in violations:
        if v >= eps:
            worst[key] = max(worst.get(key, 0.0), v)
    ranked = sorted(worst.items(), key=lambda kv: (-kv[1], kv[0]))
    return [key for key, _ in ranked[:k]]
