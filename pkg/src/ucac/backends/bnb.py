"""Best-bound branch and bound over conic relaxations.

Branching picks the most fractional binary (ties broken by lowest index).  A
rounding heuristic runs at the root and every ``heuristic_every`` nodes.  The
reported bound is the minimum over open nodes, pruned nodes and the incumbent,
so it stays valid whatever the stopping reason.  A node whose relaxation fails
numerically keeps its parent bound and is never declared infeasible.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time

import numpy as np

from .base import SolveRequest, SolveResult, Status
from .conic import compile_model, solve_template

log = logging.getLogger(__name__)

INT_TOL = 1e-6


def _fractionality(x: np.ndarray, binaries: np.ndarray) -> np.ndarray:
    v = x[binaries]
    return np.abs(v - np.round(v))


def solve_mixed_conic(req: SolveRequest, heuristic_every: int = 10, max_nodes: int = 200000) -> SolveResult:
    start = time.perf_counter()
    deadline = start + req.time_limit
    model = req.model
    tpl = compile_model(model)
    lb0 = np.array(model.lb, dtype=float)
    ub0 = np.array(model.ub, dtype=float)
    binaries = np.array(model.binary_indices(), dtype=int)
    lb0[binaries] = np.ceil(lb0[binaries] - INT_TOL)
    ub0[binaries] = np.floor(ub0[binaries] + INT_TOL)

    inc_x: np.ndarray | None = None
    inc_obj = math.inf
    pruned_min = math.inf  # smallest bound among nodes closed by the gap test
    counter = itertools.count()
    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
    nodes = 0

    def remaining() -> float:
        return deadline - time.perf_counter()

    def try_incumbent(x: np.ndarray, obj: float) -> None:
        nonlocal inc_x, inc_obj
        if obj < inc_obj:
            inc_x, inc_obj = x.copy(), obj

    def rounding(x: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> None:
        if remaining() <= 0 or len(binaries) == 0:
            return
        lo, hi = lb.copy(), ub.copy()
        r = np.clip(np.round(x[binaries]), lo[binaries], hi[binaries])
        lo[binaries] = r
        hi[binaries] = r
        res = solve_template(tpl, lo, hi, remaining())
        if res.status == Status.OPTIMAL:
            try_incumbent(res.x, res.objective)

    def closed(bound: float) -> bool:
        if bound >= req.cutoff:
            return True
        if not math.isfinite(inc_obj):
            return False
        return bound >= inc_obj - req.gap * max(abs(inc_obj), 1e-9) * 0.5 or bound >= inc_obj

    def global_bound() -> float:
        open_min = heap[0][0] if heap else math.inf
        b = min(open_min, pruned_min, inc_obj)
        if math.isfinite(req.known_lower_bound):
            b = max(b, min(req.known_lower_bound, inc_obj))
        return b

    def node(lb: np.ndarray, ub: np.ndarray, parent_bound: float) -> None:
        nonlocal nodes, pruned_min
        nodes += 1
        res = solve_template(tpl, lb, ub, max(remaining(), 1e-3))
        if res.status == Status.INFEASIBLE:
            return
        if res.status != Status.OPTIMAL:
            if res.status == Status.UNBOUNDED and nodes == 1:
                raise _Unbounded()
            # cannot resolve this node: it keeps its parent bound for good
            log.debug("node relaxation failed (%s); keeping parent bound", res.message)
            pruned_min = min(pruned_min, parent_bound)
            return
        bound = max(res.bound, parent_bound)
        if closed(bound):
            pruned_min = min(pruned_min, bound)
            return
        frac = _fractionality(res.x, binaries) if len(binaries) else np.zeros(0)
        if len(frac) == 0 or frac.max() <= INT_TOL:
            x = res.x.copy()
            x[binaries] = np.round(x[binaries])
            try_incumbent(x, float(tpl.c @ x) + tpl.c0)
            # the node is solved: its optimum is the relaxation optimum
            pruned_min = min(pruned_min, bound)
            return
        if nodes == 1 or nodes % heuristic_every == 0:
            rounding(res.x, lb, ub)
        heapq.heappush(heap, (bound, next(counter), lb, ub, res.x))

    status = Status.OPTIMAL
    try:
        node(lb0, ub0, -math.inf)
        while heap:
            if remaining() <= 0 or nodes >= max_nodes:
                status = Status.TIME_LIMIT
                break
            if math.isfinite(inc_obj):
                gb = global_bound()
                if inc_obj - gb <= req.gap * max(abs(gb), 1e-9):
                    break
            bound, _, lb, ub, x = heapq.heappop(heap)
            if closed(bound):
                pruned_min = min(pruned_min, bound)
                continue
            frac = _fractionality(x, binaries)
            best = float(frac.max())
            j = int(binaries[int(np.flatnonzero(frac >= best - 1e-12)[0])])
            down_ub = ub.copy()
            down_ub[j] = math.floor(x[j])
            up_lb = lb.copy()
            up_lb[j] = math.ceil(x[j])
            node(lb, down_ub, bound)
            node(up_lb, ub, bound)
    except _Unbounded:
        return SolveResult(Status.UNBOUNDED, wall_time=time.perf_counter() - start, iterations=nodes)

    bound = global_bound()
    wall = time.perf_counter() - start
    if inc_x is None:
        if status == Status.TIME_LIMIT:
            return SolveResult(Status.TIME_LIMIT, bound=bound, wall_time=wall, iterations=nodes,
                               message="no integer point found")
        if math.isfinite(pruned_min):
            if pruned_min >= req.cutoff:
                return SolveResult(Status.INFEASIBLE, bound=bound, wall_time=wall, iterations=nodes,
                                   message="no point below the cutoff")
            return SolveResult(Status.ERROR, bound=bound, wall_time=wall, iterations=nodes,
                               message="no integer point found")
        return SolveResult(Status.INFEASIBLE, wall_time=wall, iterations=nodes)
    gap = (inc_obj - bound) / max(abs(bound), 1e-12)
    if status == Status.OPTIMAL and gap > req.gap + 1e-12:
        status = Status.FEASIBLE
    return SolveResult(status, x=inc_x, objective=inc_obj, bound=bound, wall_time=wall,
                       iterations=nodes, residuals={"gap": gap})


class _Unbounded(Exception):
    pass
