"""Outer/inner multi-tree loops.

The outer loop solves the mixed-integer SOC master, hands the commitment it
proposes to the inner loop, and excludes it with an integer cut.  The inner
loop alternates the fixed-commitment relaxation (lower bound), a local
nonlinear solve (upper bound), bounds tightening and partition refinement
until the two meet.

Lower-bound bookkeeping.  Once cuts are present the master no longer bounds
the whole problem, only the commitments it has not yet excluded.  The run
therefore keeps

* ``z_L_frozen``: the best master bound obtained before the first cut, and
* ``z_L``: ``max(z_L_frozen, min(cut-master bound, min over visited
  commitments of their certified inner bound))``,

both of which are valid lower bounds on the optimum.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .acopf import rpqv_residuals
from .backends import SolveRequest, Status, solve_conic, solve_mixed_conic, solve_nlp_local
from .case import BoundsStore, NetworkCase, cycle_basis, initial_cs_bounds
from .formulations import (
    build_master_M,
    build_master_Mf,
    build_subproblem_SP,
    cone_violations,
    subproblem_start,
)
from .obbt import run_obbt, select_targets
from .refinement import RefinementState, cycle_is_admissible, kvl_residuals, refine_partitions
from .uc import CommitmentTrajectory, evaluate_cost, validate_commitment

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6

TERMINATIONS = ("gap-closed", "master-infeasible", "iteration-limit", "time-limit")


@dataclass
class DriverOptions:
    outer_tol: float = 1e-3
    inner_tol: float = 1e-3
    time_limit: float = 14400.0
    max_outer: int = 30
    stagnation_n: int = 5
    initial_mip_gap: float = 1e-3
    mip_gap_divisor: float = 10.0
    mip_gap_floor: float = 1e-6
    obbt: bool = True
    refine_k: int = 10
    obbt_k: int = 20
    obbt_eps: float = 1e-4
    cone_eps: float = 1e-4
    max_inner: int = 50
    seed: int = 0
    log_path: str | None = None

    def __post_init__(self):
        for name in ("outer_tol", "inner_tol", "initial_mip_gap"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        for name in ("time_limit", "max_outer", "stagnation_n", "max_inner", "refine_k", "obbt_k"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.mip_gap_divisor <= 1:
            raise ValueError("mip_gap_divisor must exceed 1")


ZERO_BOUND_TOL = 1e-8


def relative_gap(z_U: float, z_L: float) -> tuple[float, bool]:
    """``(z_U - z_L) / |z_L|`` and whether the absolute gap was used instead.

    The absolute gap applies when ``|z_L|`` is at solver noise level, so a null system whose
    conic bound comes back as ``-1e-9`` still closes.
    """
    if not math.isfinite(z_U):
        return math.inf, False
    if not math.isfinite(z_L):
        return math.inf, False
    if abs(z_L) <= ZERO_BOUND_TOL:
        return z_U - z_L, True
    return (z_U - z_L) / abs(z_L), False


def gap_value(z_U: float, z_L: float) -> float:
    return relative_gap(z_U, z_L)[0]


def mip_gap_schedule(history: list[float], current: float, n: int = 5, divisor: float = 10.0,
                     floor: float = 1e-6) -> float:
    """Divide the master MIP gap when the global gap stalled over the last ``n`` entries."""
    if len(history) < n:
        return current
    window = history[-n:]
    first = window[0]
    improved = any(
        g < first - 1e-6 * abs(first) if math.isfinite(first) else math.isfinite(g)
        for g in window[1:]
    )
    if improved:
        return current
    return max(current / divisor, floor)


@dataclass
class InnerRound:
    q: int
    r: int
    z_L_fixed: float  # best certified bound of the commitment so far
    relaxation_bound: float  # this round's certified bound
    z_U: float
    gap: float
    wall_s: float
    obbt_tightened: int = 0
    refined: bool = False


@dataclass
class SpgResult:
    status: str  # "certified", "dominated", "infeasible", "no-upper-bound", "limit", "stalled"
    z_U: float
    x: dict | None
    lower_bound: float
    rounds: list[InnerRound] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.x is not None and math.isfinite(self.z_U)


@dataclass
class OuterIteration:
    q: int
    z_L: float  # master bound at this iteration
    z_U: float  # inner upper bound for the proposed commitment
    y: list[list[int]]
    wall_s: float
    inner_iterations: int
    spg_status: str
    commitment_bound: float
    mip_gap: float
    global_z_L: float
    global_z_U: float


@dataclass
class RunRecord:
    case_name: str = ""
    options: dict = field(default_factory=dict)
    iterations: list[OuterIteration] = field(default_factory=list)
    inner: list[InnerRound] = field(default_factory=list)
    z_L: float = -math.inf
    z_U: float = math.inf
    z_L_frozen: float = -math.inf
    z_L_history: list[float] = field(default_factory=list)
    z_U_history: list[float] = field(default_factory=list)
    d_best: CommitmentTrajectory | None = None
    x_best: dict | None = None
    termination: str = ""
    mip_gap_history: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    visited: dict[tuple[int, ...], float] = field(default_factory=dict)
    state: RefinementState | None = None

    @property
    def gap(self) -> float:
        return gap_value(self.z_U, self.z_L)

    @property
    def feasible(self) -> bool:
        return self.d_best is not None

    def summary(self) -> dict:
        return {
            "case": self.case_name,
            "termination": self.termination,
            "z_U": self.z_U,
            "z_L": self.z_L,
            "z_L_frozen": self.z_L_frozen,
            "gap": self.gap,
            "outer_iterations": len(self.iterations),
            "wall_s": self.wall_time,
        }


class _Logger:
    """JSON-lines iteration log."""

    def __init__(self, path: str | None, start: float):
        self.start = start
        self.fh = open(path, "a") if path else None

    def emit(self, phase: str, q: int, r: int | None, z_L: float, z_U: float, mip_gap: float | None) -> None:
        rec = {
            "phase": phase, "q": q, "r": r, "z_L": _json_num(z_L), "z_U": _json_num(z_U),
            "gap": _json_num(gap_value(z_U, z_L)), "mip_gap": mip_gap,
            "wall_s": round(time.perf_counter() - self.start, 6),
        }
        line = json.dumps(rec)
        log.info(line)
        if self.fh:
            self.fh.write(line + "\n")
            self.fh.flush()

    def close(self) -> None:
        if self.fh:
            self.fh.close()


def _json_num(v: float):
    if v is None or math.isfinite(v):
        return v
    return "inf" if v > 0 else "-inf"


def _y_matrix(case: NetworkCase, point: dict) -> np.ndarray:
    y = np.zeros((case.n_gen, case.horizon), dtype=int)
    for g in range(case.n_gen):
        for t in case.periods:
            y[g, t] = int(round(point["y", g, t]))
    return y


def _check_sp_point(case: NetworkCase, sp, res) -> dict | None:
    """The subproblem point when it is AC-feasible within tolerance."""
    if res.x is None:
        return None
    if sp.max_violation(res.x) > FEAS_TOL:
        return None
    point = sp.point(res.x)
    if not rpqv_residuals(point, case, FEAS_TOL).feasible:
        return None
    return point


def local_upper_bound(case: NetworkCase, d: CommitmentTrajectory, starts: list[dict | None],
                      time_limit: float, sp=None) -> tuple[float, dict | None]:
    """Best AC-feasible cost found by local solves from the given start points."""
    sp = sp or build_subproblem_SP(case, d)
    deadline = time.perf_counter() + time_limit
    best, best_x = math.inf, None
    for start in starts:
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            break
        x0 = subproblem_start(case, sp, start)
        res = solve_nlp_local(SolveRequest(sp, warm_start=x0, time_limit=remaining))
        point = _check_sp_point(case, sp, res)
        if point is None:
            continue
        cost = evaluate_cost(point, case).total
        if cost < best:
            best, best_x = cost, point
    return best, best_x


def _node_cutoff(incumbent: float, z_U: float) -> float:
    """Relaxation nodes at or above the best known cost cannot matter."""
    best = min(incumbent, z_U)
    return best + 1e-9 * max(1.0, abs(best)) if math.isfinite(best) else math.inf


def _cycle_violations(case: NetworkCase, cycles, point: dict) -> list[tuple[tuple[int, int], float]]:
    """Branches of admissible cycles whose angle sum misses zero, with that residual."""
    if cycles is None:
        return []
    out = []
    for (ci, t), resid in kvl_residuals(case, cycles, point).items():
        cyc = cycles.cycles[ci]
        if cycle_is_admissible(case, cyc):
            out.extend(((l, t), resid) for l in cyc.branches)
    return out


def _solve_relaxation(model, known: float, gap: float, remaining: float, cutoff: float):
    if model.binary_indices():
        return solve_mixed_conic(SolveRequest(model, gap=gap, time_limit=remaining, known_lower_bound=known,
                                              cutoff=cutoff))
    return solve_conic(SolveRequest(model, time_limit=remaining, known_lower_bound=known))


def solve_spg(
    case: NetworkCase,
    d: CommitmentTrajectory,
    opts: DriverOptions,
    state: RefinementState,
    incumbent: float = math.inf,
    deadline: float | None = None,
    q: int = 0,
    logger: _Logger | None = None,
    on_round: Callable[[InnerRound], None] | None = None,
) -> SpgResult:
    """Globally solve the dispatch problem at commitment ``d`` to the inner tolerance.

    ``incumbent`` is the best cost known for any commitment; once the certified
    bound of ``d`` reaches it the loop stops early (``"dominated"``).
    """
    start = time.perf_counter()
    deadline = deadline if deadline is not None else start + opts.time_limit
    key = d.key()
    base = initial_cs_bounds(case)
    store = state.bounds.get(key) or base.copy()
    tag = state.bound_cutoffs.get(key, math.inf)
    cycles = cycle_basis(case)
    cycles_arg = cycles if len(cycles) else None
    sp = build_subproblem_SP(case, d)
    rounds: list[InnerRound] = []

    z_L_fixed = -math.inf
    z_U, x_best = math.inf, None
    status = "limit"
    inner_gap = max(min(opts.inner_tol / 10, 1e-4), 1e-6)
    for r in range(opts.max_inner):
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            status = "limit"
            break
        mf = build_master_Mf(case, d, state, bounds=store, cycles=cycles_arg)
        res = _solve_relaxation(mf, z_L_fixed, inner_gap, remaining, _node_cutoff(incumbent, z_U))
        if res.status == Status.INFEASIBLE:
            # Either the relaxation is empty, or (with cutoff-tightened bounds or
            # a node cutoff) nothing cheaper than the cutoff exists.
            proven = res.bound if res.x is None and math.isfinite(res.bound) else math.inf
            z_L_fixed = max(z_L_fixed, min(proven, tag))
            if not math.isfinite(z_L_fixed):
                status = "infeasible"
            else:
                status = "certified" if gap_value(z_U, z_L_fixed) < opts.inner_tol else "dominated"
            rounds.append(InnerRound(q, r, z_L_fixed, z_L_fixed, z_U, gap_value(z_U, z_L_fixed),
                                     time.perf_counter() - start))
            break
        relaxed = None
        if math.isfinite(res.bound):
            bound = min(res.bound, tag)
            z_L_fixed = max(z_L_fixed, bound)
        else:
            bound = -math.inf
        if res.x is not None:
            relaxed = mf.point(res.x)

        starts = [relaxed] if relaxed is not None else []
        if x_best is not None:
            starts.append(x_best)
        if r == 0:
            starts.append(None)  # flat start
        remaining = deadline - time.perf_counter()
        cost, point = local_upper_bound(case, d, starts, max(remaining, 1e-3), sp=sp)
        if point is not None and cost < z_U:
            z_U, x_best = cost, point

        gap = gap_value(z_U, z_L_fixed)
        rnd = InnerRound(q, r, z_L_fixed, bound, z_U, gap, time.perf_counter() - start)
        rounds.append(rnd)
        if logger:
            logger.emit("inner", q, r, z_L_fixed, z_U, inner_gap)
        if on_round:
            on_round(rnd)
        if gap < opts.inner_tol:
            status = "certified"
            break
        if math.isfinite(incumbent) and gap_value(incumbent, z_L_fixed) <= 0.5 * opts.outer_tol:
            status = "dominated"
            break
        if time.perf_counter() >= deadline:
            status = "limit"
            break
        if relaxed is None:
            status = "stalled"
            break

        violations = cone_violations(case, relaxed)
        cutoff = min(incumbent, z_U)
        if opts.obbt and math.isfinite(cutoff):
            targets = select_targets(violations + _cycle_violations(case, cycles_arg, relaxed),
                                     opts.obbt_k, opts.obbt_eps)
            if targets:
                out = run_obbt(case, d, state, cutoff, targets, store, cycles=cycles_arg,
                               time_limit=max(deadline - time.perf_counter(), 1e-3))
                rnd.obbt_tightened = len(out.tightened)
                if out.infeasible:
                    z_L_fixed = max(z_L_fixed, out.cutoff)
                    rnd.z_L_fixed = z_L_fixed
                    rnd.gap = gap_value(z_U, z_L_fixed)
                    status = "certified" if rnd.gap < opts.inner_tol else "dominated"
                    break
                if out.tightened:
                    store = out.bounds
                    tag = min(tag, out.cutoff)
                    state.bounds[key] = store
                    state.bound_cutoffs[key] = tag
        rnd.refined = refine_partitions(case, state, base, violations, relaxed, k=opts.refine_k,
                                        eps=opts.cone_eps, cycles=cycles_arg, kvl_eps=opts.cone_eps)
        if not rnd.refined and not rnd.obbt_tightened:
            status = "stalled"
            break
    if status == "limit" and not math.isfinite(z_U):
        status = "no-upper-bound" if rounds else "limit"
    return SpgResult(status, z_U, x_best, z_L_fixed, rounds)


def solve_ucac(case: NetworkCase, opts: DriverOptions | None = None,
               state: RefinementState | None = None) -> RunRecord:
    """Run the outer loop until the gap closes, the master empties, or a limit hits."""
    opts = opts or DriverOptions()
    start = time.perf_counter()
    deadline = start + opts.time_limit
    state = state or RefinementState()
    logger = _Logger(opts.log_path, start)
    rec = RunRecord(case_name=case.name, options=asdict(opts), state=state)
    mip_gap = opts.initial_mip_gap
    gap_history: list[float] = []
    since_change = 0
    rec.visited = dict(state.visited)
    rec.z_L_frozen = state.z_L_frozen
    if state.incumbent is not None:
        rec.z_U = state.incumbent["cost"]
        rec.d_best = CommitmentTrajectory.from_y(case, state.incumbent["y"])
        rec.x_best = dict(state.incumbent["x"])
    # a cut without a stored bound (older state files) leaves part of the search space uncertified
    resumed_cuts = any(c not in state.visited for c in state.cuts)

    def certificate(master_bound: float) -> float:
        inner = min(rec.visited.values(), default=math.inf)
        combined = -math.inf if resumed_cuts else min(master_bound, inner)
        return max(rec.z_L_frozen, combined, rec.z_L)

    try:
        for q in range(opts.max_outer):
            remaining = deadline - time.perf_counter()
            if remaining <= 0:
                rec.termination = "time-limit"
                break
            master = build_master_M(case, state)
            res = solve_mixed_conic(SolveRequest(master, gap=mip_gap, time_limit=remaining,
                                                 cutoff=_node_cutoff(rec.z_U, math.inf)))
            if res.status == Status.INFEASIBLE:
                # no commitment left, or none whose relaxation beats the incumbent
                remaining_bound = res.bound if math.isfinite(res.bound) else math.inf
                if not state.cuts:
                    rec.z_L_frozen = state.z_L_frozen = max(rec.z_L_frozen, remaining_bound)
                rec.z_L = certificate(remaining_bound)
                logger.emit("outer", q, None, rec.z_L, rec.z_U, mip_gap)
                rec.termination = "gap-closed" if gap_value(rec.z_U, rec.z_L) < opts.outer_tol else "master-infeasible"
                break
            if res.status == Status.UNBOUNDED:
                raise RuntimeError("master problem is unbounded")
            if res.x is None:
                if res.status == Status.TIME_LIMIT:
                    rec.termination = "time-limit"
                    break
                raise RuntimeError(f"master solve failed: {res.status.value} {res.message}")
            if not state.cuts:
                rec.z_L_frozen = state.z_L_frozen = max(rec.z_L_frozen, res.bound)
            point = master.point(res.x)
            y = _y_matrix(case, point)
            d = CommitmentTrajectory.from_y(case, y)
            if validate_commitment(d, case):
                raise RuntimeError("master returned a commitment violating the logic constraints")
            if d.key() in rec.visited:
                raise RuntimeError(f"commitment {d.key()} proposed twice despite its integer cut")
            rec.z_L = certificate(res.bound)
            if gap_value(rec.z_U, rec.z_L) < opts.outer_tol:
                # the master bound alone already closes the gap
                rec.z_L_history.append(rec.z_L)
                rec.z_U_history.append(rec.z_U)
                rec.mip_gap_history.append(mip_gap)
                logger.emit("outer", q, 0, rec.z_L, rec.z_U, mip_gap)
                rec.termination = "gap-closed"
                break

            spg = solve_spg(case, d, opts, state, incumbent=rec.z_U, deadline=deadline, q=q, logger=logger)
            rec.inner.extend(spg.rounds)
            rec.visited[d.key()] = state.visited[d.key()] = (
                spg.lower_bound if spg.status != "infeasible" else math.inf)
            state.cuts.append(d.key())
            if spg.feasible and spg.z_U < rec.z_U:
                rec.z_U, rec.d_best, rec.x_best = spg.z_U, d, spg.x
                state.incumbent = {"cost": spg.z_U, "y": d.y.tolist(), "x": dict(spg.x)}
            rec.z_L = certificate(res.bound)
            rec.z_L_history.append(rec.z_L)
            rec.z_U_history.append(rec.z_U)
            rec.mip_gap_history.append(mip_gap)
            rec.iterations.append(OuterIteration(
                q, res.bound, spg.z_U, y.tolist(), time.perf_counter() - start, len(spg.rounds),
                spg.status, spg.lower_bound, mip_gap, rec.z_L, rec.z_U,
            ))
            logger.emit("outer", q, len(spg.rounds), rec.z_L, rec.z_U, mip_gap)

            gap = gap_value(rec.z_U, rec.z_L)
            if gap < opts.outer_tol:
                rec.termination = "gap-closed"
                break
            gap_history.append(gap)
            since_change += 1
            new_gap = mip_gap_schedule(gap_history[-since_change:], mip_gap, opts.stagnation_n,
                                       opts.mip_gap_divisor, opts.mip_gap_floor)
            if new_gap != mip_gap:
                mip_gap, since_change = new_gap, 0
        else:
            rec.termination = "iteration-limit"
        if not rec.termination:
            rec.termination = "time-limit"
    finally:
        rec.wall_time = time.perf_counter() - start
        logger.close()
    return rec


def local_heuristic(case: NetworkCase, time_limit: float = 600.0) -> tuple[float, dict | None]:
    """Baseline: one master solve, then one local subproblem solve at its commitment."""
    master = build_master_M(case)
    res = solve_mixed_conic(SolveRequest(master, gap=1e-3, time_limit=time_limit))
    if res.x is None:
        return math.inf, None
    point = master.point(res.x)
    d = CommitmentTrajectory.from_y(case, _y_matrix(case, point))
    mf = build_master_Mf(case, d)
    rf = solve_conic(SolveRequest(mf, time_limit=time_limit))
    return local_upper_bound(case, d, [mf.point(rf.x) if rf.x is not None else None], time_limit)
