"""Local nonlinear backend for models with linear, quadratic and cone rows.

Uses SciPy's SLSQP with exact first derivatives.  Fixed variables are
substituted, the objective is rescaled by its magnitude at the start point,
and a returned point is only called optimal when every model row holds to
``feas_tol``.
"""

from __future__ import annotations

import math
import time
import warnings

import numpy as np
from scipy.optimize import minimize

from ..model import ModelInstance
from .base import SolveRequest, SolveResult, Status

FEAS_TOL = 1e-6


class _Rows:
    """Vectorized values and Jacobians for a set of (possibly quadratic) rows."""

    def __init__(self, n: int):
        self.n = n
        self.m = 0
        self.lr, self.lc, self.lv = [], [], []
        self.qr, self.qi, self.qj, self.qv = [], [], [], []
        self.const: list[float] = []

    def add(self, idx, coef, qi, qj, qv, const: float, sign: float = 1.0) -> None:
        r = self.m
        self.m += 1
        self.lr += [r] * len(idx)
        self.lc += list(idx)
        self.lv += [sign * c for c in coef]
        self.qr += [r] * len(qi)
        self.qi += list(qi)
        self.qj += list(qj)
        self.qv += [sign * c for c in qv]
        self.const.append(const)

    def freeze(self) -> None:
        self.lr, self.lc, self.lv = (np.array(a, dtype=t) for a, t in ((self.lr, int), (self.lc, int), (self.lv, float)))
        self.qr, self.qi, self.qj, self.qv = (
            np.array(self.qr, dtype=int), np.array(self.qi, dtype=int),
            np.array(self.qj, dtype=int), np.array(self.qv, dtype=float),
        )
        self.const = np.array(self.const, dtype=float)

    def value(self, x: np.ndarray) -> np.ndarray:
        out = self.const.copy()
        np.add.at(out, self.lr, self.lv * x[self.lc])
        np.add.at(out, self.qr, self.qv * x[self.qi] * x[self.qj])
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        J = np.zeros((self.m, self.n))
        np.add.at(J, (self.lr, self.lc), self.lv)
        np.add.at(J, (self.qr, self.qi), self.qv * x[self.qj])
        np.add.at(J, (self.qr, self.qj), self.qv * x[self.qi])
        return J


class _Presolve:
    """Rows without free variables are checked once; single-variable linear rows become bounds."""

    def __init__(self, fixed: np.ndarray, x: np.ndarray, lb: np.ndarray, ub: np.ndarray, tol: float):
        self.fixed, self.x, self.lb, self.ub, self.tol = fixed, x, lb, ub, tol
        self.infeasible: list[str] = []

    def linear(self, row) -> bool:
        """True when the row must be kept."""
        const, free = 0.0, {}
        for i, a in zip(row.idx, row.coef):
            if self.fixed[i]:
                const += a * self.x[i]
            else:
                free[i] = free.get(i, 0.0) + a
        free = {i: a for i, a in free.items() if a != 0}
        lo, hi = row.lo - const, row.hi - const
        if not free:
            if lo > self.tol * (1 + abs(lo)) or hi < -self.tol * (1 + abs(hi)):
                self.infeasible.append(f"row {row.name!r} violated by fixed variables")
            return False
        if len(free) == 1:
            (i, a), = free.items()
            bl, bu = (lo / a, hi / a) if a > 0 else (hi / a, lo / a)
            self.lb[i] = max(self.lb[i], bl)
            self.ub[i] = min(self.ub[i], bu)
            if abs(self.ub[i] - self.lb[i]) <= 1e-12:
                self.fixed[i] = True
                self.x[i] = self.lb[i]
            return False
        return True

    def quadratic(self, row) -> bool:
        if not row.qi:
            return self.linear(row)
        vars_ = set(row.idx) | set(row.qi) | set(row.qj)
        if all(self.fixed[i] for i in vars_):
            from ..model import quadratic_row_value

            v = quadratic_row_value(row, self.x)
            if v < row.lo - self.tol * (1 + abs(row.lo)) or v > row.hi + self.tol * (1 + abs(row.hi)):
                self.infeasible.append(f"row {row.name!r} violated by fixed variables")
            return False
        return True


def _build_rows(model: ModelInstance, pre: "_Presolve | None" = None) -> tuple[_Rows, _Rows]:
    n = model.n_vars
    eq, ineq = _Rows(n), _Rows(n)  # eq: value == 0, ineq: value >= 0
    for row in model.linear:
        if pre is None or pre.linear(row):
            _add_two_sided(eq, ineq, row.idx, row.coef, [], [], [], row.lo, row.hi)
    for row in model.quadratic:
        if pre is None or pre.quadratic(row):
            _add_two_sided(eq, ineq, row.idx, row.coef, row.qi, row.qj, row.qcoef, row.lo, row.hi)
    for cone in model.cones:
        # x_i x_j - sum x_k^2 >= 0, x_i >= 0, x_j >= 0
        ineq.add([], [], [cone.i] + list(cone.squares), [cone.j] + list(cone.squares),
                 [1.0] + [-1.0] * len(cone.squares), 0.0)
        ineq.add([cone.i], [1.0], [], [], [], 0.0)
        ineq.add([cone.j], [1.0], [], [], [], 0.0)
    eq.freeze()
    ineq.freeze()
    return eq, ineq


def _add_two_sided(eq, ineq, idx, coef, qi, qj, qv, lo, hi) -> None:
    if lo == hi:
        eq.add(idx, coef, qi, qj, qv, -hi)
        return
    if math.isfinite(hi):
        ineq.add(idx, coef, qi, qj, qv, hi, sign=-1.0)
    if math.isfinite(lo):
        ineq.add(idx, coef, qi, qj, qv, -lo)


def solve_nlp_local(req: SolveRequest, feas_tol: float = FEAS_TOL, max_iter: int = 500) -> SolveResult:
    start = time.perf_counter()
    model = req.model
    n = model.n_vars
    lb = np.array(model.lb, dtype=float)
    ub = np.array(model.ub, dtype=float)
    if np.any(lb > ub + 1e-12):
        return SolveResult(Status.INFEASIBLE, message="empty bound interval", wall_time=time.perf_counter() - start)
    fixed = np.abs(ub - lb) <= 1e-12
    x0 = np.zeros(n) if req.warm_start is None else np.asarray(req.warm_start, dtype=float).copy()
    x0[fixed] = lb[fixed]
    pre = _Presolve(fixed, x0, lb, ub, 1e-9)
    eq, ineq = _build_rows(model, pre)
    if pre.infeasible or np.any(lb > ub + 1e-9):
        msg = pre.infeasible[0] if pre.infeasible else "presolved bounds cross"
        return SolveResult(Status.INFEASIBLE, message=msg, wall_time=time.perf_counter() - start)
    free = np.flatnonzero(~fixed)
    ub = np.maximum(ub, lb)
    x0 = np.clip(x0, lb, ub)
    c = model.objective_vector()
    scale = max(1.0, abs(float(c @ x0)))
    base = x0.copy()

    def full(z: np.ndarray) -> np.ndarray:
        x = base.copy()
        x[free] = z
        return x

    cons = []
    if eq.m:
        cons.append({"type": "eq", "fun": lambda z: eq.value(full(z)), "jac": lambda z: eq.jacobian(full(z))[:, free]})
    if ineq.m:
        cons.append({"type": "ineq", "fun": lambda z: ineq.value(full(z)), "jac": lambda z: ineq.jacobian(full(z))[:, free]})
    bounds = [
        (None if not math.isfinite(lb[i]) else lb[i], None if not math.isfinite(ub[i]) else ub[i]) for i in free
    ]
    cf = c[free] / scale

    def solve_from(z0: np.ndarray, iters: int):
        with warnings.catch_warnings():
            # SLSQP clips line-search steps back into the bounds; that is expected here
            warnings.filterwarnings("ignore", message="Values in x were outside bounds")
            return minimize(
                lambda z: float(cf @ z), z0, jac=lambda z: cf, bounds=bounds, constraints=cons,
                method="SLSQP", options={"maxiter": iters, "ftol": 1e-12},
            )

    if len(free) == 0:
        x = base
        iterations, success, msg = 0, True, "all variables fixed"
    else:
        res = solve_from(x0[free], max_iter)
        x = full(res.x)
        iterations, success, msg = int(res.nit), bool(res.success), str(res.message)
        if model.max_violation(x) > feas_tol and time.perf_counter() - start < req.time_limit:
            res2 = solve_from(res.x, max_iter)
            x2 = full(res2.x)
            if model.max_violation(x2) < model.max_violation(x):
                x, success, msg = x2, bool(res2.success), str(res2.message)
            iterations += int(res2.nit)

    viol = model.violations(x)
    worst = max(viol.values())
    wall = time.perf_counter() - start
    if worst > feas_tol:
        return SolveResult(Status.ERROR, x=x, residuals=viol, wall_time=wall, iterations=iterations,
                           message=f"no feasible point reached ({msg}); max violation {worst:.3g}")
    status = Status.OPTIMAL if success else Status.FEASIBLE
    return SolveResult(status, x=x, objective=model.objective_value(x), residuals=viol,
                       wall_time=wall, iterations=iterations, message=msg)
