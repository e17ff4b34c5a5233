"""Continuous conic backend on top of the Clarabel interior-point solver.

A model is compiled once into affine rows ``s = h - G x`` grouped into zero,
nonnegative and second-order cones.  Each solve then substitutes the variables
whose bounds coincide (fixed variables) and appends the remaining variable
bounds, so branch-and-bound nodes only pay for a column slice.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import clarabel
import numpy as np
import scipy.sparse as sp

from ..model import ModelInstance
from .base import BackendError, SolveRequest, SolveResult, Status

FIX_TOL = 1e-12
CHECK_TOL = 1e-9


class _Rows:
    def __init__(self):
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.h: list[float] = []

    def add(self, terms: dict[int, float], h: float) -> None:
        r = len(self.h)
        for i, v in terms.items():
            if v != 0:
                self.rows.append(r)
                self.cols.append(i)
                self.vals.append(v)
        self.h.append(float(h))

    def matrix(self, n: int) -> tuple[sp.csr_matrix, np.ndarray]:
        G = sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.h), n))
        return G, np.array(self.h, dtype=float)


@dataclass
class ConicTemplate:
    n: int
    c: np.ndarray
    c0: float
    G_eq: sp.csr_matrix
    h_eq: np.ndarray
    G_le: sp.csr_matrix
    h_le: np.ndarray
    G_soc: sp.csr_matrix
    h_soc: np.ndarray
    soc_dims: list[int]


def compile_model(model: ModelInstance) -> ConicTemplate:
    """Translate linear, convex quadratic and rotated-cone rows to conic rows."""
    n = model.n_vars
    eq, le, soc = _Rows(), _Rows(), _Rows()
    soc_dims: list[int] = []

    for row in model.linear:
        terms: dict[int, float] = {}
        for i, v in zip(row.idx, row.coef):
            terms[i] = terms.get(i, 0.0) + v
        scale = max((abs(v) for v in terms.values()), default=1.0) or 1.0
        terms = {i: v / scale for i, v in terms.items()}
        lo, hi = row.lo / scale, row.hi / scale
        if row.lo == row.hi:
            eq.add(terms, hi)
            continue
        if math.isfinite(hi):
            le.add(terms, hi)
        if math.isfinite(lo):
            le.add({i: -v for i, v in terms.items()}, -lo)

    for row in model.quadratic:
        if not row.is_convex_diagonal():
            raise BackendError(f"quadratic row {row.name!r} is not a convex diagonal form")
        quad: dict[int, float] = {}
        for i, v in zip(row.qi, row.qcoef):
            quad[i] = quad.get(i, 0.0) + v
        quad = {i: v for i, v in quad.items() if v > 0}
        lin: dict[int, float] = {}
        for i, v in zip(row.idx, row.coef):
            lin[i] = lin.get(i, 0.0) + v
        lin = {i: v for i, v in lin.items() if v != 0}
        if not quad:
            le.add(lin, row.hi)
            continue
        coefs = set(quad.values())
        if not lin and len(coefs) == 1:
            # sum a x^2 <= hi  ->  ||x|| <= sqrt(hi / a)
            a = coefs.pop()
            soc.add({}, math.sqrt(max(row.hi, 0.0) / a) if row.hi >= 0 else -1.0)
            for i in quad:
                soc.add({i: -1.0}, 0.0)
            soc_dims.append(len(quad) + 1)
            continue
        # sum a x^2 <= tau with tau = hi - lin.x:  ||(tau - 1, 2 sqrt(a) x)|| <= tau + 1
        soc.add(lin, row.hi + 1.0)
        soc.add(lin, row.hi - 1.0)
        for i, a in quad.items():
            soc.add({i: -2.0 * math.sqrt(a)}, 0.0)
        soc_dims.append(len(quad) + 2)

    for cone in model.cones:
        # sum x_k^2 <= x_i x_j  ->  ||(x_i - x_j, 2 x_k)|| <= x_i + x_j
        if cone.i == cone.j:
            soc.add({cone.i: -1.0}, 0.0)
            for k in cone.squares:
                soc.add({k: -1.0}, 0.0)
            soc_dims.append(len(cone.squares) + 1)
            continue
        soc.add({cone.i: -1.0, cone.j: -1.0}, 0.0)
        soc.add({cone.i: -1.0, cone.j: 1.0}, 0.0)
        for k in cone.squares:
            soc.add({k: -2.0}, 0.0)
        soc_dims.append(len(cone.squares) + 2)

    G_eq, h_eq = eq.matrix(n)
    G_le, h_le = le.matrix(n)
    G_soc, h_soc = soc.matrix(n)
    return ConicTemplate(
        n, model.objective_vector(), model.objective_constant,
        G_eq, h_eq, G_le, h_le, G_soc, h_soc, soc_dims,
    )


def _settings(time_limit: float) -> clarabel.DefaultSettings:
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.tol_gap_abs = 1e-9
    s.tol_gap_rel = 1e-9
    s.tol_feas = 1e-9
    s.tol_infeas_abs = 1e-9
    s.tol_infeas_rel = 1e-9
    s.max_iter = 300
    s.max_threads = 1
    s.time_limit = float(max(time_limit, 1e-3))
    return s


def solve_template(
    tpl: ConicTemplate, lb: np.ndarray, ub: np.ndarray, time_limit: float = 3600.0
) -> SolveResult:
    """Solve the compiled model under variable bounds ``lb``/``ub``."""
    start = time.perf_counter()
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)

    def done(status, **kw):
        return SolveResult(status, wall_time=time.perf_counter() - start, **kw)

    if np.any(lb > ub + CHECK_TOL):
        bad = int(np.argmax(lb - ub))
        return done(Status.INFEASIBLE, message=f"empty bound interval at variable {bad}")
    fixed = np.abs(ub - lb) <= FIX_TOL
    free = np.flatnonzero(~fixed)
    xf = np.where(fixed, lb, 0.0)

    parts_G, parts_h, cones = [], [], []

    def reduce(G, h):
        h = h - G @ xf
        return G[:, free].tocsr(), h

    G, h = reduce(tpl.G_eq, tpl.h_eq)
    nnz = np.diff(G.indptr) > 0
    if np.any(np.abs(h[~nnz]) > CHECK_TOL * (1 + np.abs(h[~nnz]))):
        return done(Status.INFEASIBLE, message="fixed variables violate an equality row")
    if nnz.any():
        parts_G.append(G[nnz])
        parts_h.append(h[nnz])
        cones.append(clarabel.ZeroConeT(int(nnz.sum())))

    G, h = reduce(tpl.G_le, tpl.h_le)
    nnz = np.diff(G.indptr) > 0
    if np.any(h[~nnz] < -CHECK_TOL * (1 + np.abs(h[~nnz]))):
        return done(Status.INFEASIBLE, message="fixed variables violate an inequality row")
    bl, bu = lb[free], ub[free]
    fin_u, fin_l = np.isfinite(bu), np.isfinite(bl)
    k = len(free)
    eye = sp.identity(k, format="csr")
    blocks_G = [G[nnz], eye[fin_u], -eye[fin_l]]
    blocks_h = [h[nnz], bu[fin_u], -bl[fin_l]]
    n_le = int(nnz.sum() + fin_u.sum() + fin_l.sum())
    if n_le:
        parts_G.append(sp.vstack(blocks_G, format="csr"))
        parts_h.append(np.concatenate(blocks_h))
        cones.append(clarabel.NonnegativeConeT(n_le))

    if tpl.soc_dims:
        G, h = reduce(tpl.G_soc, tpl.h_soc)
        parts_G.append(G)
        parts_h.append(h)
        cones.extend(clarabel.SecondOrderConeT(d) for d in tpl.soc_dims)

    c = tpl.c[free]
    const = tpl.c0 + float(tpl.c[fixed] @ xf[fixed])
    if k == 0:
        # every variable fixed: only cones remain to check
        x = xf.copy()
        if tpl.soc_dims:
            Gs, hs = reduce(tpl.G_soc, tpl.h_soc)
            pos = 0
            for d in tpl.soc_dims:
                blk = hs[pos:pos + d]
                pos += d
                if np.linalg.norm(blk[1:]) > blk[0] + CHECK_TOL * (1 + abs(blk[0])):
                    return done(Status.INFEASIBLE, message="fixed point violates a cone")
        return done(Status.OPTIMAL, x=x, objective=const, bound=const)

    A = sp.vstack(parts_G, format="csc") if parts_G else sp.csc_matrix((0, k))
    b = np.concatenate(parts_h) if parts_h else np.zeros(0)
    P = sp.csc_matrix((k, k))
    try:
        solver = clarabel.DefaultSolver(P, c, A, b, cones, _settings(time_limit))
        sol = solver.solve()
    except Exception as exc:  # solver construction/numerics
        return done(Status.ERROR, message=f"clarabel failure: {exc}")

    name = str(sol.status)
    if name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return done(Status.INFEASIBLE, message=name, iterations=sol.iterations)
    if name in ("DualInfeasible", "AlmostDualInfeasible"):
        return done(Status.UNBOUNDED, message=name, bound=-math.inf, iterations=sol.iterations)
    if name not in ("Solved", "AlmostSolved"):
        status = Status.TIME_LIMIT if name == "MaxTime" else Status.ERROR
        return done(status, message=name, iterations=sol.iterations)

    x = xf.copy()
    x[free] = np.asarray(sol.x)
    objective = float(c @ x[free]) + const
    dual = float(sol.obj_val_dual) + const
    # a small safety margin below the dual objective, wider when the
    # solver only reached its reduced tolerances
    margin = (1e-9 if name == "Solved" else 1e-6) * (1.0 + abs(dual))
    bound = min(dual, objective) - margin
    return done(Status.OPTIMAL, x=x, objective=objective, bound=bound,
                message=name, iterations=sol.iterations,
                residuals={"primal": float(sol.r_prim), "dual": float(sol.r_dual)})


def solve_conic(req: SolveRequest, template: ConicTemplate | None = None) -> SolveResult:
    """Solve a convex model; binaries must be fixed (or are treated as continuous)."""
    model = req.model
    tpl = template or compile_model(model)
    res = solve_template(tpl, np.array(model.lb), np.array(model.ub), req.time_limit)
    if res.status == Status.OPTIMAL and math.isfinite(req.known_lower_bound):
        res.bound = max(res.bound, min(req.known_lower_bound, res.objective))
    return res
