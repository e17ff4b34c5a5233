import math

import numpy as np
import pytest

from ucac.case import initial_cs_bounds
from ucac.driver import DriverOptions, solve_spg
from ucac.formulations import lift_solution
from ucac.obbt import add_cutoff_row, cutoff_value, run_obbt, select_targets
from ucac.refinement import RefinementState
from ucac.uc import CommitmentTrajectory

from _cases import two_bus, two_bus_dict
from _oracles import two_bus_grid


Y_BEST = np.array([[1, 1], [0, 1]])


def _inside(store, l, t, c, s, tol=1e-7):
    (clo, chi), (slo, shi) = store.c[l, t], store.s[l, t]
    return clo - tol <= c <= chi + tol and slo - tol <= s <= shi + tol


def test_cone_implied_upper_bound():
    case = two_bus()
    d = CommitmentTrajectory.from_y(case, Y_BEST)
    out = run_obbt(case, d, None, math.inf, [(0, 0)], initial_cs_bounds(case))
    assert out.bounds.c[0, 0][1] <= 1.05 * 1.05 + 1e-9
    assert out.solves == 4 and out.failures == 0


def test_without_cutoff_bounds_never_loosen():
    case = two_bus()
    d = CommitmentTrajectory.from_y(case, Y_BEST)
    base = initial_cs_bounds(case)
    out = run_obbt(case, d, None, math.inf, [(0, 0), (0, 1)], base)
    for key in base.c:
        assert base.c[key][0] <= out.bounds.c[key][0] <= out.bounds.c[key][1] <= base.c[key][1]
        assert base.s[key][0] <= out.bounds.s[key][0] <= out.bounds.s[key][1] <= base.s[key][1]
    assert not out.infeasible


def test_incumbent_and_grid_points_stay_inside():
    case = two_bus()
    d = CommitmentTrajectory.from_y(case, Y_BEST)
    spg = solve_spg(case, d, DriverOptions(obbt=False), RefinementState())
    assert spg.feasible
    out = run_obbt(case, d, None, spg.z_U, [(0, 0), (0, 1)], initial_cs_bounds(case))
    assert out.tightened
    lifted = lift_solution(case, spg.x)
    for t in range(2):
        assert _inside(out.bounds, 0, t, lifted["c", 0, t], lifted["s", 0, t])
    # a looser cutoff admits coarse grid points; all of them must stay inside
    cutoff = 1.05 * spg.z_U
    out = run_obbt(case, d, None, cutoff, [(0, 0), (0, 1)], initial_cs_bounds(case))
    grid = two_bus_grid(two_bus_dict(), Y_BEST, n_mag=5, n_ang=41)
    fixed = 80.0  # G2 starts in hour 2 after four hours offline: the cold segment
    best = [min(p[0] for p in pts) for pts in grid]
    checked = 0
    for t, pts in enumerate(grid):
        others = sum(best) - best[t]
        for cost, c, s, _, _ in pts:
            if cost + others + fixed <= cutoff:
                assert _inside(out.bounds, 0, t, c, s)
                checked += 1
    assert checked > 0
    print('grid points checked', checked)


def test_cutoff_below_the_optimum_empties_the_relaxation():
    case = two_bus()
    d = CommitmentTrajectory.from_y(case, Y_BEST)
    out = run_obbt(case, d, None, 1000.0, [(0, 0)], initial_cs_bounds(case))
    assert out.infeasible and out.cutoff == pytest.approx(1000.0, rel=1e-6)


def test_cutoff_row_and_value():
    assert cutoff_value(math.inf) == math.inf
    assert cutoff_value(100.0) == pytest.approx(100.0 + 1e-5)
    from ucac.model import ModelInstance
    m = ModelInstance()
    m.add_var("x")
    m.set_objective({"x": 2.0}, constant=1.0)
    add_cutoff_row(m, 5.0)
    row = m.linear[-1]
    assert row.coef == [2.0] and row.hi == 4.0


def test_target_selection():
    viol = [((0, 0), 0.5), ((1, 0), 1e-6), ((0, 0), 0.7), ((2, 1), 0.2), ((3, 0), 0.3)]
    assert select_targets(viol, k=2, eps=1e-4) == [(0, 0), (3, 0)]
    assert select_targets(viol, k=10, eps=1.0) == []
