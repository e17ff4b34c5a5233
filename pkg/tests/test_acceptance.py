"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line."""

import itertools
import math
import os

import numpy as np
import pytest

from ucac.case import cycle_basis, initial_cs_bounds, load_case
from ucac.driver import DriverOptions, solve_spg, solve_ucac
from ucac.formulations import build_master_M, build_master_Mf, lift_solution
from ucac.obbt import run_obbt
from ucac.refinement import (
    Rect, RefinementState, arctan_planes, arctan_value, integer_cut_terms, mccormick_rows, mccormick_value,
    refine_partitions, secant_value,
)
from ucac.report import format_intervals
from ucac.uc import CommitmentTrajectory, commitment_bounds, evaluate_cost

from _cases import FIXTURES, load, two_bus_dict
from _oracles import enumerate_optimum, feasible_commitments, logic_feasible, sample_operating_point, two_bus_grid
from _points import full_point, rotate_to_reference
from test_uc import _lp_feasible_and_unique, _unit_case

pytestmark = pytest.mark.slow


@pytest.mark.criterion(1, "oracle equivalence on the toy suite")
def test_oracle_equivalence(fixture_runs):
    wall = 0.0
    for name, data in FIXTURES.items():
        case, rec = fixture_runs.get(name)
        wall += rec.wall_time
        best, y_best, _, table = enumerate_optimum(data, starts=10)
        print(f"{name}: solver {rec.z_U:.6f} frozen {rec.z_L_frozen:.6f} oracle {best:.6f} "
              f"({len(table)} commitments) {rec.wall_time:.1f}s")
        assert math.isfinite(best)
        assert abs(rec.z_U - best) <= 5e-3 * abs(best)
        assert rec.z_L_frozen <= best * (1 + 1e-9)
    print(f"solver wall time {wall:.1f}s")
    assert wall < 300.0


def _sampled_points(data, n, seed):
    """``n`` AC-feasible points spread over the commitments that admit any."""
    rng = np.random.default_rng(seed)
    ys = [y for y in feasible_commitments(data) if sample_operating_point(data, y, rng) is not None]
    assert ys
    out = []
    while len(out) < n:
        y = ys[len(out) % len(ys)]
        s = sample_operating_point(data, y, rng)
        if s is not None:
            out.append((y, s))
    return ys, out


@pytest.mark.criterion(2, "sampled AC-feasible points lift into both masters")
def test_relaxation_soundness(fixture_runs):
    for name, data in FIXTURES.items():
        case, rec = fixture_runs.get(name)
        base = initial_cs_bounds(case)
        cycles = cycle_basis(case)
        cycles = cycles if len(cycles) else None
        # grids from the solver run (or forced ones on radial fixtures) so the estimator blocks are live
        state = RefinementState(grids=dict(rec.state.grids))
        ys, pts = _sampled_points(data, 100, seed=5)
        if not state.grids and case.n_branch:
            P, Q, QS, V, _ = pts[0][1]
            first = lift_solution(case, full_point(case, pts[0][0], P, Q, QS, rotate_to_reference(case, V)))
            viol = [((l, t), 1.0) for l in range(case.n_branch) for t in case.periods]
            refine_partitions(case, state, base, viol, first, eps=0.0)
            refine_partitions(case, state, base, viol, first, eps=0.0)
        m = build_master_M(case)
        fixed = {}
        worst = 0.0
        for y, (P, Q, QS, V, _) in pts:
            key = tuple(np.ravel(y))
            if key not in fixed:
                d = CommitmentTrajectory.from_y(case, y)
                fixed[key] = (build_master_Mf(case, d), build_master_Mf(case, d, state, bounds=base, cycles=cycles))
            point = full_point(case, y, P, Q, QS, rotate_to_reference(case, V))
            plain = lift_solution(case, point)
            worst = max(worst, m.max_violation(m.vector(plain)), fixed[key][0].max_violation(fixed[key][0].vector(plain)))
            if state.grids:
                refined = lift_solution(case, point, state, base, cycles)
                worst = max(worst, fixed[key][1].max_violation(fixed[key][1].vector(refined)))
        print(f"{name}: {len(pts)} points over {len(ys)} commitments, {len(state.grids)} grids, "
              f"worst violation {worst:.2e}")
        assert worst <= 1e-8


def _dyadic(rng, lo, hi, size):
    return np.round(rng.uniform(lo, hi, size) * 64) / 64


@pytest.mark.criterion(3, "over/under-estimator and cycle-plane sandwich")
def test_estimator_sandwich():
    rng = np.random.default_rng(2024)
    n = 10_000
    # secant over-estimator of c^2 + s^2
    worst = 0.0
    for _ in range(n):
        c0, c1 = np.sort(_dyadic(rng, -1.2, 1.2, 2))
        s0, s1 = np.sort(_dyadic(rng, -1.2, 1.2, 2))
        cell = Rect(c0, c1, s0, s1)
        c, s = rng.uniform(c0, c1), rng.uniform(s0, s1)
        worst = max(worst, c * c + s * s - secant_value(cell, c, s))
        for cc, ss in itertools.product((c0, c1), (s0, s1)):
            assert secant_value(cell, cc, ss) == cc * cc + ss * ss
    print(f"secant worst {worst:.2e}")
    assert worst <= 1e-9
    # McCormick under-estimators of a product
    worst = 0.0
    for _ in range(n):
        b0, b1 = np.sort(_dyadic(rng, 0.8, 1.25, 2))
        k0, k1 = np.sort(_dyadic(rng, 0.8, 1.25, 2))
        cell = Rect(b0, b1, k0, k1)
        b, k = rng.uniform(b0, b1), rng.uniform(k0, k1)
        worst = max(worst, max(mccormick_rows(cell, b, k)) - b * k, mccormick_value(cell, b, k) - b * k)
        for bb, kk in itertools.product((b0, b1), (k0, k1)):
            assert mccormick_value(cell, bb, kk) == bb * kk
    print(f"McCormick worst {worst:.2e}")
    assert worst <= 1e-9
    # angle planes around -arctan(s / c)
    worst = 0.0
    for _ in range(n):
        c0, c1 = np.sort(rng.uniform(0.0, 1.25, 2))
        s0, s1 = np.sort(rng.uniform(-1.2, 1.2, 2))
        p = arctan_planes(Rect(c0, c1, s0, s1))
        c, s = rng.uniform(c0, c1), rng.uniform(s0, s1)
        if c <= 0:
            continue
        f = float(arctan_value(c, s))
        worst = max(worst, p.lower(c, s) - f, f - p.upper(c, s))
    print(f"angle planes worst {worst:.2e}")
    assert worst <= 1e-9


@pytest.mark.criterion(4, "integer cuts exclude exactly their own assignment")
def test_integer_cut_exactness():
    shapes = [(1, n) for n in range(1, 13)] + [(2, 3), (3, 4), (2, 6), (4, 3), (6, 2), (12, 1)]
    for G, T in shapes:
        n = G * T
        Y = np.array(list(itertools.product((0, 1), repeat=n)), dtype=float)
        A = np.zeros((len(Y), n))
        rhs = np.zeros(len(Y))
        for i, y0 in enumerate(Y):
            terms, r = integer_cut_terms(y0.astype(int).tolist(), G, T)
            for (_, g, t), a in terms.items():
                A[i, g * T + t] = a
            rhs[i] = r
        violated = Y @ A.T > rhs[None, :] + 1e-9  # [assignment, cut]
        assert np.array_equal(violated, np.eye(len(Y), dtype=bool)), (G, T)


@pytest.mark.criterion(5, "OBBT keeps the incumbent and all grid-feasible points")
def test_obbt_soundness():
    data = two_bus_dict()
    case = load(data)
    runs = {}
    for y in feasible_commitments(data):
        d = CommitmentTrajectory.from_y(case, y)
        spg = solve_spg(case, d, DriverOptions(obbt=False), RefinementState())
        if spg.feasible:
            runs[tuple(np.ravel(y))] = (y, d, spg)
    z_best = min(r[2].z_U for r in runs.values())
    targets = [(0, t) for t in case.periods]
    checked = 0
    exceptions = []
    for key, (y, d, spg) in runs.items():
        fixed = evaluate_cost(commitment_bounds(case, d), case)
        fixed = fixed.startup + fixed.shutdown
        grid = two_bus_grid(data, y, n_mag=7, n_ang=61)
        best = [min(p[0] for p in pts) for pts in grid]
        refined = RefinementState()
        base = initial_cs_bounds(case)
        lifted_inc = lift_solution(case, spg.x)
        refine_partitions(case, refined, base, [((0, t), 1.0) for t in case.periods], lifted_inc, eps=0.0)
        for cutoff in (z_best, spg.z_U, 1.01 * spg.z_U, 1.05 * spg.z_U, 1.2 * spg.z_U, math.inf):
            for state in (None, refined):
                out = run_obbt(case, d, state, cutoff, targets, base)
                if spg.z_U <= cutoff:
                    points = [(t, lifted_inc["c", 0, t], lifted_inc["s", 0, t]) for t in case.periods]
                else:
                    points = []
                for t, pts in enumerate(grid):
                    others = sum(best) - best[t]
                    points += [(t, c, s) for cost, c, s, _, _ in pts if cost + others + fixed <= cutoff]
                for t, c, s in points:
                    checked += 1
                    (clo, chi), (slo, shi) = out.bounds.c[0, t], out.bounds.s[0, t]
                    inside = clo - 1e-7 <= c <= chi + 1e-7 and slo - 1e-7 <= s <= shi + 1e-7
                    if out.infeasible or not inside:
                        exceptions.append((key, cutoff, t, c, s))
    print(f"{len(runs)} commitments, {checked} point checks, {len(exceptions)} exceptions")
    assert checked > 0
    assert exceptions == []


@pytest.mark.criterion(6, "certified inner bounds never decrease and the final gap meets the tolerance")
def test_bound_monotonicity(fixture_runs):
    tol = DriverOptions().outer_tol
    for name in FIXTURES:
        case, rec = fixture_runs.get(name)
        by_q = {}
        for rnd in rec.inner:
            by_q.setdefault(rnd.q, []).append(rnd.z_L_fixed)
        for q, bounds in by_q.items():
            for a, b in zip(bounds, bounds[1:]):
                assert b >= a - 1e-8 * abs(a), (name, q, bounds)
        print(f"{name}: {rec.termination} gap {rec.gap:.2e}, inner rounds per visit "
              f"{[len(v) for v in by_q.values()]}")
        assert rec.termination == "gap-closed"
        assert rec.gap <= tol


SIXBUS_SCHEDULE = {"G1": "1-24", "G2": "1, 12-21", "G3": "10-22"}


@pytest.mark.criterion(7, "6-bus reproduction (needs UCAC_SIXBUS_CASE)")
@pytest.mark.skipif(not os.environ.get("UCAC_SIXBUS_CASE"), reason="UCAC_SIXBUS_CASE not set")
def test_sixbus_reproduction():
    case = load_case(os.environ["UCAC_SIXBUS_CASE"])
    rec = solve_ucac(case, DriverOptions(time_limit=900.0))
    print(f"6-bus: {rec.termination} z_U {rec.z_U:.2f} z_L {rec.z_L:.2f} gap {rec.gap:.4%} {rec.wall_time:.1f}s")
    assert abs(rec.z_U - 101_763) <= 1e-3 * 101_763
    assert rec.gap <= 5e-3
    assert rec.wall_time <= 900.0
    got = {gen.id: format_intervals(rec.d_best.y[g]) for g, gen in enumerate(case.generators)}
    if got != SIXBUS_SCHEDULE:
        # accept a different schedule only when it ties in cost with the reference one
        y = np.zeros((case.n_gen, case.horizon))
        from ucac.report import parse_intervals

        for g, gen in enumerate(case.generators):
            y[g] = parse_intervals(SIXBUS_SCHEDULE[gen.id], case.horizon)
        ref = solve_spg(case, CommitmentTrajectory.from_y(case, y), DriverOptions(), RefinementState())
        assert ref.feasible and abs(ref.z_U - rec.z_U) <= 1e-3 * rec.z_U, got


@pytest.mark.criterion(8, "start/stop logic: binary indicators and window feasibility")
def test_three_binary_logic():
    configs = 0
    for T in range(1, 7):
        for min_up, min_down in itertools.product((1, 2, 3), repeat=2):
            for status in (-3, -1, 1, 2):
                if T < 6 and (min_up, min_down) not in ((1, 1), (2, 3), (3, 2)):
                    continue
                data = _unit_case(T, min_up=min_up, min_down=min_down, status=status)
                case = load(data)
                gen = data["generators"][0]
                for y in itertools.product((0, 1), repeat=T):
                    feasible, values = _lp_feasible_and_unique(case, y)
                    assert feasible == logic_feasible(gen, y, T), (T, min_up, min_down, status, y)
                    if feasible:
                        for lo, hi in values:
                            assert hi - lo < 1e-9 and min(abs(lo), abs(lo - 1)) < 1e-9
                configs += 1
    print(f"{configs} unit configurations checked")
