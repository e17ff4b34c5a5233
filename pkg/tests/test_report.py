import math

import numpy as np
from hypothesis import given, settings, strategies as st

from ucac.report import (
    CommitmentRow, SolveReport, build_report, emit_commitment_table, format_intervals,
    parse_commitment_table, parse_intervals, summary_text,
)

from _cases import one_bus


def test_interval_examples():
    assert format_intervals([1, 0, 1, 0]) == "1, 3"
    assert format_intervals([0, 0, 0]) == "∅"
    row = [1] + [0] * 10 + [1] * 10 + [0] * 3
    assert format_intervals(row) == "1, 12-21"
    assert parse_intervals("1, 12-21", 24) == row


def test_parse_rejects_out_of_range():
    import pytest

    with pytest.raises(ValueError):
        parse_intervals("0-2", 4)
    with pytest.raises(ValueError):
        parse_intervals("3-5", 4)
    with pytest.raises(ValueError):
        parse_intervals("x", 4)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=48))
def test_intervals_bijection(row):
    text = format_intervals(row)
    assert parse_intervals(text, len(row)) == row


def _random_report(rng) -> SolveReport:
    T = int(rng.integers(1, 25))
    G = int(rng.integers(1, 5))
    y = rng.integers(0, 2, size=(G, T))
    z_L = float(rng.uniform(0, 1e5))
    z_U = z_L + float(rng.uniform(0, 100)) if rng.random() < 0.8 else math.inf
    rows = [CommitmentRow(f"g{g}", f"b{g}", format_intervals(y[g])) for g in range(G)]
    trace = [{"q": q, "z_L": z_L, "z_U": z_U, "mip_gap": 1e-3} for q in range(int(rng.integers(0, 4)))]
    return SolveReport(case="rand", status="gap-closed", z_U=z_U, z_L=z_L, gap=(z_U - z_L) / z_L if z_L else z_U,
                       horizon=T, commitments=rows, trace=trace, config={"seed": 0})


def test_report_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    for i in range(100):
        rep = _random_report(rng)
        rep.save(tmp_path / "r.json")
        back = SolveReport.load(tmp_path / "r.json")
        assert back == rep
        np.testing.assert_array_equal(parse_commitment_table(emit_commitment_table(rep), rep.horizon),
                                      rep.y_matrix())


def test_build_report_from_run():
    from ucac.driver import solve_ucac

    case = one_bus(3)
    rec = solve_ucac(case)
    rep = build_report(case, rec)
    assert rep.commitments[0].intervals == "1-3"
    assert len(rep.dispatch) == 3 and rep.dispatch[0]["hour"] == 1
    assert rep.trace and rep.trace[-1]["z_U"] == rec.z_U
    text = summary_text(rep)
    assert "upper bound" in text and "1-3" in text
