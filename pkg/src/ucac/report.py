"""Solve reports: commitment intervals, dispatch tables and the iteration trace."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .case import NetworkCase
from .driver import RunRecord, relative_gap

EMPTY = "∅"
REPORT_FORMAT = "ucac-report-1"


def format_intervals(row) -> str:
    """Hours (1-based) where ``row`` is on, as compact ranges: ``"1, 12-21"``."""
    hours = [t + 1 for t, v in enumerate(row) if int(v) == 1]
    if not hours:
        return EMPTY
    parts = []
    start = prev = hours[0]
    for h in hours[1:] + [None]:
        if h is not None and h == prev + 1:
            prev = h
            continue
        parts.append(str(start) if start == prev else f"{start}-{prev}")
        if h is not None:
            start = prev = h
    return ", ".join(parts)


_RANGE = re.compile(r"^\s*(\d+)\s*(?:-\s*(\d+))?\s*$")


def parse_intervals(text: str, horizon: int) -> list[int]:
    """Inverse of :func:`format_intervals`."""
    row = [0] * horizon
    text = text.strip()
    if text in (EMPTY, ""):
        return row
    for part in text.split(","):
        m = _RANGE.match(part)
        if not m:
            raise ValueError(f"bad interval {part!r}")
        a = int(m.group(1))
        b = int(m.group(2) or a)
        if not 1 <= a <= b <= horizon:
            raise ValueError(f"interval {part.strip()!r} outside hours 1..{horizon}")
        for h in range(a, b + 1):
            row[h - 1] = 1
    return row


def _num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else "-inf"
    return v


def _unnum(v):
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    return v


@dataclass
class CommitmentRow:
    generator: str
    bus: str
    intervals: str


@dataclass
class SolveReport:
    case: str
    status: str
    z_U: float
    z_L: float
    gap: float
    horizon: int
    z_L_frozen: float = -math.inf
    gap_is_absolute: bool = False
    commitments: list[CommitmentRow] = field(default_factory=list)
    dispatch: list[dict[str, Any]] = field(default_factory=list)  # one entry per hour
    trace: list[dict[str, Any]] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)
    version: str = __version__

    def y_matrix(self) -> np.ndarray:
        return np.array([parse_intervals(c.intervals, self.horizon) for c in self.commitments], dtype=int)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["format"] = REPORT_FORMAT
        for k in ("z_U", "z_L", "gap", "z_L_frozen"):
            d[k] = _num(d[k])
        d["trace"] = [{k: _num(v) for k, v in row.items()} for row in self.trace]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SolveReport":
        data = dict(data)
        data.pop("format", None)
        for k in ("z_U", "z_L", "gap", "z_L_frozen"):
            data[k] = float(_unnum(data[k]))
        data["commitments"] = [CommitmentRow(**c) for c in data.get("commitments", [])]
        data["trace"] = [{k: _unnum(v) for k, v in row.items()} for row in data.get("trace", [])]
        return cls(**data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False))

    @classmethod
    def load(cls, path: str | Path) -> "SolveReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_report(case: NetworkCase, rec: RunRecord, config: dict | None = None) -> SolveReport:
    gap, absolute = relative_gap(rec.z_U, rec.z_L)
    rep = SolveReport(
        case=case.name, status=rec.termination, z_U=rec.z_U, z_L=rec.z_L, gap=gap,
        horizon=case.horizon, z_L_frozen=rec.z_L_frozen, gap_is_absolute=absolute,
        config=dict(config if config is not None else rec.options),
    )
    y = rec.d_best.y if rec.d_best is not None else np.zeros((case.n_gen, case.horizon))
    for g, gen in enumerate(case.generators):
        rep.commitments.append(CommitmentRow(gen.id, case.buses[gen.bus].id, format_intervals(y[g])))
    if rec.x_best is not None:
        x = rec.x_best
        base = case.base_mva
        for t in case.periods:
            rep.dispatch.append({
                "hour": t + 1,
                "p_mw": {gen.id: base * x.get(("p", g, t), 0.0) for g, gen in enumerate(case.generators)},
                "q_mvar": {gen.id: base * x.get(("q", g, t), 0.0) for g, gen in enumerate(case.generators)},
                "q_condenser_mvar": {sc.id: base * x.get(("qsc", i, t), 0.0)
                                     for i, sc in enumerate(case.sync_condensers)},
                "v_pu": {bus.id: math.hypot(x.get(("vr", b, t), 0.0), x.get(("vj", b, t), 0.0))
                         for b, bus in enumerate(case.buses)},
            })
    for it in rec.iterations:
        rep.trace.append({
            "q": it.q, "master_bound": it.z_L, "commitment_upper": it.z_U,
            "commitment_lower": it.commitment_bound, "inner_iterations": it.inner_iterations,
            "inner_status": it.spg_status, "mip_gap": it.mip_gap,
            "z_L": it.global_z_L, "z_U": it.global_z_U, "wall_s": it.wall_s,
        })
    return rep


def emit_commitment_table(report: SolveReport, fmt: str = "csv") -> str:
    """Commitment rows ``generator, bus, intervals`` as CSV or aligned text."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["generator", "bus", "intervals"])
        for c in report.commitments:
            w.writerow([c.generator, c.bus, c.intervals])
        return buf.getvalue()
    if fmt == "text":
        rows = [("generator", "bus", "intervals")] + [(c.generator, c.bus, c.intervals) for c in report.commitments]
        widths = [max(len(r[i]) for r in rows) for i in range(2)]
        return "\n".join(f"{r[0]:<{widths[0]}}  {r[1]:<{widths[1]}}  {r[2]}" for r in rows) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def parse_commitment_table(text: str, horizon: int) -> np.ndarray:
    rows = list(csv.DictReader(io.StringIO(text)))
    return np.array([parse_intervals(r["intervals"], horizon) for r in rows], dtype=int).reshape(len(rows), horizon)


def summary_text(report: SolveReport) -> str:
    def fmt(v):
        return f"{v:,.4f}" if math.isfinite(v) else str(v)

    gap = "n/a" if not math.isfinite(report.gap) else (
        f"{report.gap:.4g} (absolute)" if report.gap_is_absolute else f"{100 * report.gap:.4f}%")
    lines = [
        f"case        {report.case}",
        f"status      {report.status}",
        f"upper bound {fmt(report.z_U)}",
        f"lower bound {fmt(report.z_L)}",
        f"gap         {gap}",
        "",
        emit_commitment_table(report, "text").rstrip(),
    ]
    return "\n".join(lines) + "\n"
