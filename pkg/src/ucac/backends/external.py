"""Adapter for solvers running in a separate process.

Protocol: the problem (exchange JSON plus a ``request`` section) is written to
``problem.json`` in a temporary directory, the configured command is invoked as
``<command> problem.json result.json`` and the result file is read back:

    {"status": "optimal-within-gap", "objective": 1.0, "bound": 0.9,
     "x": {"p[0,1]": 0.5, ...}}
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import tempfile
import time
from pathlib import Path

import numpy as np

from ..model import key_to_name
from .base import BackendError, SolveRequest, SolveResult, Status


def _num(v) -> float:
    if isinstance(v, str):
        return float(v)
    return math.nan if v is None else float(v)


def solve_external(command: str, req: SolveRequest, problem_class: str) -> SolveResult:
    start = time.perf_counter()
    model = req.model
    payload = model.to_dict()
    payload["request"] = {
        "class": problem_class,
        "gap": req.gap,
        "time_limit": req.time_limit,
        "threads": req.threads,
        "seed": req.seed,
        "known_lower_bound": str(req.known_lower_bound) if math.isinf(req.known_lower_bound) else req.known_lower_bound,
        "cutoff": str(req.cutoff) if math.isinf(req.cutoff) else req.cutoff,
    }
    if req.warm_start is not None:
        payload["request"]["warm_start"] = {key_to_name(k): float(v) for k, v in zip(model.keys, req.warm_start)}
    with tempfile.TemporaryDirectory(prefix="ucac-") as tmp:
        problem = Path(tmp) / "problem.json"
        result = Path(tmp) / "result.json"
        problem.write_text(json.dumps(payload))
        try:
            proc = subprocess.run(
                shlex.split(command) + [str(problem), str(result)],
                capture_output=True, text=True, timeout=req.time_limit + 60,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            return SolveResult(Status.ERROR, message=f"external solver failed: {exc}",
                               wall_time=time.perf_counter() - start)
        if proc.returncode != 0 or not result.exists():
            return SolveResult(Status.ERROR, wall_time=time.perf_counter() - start,
                               message=f"external solver exit {proc.returncode}: {proc.stderr.strip()[-500:]}")
        try:
            data = json.loads(result.read_text())
            status = Status(data["status"])
        except (ValueError, KeyError) as exc:
            raise BackendError(f"malformed result file from {command!r}: {exc}") from exc
    x = None
    if data.get("x") is not None:
        values = {name: _num(v) for name, v in data["x"].items()}
        x = np.array([values.get(key_to_name(k), 0.0) for k in model.keys])
    return SolveResult(
        status, x=x,
        objective=_num(data.get("objective", "inf")),
        bound=_num(data.get("bound", "-inf")),
        residuals={k: float(v) for k, v in data.get("residuals", {}).items()},
        wall_time=time.perf_counter() - start,
        message=str(data.get("message", "")),
    )
