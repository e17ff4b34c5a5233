"""Solve contracts for the three problem classes used by the algorithm.

Built-in implementations are used unless an external command is configured,
either through :func:`configure` or the environment variables
``UCAC_BACKEND_CONIC``, ``UCAC_BACKEND_MIXED_CONIC`` and ``UCAC_BACKEND_NLP``.
"""

from __future__ import annotations

import os

from .base import BackendError, SolveRequest, SolveResult, Status
from .bnb import solve_mixed_conic as _builtin_mixed
from .conic import solve_conic as _builtin_conic
from .external import solve_external
from .nlp import solve_nlp_local as _builtin_nlp

CLASSES = ("conic", "mixed_conic", "nlp")
_configured: dict[str, str] = {}


def configure(problem_class: str, command: str | None) -> None:
    if problem_class not in CLASSES:
        raise ValueError(f"unknown problem class {problem_class!r}")
    if command:
        _configured[problem_class] = command
    else:
        _configured.pop(problem_class, None)


def external_command(problem_class: str) -> str | None:
    return _configured.get(problem_class) or os.environ.get(f"UCAC_BACKEND_{problem_class.upper()}") or None


def solve_conic(req: SolveRequest) -> SolveResult:
    cmd = external_command("conic")
    return solve_external(cmd, req, "conic") if cmd else _builtin_conic(req)


def solve_mixed_conic(req: SolveRequest) -> SolveResult:
    cmd = external_command("mixed_conic")
    return solve_external(cmd, req, "mixed_conic") if cmd else _builtin_mixed(req)


def solve_nlp_local(req: SolveRequest) -> SolveResult:
    cmd = external_command("nlp")
    return solve_external(cmd, req, "nlp") if cmd else _builtin_nlp(req)


__all__ = [
    "BackendError", "SolveRequest", "SolveResult", "Status", "configure", "external_command",
    "solve_conic", "solve_mixed_conic", "solve_nlp_local",
]
