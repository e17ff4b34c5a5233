"""Global solver for unit commitment with AC transmission constraints."""

__version__ = "0.1.0"

from .case import NetworkCase, load_case, save_case  # noqa: E402
from .driver import DriverOptions, RunRecord, relative_gap, solve_spg, solve_ucac  # noqa: E402

__all__ = [
    "DriverOptions", "NetworkCase", "RunRecord", "load_case", "relative_gap", "save_case",
    "solve_spg", "solve_ucac",
]
