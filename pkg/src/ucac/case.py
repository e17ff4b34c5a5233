"""Network case data model, JSON ingestion and network-derived quantities.

All electrical quantities are stored in per unit on ``base_mva`` once a case
has been loaded.  Generator cost coefficients are rescaled accordingly so that
``cost2 * p**2 + cost1 * p + cost0`` with ``p`` in per unit gives $/h.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

CASE_FORMAT = "ucac-case-1"
DEFAULT_ANGLE_MAX = math.pi / 2


class CaseError(ValueError):
    """Base class for problems with a case file."""


class CaseFormatError(CaseError):
    """The file could not be parsed as a canonical case."""


class CaseUnitError(CaseError):
    """Per-unit normalization is impossible (missing or bad ``baseMVA``)."""


class CaseValidationError(CaseError):
    """One or more case invariants are violated."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid case:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class Bus:
    id: str
    v_min: float
    v_max: float
    g_sh: float = 0.0
    b_sh: float = 0.0


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0
    tap: float = 1.0
    shift: float = 0.0  # rad
    s_max: float = math.inf
    angle_max: float = DEFAULT_ANGLE_MAX  # rad


@dataclass(frozen=True)
class StartupSegment:
    hours_offline: int
    cost: float


@dataclass(frozen=True)
class Generator:
    id: str
    bus: int
    cost2: float
    cost1: float
    cost0: float
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    ramp_up: float
    ramp_down: float
    startup_capability: float
    shutdown_capability: float
    min_up: int
    min_down: int
    startup_segments: tuple[StartupSegment, ...]
    shutdown_cost: float = 0.0
    initial_status: int = -1  # hours on (>0) or off (<0) before t=1
    initial_p: float = 0.0

    @property
    def initially_on(self) -> bool:
        return self.initial_status > 0


@dataclass(frozen=True)
class SyncCondenser:
    id: str
    bus: int
    q_min: float
    q_max: float


@dataclass(frozen=True)
class AdmittanceBlocks:
    """Real and imaginary parts of the 2x2 branch admittance matrix."""

    g_ff: float
    b_ff: float
    g_ft: float
    b_ft: float
    g_tf: float
    b_tf: float
    g_tt: float
    b_tt: float


@dataclass(frozen=True)
class Cycle:
    branches: tuple[int, ...]
    signs: tuple[int, ...]  # +1 traversed from->to, -1 reversed


@dataclass(frozen=True)
class CycleSet:
    cycles: tuple[Cycle, ...]

    def __len__(self) -> int:
        return len(self.cycles)

    def __iter__(self):
        return iter(self.cycles)


@dataclass(frozen=True)
class NetworkCase:
    name: str
    base_mva: float
    horizon: int
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    sync_condensers: tuple[SyncCondenser, ...]
    p_demand: np.ndarray  # (n_bus, T), p.u.
    q_demand: np.ndarray  # (n_bus, T), p.u.
    reserve: np.ndarray  # (T,), p.u.
    admittances: tuple[AdmittanceBlocks, ...] = field(default=(), compare=False)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def periods(self) -> range:
        return range(self.horizon)

    def bus_index(self, bus_id: str) -> int:
        for i, bus in enumerate(self.buses):
            if bus.id == bus_id:
                return i
        raise KeyError(bus_id)

    def generators_at(self, b: int) -> list[int]:
        return [g for g, gen in enumerate(self.generators) if gen.bus == b]

    def condensers_at(self, b: int) -> list[int]:
        return [c for c, sc in enumerate(self.sync_condensers) if sc.bus == b]

    def branches_out(self, b: int) -> list[int]:
        return [l for l, br in enumerate(self.branches) if br.from_bus == b]

    def branches_in(self, b: int) -> list[int]:
        return [l for l, br in enumerate(self.branches) if br.to_bus == b]

    def components(self) -> list[list[int]]:
        """Connected components of the bus graph, each sorted by bus index."""
        adj: list[list[int]] = [[] for _ in self.buses]
        for br in self.branches:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
        seen = [False] * self.n_bus
        comps = []
        for root in range(self.n_bus):
            if seen[root]:
                continue
            seen[root] = True
            comp, queue = [], deque([root])
            while queue:
                b = queue.popleft()
                comp.append(b)
                for k in adj[b]:
                    if not seen[k]:
                        seen[k] = True
                        queue.append(k)
            comps.append(sorted(comp))
        return comps

    def reference_buses(self) -> list[int]:
        """One reference bus per connected component (the lowest index)."""
        return [comp[0] for comp in self.components()]


def branch_admittance(branch: Branch) -> AdmittanceBlocks:
    """Pi-model admittance blocks with off-nominal tap and phase shift."""
    if not branch.tap > 0:
        raise CaseValidationError([f"branch {branch.id}: tap ratio must be > 0"])
    if branch.r == 0 and branch.x == 0:
        raise CaseValidationError([f"branch {branch.id}: zero impedance"])
    y = 1.0 / complex(branch.r, branch.x)
    half_charging = 1j * branch.b / 2.0
    tap = branch.tap * complex(math.cos(branch.shift), math.sin(branch.shift))
    y_ff = (y + half_charging) / branch.tap**2
    y_ft = -y / tap.conjugate()
    y_tf = -y / tap
    y_tt = y + half_charging
    return AdmittanceBlocks(
        y_ff.real, y_ff.imag, y_ft.real, y_ft.imag,
        y_tf.real, y_tf.imag, y_tt.real, y_tt.imag,
    )


def cycle_basis(case: NetworkCase) -> CycleSet:
    """Fundamental cycles of a BFS spanning forest.

    Each chord closes exactly one cycle, so the count is
    ``n_branch - n_bus + n_components``.  Parallel branches are handled.
    """
    adj: list[list[tuple[int, int]]] = [[] for _ in case.buses]
    for l, br in enumerate(case.branches):
        adj[br.from_bus].append((br.to_bus, l))
        adj[br.to_bus].append((br.from_bus, l))

    parent: list[int | None] = [None] * case.n_bus  # tree branch to parent
    depth = [-1] * case.n_bus
    tree = set()
    for comp in case.components():
        root = comp[0]
        depth[root] = 0
        queue = deque([root])
        while queue:
            b = queue.popleft()
            for k, l in adj[b]:
                if depth[k] < 0:
                    depth[k] = depth[b] + 1
                    parent[k] = l
                    tree.add(l)
                    queue.append(k)

    def up(bus: int) -> tuple[int, int, int]:
        l = parent[bus]
        br = case.branches[l]
        other = br.from_bus if br.to_bus == bus else br.to_bus
        return l, other, (1 if br.from_bus == bus else -1)

    cycles = []
    for l, br in enumerate(case.branches):
        if l in tree:
            continue
        # walk: from -> to along the chord, then back to "from" through the tree
        a, b = br.to_bus, br.from_bus
        head: list[tuple[int, int]] = []  # path a -> lca, traversal order
        tail: list[tuple[int, int]] = []  # path b -> lca, reversed later
        while depth[a] > depth[b]:
            tl, a, sign = up(a)
            head.append((tl, sign))
        while depth[b] > depth[a]:
            tl, b, sign = up(b)
            tail.append((tl, sign))
        while a != b:
            tl, a, sign = up(a)
            head.append((tl, sign))
            tl, b, sign = up(b)
            tail.append((tl, sign))
        edges = [(l, 1)] + head + [(tl, -sign) for tl, sign in reversed(tail)]
        cycles.append(Cycle(tuple(e for e, _ in edges), tuple(s for _, s in edges)))
    return CycleSet(tuple(cycles))


@dataclass
class BoundsStore:
    """Boxes for the lifted voltage-product variables.

    ``c``/``s`` are keyed by ``(branch, t)``, ``cbb`` by ``(bus, t)``; each value
    is a ``(lower, upper)`` pair.
    """

    c: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)
    s: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)
    cbb: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)

    def copy(self) -> "BoundsStore":
        return BoundsStore(dict(self.c), dict(self.s), dict(self.cbb))

    def check(self) -> list[str]:
        bad = []
        for name in ("c", "s", "cbb"):
            for key, (lo, hi) in getattr(self, name).items():
                if lo > hi:
                    bad.append(f"{name}{key}: {lo} > {hi}")
        return bad

    def to_dict(self) -> dict[str, Any]:
        return {
            name: [[k[0], k[1], lo, hi] for k, (lo, hi) in sorted(getattr(self, name).items())]
            for name in ("c", "s", "cbb")
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BoundsStore":
        out = cls()
        for name in ("c", "s", "cbb"):
            getattr(out, name).update(
                {(int(a), int(t)): (float(lo), float(hi)) for a, t, lo, hi in data.get(name, [])}
            )
        return out


def initial_cs_bounds(case: NetworkCase) -> BoundsStore:
    store = BoundsStore()
    for t in case.periods:
        for b, bus in enumerate(case.buses):
            store.cbb[b, t] = (bus.v_min**2, bus.v_max**2)
        for l, br in enumerate(case.branches):
            fb, tb = case.buses[br.from_bus], case.buses[br.to_bus]
            hi = fb.v_max * tb.v_max
            if br.angle_max <= math.pi / 2:
                c_lo = fb.v_min * tb.v_min * math.cos(br.angle_max)
            else:
                c_lo = -hi
            s_hi = hi * math.sin(min(br.angle_max, math.pi / 2))
            store.c[l, t] = (c_lo, hi)
            store.s[l, t] = (-s_hi, s_hi)
    return store


# ---------------------------------------------------------------------------
# JSON ingestion


def _require(obj: dict, key: str, where: str) -> Any:
    if key not in obj:
        raise CaseFormatError(f"{where}: missing field '{key}'")
    return obj[key]


def _series(values: Any, horizon: int, where: str, problems: list[str]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != horizon:
        problems.append(f"{where}: expected {horizon} entries, got {np.size(arr)}")
        return np.zeros(horizon)
    return arr


def case_from_dict(data: dict[str, Any], *, require_connected: bool = True) -> NetworkCase:
    """Validate a canonical case dictionary and normalize it to per unit."""
    if not isinstance(data, dict):
        raise CaseFormatError("case must be a JSON object")
    fmt = data.get("format", CASE_FORMAT)
    if fmt != CASE_FORMAT:
        raise CaseFormatError(f"unsupported format {fmt!r}, expected {CASE_FORMAT!r}")
    if "baseMVA" not in data:
        raise CaseUnitError("missing baseMVA")
    try:
        base = float(data["baseMVA"])
    except (TypeError, ValueError) as exc:
        raise CaseUnitError(f"bad baseMVA: {data['baseMVA']!r}") from exc
    if not base > 0 or not math.isfinite(base):
        raise CaseUnitError(f"baseMVA must be positive, got {base}")
    horizon = int(_require(data, "horizon", "case"))

    problems: list[str] = []
    if horizon < 1:
        problems.append("horizon must be >= 1")

    buses = []
    bus_ids: dict[str, int] = {}
    for i, raw in enumerate(_require(data, "buses", "case")):
        bid = str(_require(raw, "id", f"buses[{i}]"))
        if bid in bus_ids:
            problems.append(f"bus {bid}: duplicate id")
        bus_ids[bid] = i
        bus = Bus(
            id=bid,
            v_min=float(_require(raw, "v_min", f"bus {bid}")),
            v_max=float(_require(raw, "v_max", f"bus {bid}")),
            g_sh=float(raw.get("g_sh", 0.0)) / base,
            b_sh=float(raw.get("b_sh", 0.0)) / base,
        )
        if bus.v_min > bus.v_max:
            problems.append(f"bus {bid}: v_min {bus.v_min} > v_max {bus.v_max}")
        if bus.v_min < 0:
            problems.append(f"bus {bid}: negative v_min")
        buses.append(bus)

    def bus_ref(value: Any, where: str) -> int:
        key = str(value)
        if key not in bus_ids:
            problems.append(f"{where}: unknown bus {key!r}")
            return -1
        return bus_ids[key]

    branches = []
    for i, raw in enumerate(data.get("branches", [])):
        lid = str(raw.get("id", f"L{i + 1}"))
        s_max = raw.get("s_max")
        br = Branch(
            id=lid,
            from_bus=bus_ref(_require(raw, "from", f"branch {lid}"), f"branch {lid}"),
            to_bus=bus_ref(_require(raw, "to", f"branch {lid}"), f"branch {lid}"),
            r=float(_require(raw, "r", f"branch {lid}")),
            x=float(_require(raw, "x", f"branch {lid}")),
            b=float(raw.get("b", 0.0)),
            tap=float(raw.get("tap", 1.0) or 1.0),
            shift=math.radians(float(raw.get("shift_deg", 0.0))),
            s_max=math.inf if s_max is None else float(s_max) / base,
            angle_max=(
                math.radians(float(raw["angle_max_deg"]))
                if raw.get("angle_max_deg") is not None
                else DEFAULT_ANGLE_MAX
            ),
        )
        if br.from_bus >= 0 and br.from_bus == br.to_bus:
            problems.append(f"branch {lid}: from and to bus coincide")
        if not br.s_max > 0:
            problems.append(f"branch {lid}: s_max must be > 0")
        if not br.tap > 0:
            problems.append(f"branch {lid}: tap ratio must be > 0")
        if br.r == 0 and br.x == 0:
            problems.append(f"branch {lid}: zero impedance")
        if not 0 <= br.angle_max <= math.pi:
            problems.append(f"branch {lid}: angle_max_deg must lie in [0, 180]")
        branches.append(br)

    generators = []
    for i, raw in enumerate(data.get("generators", [])):
        gid = str(raw.get("id", f"G{i + 1}"))
        where = f"generator {gid}"
        cost = [float(v) for v in _require(raw, "cost", where)]
        if len(cost) != 3:
            problems.append(f"{where}: cost must be [a2, a1, a0]")
            cost = (cost + [0.0, 0.0, 0.0])[:3]
        p_max = float(_require(raw, "p_max", where))
        segments_raw = raw.get("startup_segments") or [
            {"hours_offline": int(raw.get("min_down", 1)), "cost": float(raw.get("startup_cost", 0.0))}
        ]
        segments = tuple(
            StartupSegment(int(s["hours_offline"]), float(s["cost"])) for s in segments_raw
        )
        gen = Generator(
            id=gid,
            bus=bus_ref(_require(raw, "bus", where), where),
            cost2=cost[0] * base**2,
            cost1=cost[1] * base,
            cost0=cost[2],
            p_min=float(raw.get("p_min", 0.0)) / base,
            p_max=p_max / base,
            q_min=float(raw.get("q_min", 0.0)) / base,
            q_max=float(raw.get("q_max", 0.0)) / base,
            ramp_up=float(raw.get("ramp_up", p_max)) / base,
            ramp_down=float(raw.get("ramp_down", p_max)) / base,
            startup_capability=float(raw.get("startup_capability", p_max)) / base,
            shutdown_capability=float(raw.get("shutdown_capability", p_max)) / base,
            min_up=int(raw.get("min_up", 1)),
            min_down=int(raw.get("min_down", 1)),
            startup_segments=segments,
            shutdown_cost=float(raw.get("shutdown_cost", 0.0)),
            initial_status=int(_require(raw, "initial_status", where)),
            initial_p=float(raw.get("initial_p", 0.0)) / base,
        )
        if gen.cost2 < 0:
            problems.append(f"{where}: quadratic cost coefficient must be >= 0")
        if gen.p_min > gen.p_max:
            problems.append(f"{where}: p_min > p_max")
        if gen.q_min > gen.q_max:
            problems.append(f"{where}: q_min > q_max")
        if gen.min_up < 1 or gen.min_down < 1:
            problems.append(f"{where}: min_up and min_down must be >= 1")
        if gen.initial_status == 0:
            problems.append(f"{where}: initial_status must be nonzero (+hours on / -hours off)")
        if not segments:
            problems.append(f"{where}: no startup segments")
        hours = [s.hours_offline for s in segments]
        if any(b <= a for a, b in zip(hours, hours[1:])):
            problems.append(f"{where}: startup segment times must be strictly increasing")
        costs = [s.cost for s in segments]
        if any(b < a for a, b in zip(costs, costs[1:])):
            problems.append(f"{where}: startup segment costs must be non-decreasing")
        generators.append(gen)

    condensers = []
    for i, raw in enumerate(data.get("sync_condensers", [])):
        cid = str(raw.get("id", f"SC{i + 1}"))
        sc = SyncCondenser(
            id=cid,
            bus=bus_ref(_require(raw, "bus", f"condenser {cid}"), f"condenser {cid}"),
            q_min=float(raw.get("q_min", 0.0)) / base,
            q_max=float(raw.get("q_max", 0.0)) / base,
        )
        if sc.q_min > sc.q_max:
            problems.append(f"condenser {cid}: q_min > q_max")
        condensers.append(sc)

    n_bus = len(buses)
    p_demand = np.zeros((n_bus, max(horizon, 0)))
    q_demand = np.zeros((n_bus, max(horizon, 0)))
    for key, entry in (data.get("demand") or {}).items():
        if key not in bus_ids:
            problems.append(f"demand: unknown bus {key!r}")
            continue
        b = bus_ids[key]
        p_demand[b] = _series(entry.get("p", [0.0] * horizon), horizon, f"demand {key} p", problems) / base
        q_demand[b] = _series(entry.get("q", [0.0] * horizon), horizon, f"demand {key} q", problems) / base
    reserve = _series(data.get("reserve", [0.0] * horizon), horizon, "reserve", problems) / base

    if problems:
        raise CaseValidationError(problems)

    for arr in (p_demand, q_demand, reserve):
        arr.setflags(write=False)
    case = NetworkCase(
        name=str(data.get("name", "case")),
        base_mva=base,
        horizon=horizon,
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(generators),
        sync_condensers=tuple(condensers),
        p_demand=p_demand,
        q_demand=q_demand,
        reserve=reserve,
        admittances=tuple(branch_admittance(br) for br in branches),
    )
    if require_connected and len(case.components()) > 1:
        raise CaseValidationError(["network graph is not connected"])
    return case


def case_to_dict(case: NetworkCase) -> dict[str, Any]:
    """Inverse of :func:`case_from_dict` (physical units)."""
    base = case.base_mva
    ids = [bus.id for bus in case.buses]

    def finite_or_none(v: float) -> float | None:
        return None if math.isinf(v) else v * base

    return {
        "format": CASE_FORMAT,
        "name": case.name,
        "baseMVA": base,
        "horizon": case.horizon,
        "buses": [
            {"id": b.id, "v_min": b.v_min, "v_max": b.v_max, "g_sh": b.g_sh * base, "b_sh": b.b_sh * base}
            for b in case.buses
        ],
        "branches": [
            {
                "id": br.id,
                "from": ids[br.from_bus],
                "to": ids[br.to_bus],
                "r": br.r,
                "x": br.x,
                "b": br.b,
                "tap": br.tap,
                "shift_deg": math.degrees(br.shift),
                "s_max": finite_or_none(br.s_max),
                "angle_max_deg": math.degrees(br.angle_max),
            }
            for br in case.branches
        ],
        "generators": [
            {
                "id": g.id,
                "bus": ids[g.bus],
                "cost": [g.cost2 / base**2, g.cost1 / base, g.cost0],
                "p_min": g.p_min * base,
                "p_max": g.p_max * base,
                "q_min": g.q_min * base,
                "q_max": g.q_max * base,
                "ramp_up": g.ramp_up * base,
                "ramp_down": g.ramp_down * base,
                "startup_capability": g.startup_capability * base,
                "shutdown_capability": g.shutdown_capability * base,
                "min_up": g.min_up,
                "min_down": g.min_down,
                "startup_segments": [
                    {"hours_offline": s.hours_offline, "cost": s.cost} for s in g.startup_segments
                ],
                "shutdown_cost": g.shutdown_cost,
                "initial_status": g.initial_status,
                "initial_p": g.initial_p * base,
            }
            for g in case.generators
        ],
        "sync_condensers": [
            {"id": sc.id, "bus": ids[sc.bus], "q_min": sc.q_min * base, "q_max": sc.q_max * base}
            for sc in case.sync_condensers
        ],
        "demand": {
            ids[b]: {"p": list(case.p_demand[b] * base), "q": list(case.q_demand[b] * base)}
            for b in range(case.n_bus)
            if np.any(case.p_demand[b]) or np.any(case.q_demand[b])
        },
        "reserve": list(case.reserve * base),
    }


def load_case(path: str | Path) -> NetworkCase:
    """Read a canonical case JSON file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CaseFormatError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"{path}: {exc}") from exc
    try:
        return case_from_dict(data)
    except (TypeError, AttributeError, KeyError) as exc:
        raise CaseFormatError(f"{path}: malformed case ({exc})") from exc


def save_case(case: NetworkCase, path: str | Path) -> None:
    Path(path).write_text(json.dumps(case_to_dict(case), indent=2))
