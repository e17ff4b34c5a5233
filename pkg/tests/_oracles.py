"""Independent reference computations for the test suite.

Everything here works from the raw case dictionaries (physical units) and uses
polar voltages with complex arithmetic, so it shares no modelling code with the
package under test.  Only plain NumPy/SciPy are used.
"""

from __future__ import annotations

import cmath
import itertools
import math

import numpy as np
from scipy.optimize import minimize, root


# ---------------------------------------------------------------------------
# network data


class Net:
    """Per-unit view of a raw case dictionary."""

    def __init__(self, data: dict):
        self.data = data
        self.base = float(data["baseMVA"])
        self.T = int(data["horizon"])
        self.bus_ids = [str(b["id"]) for b in data["buses"]]
        self.nb = len(self.bus_ids)
        pos = {b: i for i, b in enumerate(self.bus_ids)}
        self.vmin = np.array([b.get("v_min", 0.9) for b in data["buses"]])
        self.vmax = np.array([b.get("v_max", 1.1) for b in data["buses"]])
        self.ysh = np.array([complex(b.get("g_sh", 0.0), b.get("b_sh", 0.0)) / self.base for b in data["buses"]])
        self.lines = []
        for br in data.get("branches", []):
            f, t = pos[str(br["from"])], pos[str(br["to"])]
            y = 1.0 / complex(br["r"], br["x"])
            bc = br.get("b", 0.0)
            tap = br.get("tap", 1.0) or 1.0
            shift = math.radians(br.get("shift_deg", 0.0))
            a = tap * cmath.exp(1j * shift)
            yff = (y + 0.5j * bc) / tap**2
            yft = -y / a.conjugate()
            ytf = -y / a
            ytt = y + 0.5j * bc
            smax = br.get("s_max")
            smax = math.inf if smax is None else smax / self.base
            amax = math.radians(br.get("angle_max_deg", 90.0))
            self.lines.append((f, t, yff, yft, ytf, ytt, smax, amax))
        self.gens = data["generators"]
        self.gen_bus = [pos[str(g["bus"])] for g in self.gens]
        self.scs = data.get("sync_condensers", [])
        self.sc_bus = [pos[str(s["bus"])] for s in self.scs]
        self.pd = np.zeros((self.nb, self.T))
        self.qd = np.zeros((self.nb, self.T))
        for b, dem in data.get("demand", {}).items():
            self.pd[pos[str(b)]] = np.array(dem.get("p", [0.0] * self.T)) / self.base
            self.qd[pos[str(b)]] = np.array(dem.get("q", [0.0] * self.T)) / self.base
        self.reserve = np.array(data.get("reserve", [0.0] * self.T)) / self.base
        Y = np.diag(self.ysh).astype(complex)
        for f, t, yff, yft, ytf, ytt, *_ in self.lines:
            Y[f, f] += yff
            Y[f, t] += yft
            Y[t, f] += ytf
            Y[t, t] += ytt
        self.Y = Y

    def injections(self, V: np.ndarray) -> np.ndarray:
        """Complex power leaving each bus into the network (incl. shunts)."""
        return V * np.conj(self.Y @ V)

    def flows(self, V: np.ndarray) -> list[tuple[complex, complex]]:
        out = []
        for f, t, yff, yft, ytf, ytt, *_ in self.lines:
            sf = V[f] * np.conj(yff * V[f] + yft * V[t])
            st = V[t] * np.conj(ytf * V[f] + ytt * V[t])
            out.append((sf, st))
        return out

    def lifted(self, V: np.ndarray) -> dict:
        """(c_bb, c_bk, s_bk) with s_bk = Im(V_b conj(V_k)) * (-1)."""
        out = {"cbb": np.abs(V) ** 2, "c": [], "s": []}
        for f, t, *_ in self.lines:
            z = V[f] * np.conj(V[t])
            out["c"].append(z.real)
            out["s"].append(-z.imag)
        return out


# ---------------------------------------------------------------------------
# commitment logic


def logic_feasible(gen: dict, y_row, T: int) -> bool:
    """Run-length check of minimum up/down times including the initial status."""
    up, down = int(gen.get("min_up", 1)), int(gen.get("min_down", 1))
    status = int(gen["initial_status"])
    # extend with history: runs that started before hour 1
    runs = []  # (value, length, started_in_horizon)
    cur, length, inside = (1 if status > 0 else 0), abs(status), False
    for v in y_row:
        v = int(v)
        if v == cur:
            length += 1
        else:
            runs.append((cur, length, inside))
            cur, length, inside = v, 1, True
    runs.append((cur, length, inside))
    last = len(runs) - 1
    for i, (v, length, _) in enumerate(runs):
        need = up if v == 1 else down
        if i == last:
            continue  # the final run may be cut by the horizon end
        if length < need:
            return False
    return True


def startup_cost(gen: dict, y_row) -> float:
    """Startup cost from the offline duration before each start."""
    segs = gen.get("startup_segments") or [
        {"hours_offline": int(gen.get("min_down", 1)), "cost": float(gen.get("startup_cost", 0.0))}
    ]
    status = int(gen["initial_status"])
    prev = 1 if status > 0 else 0
    off_since = None if status > 0 else -abs(status)  # index where the unit went off
    total = 0.0
    for t, v in enumerate(y_row):
        v = int(v)
        if v == 1 and prev == 0:
            offline = t - off_since
            cost = segs[0]["cost"]
            for s in segs:
                if offline >= s["hours_offline"]:
                    cost = s["cost"]
            total += cost
        if v == 0 and prev == 1:
            off_since = t
        prev = v
    return total


def shutdown_cost(gen: dict, y_row) -> float:
    prev = 1 if int(gen["initial_status"]) > 0 else 0
    n = 0
    for v in y_row:
        n += int(prev == 1 and int(v) == 0)
        prev = int(v)
    return n * float(gen.get("shutdown_cost", 0.0))


def feasible_commitments(data: dict):
    """All logic-feasible y matrices, shape (G, T)."""
    T = int(data["horizon"])
    G = len(data["generators"])
    rows = []
    for gen in data["generators"]:
        rows.append([r for r in itertools.product((0, 1), repeat=T) if logic_feasible(gen, r, T)])
    for combo in itertools.product(*rows):
        yield np.array(combo, dtype=int).reshape(G, T)


# ---------------------------------------------------------------------------
# dispatch at a fixed commitment


class PolarDispatch:
    """Multi-period dispatch in polar voltages at a fixed commitment.

    Ramp limits are not modelled; the fixtures keep them non-binding (ramp
    rates at least the operating range) and :meth:`check_fixture` asserts it.
    """

    def __init__(self, data: dict, y: np.ndarray):
        self.net = net = Net(data)
        self.y = np.asarray(y, dtype=int)
        self.G, self.S = len(net.gens), len(net.scs)
        self.check_fixture()
        nb, T = net.nb, net.T
        self.ref = 0
        self.n_per = 2 * nb - 1 + 2 * self.G + self.S
        self.n = self.n_per * T
        base = net.base
        lb, ub = [], []
        for t in range(T):
            lb += list(net.vmin)
            ub += list(net.vmax)
            lb += [-math.pi] * (nb - 1)
            ub += [math.pi] * (nb - 1)
            for g, gen in enumerate(net.gens):
                on = self.y[g, t]
                lb.append(gen.get("p_min", 0.0) / base * on)
                ub.append(gen["p_max"] / base * on)
            for g, gen in enumerate(net.gens):
                on = self.y[g, t]
                lb.append(gen.get("q_min", 0.0) / base * on)
                ub.append(gen.get("q_max", 0.0) / base * on)
            for sc in net.scs:
                lb.append(sc["q_min"] / base)
                ub.append(sc["q_max"] / base)
        self.lb, self.ub = np.array(lb), np.array(ub)
        self.fixed_cost = sum(
            startup_cost(gen, self.y[g]) + shutdown_cost(gen, self.y[g]) for g, gen in enumerate(net.gens)
        )

    def check_fixture(self):
        for gen in self.net.gens:
            span = gen["p_max"] - gen.get("p_min", 0.0)
            for key in ("ramp_up", "ramp_down"):
                if gen.get(key, gen["p_max"]) < span:
                    raise NotImplementedError("binding ramp limits are outside this oracle")
        if np.any(self.net.reserve > 0):
            # reserve is satisfied iff committed headroom covers it
            pass

    def unpack(self, z: np.ndarray, t: int):
        net = self.net
        nb = net.nb
        o = t * self.n_per
        vm = z[o:o + nb]
        va = np.concatenate([[0.0], z[o + nb:o + 2 * nb - 1]])
        o += 2 * nb - 1
        p = z[o:o + self.G]
        q = z[o + self.G:o + 2 * self.G]
        qsc = z[o + 2 * self.G:o + 2 * self.G + self.S]
        return vm, va, p, q, qsc

    def cost(self, z: np.ndarray) -> float:
        base = self.net.base
        total = self.fixed_cost
        for t in range(self.net.T):
            _, _, p, _, _ = self.unpack(z, t)
            for g, gen in enumerate(self.net.gens):
                if self.y[g, t]:
                    a2, a1, a0 = gen["cost"]
                    mw = p[g] * base
                    total += a2 * mw * mw + a1 * mw + a0
        return total

    def balance(self, z: np.ndarray) -> np.ndarray:
        net = self.net
        out = []
        for t in range(net.T):
            vm, va, p, q, qsc = self.unpack(z, t)
            V = vm * np.exp(1j * va)
            inj = net.injections(V)
            gen = np.zeros(net.nb, dtype=complex)
            for g, b in enumerate(net.gen_bus):
                gen[b] += p[g] + 1j * q[g]
            for i, b in enumerate(net.sc_bus):
                gen[b] += 1j * qsc[i]
            mis = gen - (net.pd[:, t] + 1j * net.qd[:, t]) - inj
            out += list(mis.real) + list(mis.imag)
        return np.array(out)

    def limits(self, z: np.ndarray) -> np.ndarray:
        """Inequalities written as ``>= 0``."""
        net = self.net
        out = []
        for t in range(net.T):
            vm, va, p, _, _ = self.unpack(z, t)
            V = vm * np.exp(1j * va)
            for (sf, st), (f, k, *_, smax, amax) in zip(net.flows(V), net.lines):
                if math.isfinite(smax):
                    out.append(smax**2 - abs(sf) ** 2)
                    out.append(smax**2 - abs(st) ** 2)
                out.append(amax - (va[f] - va[k]))
                out.append(amax + (va[f] - va[k]))
            if net.reserve[t] > 0:
                head = sum(self.y[g, t] * gen["p_max"] / net.base - p[g] for g, gen in enumerate(net.gens))
                out.append(head - net.reserve[t])
        return np.array(out) if out else np.zeros(0)

    def feasible(self, z: np.ndarray, tol: float = 1e-6) -> bool:
        lim = self.limits(z)
        return (
            np.all(z >= self.lb - tol) and np.all(z <= self.ub + tol)
            and np.max(np.abs(self.balance(z)), initial=0.0) <= tol
            and (lim.size == 0 or lim.min() >= -tol)
        )

    def start(self, rng: np.random.Generator | None) -> np.ndarray:
        if rng is None:
            z = 0.5 * (self.lb + self.ub)
            for t in range(self.net.T):
                o = t * self.n_per
                z[o:o + self.net.nb] = 1.0
                z[o + self.net.nb:o + 2 * self.net.nb - 1] = 0.0
            return z
        z = self.lb + rng.random(self.n) * (self.ub - self.lb)
        for t in range(self.net.T):
            o = t * self.n_per + self.net.nb
            z[o:o + self.net.nb - 1] = rng.uniform(-0.5, 0.5, self.net.nb - 1)
        return z

    def solve(self, starts: int = 20, seed: int = 0):
        """Best feasible cost over a flat start plus ``starts`` random starts."""
        rng = np.random.default_rng(seed)
        scale = max(1.0, abs(self.cost(self.start(None))))
        cons = [{"type": "eq", "fun": self.balance}]
        if self.limits(self.start(None)).size:
            cons.append({"type": "ineq", "fun": self.limits})
        bounds = list(zip(self.lb, self.ub))
        best, best_z = math.inf, None
        for k in range(starts + 1):
            z0 = self.start(None if k == 0 else rng)
            res = minimize(lambda z: self.cost(z) / scale, z0, method="SLSQP", bounds=bounds,
                           constraints=cons, options={"maxiter": 400, "ftol": 1e-12})
            z = np.clip(res.x, self.lb, self.ub)
            if self.feasible(z):
                c = self.cost(z)
                if c < best:
                    best, best_z = c, z
        return best, best_z

    def voltages(self, z: np.ndarray) -> np.ndarray:
        V = np.zeros((self.net.nb, self.net.T), dtype=complex)
        for t in range(self.net.T):
            vm, va, *_ = self.unpack(z, t)
            V[:, t] = vm * np.exp(1j * va)
        return V


def enumerate_optimum(data: dict, starts: int = 20, seed: int = 0):
    """Global optimum by enumerating commitments and multistarting each dispatch."""
    best = (math.inf, None, None)
    table = []
    for y in feasible_commitments(data):
        disp = PolarDispatch(data, y)
        if np.any(disp.lb > disp.ub + 1e-12):
            continue
        cost, z = disp.solve(starts, seed)
        table.append((y, cost))
        if cost < best[0]:
            best = (cost, y, z)
    return best[0], best[1], best[2], table


# ---------------------------------------------------------------------------
# sampling AC-feasible operating points


def sample_operating_point(data: dict, y: np.ndarray, rng: np.random.Generator, tries: int = 200):
    """A random AC-feasible operating point at commitment ``y`` by power flow.

    Bus voltage magnitudes at generator/condenser buses and the active output
    of all but the reference bus's units are drawn at random; a Newton-type
    root solve fixes the remaining magnitudes and angles.  Points violating
    any limit are rejected.  Returns (p, q, qsc, V) in p.u. or None.
    """
    disp = PolarDispatch(data, y)
    net = disp.net
    nb, T = net.nb, net.T
    G = len(net.gens)
    ref = 0
    for _ in range(tries):
        V_all = np.zeros((nb, T), dtype=complex)
        P = np.zeros((G, T))
        Q = np.zeros((G, T))
        QS = np.zeros((len(net.scs), T))
        ok = True
        for t in range(T):
            pv = {b for g, b in enumerate(net.gen_bus) if y[g, t]} | set(net.sc_bus)
            pv.add(ref)
            vm_set = {b: rng.uniform(net.vmin[b], net.vmax[b]) for b in pv}
            p_set = np.zeros(nb)
            for g, b in enumerate(net.gen_bus):
                if y[g, t] and b != ref:
                    gen = net.gens[g]
                    p_set[b] += rng.uniform(gen.get("p_min", 0.0), gen["p_max"]) / net.base
            unknown_va = [b for b in range(nb) if b != ref]
            unknown_vm = [b for b in range(nb) if b not in pv]

            def unpack(x):
                vm = np.array([vm_set.get(b, 1.0) for b in range(nb)])
                va = np.zeros(nb)
                va[unknown_va] = x[:len(unknown_va)]
                vm[unknown_vm] = x[len(unknown_va):]
                return vm * np.exp(1j * va)

            def mismatch(x):
                V = unpack(x)
                inj = net.injections(V)
                out = []
                for b in unknown_va:  # active balance where output is given
                    out.append(p_set[b] - net.pd[b, t] - inj[b].real)
                for b in unknown_vm:  # reactive balance at load-only buses
                    out.append(-net.qd[b, t] - inj[b].imag)
                return np.array(out)

            x0 = np.concatenate([np.zeros(len(unknown_va)), np.ones(len(unknown_vm))])
            if len(x0):
                sol = root(mismatch, x0, method="hybr")
                if not sol.success or np.max(np.abs(mismatch(sol.x))) > 1e-10:
                    ok = False
                    break
                V = unpack(sol.x)
            else:
                V = unpack(x0)
            inj = net.injections(V)
            need = inj + net.pd[:, t] + 1j * net.qd[:, t]  # what devices at each bus must supply
            for b in range(nb):
                gens = [g for g, gb in enumerate(net.gen_bus) if gb == b and y[g, t]]
                scs = [i for i, sb in enumerate(net.sc_bus) if sb == b]
                if not gens and not scs:
                    continue
                if b == ref:
                    if not gens:
                        ok = False
                        break
                    P[gens[0], t] = need[b].real - sum(P[g, t] for g in gens[1:])
                else:
                    share = [g for g in gens]
                    for g in share:
                        P[g, t] = p_set[b] / len(share)
                # split reactive need: condensers first up to their limits, then generators
                rest = need[b].imag
                for i in scs:
                    sc = net.scs[i]
                    val = min(max(rest, sc["q_min"] / net.base), sc["q_max"] / net.base)
                    QS[i, t] = val
                    rest -= val
                for g in gens:
                    Q[g, t] = rest / len(gens)
            if not ok:
                break
            V_all[:, t] = V
        if not ok:
            continue
        z = np.zeros(disp.n)
        for t in range(T):
            o = t * disp.n_per
            z[o:o + nb] = np.abs(V_all[:, t])
            z[o + nb:o + 2 * nb - 1] = np.angle(V_all[1:, t]) - np.angle(V_all[0, t])
            o += 2 * nb - 1
            z[o:o + G] = P[:, t]
            z[o + G:o + 2 * G] = Q[:, t]
            z[o + 2 * G:o + 2 * G + len(net.scs)] = QS[:, t]
        if disp.feasible(z, 1e-9):
            V_rot = disp.voltages(z)
            return P, Q, QS, V_rot, disp.cost(z)
    return None


def two_bus_grid(data: dict, y: np.ndarray, n_mag: int = 11, n_ang: int = 81, ang_max: float = 0.5):
    """Brute-force feasible operating points of a 2-bus case, per period.

    For each period returns a list of (cost_t, c, s, c11, c22).  When both buses
    have a committed unit the grid runs over (|V1|, |V2|, angle difference).
    When one bus has none, its balance fixes two unknowns: the grid runs over
    the other magnitude and (|V|, angle) at the unit-less bus come from a root
    solve.  Points violating any limit are dropped.  ``cost_t`` is the
    production cost of that period only.
    """
    net = Net(data)
    assert net.nb == 2 and len(net.lines) == 1
    smax, amax = net.lines[0][6], net.lines[0][7]
    out = []
    for t in range(net.T):
        on = [[g for g, gb in enumerate(net.gen_bus) if gb == b and y[g, t]] for b in range(2)]
        candidates = []
        if on[0] and on[1]:
            for m1 in np.linspace(net.vmin[0], net.vmax[0], n_mag):
                for m2 in np.linspace(net.vmin[1], net.vmax[1], n_mag):
                    for a in np.linspace(-ang_max, ang_max, n_ang):
                        candidates.append(np.array([m1, m2 * cmath.exp(-1j * a)]))
        else:
            empty = 0 if not on[0] else 1
            other = 1 - empty
            for m in np.linspace(net.vmin[other], net.vmax[other], n_mag * n_mag):
                def mismatch(x, m=m):
                    V = np.zeros(2, dtype=complex)
                    V[other] = m
                    V[empty] = x[0] * cmath.exp(1j * x[1])
                    need = net.injections(V)[empty] + net.pd[empty, t] + 1j * net.qd[empty, t]
                    return [need.real, need.imag]
                sol = root(mismatch, [1.0, 0.0], method="hybr")
                if sol.success and max(abs(v) for v in mismatch(sol.x)) < 1e-12:
                    V = np.zeros(2, dtype=complex)
                    V[other] = m
                    V[empty] = sol.x[0] * cmath.exp(1j * sol.x[1])
                    candidates.append(V)
        pts = []
        for V in candidates:
            mags = np.abs(V)
            if np.any(mags < net.vmin - 1e-12) or np.any(mags > net.vmax + 1e-12):
                continue
            a = np.angle(V[0] * np.conj(V[1]))
            sf, st = net.flows(V)[0]
            if abs(sf) > smax + 1e-12 or abs(st) > smax + 1e-12 or abs(a) > amax:
                continue
            need = net.injections(V) + net.pd[:, t] + 1j * net.qd[:, t]
            cost, ok = 0.0, True
            for b in range(2):
                if not on[b]:
                    ok = ok and abs(need[b]) <= 1e-9
                    continue
                gen = net.gens[on[b][0]]
                pmw, qmv = need[b].real * net.base, need[b].imag * net.base
                if not (gen.get("p_min", 0) - 1e-9 <= pmw <= gen["p_max"] + 1e-9
                        and gen.get("q_min", 0) - 1e-9 <= qmv <= gen.get("q_max", 0) + 1e-9):
                    ok = False
                    continue
                a2, a1, a0 = gen["cost"]
                cost += a2 * pmw**2 + a1 * pmw + a0
            if ok:
                lf = net.lifted(V)
                pts.append((cost, lf["c"][0], lf["s"][0], lf["cbb"][0], lf["cbb"][1]))
        out.append(pts)
    return out
