"""Exact optimisation for small instances, plus EVPI and VMS.

Two exact methods share one contract (minimum of the first-stage value
function over every feasible opening/closing plan):

``"enumerate"``
    Lists every integer ``(z, zp)`` inside its box, filters by the capacity
    and operating-bound constraints and scores each survivor.  Size is
    ``prod_i (e_i + 1) ** (2T - 1)``.

``"dp"``
    Works period by period over operating vectors ``y_t`` with
    ``sum_i y_it <= p_t``.  Both the second-stage cost (a function of ``y_t``
    alone) and the cheapest opening/closing realising a move ``y_{t-1} -> y_t``
    separate by period, so a shortest-path recursion is exact.  Size is the
    number of evaluated state transitions.

Both refuse to run when their size exceeds ``budget``.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, asdict

import numpy as np

from .instance import Instance
from .model import (
    FirstStageSolution, evaluate_first_stage, operating_levels,
)

DEFAULT_BUDGET = 10**7


class BudgetExceeded(RuntimeError):
    """The enumeration would exceed the allowed number of candidates or time."""


def _deadline(time_limit: float | None) -> float:
    return np.inf if time_limit is None else time.perf_counter() + time_limit


def _check_clock(deadline: float) -> None:
    if time.perf_counter() > deadline:
        raise BudgetExceeded("time limit reached before the exact solve finished")


@dataclass
class ExactResult:
    opt: float
    first_stage: FirstStageSolution
    count: int
    seconds: float
    method: str = "dp"

    def to_dict(self, timing: bool = True) -> dict:
        d = {"opt": self.opt, "first_stage": self.first_stage.to_dict(),
             "count": self.count, "method": self.method}
        if timing:
            d["seconds"] = self.seconds
        return d


@dataclass
class ValueOfModeling:
    sp: float
    ws: float
    evpi: float
    mps: float
    one_ps: float
    vms: float
    dp_s: list[float]

    @property
    def sp_minus_mps(self) -> float:
        return self.sp - self.mps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sp_minus_mps"] = self.sp_minus_mps
        return d


# ---------------------------------------------------------------------------
# Plan restrictions
# ---------------------------------------------------------------------------

def _allowed(T: int, static: bool) -> tuple[np.ndarray, np.ndarray]:
    """Which opening periods and closing periods may be used."""
    open_ok = np.ones(T, dtype=bool)
    close_ok = np.ones(max(T - 1, 0), dtype=bool)
    if static:
        open_ok[1:] = False
        close_ok[1:] = False  # only the first closing slot stays free
    return open_ok, close_ok


# ---------------------------------------------------------------------------
# Brute-force enumeration
# ---------------------------------------------------------------------------

def enumeration_size(inst: Instance, static: bool = False) -> int:
    open_ok, close_ok = _allowed(inst.T, static)
    slots = int(open_ok.sum() + close_ok.sum())
    return int(np.prod([(int(e) + 1) ** slots for e in inst.e], dtype=object))


def _enumerate(inst: Instance, budget: int, static: bool, reverse: bool,
               deadline: float = np.inf) -> ExactResult:
    size = enumeration_size(inst, static)
    if size > budget:
        raise BudgetExceeded(f"enumeration needs {size} candidates > budget {budget}")
    start = time.perf_counter()
    m, T = inst.m, inst.T
    open_ok, close_ok = _allowed(T, static)
    slots = [(i, "z", t) for i in range(m) for t in range(T) if open_ok[t]]
    slots += [(i, "zp", t) for i in range(m) for t in range(T - 1) if close_ok[t]]
    ranges = [range(int(inst.e[i]) + 1) for i, _, _ in slots]
    if reverse:
        ranges = [r[::-1] for r in ranges]
    best = None
    count = 0
    for combo in itertools.product(*ranges):
        z = np.zeros((m, T), dtype=np.int64)
        zp = np.zeros((m, T - 1), dtype=np.int64)
        for (i, kind, t), val in zip(slots, combo):
            (z if kind == "z" else zp)[i, t] = val
        count += 1
        if count % 4096 == 0:
            _check_clock(deadline)
        fs = FirstStageSolution(z, zp)
        y = operating_levels(inst, fs)
        if (y < 0).any() or (y > inst.e[:, None]).any() or (y.sum(axis=0) > inst.p).any():
            continue
        val, _ = evaluate_first_stage(inst, fs)
        key = (val, fs.key())
        if best is None or val < best[0] - 1e-12 or (abs(val - best[0]) <= 1e-12 and key[1] < best[1].key()):
            best = (val, fs)
    if best is None:
        raise ValueError("no feasible first stage (check y0 against p and e)")
    return ExactResult(best[0], best[1], count, time.perf_counter() - start, "enumerate")


# ---------------------------------------------------------------------------
# Dynamic programming over operating vectors
# ---------------------------------------------------------------------------

def _states(e: np.ndarray, cap: int) -> np.ndarray:
    """All integer vectors 0 <= y <= e with sum(y) <= cap, in lexicographic order."""
    out = []

    def rec(i, prefix, left):
        if i == len(e):
            out.append(prefix)
            return
        for v in range(min(int(e[i]), left) + 1):
            rec(i + 1, prefix + [v], left - v)

    rec(0, [], int(cap))
    return np.array(out, dtype=np.int64).reshape(len(out), len(e))


def _move_costs(inst: Instance, t: int, static: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cheapest way for each location to go from level u to level w entering period t.

    Returns (cost[i, u, w], z[i, u, w], zp[i, u, w]); impossible moves cost inf.
    The move is y_t = y_{t-1} + z_t - zp_{t-1}.
    """
    open_ok, close_ok = _allowed(inst.T, static)
    E = int(inst.e.max())
    cost = np.full((inst.m, E + 1, E + 1), np.inf)
    zz = np.zeros((inst.m, E + 1, E + 1), dtype=np.int64)
    zzp = np.zeros_like(zz)
    for i in range(inst.m):
        e = int(inst.e[i])
        zmax = e if open_ok[t] else 0
        zpmax = e if (t > 0 and close_ok[t - 1]) else 0
        for u in range(e + 1):
            for w in range(e + 1):
                for z in range(zmax + 1):
                    zp = u + z - w
                    if not 0 <= zp <= zpmax:
                        continue
                    c = inst.o[i, t] * z + (inst.c[i, t - 1] * zp if zp else 0.0)
                    if c < cost[i, u, w]:
                        cost[i, u, w], zz[i, u, w], zzp[i, u, w] = c, z, zp
    return cost, zz, zzp


def dp_size(inst: Instance) -> int:
    sizes = [len(_states(inst.e, int(p))) for p in inst.p]
    return sizes[0] + sum(a * b for a, b in zip(sizes, sizes[1:]))


def _dp(inst: Instance, budget: int, static: bool, deadline: float = np.inf) -> ExactResult:
    start = time.perf_counter()
    m, T = inst.m, inst.T
    states = [_states(inst.e, int(p)) for p in inst.p]
    count = len(states[0]) + sum(len(a) * len(b) for a, b in zip(states, states[1:]))
    if count > budget:
        raise BudgetExceeded(f"dynamic program needs {count} transitions > budget {budget}")
    idx = np.arange(m)

    s_idx = np.arange(inst.S)[None, :, None]
    j_idx = np.arange(inst.n)[None, None, :]

    def stage_cost(t, Y):
        # operating cost plus closed-form second stage for every state row of Y
        M = np.einsum("sij,ri->rsj", inst.a[:, t].astype(np.int64), Y) - inst.b[None, :, t, :]
        gpart = inst.cum_g[s_idx, t, j_idx, np.clip(M, 0, None)]
        hpart = inst.cum_h[s_idx, t, j_idx, np.clip(-M, 0, None)]
        second = inst.prob[None, :, None] * np.where(M > 0, gpart, hpart)
        return Y @ inst.f[:, t] + second.sum(axis=(1, 2))

    value = None
    parents = []
    moves = []
    for t in range(T):
        _check_clock(deadline)
        Y = states[t]
        cost_t, zt, zpt = _move_costs(inst, t, static)
        prev = inst.y0[None, :] if t == 0 else states[t - 1]
        # trans[a, b] = sum_i cost_t[i, prev[a, i], Y[b, i]]
        trans = cost_t[idx[None, None, :], prev[:, None, :], Y[None, :, :]].sum(axis=2)
        base = np.zeros(1) if t == 0 else value
        total = base[:, None] + trans
        arg = np.argmin(total, axis=0)
        best = total[arg, np.arange(len(Y))]
        value = best + stage_cost(t, Y)
        parents.append(arg)
        moves.append((cost_t, zt, zpt))
    finite = np.isfinite(value)
    if not finite.any():
        raise ValueError("no feasible first stage (check y0 against p and e)")
    last = int(np.argmin(np.where(finite, value, np.inf)))
    opt = float(value[last])
    # Backtrack the operating trajectory, then recover z and zp.
    path = [last]
    for t in range(T - 1, 0, -1):
        path.append(int(parents[t][path[-1]]))
    path.reverse()
    ytraj = np.array([states[t][path[t]] for t in range(T)]).T  # (m, T)
    z = np.zeros((m, T), dtype=np.int64)
    zp = np.zeros((m, T - 1), dtype=np.int64)
    for t in range(T):
        _, zt, zpt = moves[t]
        prev = inst.y0 if t == 0 else ytraj[:, t - 1]
        z[:, t] = zt[idx, prev, ytraj[:, t]]
        if t > 0:
            zp[:, t - 1] = zpt[idx, prev, ytraj[:, t]]
    fs = FirstStageSolution(z, zp)
    return ExactResult(opt, fs, count, time.perf_counter() - start, "dp")


def _solve(inst: Instance, budget: int, method: str, static: bool, reverse: bool = False,
           time_limit: float | None = None) -> ExactResult:
    deadline = _deadline(time_limit)
    if method == "dp":
        return _dp(inst, budget, static, deadline)
    if method == "enumerate":
        return _enumerate(inst, budget, static, reverse, deadline)
    raise ValueError(f"unknown method {method!r}")


def solve_exact(inst: Instance, budget: int = DEFAULT_BUDGET, method: str = "dp",
                reverse: bool = False, time_limit: float | None = None) -> ExactResult:
    """Optimal value and a minimising first stage.  Raises :class:`BudgetExceeded` when too large."""
    return _solve(inst, budget, method, static=False, reverse=reverse, time_limit=time_limit)


def wait_and_see(inst: Instance, budget: int = DEFAULT_BUDGET, method: str = "dp",
                 time_limit: float | None = None) -> tuple[float, list[float]]:
    """Probability-weighted optimum of the single-scenario problems."""
    dp_s = [solve_exact(inst.scenario(s), budget, method, time_limit=time_limit).opt
            for s in range(inst.S)]
    return float(np.dot(inst.prob, dp_s)), dp_s


def static_counterpart(inst: Instance, budget: int = DEFAULT_BUDGET, method: str = "dp",
                       time_limit: float | None = None) -> tuple[float, float, float]:
    """(1PS, MPS, VMS): value of the best plan that only opens in period 1 and only
    closes at the end of period 1, against the unrestricted optimum."""
    restricted = _solve(inst, budget, method, static=True, time_limit=time_limit)
    one_ps, _ = evaluate_first_stage(inst, restricted.first_stage)
    mps = solve_exact(inst, budget, method, time_limit=time_limit).opt
    return float(one_ps), mps, float(one_ps) - mps


def value_of_modeling(inst: Instance, budget: int = DEFAULT_BUDGET, method: str = "dp",
                      time_limit: float | None = None) -> ValueOfModeling:
    sp = solve_exact(inst, budget, method, time_limit=time_limit).opt
    ws, dp_s = wait_and_see(inst, budget, method, time_limit)
    one_ps, mps, vms = static_counterpart(inst, budget, method, time_limit)
    return ValueOfModeling(sp=sp, ws=ws, evpi=sp - ws, mps=mps, one_ps=one_ps, vms=vms, dp_s=dp_s)
