"""Lagrangian relaxation of the covering equalities and the subgradient heuristic.

Relaxing the coverage-balance rows with multipliers ``alpha[s, t, j]`` splits the
problem into

* LR1 - an LP over openings/closings whose constraint matrix is totally
  unimodular, solved with :mod:`covloc.lp`;
* LR2 - one tiny problem per (s, t, j) cell solved by inspection.

Every LR1 solution is a feasible first stage, so completing it with the
closed-form second stage gives an upper bound at each iteration.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .instance import Instance
from .lp import BoundedSimplex, LinearProgram
from .model import (
    FirstStageSolution, ModelBuilder, SecondStageSolution, evaluate_first_stage,
    operating_levels, coverage,
)

STOP_RULES = ("iters50", "iters150", "iters500", "eps_floor")
EPS_FLOOR = 0.005
EPS_FLOOR_CAP = 10 * 500
INTEGRALITY_TOL = 1e-7
GAP_DEGENERATE = 1e-12

VARIANTS = {
    f"{fam}.{rule}": (halve, stop)
    for fam, halve in (("1", 10), ("2", 5))
    for rule, stop in zip(("i", "ii", "iii", "iv"), STOP_RULES)
}


class IntegralityError(RuntimeError):
    """LR1 simplex vertex is fractional; with a TU matrix this signals a solver bug."""


class LagrangianError(RuntimeError):
    def __init__(self, message: str, report: "RunReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class HeuristicConfig:
    eps0: float = 1.5
    halve_after: int = 10
    stop_rule: str = "iters500"
    gap_stop_pct: float = 0.01
    lr1_iter_cap: int | None = None
    name: str = ""

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if self.halve_after < 1:
            raise ValueError("halve_after must be >= 1")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"stop_rule must be one of {STOP_RULES}")

    @property
    def max_iterations(self) -> int:
        if self.stop_rule == "eps_floor":
            return EPS_FLOOR_CAP
        return int(self.stop_rule.removeprefix("iters"))

    @classmethod
    def variant(cls, label: str, **overrides) -> "HeuristicConfig":
        """Config for a grid label such as ``"1.iii"`` (family 1 halves after 10 stalls, family 2 after 5)."""
        try:
            halve, stop = VARIANTS[label]
        except KeyError:
            raise ValueError(f"unknown variant {label!r}; choose from {sorted(VARIANTS)}") from None
        return cls(halve_after=halve, stop_rule=stop, name=label, **overrides)


# ---------------------------------------------------------------------------
# Gap measures
# ---------------------------------------------------------------------------

def _pct(num: float, den: float) -> float:
    if abs(den) < GAP_DEGENERATE:
        return 0.0
    return num / den * 100.0


def gap_lb_ub(ub: float, lb: float, lb0: float) -> float:
    """(UB - LB) / (UB - LB0) * 100; zero for a degenerate denominator."""
    return _pct(ub - lb, ub - lb0)


def gap_ub_opt(ub: float, opt: float, lb0: float) -> float:
    return _pct(ub - opt, ub - lb0)


def gap_lp_lb(lp: float, lb: float, lb0: float) -> float:
    return _pct(lp - lb, lp - lb0)


def lp_gap(opt: float, lp: float, lb0: float) -> float:
    return _pct(opt - lp, opt - lb0)


def gap_is_degenerate(num_minus: float) -> bool:
    return abs(num_minus) < GAP_DEGENERATE


# ---------------------------------------------------------------------------
# LR1
# ---------------------------------------------------------------------------

def lr1_costs(inst: Instance, alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Objective of LR1: coefficients of z (m, T), of zp (m, T-1), and the constant term."""
    # F[i, tau] = f[i, tau] + sum_{j, s} alpha[s, tau, j] * a[s, tau, i, j]
    F = inst.f + np.einsum("stj,stij->it", alpha, inst.a)
    tail = np.cumsum(F[:, ::-1], axis=1)[:, ::-1]
    cz = inst.o + tail
    czp = inst.c - tail[:, 1:]
    const = float(np.sum(F * inst.y0[:, None]))
    return cz, czp, const


def lr1_program(inst: Instance, alpha: np.ndarray | None = None) -> LinearProgram:
    """LR1 as an LP: period capacity plus per-location operating bounds, boxes 0..e."""
    m, T = inst.m, inst.T
    if alpha is None:
        alpha = np.zeros((inst.S, T, inst.n))
    cz, czp, const = lr1_costs(inst, alpha)
    mb = ModelBuilder()
    z = [[mb.var(f"z_{i+1}_{t+1}", cz[i, t], 0, inst.e[i]) for t in range(T)] for i in range(m)]
    zp = [[mb.var(f"zp_{i+1}_{t+1}", czp[i, t], 0, inst.e[i]) for t in range(T - 1)] for i in range(m)]

    def cumulative(i, t):
        return [(z[i][tau], 1.0) for tau in range(t + 1)] + [(zp[i][tau], -1.0) for tau in range(t)]

    for t in range(T):
        mb.row(f"cap_{t+1}", [tm for i in range(m) for tm in cumulative(i, t)], "<=",
               inst.p[t] - int(inst.y0.sum()))
    for i in range(m):
        for t in range(T):
            mb.row(f"yub_{i+1}_{t+1}", cumulative(i, t), "<=", inst.e[i] - inst.y0[i])
    for i in range(m):
        for t in range(T):
            mb.row(f"ylb_{i+1}_{t+1}", cumulative(i, t), ">=", -inst.y0[i])
    return mb.build(constant=const)


class LR1Solver:
    """Re-solves LR1 for changing multipliers, warm-starting from the previous basis."""

    def __init__(self, inst: Instance, iter_cap: int | None = None):
        self.inst = inst
        self.lp = lr1_program(inst)
        self.engine = BoundedSimplex(self.lp, max_iters=iter_cap)
        self.iter_cap = iter_cap

    def solve(self, alpha: np.ndarray) -> tuple[FirstStageSolution, float]:
        inst = self.inst
        cz, czp, const = lr1_costs(inst, alpha)
        if self.iter_cap is not None:
            self.engine.max_iters = self.engine.iterations + self.iter_cap
        sol = self.engine.solve(np.concatenate([cz.ravel(), czp.ravel()]), const)
        if not sol.optimal:
            raise LagrangianError(f"LR1 solve ended with status {sol.status}")
        frac = float(np.max(np.abs(sol.x - np.round(sol.x)), initial=0.0))
        if frac > INTEGRALITY_TOL:
            raise IntegralityError(f"LR1 vertex has fractional part {frac:.3g}")
        x = np.round(sol.x).astype(np.int64)
        nz = inst.m * inst.T
        fs = FirstStageSolution(x[:nz].reshape(inst.m, inst.T), x[nz:].reshape(inst.m, inst.T - 1))
        value = float(np.sum(cz * fs.z) + np.sum(czp * fs.zp)) + const
        return fs, value


def solve_lr1(inst: Instance, alpha: np.ndarray, cfg: HeuristicConfig | None = None
              ) -> tuple[FirstStageSolution, float]:
    cap = cfg.lr1_iter_cap if cfg is not None else None
    return LR1Solver(inst, cap).solve(alpha)


# ---------------------------------------------------------------------------
# LR2
# ---------------------------------------------------------------------------

def _prefix_length(costs: tuple[float, ...], level: float) -> int:
    """Number of leading marginal costs strictly below ``level`` (all of them if level >= last)."""
    if not costs:
        return 0
    if level >= costs[-1]:
        return len(costs)
    return sum(1 for x in costs if x < level)


def solve_lr2_cell(inst: Instance, alpha: np.ndarray | float, j: int, t: int, s: int
                   ) -> tuple[tuple[tuple[int, ...], tuple[int, ...]], float]:
    """Solve one LR2 cell by inspection; ``alpha`` is the full multiplier array or a scalar."""
    a = float(alpha if np.ndim(alpha) == 0 else alpha[s, t, j])
    pi = float(inst.prob[s])
    g, h = inst.g[s][t][j], inst.h[s][t][j]
    ell = _prefix_length(g, a / pi)
    ellp = _prefix_length(h, -a / pi)
    W = sum(pi * g[k] - a for k in range(ell))
    V = sum(pi * h[k] + a for k in range(ellp))
    K, Kp = len(g), len(h)
    if W <= min(0.0, V):
        cell = ((1,) * ell + (0,) * (K - ell), (0,) * Kp)
        val = W
    elif min(0.0, W) > V:
        cell = ((0,) * K, (1,) * ellp + (0,) * (Kp - ellp))
        val = V
    else:
        cell = ((0,) * K, (0,) * Kp)
        val = 0.0
    return cell, val - a * float(inst.b[s, t, j])


def solve_lr2(inst: Instance, alpha: np.ndarray) -> tuple[SecondStageSolution, float]:
    nw = np.zeros((inst.S, inst.T, inst.n), dtype=np.int64)
    nv = np.zeros_like(nw)
    total = 0.0
    for s, t, j in inst.cells():
        (w, v), val = solve_lr2_cell(inst, alpha, j, t, s)
        nw[s, t, j], nv[s, t, j] = sum(w), sum(v)
        total += val
    return SecondStageSolution.from_counts(inst, nw, nv), total


# ---------------------------------------------------------------------------
# Bounds, subgradient
# ---------------------------------------------------------------------------

def lagrangian_value(inst: Instance, alpha: np.ndarray, cfg: HeuristicConfig | None = None,
                     lr1: LR1Solver | None = None
                     ) -> tuple[float, FirstStageSolution, SecondStageSolution]:
    """Lower bound ``V(LR1) + V(LR2)`` for the given multipliers."""
    if lr1 is None:
        lr1 = LR1Solver(inst, cfg.lr1_iter_cap if cfg else None)
    fs, v1 = lr1.solve(alpha)
    ss, v2 = solve_lr2(inst, alpha)
    return v1 + v2, fs, ss


def upper_bound_from(inst: Instance, fs: FirstStageSolution) -> tuple[float, SecondStageSolution]:
    """Complete ``fs`` with the optimal second stage; the value bounds the optimum from above."""
    return evaluate_first_stage(inst, fs)


def compute_gamma(inst: Instance, fs: FirstStageSolution, ss: SecondStageSolution) -> np.ndarray:
    """Subgradient: coverage - b - (surplus units) + (shortage units), shape (S, T, n)."""
    cov = coverage(inst, operating_levels(inst, fs))
    nw, nv = ss.counts()
    if nw.shape != cov.shape:
        raise ValueError(f"second-stage extents {nw.shape} do not match {cov.shape}")
    return (cov - inst.b - nw + nv).astype(float)


def subgradient_step(alpha: np.ndarray, ub: float, lb_k: float, gamma: np.ndarray, eps_k: float
                     ) -> tuple[np.ndarray, bool]:
    """Return the updated multipliers and whether the subgradient vanished."""
    norm2 = float(np.sum(gamma * gamma))
    if norm2 == 0.0:
        return np.array(alpha, dtype=float, copy=True), True
    return alpha + eps_k * (ub - lb_k) / norm2 * gamma, False


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

@dataclass
class IterationLog:
    k: int
    lb_k: float
    ub_k: float
    best_lb: float
    best_ub: float
    eps: float
    gamma_norm2: float


@dataclass
class RunReport:
    best_lb: float
    best_ub: float
    incumbent: FirstStageSolution | None
    incumbent_ss: SecondStageSolution | None
    log: list[IterationLog]
    iterations: int
    seconds: float
    stop_reason: str
    config: HeuristicConfig
    instance_name: str = ""
    instance_hash: str = ""

    @property
    def lb_history(self) -> list[float]:
        return [row.best_lb for row in self.log]

    @property
    def ub_history(self) -> list[float]:
        return [row.best_ub for row in self.log]

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "instance": self.instance_name, "instance_hash": self.instance_hash,
            "variant": self.config.name, "config": asdict(self.config),
            "best_lb": self.best_lb, "best_ub": self.best_ub,
            "iterations": self.iterations, "stop_reason": self.stop_reason,
            "incumbent": self.incumbent.to_dict() if self.incumbent is not None else None,
            "log": [asdict(row) for row in self.log],
        }
        if timing:
            d["seconds"] = self.seconds
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=1)


def _gap_closed(ub: float, lb: float, pct: float) -> bool:
    if ub == 0.0:
        return ub - lb <= GAP_DEGENERATE
    return (ub - lb) / abs(ub) * 100.0 <= pct


def run_heuristic(inst: Instance, cfg: HeuristicConfig) -> RunReport:
    """Subgradient optimisation of the Lagrangian dual with an upper bound at every iteration."""
    start = time.perf_counter()
    alpha = np.zeros((inst.S, inst.T, inst.n))
    best_lb, best_ub = -math.inf, math.inf
    incumbent = incumbent_ss = None
    eps, stall = cfg.eps0, 0
    log: list[IterationLog] = []
    stop = "max_iterations"
    report = RunReport(best_lb, best_ub, None, None, log, 0, 0.0, "running", cfg,
                       inst.name, inst.content_hash)
    try:
        lr1 = LR1Solver(inst, cfg.lr1_iter_cap)
    except Exception as exc:
        raise LagrangianError(f"LR1 setup failed: {exc}", report) from exc
    for k in range(cfg.max_iterations):
        try:
            lb_k, fs, ss_lr2 = lagrangian_value(inst, alpha, cfg, lr1=lr1)
        except (LagrangianError, IntegralityError) as exc:
            report.stop_reason = f"error: {exc}"
            report.seconds = time.perf_counter() - start
            raise LagrangianError(str(exc), report) from exc
        if lb_k > best_lb:
            best_lb, stall = lb_k, 0
        else:
            stall += 1
        ub_k, ss = upper_bound_from(inst, fs)
        if ub_k < best_ub:
            best_ub, incumbent, incumbent_ss = ub_k, fs, ss
        gamma = compute_gamma(inst, fs, ss_lr2)
        norm2 = float(np.sum(gamma * gamma))
        log.append(IterationLog(k, lb_k, ub_k, best_lb, best_ub, eps, norm2))
        report.best_lb, report.best_ub, report.iterations = best_lb, best_ub, k + 1
        report.incumbent, report.incumbent_ss = incumbent, incumbent_ss
        if _gap_closed(best_ub, best_lb, cfg.gap_stop_pct):
            stop = "gap"
            break
        if k + 1 >= cfg.max_iterations:
            stop = cfg.stop_rule if cfg.stop_rule != "eps_floor" else "eps_floor_cap"
            break
        if stall >= cfg.halve_after:
            eps, stall = eps / 2.0, 0
            if cfg.stop_rule == "eps_floor" and eps < EPS_FLOOR:
                stop = "eps_floor"
                break
        alpha, vanished = subgradient_step(alpha, best_ub, lb_k, gamma, eps)
        if vanished:
            stop = "zero_subgradient"
            break
    report.stop_reason = stop
    report.seconds = time.perf_counter() - start
    return report


CSV_FIELDS = ("instance", "instance_hash", "m", "n", "T", "S", "variant", "lb", "ub", "lb0", "lp",
              "opt", "gap_lb_ub", "gap_lp_lb", "gap_ub_opt", "iters", "stop_reason", "secs")


def report_row(inst: Instance, report: RunReport, lb0: float, lp: float,
               opt: float | None = None) -> dict:
    """One CSV row; column meanings follow the gap tables (LB/UB, LP/LB, UB/OPT)."""
    return {
        "instance": inst.name, "instance_hash": inst.content_hash,
        "m": inst.m, "n": inst.n, "T": inst.T, "S": inst.S,
        "variant": report.config.name,
        "lb": report.best_lb, "ub": report.best_ub, "lb0": lb0, "lp": lp,
        "opt": "" if opt is None else opt,
        "gap_lb_ub": gap_lb_ub(report.best_ub, report.best_lb, lb0),
        "gap_lp_lb": gap_lp_lb(lp, report.best_lb, lb0),
        "gap_ub_opt": "" if opt is None else gap_ub_opt(report.best_ub, opt, lb0),
        "iters": report.iterations, "stop_reason": report.stop_reason,
        "secs": round(report.seconds, 6),
    }


def csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\r\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
