"""Solutions, objective evaluation and LP/MILP assembly.

Two equivalent formulations are supported: ``"gmsclp"`` keeps explicit
operating-count variables ``y``; ``"prime"`` eliminates them through
cumulative sums of openings and closings.  The coupling between surplus
and shortage indicators comes in three flavours (``ModelVariant.linking``):

* ``ww``   - ``w1 + v1 <= 1``, ``w_k <= w1``, ``v_k <= v1`` (strongest LP bound)
* ``opt2`` - ``sum_k w_k <= (1 - v1)(p - b)`` plus ``v_k <= v1``
* ``opt3`` - ``sum_k v_k <= (1 - w1) b`` plus ``w_k <= w1``
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Iterable

import numpy as np
from scipy import sparse

from .export import write_lp, write_mps
from .instance import Instance
from .lp import LinearProgram

LINKINGS = ("ww", "opt2", "opt3")
FORMULATIONS = ("gmsclp", "prime")

Cell = tuple[tuple[int, ...], tuple[int, ...]]


class SolutionError(ValueError):
    """A solution breaks a constraint; the message names the constraint and indices."""


@dataclass(frozen=True, eq=False)
class FirstStageSolution:
    """Opening counts ``z[i, t]`` and closing counts ``zp[i, t]`` (``t < T - 1``)."""

    z: np.ndarray
    zp: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=np.int64)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "zp", np.array(self.zp, dtype=np.int64).reshape(z.shape[0], -1))

    @classmethod
    def zeros(cls, inst: Instance) -> "FirstStageSolution":
        return cls(np.zeros((inst.m, inst.T), int), np.zeros((inst.m, inst.T - 1), int))

    def key(self) -> tuple:
        return tuple(self.z.ravel()) + tuple(self.zp.ravel())

    def __eq__(self, other):
        if not isinstance(other, FirstStageSolution):
            return NotImplemented
        return np.array_equal(self.z, other.z) and np.array_equal(self.zp, other.zp)

    __hash__ = None

    def to_dict(self) -> dict:
        return {"z": self.z.tolist(), "zp": self.zp.tolist()}

    @classmethod
    def from_dict(cls, d: dict, inst: Instance | None = None) -> "FirstStageSolution":
        z = np.array(d["z"], dtype=np.int64)
        zp = np.array(d.get("zp", []), dtype=np.int64)
        if inst is not None:
            z = z.reshape(inst.m, inst.T)
            zp = zp.reshape(inst.m, inst.T - 1)
        return cls(z, zp)


@dataclass(frozen=True)
class SecondStageSolution:
    """Binary surplus (``w``) and shortage (``v``) indicators indexed ``[s][t][j][k]``."""

    w: tuple
    v: tuple

    @classmethod
    def from_counts(cls, inst: Instance, nw: np.ndarray, nv: np.ndarray) -> "SecondStageSolution":
        """Prefix-of-ones cells with ``nw[s, t, j]`` surplus and ``nv[s, t, j]`` shortage units."""
        w, v = [], []
        for s in range(inst.S):
            ws, vs = [], []
            for t in range(inst.T):
                wt, vt = [], []
                for j in range(inst.n):
                    K, Kp = inst.K(s, t, j), inst.Kp(s, t, j)
                    a, b = int(nw[s, t, j]), int(nv[s, t, j])
                    wt.append((1,) * a + (0,) * (K - a))
                    vt.append((1,) * b + (0,) * (Kp - b))
                ws.append(tuple(wt))
                vs.append(tuple(vt))
            w.append(tuple(ws))
            v.append(tuple(vs))
        return cls(tuple(w), tuple(v))

    def counts(self) -> tuple[np.ndarray, np.ndarray]:
        nw = np.array([[[sum(cell) for cell in wt] for wt in ws] for ws in self.w], dtype=np.int64)
        nv = np.array([[[sum(cell) for cell in vt] for vt in vs] for vs in self.v], dtype=np.int64)
        return nw, nv

    def to_dict(self) -> dict:
        return {"w": [[[list(c) for c in wt] for wt in ws] for ws in self.w],
                "v": [[[list(c) for c in vt] for vt in vs] for vs in self.v]}

    @classmethod
    def from_dict(cls, d: dict) -> "SecondStageSolution":
        w = tuple(tuple(tuple(tuple(int(x) for x in c) for c in wt) for wt in ws) for ws in d["w"])
        v = tuple(tuple(tuple(tuple(int(x) for x in c) for c in vt) for vt in vs) for vs in d["v"])
        return cls(w, v)


@dataclass(frozen=True)
class ModelVariant:
    linking: str = "ww"
    formulation: str = "prime"

    def __post_init__(self):
        if self.linking not in LINKINGS:
            raise ValueError(f"linking must be one of {LINKINGS}, got {self.linking!r}")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}, got {self.formulation!r}")


@dataclass(frozen=True)
class Evaluation:
    objective: float
    open: float
    close: float
    operate: float
    surplus: float
    shortage: float

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# First stage
# ---------------------------------------------------------------------------

def operating_levels(inst: Instance, fs: FirstStageSolution) -> np.ndarray:
    """Operating counts ``y[i, t] = y0 + sum_{tau<=t} z - sum_{tau<t} zp``."""
    y = inst.y0[:, None] + np.cumsum(fs.z, axis=1)
    if inst.T > 1:
        y[:, 1:] -= np.cumsum(fs.zp, axis=1)
    return y


def first_stage_violations(inst: Instance, fs: FirstStageSolution) -> list[str]:
    out = []
    if fs.z.shape != (inst.m, inst.T) or fs.zp.shape != (inst.m, inst.T - 1):
        return [f"shape mismatch: z {fs.z.shape}, zp {fs.zp.shape}"]
    for name, arr in (("z", fs.z), ("zp", fs.zp)):
        for i, t in zip(*np.nonzero((arr < 0) | (arr > inst.e[:, None]))):
            out.append(f"{name}[{i},{t}]={arr[i, t]} outside [0, e={inst.e[i]}]")
    y = operating_levels(inst, fs)
    for i, t in zip(*np.nonzero((y < 0) | (y > inst.e[:, None]))):
        out.append(f"y[{i},{t}]={y[i, t]} outside [0, e={inst.e[i]}]")
    tot = y.sum(axis=0)
    for t in np.flatnonzero(tot > inst.p):
        out.append(f"period {t}: {tot[t]} operating facilities exceed p={inst.p[t]}")
    return out


def check_first_stage(inst: Instance, fs: FirstStageSolution) -> np.ndarray:
    bad = first_stage_violations(inst, fs)
    if bad:
        raise SolutionError("infeasible first stage: " + "; ".join(bad))
    return operating_levels(inst, fs)


def coverage(inst: Instance, y: np.ndarray) -> np.ndarray:
    """Coverage counts ``cov[s, t, j] = sum_i a[s, t, i, j] * y[i, t]``."""
    return np.einsum("stij,it->stj", inst.a, y)


def coverage_count(inst: Instance, fs: FirstStageSolution, j: int, t: int, s: int) -> int:
    for name, idx, top in (("j", j, inst.n), ("t", t, inst.T), ("s", s, inst.S)):
        if not 0 <= idx < top:
            raise IndexError(f"{name}={idx} out of range [0, {top})")
    y = operating_levels(inst, fs)
    return int(inst.a[s, t, :, j] @ y[:, t])


# ---------------------------------------------------------------------------
# Second stage
# ---------------------------------------------------------------------------

def second_stage_closed_form(inst: Instance, M: int, j: int, t: int, s: int) -> tuple[Cell, float]:
    """Optimal surplus/shortage cell for coverage minus threshold equal to ``M``.

    Sorted marginal costs make the prefix pattern optimal: ``M`` surplus units
    when ``M > 0``, ``-M`` shortage units when ``M < 0``.
    """
    K, Kp = inst.K(s, t, j), inst.Kp(s, t, j)
    if not -Kp <= M <= K:
        raise ValueError(f"M={M} outside [-b, p-b] = [{-Kp}, {K}] for cell (s={s}, t={t}, j={j})")
    pi = inst.prob[s]
    if M > 0:
        cell = ((1,) * M + (0,) * (K - M), (0,) * Kp)
        cost = pi * sum(inst.g[s][t][j][:M])
    elif M < 0:
        cell = ((0,) * K, (1,) * -M + (0,) * (Kp + M))
        cost = pi * sum(inst.h[s][t][j][:-M])
    else:
        cell = ((0,) * K, (0,) * Kp)
        cost = 0.0
    return cell, float(cost)


def _second_stage_costs(inst: Instance, M: np.ndarray) -> np.ndarray:
    """Per-cell closed-form cost (already probability weighted) for an (S, T, n) array of M."""
    pos = np.clip(M, 0, None)[..., None]
    neg = np.clip(-M, 0, None)[..., None]
    gpart = np.take_along_axis(inst.cum_g, pos, axis=-1)[..., 0]
    hpart = np.take_along_axis(inst.cum_h, neg, axis=-1)[..., 0]
    return inst.prob[:, None, None] * np.where(M > 0, gpart, hpart)


def first_stage_cost(inst: Instance, fs: FirstStageSolution, y: np.ndarray | None = None) -> tuple[float, float, float]:
    if y is None:
        y = operating_levels(inst, fs)
    return (float(np.sum(inst.o * fs.z)), float(np.sum(inst.c * fs.zp)), float(np.sum(inst.f * y)))


def evaluate_first_stage(inst: Instance, fs: FirstStageSolution) -> tuple[float, SecondStageSolution]:
    """Exact objective with ``fs`` fixed; the second stage is solved cell by cell in closed form."""
    y = check_first_stage(inst, fs)
    M = coverage(inst, y) - inst.b
    second = _second_stage_costs(inst, M)
    ss = SecondStageSolution.from_counts(inst, np.clip(M, 0, None), np.clip(-M, 0, None))
    return sum(first_stage_cost(inst, fs, y)) + float(second.sum()), ss


def _second_stage_terms(inst: Instance, ss: SecondStageSolution) -> tuple[float, float]:
    surplus = shortage = 0.0
    for s, t, j in inst.cells():
        pi = inst.prob[s]
        surplus += pi * float(np.dot(inst.g[s][t][j], ss.w[s][t][j])) if ss.w[s][t][j] else 0.0
        shortage += pi * float(np.dot(inst.h[s][t][j], ss.v[s][t][j])) if ss.v[s][t][j] else 0.0
    return surplus, shortage


def second_stage_violations(inst: Instance, fs: FirstStageSolution, ss: SecondStageSolution) -> list[str]:
    out = []
    y = operating_levels(inst, fs)
    cov = coverage(inst, y)
    try:
        for s, t, j in inst.cells():
            w, v = ss.w[s][t][j], ss.v[s][t][j]
            where = f"(s={s}, t={t}, j={j})"
            if len(w) != inst.K(s, t, j) or len(v) != inst.Kp(s, t, j):
                out.append(f"cell {where}: w/v lengths {len(w)}/{len(v)} do not match K/K'")
                continue
            if any(x not in (0, 1) for x in w + v):
                out.append(f"cell {where}: non-binary entry")
            if w and v and w[0] + v[0] > 1:
                out.append(f"cell {where}: w1 + v1 > 1")
            if any(x > w[0] for x in w[1:]) or any(x > v[0] for x in v[1:]):
                out.append(f"cell {where}: w_k <= w1 or v_k <= v1 broken")
            if cov[s, t, j] != inst.b[s, t, j] + sum(w) - sum(v):
                out.append(f"cell {where}: coverage {cov[s, t, j]} != b + sum w - sum v "
                           f"= {inst.b[s, t, j] + sum(w) - sum(v)}")
    except (IndexError, TypeError):
        out.append("second-stage solution extents do not match the instance")
    return out


def evaluate(inst: Instance, fs: FirstStageSolution, ss: SecondStageSolution) -> Evaluation:
    """Objective with explicit operating counts, broken down by cost term."""
    y = check_first_stage(inst, fs)
    bad = second_stage_violations(inst, fs, ss)
    if bad:
        raise SolutionError("infeasible second stage: " + "; ".join(bad))
    op, cl, run = first_stage_cost(inst, fs, y)
    surplus, shortage = _second_stage_terms(inst, ss)
    return Evaluation(op + cl + run + surplus + shortage, op, cl, run, surplus, shortage)


def prime_cost_vectors(inst: Instance) -> tuple[np.ndarray, np.ndarray, float]:
    """Objective coefficients of z and zp once y is eliminated, plus the constant."""
    tail = np.cumsum(inst.f[:, ::-1], axis=1)[:, ::-1]  # tail[i, t] = sum_{tau >= t} f
    cz = inst.o + tail
    czp = inst.c - tail[:, 1:]
    return cz, czp, float(np.sum(inst.f.sum(axis=1) * inst.y0))


def objective_prime(inst: Instance, fs: FirstStageSolution, ss: SecondStageSolution) -> float:
    """Same objective as :func:`evaluate`, computed through cumulative opening/closing sums."""
    cz, czp, const = prime_cost_vectors(inst)
    surplus, shortage = _second_stage_terms(inst, ss)
    return float(np.sum(cz * fs.z) + np.sum(czp * fs.zp)) + const + surplus + shortage


# ---------------------------------------------------------------------------
# LP / MILP assembly
# ---------------------------------------------------------------------------

class ModelBuilder:
    """Accumulates named columns and sparse rows, then emits a :class:`LinearProgram`."""

    def __init__(self):
        self.names: list[str] = []
        self.cost: list[float] = []
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.integer: list[bool] = []
        self.row_names: list[str] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []

    def var(self, name: str, cost: float, lo: float, hi: float, integer: bool = True) -> int:
        self.names.append(name)
        self.cost.append(float(cost))
        self.lo.append(float(lo))
        self.hi.append(float(hi))
        self.integer.append(integer)
        return len(self.names) - 1

    def row(self, name: str, terms: Iterable[tuple[int, float]], sense: str, rhs: float) -> int:
        r = len(self.row_names)
        acc: dict[int, float] = {}
        for col, val in terms:
            acc[col] = acc.get(col, 0.0) + val
        for col in sorted(acc):
            if acc[col] != 0.0:
                self._rows.append(r)
                self._cols.append(col)
                self._vals.append(acc[col])
        self.row_names.append(name)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        return r

    def build(self, constant: float = 0.0) -> LinearProgram:
        A = sparse.csr_matrix((self._vals, (self._rows, self._cols)),
                              shape=(len(self.row_names), len(self.names)))
        return LinearProgram(
            c=np.array(self.cost), A=A, senses=self.senses, rhs=np.array(self.rhs),
            lower=np.array(self.lo), upper=np.array(self.hi), constant=constant,
            var_names=list(self.names), row_names=list(self.row_names),
            integer=np.array(self.integer, dtype=bool),
        )


@dataclass
class ModelIndex:
    """Column positions of each variable family inside a built model."""

    z: np.ndarray
    zp: np.ndarray
    y: np.ndarray | None
    w: dict
    v: dict
    cov_rows: dict


def build_milp(inst: Instance, variant: ModelVariant = ModelVariant(),
               shortage_cost: bool = True) -> tuple[LinearProgram, ModelIndex]:
    """Assemble the full model; names use 1-based indices (``z_i_t``, ``w_s_t_j_k``, ...)."""
    m, T = inst.m, inst.T
    prime = variant.formulation == "prime"
    mb = ModelBuilder()
    if prime:
        cz, czp, const = prime_cost_vectors(inst)
    else:
        cz, czp, const = inst.o, inst.c, 0.0
    z = np.array([[mb.var(f"z_{i+1}_{t+1}", cz[i, t], 0, inst.e[i]) for t in range(T)] for i in range(m)],
                 dtype=np.int64).reshape(m, T)
    zp = np.array([[mb.var(f"zp_{i+1}_{t+1}", czp[i, t], 0, inst.e[i]) for t in range(T - 1)]
                   for i in range(m)], dtype=np.int64).reshape(m, T - 1)
    y = None
    if not prime:
        y = np.array([[mb.var(f"y_{i+1}_{t+1}", inst.f[i, t], 0, inst.e[i]) for t in range(T)]
                      for i in range(m)], dtype=np.int64).reshape(m, T)
    w, v = {}, {}
    for s, t, j in inst.cells():
        pi = inst.prob[s]
        tag = f"{s+1}_{t+1}_{j+1}"
        w[s, t, j] = [mb.var(f"w_{tag}_{k+1}", pi * g, 0, 1) for k, g in enumerate(inst.g[s][t][j])]
        v[s, t, j] = [mb.var(f"v_{tag}_{k+1}", pi * h if shortage_cost else 0.0, 0, 1)
                      for k, h in enumerate(inst.h[s][t][j])]

    def cumulative(i, t):  # terms of sum_{tau<=t} z - sum_{tau<t} zp
        return [(z[i, tau], 1.0) for tau in range(t + 1)] + [(zp[i, tau], -1.0) for tau in range(t)]

    y0sum = int(inst.y0.sum())
    for t in range(T):
        if prime:
            terms = [term for i in range(m) for term in cumulative(i, t)]
            mb.row(f"cap_{t+1}", terms, "<=", inst.p[t] - y0sum)
        else:
            mb.row(f"cap_{t+1}", [(y[i, t], 1.0) for i in range(m)], "<=", inst.p[t])
    for i in range(m):
        for t in range(T):
            if prime:
                mb.row(f"yub_{i+1}_{t+1}", cumulative(i, t), "<=", inst.e[i] - inst.y0[i])
                mb.row(f"ylb_{i+1}_{t+1}", cumulative(i, t), ">=", -inst.y0[i])
            elif t == 0:
                mb.row(f"link_{i+1}_1", [(y[i, 0], 1.0), (z[i, 0], -1.0)], "=", inst.y0[i])
            else:
                mb.row(f"link_{i+1}_{t+1}", [(y[i, t], 1.0), (y[i, t - 1], -1.0),
                                             (z[i, t], -1.0), (zp[i, t - 1], 1.0)], "=", 0)
    cov_rows = {}
    for s, t, j in inst.cells():
        tag = f"{s+1}_{t+1}_{j+1}"
        covering = np.flatnonzero(inst.a[s, t, :, j])
        if prime:
            terms = [term for i in covering for term in cumulative(i, t)]
            rhs = inst.b[s, t, j] - int(inst.y0[covering].sum())
        else:
            terms = [(y[i, t], 1.0) for i in covering]
            rhs = inst.b[s, t, j]
        terms += [(col, -1.0) for col in w[s, t, j]] + [(col, 1.0) for col in v[s, t, j]]
        cov_rows[s, t, j] = mb.row(f"cov_{tag}", terms, "=", rhs)
    for s, t, j in inst.cells():
        tag = f"{s+1}_{t+1}_{j+1}"
        wc, vc = w[s, t, j], v[s, t, j]
        K, Kp = len(wc), len(vc)
        if variant.linking == "ww" and K and Kp:
            mb.row(f"ww1_{tag}", [(wc[0], 1.0), (vc[0], 1.0)], "<=", 1)
        if variant.linking == "opt2" and K and Kp:
            mb.row(f"opt21_{tag}", [(col, 1.0) for col in wc] + [(vc[0], float(K))], "<=", K)
        if variant.linking == "opt3" and K and Kp:
            mb.row(f"opt31_{tag}", [(col, 1.0) for col in vc] + [(wc[0], float(Kp))], "<=", Kp)
        if variant.linking in ("ww", "opt3"):
            for k in range(1, K):
                mb.row(f"ww2_{tag}_{k+1}", [(wc[k], 1.0), (wc[0], -1.0)], "<=", 0)
        if variant.linking in ("ww", "opt2"):
            for k in range(1, Kp):
                mb.row(f"ww3_{tag}_{k+1}", [(vc[k], 1.0), (vc[0], -1.0)], "<=", 0)
    lp = mb.build(constant=const)
    return lp, ModelIndex(z=z, zp=zp, y=y, w=w, v=v, cov_rows=cov_rows)


def build_lp_relaxation(inst: Instance, variant: ModelVariant = ModelVariant()) -> LinearProgram:
    """Continuous relaxation: the LP solver ignores the integer flags."""
    return build_milp(inst, variant)[0]


def build_lb0(inst: Instance) -> LinearProgram:
    """Relaxation of the eliminated-y model without the shortage cost term.

    Its optimum is a valid lower bound even when the optimal value is
    non-positive, which makes it a usable anchor for percentage gaps.
    """
    return build_milp(inst, ModelVariant("ww", "prime"), shortage_cost=False)[0]


def export_mps(inst: Instance, variant: ModelVariant, path, name: str = "GMSCLP") -> None:
    write_mps(build_milp(inst, variant)[0], path, name=name)


def export_lp(inst: Instance, variant: ModelVariant, path, name: str = "GMSCLP") -> None:
    write_lp(build_milp(inst, variant)[0], path, name=name)
