"""Brute-force reference computations used by the tests.

Everything here is deliberately naive and shares no code with the package
beyond reading :class:`Instance` fields.
"""
from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


# ---------------------------------------------------------------------------
# Second stage cells
# ---------------------------------------------------------------------------

def _linked(w, v) -> bool:
    """w1 + v1 <= 1, w_k <= w1, v_k <= v1 (the empty case is always fine)."""
    w1 = w[0] if w else 0
    v1 = v[0] if v else 0
    return w1 + v1 <= 1 and all(x <= w1 for x in w) and all(x <= v1 for x in v)


def cell_assignments(K: int, Kp: int):
    for w in itertools.product((0, 1), repeat=K):
        for v in itertools.product((0, 1), repeat=Kp):
            if _linked(w, v):
                yield w, v


def brute_second_stage(g, h, prob, M):
    """min prob*(g.w + h.v) s.t. sum w - sum v = M and the linking rows; None if infeasible."""
    best = None
    for w, v in cell_assignments(len(g), len(h)):
        if sum(w) - sum(v) != M:
            continue
        val = prob * (sum(gk * wk for gk, wk in zip(g, w)) + sum(hk * vk for hk, vk in zip(h, v)))
        if best is None or val < best:
            best = val
    return best


def brute_lr2_cell(g, h, prob, alpha, b):
    """min sum (prob g - alpha) w + sum (prob h + alpha) v - alpha b over linked binaries."""
    best = None
    for w, v in cell_assignments(len(g), len(h)):
        val = sum((prob * gk - alpha) * wk for gk, wk in zip(g, w))
        val += sum((prob * hk + alpha) * vk for hk, vk in zip(h, v))
        val -= alpha * b
        if best is None or val < best:
            best = val
    return best


# ---------------------------------------------------------------------------
# First stage
# ---------------------------------------------------------------------------

def first_stage_plans(inst):
    """Every integer (z, zp) inside its box that keeps 0 <= y <= e and sum y <= p."""
    m, T = inst.m, inst.T
    slots = [(i, 0, t) for i in range(m) for t in range(T)] + \
            [(i, 1, t) for i in range(m) for t in range(T - 1)]
    for combo in itertools.product(*[range(int(inst.e[i]) + 1) for i, _, _ in slots]):
        z = [[0] * T for _ in range(m)]
        zp = [[0] * max(T - 1, 0) for _ in range(m)]
        for (i, kind, t), val in zip(slots, combo):
            (z if kind == 0 else zp)[i][t] = val
        y = operating(inst, z, zp)
        if all(0 <= y[i][t] <= inst.e[i] for i in range(m) for t in range(T)) and \
                all(sum(y[i][t] for i in range(m)) <= inst.p[t] for t in range(T)):
            yield z, zp, y


def operating(inst, z, zp):
    m, T = inst.m, inst.T
    y = [[0] * T for _ in range(m)]
    for i in range(m):
        level = int(inst.y0[i])
        for t in range(T):
            level += z[i][t]
            if t > 0:
                level -= zp[i][t - 1]
            y[i][t] = level
    return y


def plan_value(inst, z, zp, y):
    m, T = inst.m, inst.T
    val = sum(inst.o[i, t] * z[i][t] + inst.f[i, t] * y[i][t] for i in range(m) for t in range(T))
    val += sum(inst.c[i, t] * zp[i][t] for i in range(m) for t in range(T - 1))
    for s in range(inst.S):
        for t in range(inst.T):
            for j in range(inst.n):
                cov = sum(int(inst.a[s, t, i, j]) * y[i][t] for i in range(m))
                M = cov - int(inst.b[s, t, j])
                val += brute_second_stage(inst.g[s][t][j], inst.h[s][t][j], inst.prob[s], M)
    return val


def brute_opt(inst):
    return min(plan_value(inst, z, zp, y) for z, zp, y in first_stage_plans(inst))


def brute_lr1(inst, alpha):
    """Minimum of the LR1 objective over integer plans, costs recomputed by double loops."""
    best = None
    for z, zp, y in first_stage_plans(inst):
        val = 0.0
        for i in range(inst.m):
            for t in range(inst.T):
                F = inst.f[i, t] + sum(alpha[s, t, j] * inst.a[s, t, i, j]
                                       for s in range(inst.S) for j in range(inst.n))
                val += inst.o[i, t] * z[i][t] + F * y[i][t]
            for t in range(inst.T - 1):
                val += inst.c[i, t] * zp[i][t]
        if best is None or val < best:
            best = val
    return best


# ---------------------------------------------------------------------------
# Linear programming
# ---------------------------------------------------------------------------

def vertex_lp(c, A, senses, rhs, lo, hi, tol=1e-9):
    """Optimum of a boxed LP by enumerating every basic point (None if infeasible)."""
    A = np.asarray(A, dtype=float)
    nr, nv = A.shape
    # candidate active constraints: every row plus each variable at lower or upper bound
    cons = [(A[r], rhs[r]) for r in range(nr)]
    for k in range(nv):
        e = np.zeros(nv)
        e[k] = 1.0
        cons += [(e, lo[k]), (e, hi[k])]
    eq_rows = [r for r in range(nr) if senses[r] == "="]
    others = [q for q in range(len(cons)) if q not in eq_rows]
    best = None
    need = nv - len(eq_rows)
    if need < 0:
        return None
    for pick in itertools.combinations(others, need):
        rows = eq_rows + list(pick)
        M = np.array([cons[q][0] for q in rows]).reshape(len(rows), nv)
        if nv and abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, np.array([cons[q][1] for q in rows], dtype=float)) if nv else np.zeros(0)
        if np.any(x < np.asarray(lo) - 1e-7) or np.any(x > np.asarray(hi) + 1e-7):
            continue
        act = A @ x
        ok = all((s == "<=" and a <= b + 1e-7) or (s == ">=" and a >= b - 1e-7)
                 or (s == "=" and abs(a - b) <= 1e-7) for s, a, b in zip(senses, act, rhs))
        if ok:
            val = float(np.dot(c, x))
            best = val if best is None else min(best, val)
    return best


def int_det(M) -> int:
    """Exact determinant of an integer matrix (fraction-free Bareiss elimination)."""
    A = [[Fraction(int(x)) for x in row] for row in M]
    n = len(A)
    if n == 0:
        return 1
    sign, prev = 1, Fraction(1)
    for k in range(n - 1):
        if A[k][k] == 0:
            swap = next((r for r in range(k + 1, n) if A[r][k] != 0), None)
            if swap is None:
                return 0
            A[k], A[swap] = A[swap], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) / prev
        prev = A[k][k]
    return int(sign * A[n - 1][n - 1])


# -- reference enumerators for the classical covering models -----------------
# Each works on the original model's own variables (which sites operate when)
# and never goes through the general instance.

def _coverage(a, t, y_t):
    at = _matrix(a, t)
    return [sum(int(at[i][j]) * y_t[i] for i in range(len(y_t))) for j in range(at.shape[1])]


def _periods(d):
    a = np.asarray(d["a"])
    if a.ndim == 3:
        return a.shape[0]
    for key in ("J", "o", "p", "weight"):
        if key in d and isinstance(d[key], (list, tuple)):
            return len(d[key])
    return max(d["tj"]) + 1


def _monotone_schedules(T, may_open, start_open):
    """0/1 operating schedules over T periods for a site that can only open
    (start closed) or only close (start open; period 0 always operating)."""
    if start_open:
        return [tuple(1 if t <= last else 0 for t in range(T)) for last in range(T)]
    out = [tuple([0] * T)]
    if may_open:
        out += [tuple(1 if t >= first else 0 for t in range(T)) for first in range(T)]
    return out


def ref_cov(d):
    a, f, e, p, b, g = (d[k] for k in ("a", "f", "e", "p", "b", "g"))
    m = len(f)
    best = None
    for y in itertools.product(*[range(ei + 1) for ei in e]):
        if sum(y) > p:
            continue
        cov = _coverage(a, 0, y)
        if any(cj < bj for cj, bj in zip(cov, b)):
            continue
        val = sum(f[i] * y[i] for i in range(m))
        val += sum(sum(sorted(g[j])[: cov[j] - b[j]]) for j in range(len(b)))
        best = val if best is None else min(best, val)
    return best


def _matrix(a, t):
    a = np.asarray(a)
    return a[t] if a.ndim == 3 else a


def ref_dsclp(d):
    a, o, tj = d["a"], d["o"], d["tj"]
    T, m = len(o), np.asarray(a).shape[-2]
    best = None
    for first in itertools.product(range(T + 1), repeat=m):  # T means never opened
        if all(any(first[i] <= tj[j] and _matrix(a, tj[j])[i][j] for i in range(m))
               for j in range(len(tj))):
            val = sum(o[first[i]] for i in range(m) if first[i] < T)
            best = val if best is None else min(best, val)
    return best


def _schedule_search(d, schedules, cost, cap=None):
    """Cheapest combination of per-site schedules; ``cost(t, y_t, cov)`` prices a period."""
    T = _periods(d)
    best = None
    for plan in itertools.product(*schedules):
        cols = [[s[t] for s in plan] for t in range(T)]
        if cap is not None and any(sum(y_t) > cap[t] for t, y_t in enumerate(cols)):
            continue
        val = sum(cost(t, y_t, _coverage(d["a"], t, y_t)) for t, y_t in enumerate(cols))
        best = val if best is None else min(best, val)
    return best


def _mandatory(J):
    def cost(t, y_t, cov):
        if any(cov[j] < 1 for j in J[t]):
            return float("inf")
        return float(sum(y_t))
    return cost


def ref_dsclp2(d):
    T, m = _periods(d), np.asarray(d["a"]).shape[-2]
    return _schedule_search(d, [_monotone_schedules(T, True, False)] * m, _mandatory(d["J"]))


def ref_dscpp(d):
    T, m = _periods(d), np.asarray(d["a"]).shape[-2]
    return _schedule_search(d, [_monotone_schedules(T, False, True)] * m, _mandatory(d["J"]))


def _split_schedules(d, m, T):
    close = set(d["I_close"])
    return [_monotone_schedules(T, True, i in close) for i in range(m)]


def ref_gdsclp(d):
    T, m = _periods(d), np.asarray(d["a"]).shape[-2]
    return _schedule_search(d, _split_schedules(d, m, T), _mandatory(d["J"]))


def _uncovered(weight):
    def cost(t, y_t, cov):
        return float(sum(weight[t][j] for j in range(len(cov)) if cov[j] == 0))
    return cost


def ref_dmclp1(d):
    T, m = _periods(d), np.asarray(d["a"]).shape[-2]
    return _schedule_search(d, _split_schedules(d, m, T), _uncovered(d["weight"]), cap=d["p"])


def ref_dmclp2(d):
    """Free opening/closing of at most one unit per site with period costs o_t, c_t."""
    T, m = _periods(d), np.asarray(d["a"]).shape[-2]
    o, c, p, weight = d["o"], d["c"], d["p"], d["weight"]
    best = None
    for plan in itertools.product(itertools.product((0, 1), repeat=T), repeat=m):
        if any(sum(s[t] for s in plan) > p[t] for t in range(T)):
            continue
        val = 0.0
        for s in plan:
            prev = 0
            for t in range(T):
                if s[t] > prev:
                    val += o[t]
                if t > 0 and s[t] < prev:
                    val += c[t - 1]
                prev = s[t]
        for t in range(T):
            val += _uncovered(weight)(t, None, _coverage(d["a"], t, [s[t] for s in plan]))
        best = val if best is None else min(best, val)
    return best


REFERENCE = {
    "COV": ref_cov, "DSCLP": ref_dsclp, "DSCLP2": ref_dsclp2, "DSCPP": ref_dscpp,
    "GDSCLP": ref_gdsclp, "DMCLP1": ref_dmclp1, "DMCLP2": ref_dmclp2,
}
