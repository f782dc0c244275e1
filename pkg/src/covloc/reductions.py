"""Classical covering location models expressed as GMSCLP instances.

Each :class:`SpecialCase` carries the data of one of seven textbook models
and :func:`reduce` compiles it into an :class:`~covloc.instance.Instance`
plus a constant ``offset`` such that ``OPT(instance) + offset`` is the
optimum of the original model.

Case data (JSON keys, 0-based indices, ``a`` is ``[t][i][j]`` or a single
``[i][j]`` matrix reused in every period):

========  ===============================================================
COV       a, f, e, p, b, g   (single period; ``g[j]`` has ``p - b[j]`` entries)
DSCLP     a, o, tj           (``o[t]`` non-increasing, ``tj[j]`` = due period)
DSCLP2    a, J               (``J[t]`` = demand points that must be covered)
DSCPP     a, J
GDSCLP    a, J, I_open, I_close
DMCLP1    a, I_open, I_close, p, weight   (``weight[t][j]`` = population)
DMCLP2    a, o, c, p, weight              (``weight[t][j]`` = uncovered cost)
========  ===============================================================

Mandatory ``>= b`` covering is written as an equality by giving every cell
``p - b`` free surplus levels and ``b`` shortage levels priced at ``big_M``.
Locations that may not open (close) get opening (closing) cost ``big_M``.
In models where every site starts open, a closure takes effect from the
second period on, as in the general model.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .instance import Instance, InstanceValidationError, check

KINDS = ("COV", "DSCLP", "DSCLP2", "DSCPP", "GDSCLP", "DMCLP1", "DMCLP2")

_REQUIRED = {
    "COV": ("a", "f", "e", "p", "b", "g"),
    "DSCLP": ("a", "o", "tj"),
    "DSCLP2": ("a", "J"),
    "DSCPP": ("a", "J"),
    "GDSCLP": ("a", "J", "I_open", "I_close"),
    "DMCLP1": ("a", "I_open", "I_close", "p", "weight"),
    "DMCLP2": ("a", "o", "c", "p", "weight"),
}


class CaseError(ValueError):
    """A special-case description is malformed or breaks its invariants."""


@dataclass
class SpecialCase:
    kind: str
    data: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CaseError(f"unknown case kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        missing = [k for k in _REQUIRED[self.kind] if k not in self.data]
        if missing:
            raise CaseError(f"{self.kind} case is missing {', '.join(missing)}")

    @property
    def coverage(self) -> np.ndarray:
        """Coverage matrix as ``(T, m, n)``; the periods follow from the other fields when 2-D."""
        a = np.asarray(self.data["a"], dtype=np.int8)
        if a.ndim == 3:
            return a
        if a.ndim != 2:
            raise CaseError("'a' must be an [i][j] or [t][i][j] array")
        return np.broadcast_to(a, (self.periods, *a.shape)).copy()

    @property
    def periods(self) -> int:
        a = np.asarray(self.data["a"])
        if a.ndim == 3:
            return a.shape[0]
        if self.kind == "COV":
            return 1
        for key in ("J", "o", "p", "weight"):
            if key in self.data and isinstance(self.data[key], (list, tuple, np.ndarray)):
                return len(self.data[key])
        if "tj" in self.data:
            return int(max(self.data["tj"])) + 1
        raise CaseError("cannot infer the number of periods")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "name": self.name, **self.data}

    @classmethod
    def from_dict(cls, d: dict) -> "SpecialCase":
        if "kind" not in d:
            raise CaseError("case file has no 'kind' discriminator")
        data = {k: v for k, v in d.items() if k not in ("kind", "name")}
        return cls(d["kind"], data, d.get("name", ""))


def read_case(path) -> SpecialCase:
    try:
        return SpecialCase.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise CaseError(f"case file is not valid JSON: {exc}") from exc


def big_m(e, o, c, f, g_rows=(), h_rows=()) -> float:
    """``1 + sum of finite nonnegative costs (scaled by capacity) + sum |g|``.

    Any plan that pays ``big_M`` once is worse than every plan that does not.
    """
    e = np.asarray(e, dtype=float)
    total = 1.0
    for arr in (o, c, f):
        arr = np.asarray(arr, dtype=float)
        arr = np.full((len(e), 1), float(arr)) if arr.ndim == 0 else arr.reshape(len(e), -1)
        total += float((np.abs(arr) * e[:, None]).sum())
    total += sum(abs(x) for row in g_rows for x in row)
    total += sum(abs(x) for row in h_rows for x in row)
    return total


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _instance(o, c, f, e, p, y0, a, b, g, h, name) -> Instance:
    """Single-scenario instance from period-indexed arrays ``a[t]``, ``b[t]``, ``g[t][j]``."""
    inst = Instance(
        o=o, c=c, f=f, e=e, p=p, y0=y0,
        a=np.asarray(a)[None], b=np.asarray(b)[None],
        g=(g,), h=(h,), prob=[1.0], name=name,
    )
    return check(inst)


def _mandatory_rows(b, p, M):
    """Free surplus levels and prohibitive shortage levels: covering becomes ``>= b``."""
    T, n = b.shape
    g = tuple(tuple((0.0,) * int(p[t] - b[t, j]) for j in range(n)) for t in range(T))
    h = tuple(tuple((M,) * int(b[t, j]) for j in range(n)) for t in range(T))
    return g, h


def _demand_sets(J, T, n) -> np.ndarray:
    if len(J) != T:
        raise CaseError(f"'J' lists {len(J)} periods, coverage has {T}")
    b = np.zeros((T, n), dtype=np.int64)
    for t, js in enumerate(J):
        for j in js:
            if not 0 <= j < n:
                raise CaseError(f"demand point {j} in J[{t}] out of range")
            b[t, j] = 1
    return b


def _partition(case: SpecialCase, m: int) -> tuple[np.ndarray, np.ndarray]:
    io, ic = set(case.data["I_open"]), set(case.data["I_close"])
    if io & ic:
        raise CaseError(f"I_open and I_close overlap at {sorted(io & ic)}")
    if io | ic != set(range(m)):
        raise CaseError("I_open and I_close must partition the locations")
    mask_o = np.array([i in io for i in range(m)])
    return mask_o, ~mask_o


def _open_close_costs(mask_o, mask_c, T, M):
    # sites in I_open may only open, sites in I_close may only close
    o = np.where(mask_c[:, None], M, 0.0) * np.ones((1, T))
    c = np.where(mask_o[:, None], M, 0.0) * np.ones((1, T - 1))
    return o, c


# ---------------------------------------------------------------------------
# The seven cases
# ---------------------------------------------------------------------------

def _cov(case: SpecialCase):
    a = case.coverage  # (1, m, n)
    _, m, n = a.shape
    f = np.asarray(case.data["f"], dtype=float)
    e = np.asarray(case.data["e"], dtype=np.int64)
    p = int(case.data["p"])
    b = np.asarray(case.data["b"], dtype=np.int64)
    g_rows = tuple(tuple(float(x) for x in row) for row in case.data["g"])
    for j, row in enumerate(g_rows):
        if len(row) != p - b[j]:
            raise CaseError(f"COV: g[{j}] has {len(row)} entries, needs p - b = {p - b[j]}")
    M = big_m(e, 0, 0, f, g_rows)
    h_rows = tuple((M,) * int(bj) for bj in b)
    inst = _instance(
        o=np.zeros((m, 1)), c=np.zeros((m, 0)), f=f[:, None], e=e, p=[p],
        y0=np.zeros(m, dtype=np.int64), a=a, b=b[None], g=(g_rows,), h=(h_rows,),
        name=case.name or "COV",
    )
    return inst, 0.0


def _dsclp(case: SpecialCase):
    a = case.coverage
    T, m, n = a.shape
    o_t = np.asarray(case.data["o"], dtype=float)
    if len(o_t) != T:
        raise CaseError(f"DSCLP: 'o' has {len(o_t)} periods, coverage has {T}")
    if np.any(np.diff(o_t) > 0):
        raise CaseError("DSCLP: opening costs o_t must be non-increasing")
    tj = np.asarray(case.data["tj"], dtype=np.int64)
    if len(tj) != n or np.any((tj < 0) | (tj >= T)):
        raise CaseError("DSCLP: 'tj' needs one due period in [0, T) per demand point")
    b = np.zeros((T, n), dtype=np.int64)
    b[tj, np.arange(n)] = 1
    p = np.full(T, m)
    e = np.ones(m, dtype=np.int64)
    o = np.tile(o_t, (m, 1))
    M = big_m(e, o, 0, 0)
    g, h = _mandatory_rows(b, p, M)
    # closing is free and there is no operating cost, so closing never pays off
    inst = _instance(o, np.zeros((m, T - 1)), np.zeros((m, T)), e, p,
                     np.zeros(m, dtype=np.int64), a, b, g, h, case.name or "DSCLP")
    return inst, 0.0


def _dsclp2(case: SpecialCase):
    a = case.coverage
    T, m, n = a.shape
    b = _demand_sets(case.data["J"], T, n)
    p = np.full(T, m)
    e = np.ones(m, dtype=np.int64)
    f = np.ones((m, T))
    M = big_m(e, 0, 0, f)
    g, h = _mandatory_rows(b, p, M)
    inst = _instance(np.zeros((m, T)), np.full((m, T - 1), M), f, e, p,
                     np.zeros(m, dtype=np.int64), a, b, g, h, case.name or "DSCLP2")
    return inst, 0.0


def _dscpp(case: SpecialCase):
    a = case.coverage
    T, m, n = a.shape
    b = _demand_sets(case.data["J"], T, n)
    p = np.full(T, m)
    e = np.ones(m, dtype=np.int64)
    f = np.ones((m, T))
    M = big_m(e, 0, 0, f)
    g, h = _mandatory_rows(b, p, M)
    inst = _instance(np.full((m, T), M), np.zeros((m, T - 1)), f, e, p,
                     np.ones(m, dtype=np.int64), a, b, g, h, case.name or "DSCPP")
    return inst, 0.0


def _gdsclp(case: SpecialCase):
    a = case.coverage
    T, m, n = a.shape
    b = _demand_sets(case.data["J"], T, n)
    mask_o, mask_c = _partition(case, m)
    p = np.full(T, m)
    e = np.ones(m, dtype=np.int64)
    f = np.ones((m, T))
    M = big_m(e, 0, 0, f)
    o, c = _open_close_costs(mask_o, mask_c, T, M)
    g, h = _mandatory_rows(b, p, M)
    inst = _instance(o, c, f, e, p, mask_c.astype(np.int64), a, b, g, h, case.name or "GDSCLP")
    return inst, 0.0


def _max_cover_rows(weight, p, T, n):
    """One rewarded level (the first unit of coverage) padded with free levels."""
    if weight.shape != (T, n):
        raise CaseError(f"'weight' must be [t][j] with shape {(T, n)}, got {weight.shape}")
    if np.any(weight < 0):
        raise CaseError("'weight' entries must be nonnegative")
    g = tuple(tuple((-float(weight[t, j]),) + (0.0,) * (int(p[t]) - 1) if p[t] else ()
                    for j in range(n)) for t in range(T))
    h = tuple(tuple(() for _ in range(n)) for _ in range(T))
    return g, h


def _dmclp1(case: SpecialCase):
    a = case.coverage
    T, m, n = a.shape
    mask_o, mask_c = _partition(case, m)
    p = np.asarray(case.data["p"], dtype=np.int64)
    weight = np.asarray(case.data["weight"], dtype=float)
    e = np.ones(m, dtype=np.int64)
    g, h = _max_cover_rows(weight, p, T, n)
    M = big_m(e, 0, 0, 0, [r for per in g for r in per])
    o, c = _open_close_costs(mask_o, mask_c, T, M)
    inst = _instance(o, c, np.zeros((m, T)), e, p, mask_c.astype(np.int64), a,
                     np.zeros((T, n), dtype=np.int64), g, h, case.name or "DMCLP1")
    return inst, float(weight.sum())


def _dmclp2(case: SpecialCase):
    a = case.coverage
    T, m, n = a.shape
    o_t = np.asarray(case.data["o"], dtype=float)
    c_t = np.asarray(case.data["c"], dtype=float)
    if len(o_t) != T or len(c_t) != T - 1:
        raise CaseError("DMCLP2: 'o' needs T entries and 'c' needs T - 1")
    p = np.asarray(case.data["p"], dtype=np.int64)
    weight = np.asarray(case.data["weight"], dtype=float)
    g, h = _max_cover_rows(weight, p, T, n)
    inst = _instance(np.tile(o_t, (m, 1)), np.tile(c_t, (m, 1)), np.zeros((m, T)),
                     np.ones(m, dtype=np.int64), p, np.zeros(m, dtype=np.int64), a,
                     np.zeros((T, n), dtype=np.int64), g, h, case.name or "DMCLP2")
    return inst, float(weight.sum())


_REDUCERS = {
    "COV": _cov, "DSCLP": _dsclp, "DSCLP2": _dsclp2, "DSCPP": _dscpp,
    "GDSCLP": _gdsclp, "DMCLP1": _dmclp1, "DMCLP2": _dmclp2,
}


def reduce(case: SpecialCase) -> tuple[Instance, float]:
    """Compile ``case`` into a general instance and the constant to add to its optimum."""
    try:
        return _REDUCERS[case.kind](case)
    except (IndexError, KeyError, TypeError) as exc:
        raise CaseError(f"{case.kind}: malformed case data ({exc})") from exc
    except InstanceValidationError as exc:
        raise CaseError(f"{case.kind}: reduced instance is invalid ({exc})") from exc
