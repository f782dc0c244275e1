"""Problem data, validation, random generation and the canonical JSON file format.

Index conventions (0-based in memory and on disk):

* ``o[i, t]``, ``f[i, t]``: shape ``(m, T)``; ``c[i, t]``: shape ``(m, T - 1)``.
* ``a[s, t, i, j]``: shape ``(S, T, m, n)``; ``b[s, t, j]``: shape ``(S, T, n)``.
* ``g[s][t][j]`` has length ``p[t] - b[s, t, j]`` and ``h[s][t][j]`` has length
  ``b[s, t, j]``.  Both are stored as tuples of floats.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

SCHEMA_VERSION = 1
PROB_TOL = 1e-9

Row = tuple[float, ...]
Ragged = tuple[tuple[tuple[Row, ...], ...], ...]


class InstanceFormatError(ValueError):
    """Raised when an instance file cannot be parsed into an :class:`Instance`."""


class InstanceValidationError(ValueError):
    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class Violation:
    field: str
    index: tuple
    message: str

    def __str__(self) -> str:
        idx = ",".join(str(i) for i in self.index)
        return f"{self.field}[{idx}]: {self.message}"


def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero (2.5 -> 3, -2.5 -> -3)."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _ragged(rows) -> Ragged:
    return tuple(tuple(tuple(tuple(float(v) for v in cell) for cell in per_t) for per_t in per_s)
                 for per_s in rows)


@dataclass(frozen=True, eq=False)
class Instance:
    """All data of one multi-period stochastic covering location instance.

    Arrays are converted to read-only numpy arrays on construction, so an
    instance can be shared freely between threads and processes.
    """

    o: np.ndarray
    c: np.ndarray
    f: np.ndarray
    e: np.ndarray
    p: np.ndarray
    y0: np.ndarray
    a: np.ndarray
    b: np.ndarray
    g: Ragged
    h: Ragged
    prob: np.ndarray
    seed: int | None = None
    name: str = ""

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "o", _frozen(self.o, float).reshape(len(self.o), -1))
        set_(self, "f", _frozen(self.f, float).reshape(len(self.f), -1))
        m, T = self.o.shape
        set_(self, "c", _frozen(self.c, float).reshape(m, T - 1))
        set_(self, "e", _frozen(self.e, np.int64))
        set_(self, "p", _frozen(self.p, np.int64))
        set_(self, "y0", _frozen(self.y0, np.int64))
        set_(self, "a", _frozen(self.a, np.int8))
        set_(self, "b", _frozen(self.b, np.int64))
        set_(self, "prob", _frozen(self.prob, float))
        set_(self, "g", _ragged(self.g))
        set_(self, "h", _ragged(self.h))

    # -- sizes ---------------------------------------------------------------
    @property
    def m(self) -> int:
        return self.o.shape[0]

    @property
    def T(self) -> int:
        return self.o.shape[1]

    @property
    def S(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[3]

    def K(self, s: int, t: int, j: int) -> int:
        return len(self.g[s][t][j])

    def Kp(self, s: int, t: int, j: int) -> int:
        return len(self.h[s][t][j])

    def cells(self):
        """Iterate over all (s, t, j) covering cells in canonical order."""
        for s in range(self.S):
            for t in range(self.T):
                for j in range(self.n):
                    yield s, t, j

    # -- cached lookup tables ------------------------------------------------
    @cached_property
    def kmax(self) -> int:
        return int(self.p.max()) if self.T else 0

    @cached_property
    def cum_g(self) -> np.ndarray:
        """``cum_g[s, t, j, k]`` = sum of the first ``k`` surplus costs (padded with the last value)."""
        return self._cumulative(self.g)

    @cached_property
    def cum_h(self) -> np.ndarray:
        return self._cumulative(self.h)

    def _cumulative(self, rows: Ragged) -> np.ndarray:
        out = np.zeros((self.S, self.T, self.n, self.kmax + 1))
        for s, t, j in self.cells():
            row = rows[s][t][j]
            cs = np.concatenate([[0.0], np.cumsum(row)]) if row else np.zeros(1)
            out[s, t, j, : len(cs)] = cs
            out[s, t, j, len(cs):] = cs[-1]
        return out

    @cached_property
    def content_hash(self) -> str:
        return hashlib.sha256(dumps_instance(self).encode()).hexdigest()[:16]

    # -- equality ------------------------------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        arrays = ("o", "c", "f", "e", "p", "y0", "a", "b", "prob")
        return (
            all(getattr(self, k).shape == getattr(other, k).shape
                and np.array_equal(getattr(self, k), getattr(other, k)) for k in arrays)
            and self.g == other.g
            and self.h == other.h
            and self.seed == other.seed
        )

    __hash__ = None

    def scenario(self, s: int) -> "Instance":
        """Single-scenario instance with probability one; deterministic data is shared."""
        return Instance(
            o=self.o, c=self.c, f=self.f, e=self.e, p=self.p, y0=self.y0,
            a=self.a[s: s + 1], b=self.b[s: s + 1],
            g=(self.g[s],), h=(self.h[s],), prob=[1.0],
            seed=self.seed, name=f"{self.name}#s{s}" if self.name else "",
        )


def validate(inst: Instance) -> list[Violation]:
    """Return every broken invariant of ``inst``; an empty list means valid."""
    out: list[Violation] = []
    m, T, S, n = inst.m, inst.T, inst.S, inst.n

    def bad(fld, idx, msg):
        out.append(Violation(fld, tuple(idx), msg))

    shapes = {
        "o": (inst.o.shape, (m, T)), "c": (inst.c.shape, (m, T - 1)),
        "f": (inst.f.shape, (m, T)), "e": (inst.e.shape, (m,)),
        "p": (inst.p.shape, (T,)), "y0": (inst.y0.shape, (m,)),
        "a": (inst.a.shape, (S, T, m, n)), "b": (inst.b.shape, (S, T, n)),
        "prob": (inst.prob.shape, (S,)),
    }
    for name, (got, want) in shapes.items():
        if got != want:
            bad(name, (), f"shape {got} != expected {want}")
    if out:
        return out
    if m < 1 or n < 1 or T < 1 or S < 1:
        bad("meta", (), f"empty index set (m={m}, n={n}, T={T}, S={S})")
        return out

    for name in ("o", "c", "f", "prob"):
        arr = getattr(inst, name)
        if not np.all(np.isfinite(arr)):
            bad(name, (), "non-finite entries")
    for s in range(S):
        if not inst.prob[s] > 0:
            bad("prob", (s,), f"probability {inst.prob[s]} is not positive")
    if abs(float(inst.prob.sum()) - 1.0) > PROB_TOL:
        bad("prob", (), f"probabilities sum to {inst.prob.sum()!r}, not 1 (normalization)")
    for i in range(m):
        if inst.e[i] < 0:
            bad("e", (i,), "negative capacity")
        if not 0 <= inst.y0[i] <= inst.e[i]:
            bad("y0", (i,), f"initial count {inst.y0[i]} outside [0, e={inst.e[i]}]")
    for t in range(T):
        if inst.p[t] < 0:
            bad("p", (t,), "negative period capacity")
        if inst.y0.sum() > inst.p[t]:
            bad("p", (t,), f"sum of y0 ({inst.y0.sum()}) exceeds p[t]={inst.p[t]}")
    if not np.isin(inst.a, (0, 1)).all():
        bad("a", (), "coverage entries must be 0 or 1")

    if len(inst.g) != S or len(inst.h) != S:
        bad("g/h", (), "scenario extent mismatch")
        return out
    for s, t, j in inst.cells():
        bj = inst.b[s, t, j]
        if not 0 <= bj <= inst.p[t]:
            bad("b", (s, t, j), f"threshold {bj} outside [0, p[t]={inst.p[t]}]")
            continue
        try:
            grow, hrow = inst.g[s][t][j], inst.h[s][t][j]
        except IndexError:
            bad("g/h", (s, t, j), "missing row")
            continue
        if len(grow) != inst.p[t] - bj:
            bad("g", (s, t, j), f"length {len(grow)} != p[t]-b = {inst.p[t] - bj}")
        if len(hrow) != bj:
            bad("h", (s, t, j), f"length {len(hrow)} != b = {bj}")
        if any(x > y for x, y in zip(grow, grow[1:])) or (grow and grow[-1] > 0):
            bad("g", (s, t, j), f"surplus costs {grow} must be sorted non-decreasing and <= 0")
        if any(x > y for x, y in zip(hrow, hrow[1:])) or (hrow and hrow[0] < 0):
            bad("h", (s, t, j), f"shortage costs {hrow} must be >= 0 and sorted non-decreasing")
        if not all(math.isfinite(v) for v in grow + hrow):
            bad("g/h", (s, t, j), "non-finite cost")
    return out


def check(inst: Instance) -> Instance:
    violations = validate(inst)
    if violations:
        raise InstanceValidationError(violations)
    return inst


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    T: int = 3
    S: int = 3
    seed: int = 0
    radius: float = 8.0
    radius_decay: float = 0.2
    knockout_fraction: float = 0.2
    threshold_fraction: float = 0.3
    rectangle: tuple[float, float] = (10.0, 50.0)
    cost_range: tuple[float, float] = (1.0, 10.0)
    g_range: tuple[float, float] = (-10.0, -1.0)
    h_range: tuple[float, float] = (1.0, 10.0)
    p_fractions: tuple[float, float] = (0.1, 0.3)
    e_default: int = 2
    y0_default: int = 0

    def __post_init__(self):
        if self.n < 1 or self.T < 1 or self.S < 1:
            raise ValueError(f"n, T and S must be >= 1 (got n={self.n}, T={self.T}, S={self.S})")
        for name in ("radius_decay", "knockout_fraction", "threshold_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} not in [0, 1]")
        for name in ("cost_range", "g_range", "h_range", "p_fractions"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is not ordered: {lo} > {hi}")
        if self.g_range[1] > 0 or self.h_range[0] < 0:
            raise ValueError("g_range must be <= 0 and h_range >= 0")
        if not 0 <= self.y0_default <= self.e_default:
            raise ValueError("y0_default must lie in [0, e_default]")

    def p_bounds(self) -> tuple[int, int]:
        lo = max(1, round_half_away(self.p_fractions[0] * self.n))
        hi = max(lo, round_half_away(self.p_fractions[1] * self.n))
        return lo, hi


def generate(cfg: GeneratorConfig) -> Instance:
    """Draw a random instance.  Locations coincide with demand points (m = n).

    Draw order from ``numpy.random.default_rng(seed)``: points, o, c, f,
    per-scenario knockout sets, p, then g/h rows cell by cell, then the
    scenario weights.
    """
    rng = np.random.default_rng(cfg.seed)
    n = m = cfg.n
    T, S = cfg.T, cfg.S
    width, height = cfg.rectangle
    pts = rng.uniform((0.0, 0.0), (width, height), size=(n, 2))
    lo, hi = cfg.cost_range
    o = rng.uniform(lo, hi, size=(m, T))
    c = rng.uniform(lo, hi, size=(m, T - 1))
    f = rng.uniform(lo, hi, size=(m, T))

    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    radii = cfg.radius * (1.0 - cfg.radius_decay) ** np.arange(T)
    base = (dist[None, :, :] <= radii[:, None, None]).astype(np.int8)
    n_out = round_half_away(cfg.knockout_fraction * m)
    a = np.repeat(base[None], S, axis=0)
    for s in range(S):
        out = rng.choice(m, size=n_out, replace=False)
        a[s, :, out, :] = 0

    plo, phi = cfg.p_bounds()
    p = rng.integers(plo, phi + 1, size=T)
    cover = a.sum(axis=2)
    b = np.empty((S, T, n), dtype=np.int64)
    for s in range(S):
        for t in range(T):
            for j in range(n):
                b[s, t, j] = min(round_half_away(cfg.threshold_fraction * cover[s, t, j]), p[t])

    g, h = [], []
    for s in range(S):
        gs, hs = [], []
        for t in range(T):
            gt, ht = [], []
            for j in range(n):
                gt.append(np.sort(rng.uniform(*cfg.g_range, size=p[t] - b[s, t, j])))
                ht.append(np.sort(rng.uniform(*cfg.h_range, size=b[s, t, j])))
            gs.append(gt)
            hs.append(ht)
        g.append(gs)
        h.append(hs)
    w = rng.uniform(0.0, 1.0, size=S)
    prob = w / w.sum()

    return Instance(
        o=o, c=c, f=f,
        e=np.full(m, cfg.e_default), p=p, y0=np.full(m, cfg.y0_default),
        a=a, b=b, g=g, h=h, prob=prob, seed=cfg.seed,
        name=f"n{n}_T{T}_S{S}_seed{cfg.seed}",
    )


# ---------------------------------------------------------------------------
# Canonical file format
# ---------------------------------------------------------------------------

def to_dict(inst: Instance) -> dict:
    def periods(arr):  # (m, T) -> period-major nested lists
        return [[float(x) for x in col] for col in arr.T]

    return {
        "meta": {
            "schema_version": SCHEMA_VERSION,
            "m": inst.m, "n": inst.n, "T": inst.T, "S": inst.S,
            "seed": inst.seed, "name": inst.name,
        },
        "det": {
            "o": periods(inst.o), "c": periods(inst.c), "f": periods(inst.f),
            "e": inst.e.tolist(), "p": inst.p.tolist(), "y0": inst.y0.tolist(),
        },
        "stoch": {
            "a": [[["".join(str(int(v)) for v in row) for row in a_st] for a_st in a_s]
                  for a_s in inst.a],
            "b": inst.b.tolist(),
            "g": [[[list(cell) for cell in gt] for gt in gs] for gs in inst.g],
            "h": [[[list(cell) for cell in ht] for ht in hs] for hs in inst.h],
        },
        "prob": [float(x) for x in inst.prob],
    }


def dumps_instance(inst: Instance) -> str:
    return json.dumps(to_dict(inst), indent=1) + "\n"


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise InstanceFormatError(f"missing block '{key}' in {where}")
    return d[key]


def from_dict(data: dict) -> Instance:
    meta = _require(data, "meta", "instance")
    det = _require(data, "det", "instance")
    stoch = _require(data, "stoch", "instance")
    prob = _require(data, "prob", "instance")
    version = _require(meta, "schema_version", "meta")
    if version != SCHEMA_VERSION:
        raise InstanceFormatError(f"schema_version {version} unsupported (expected {SCHEMA_VERSION})")
    m, n, T, S = (int(_require(meta, k, "meta")) for k in ("m", "n", "T", "S"))
    try:
        o = np.array(_require(det, "o", "det"), dtype=float).reshape(T, m).T
        c = np.array(_require(det, "c", "det"), dtype=float).reshape(T - 1, m).T
        f = np.array(_require(det, "f", "det"), dtype=float).reshape(T, m).T
        a_raw = _require(stoch, "a", "stoch")
        a = np.array([[[[int(ch) for ch in row] for row in a_st] for a_st in a_s] for a_s in a_raw],
                     dtype=np.int8).reshape(S, T, m, n)
        b = np.array(_require(stoch, "b", "stoch"), dtype=np.int64).reshape(S, T, n)
    except (ValueError, TypeError) as exc:
        raise InstanceFormatError(f"malformed array: {exc}") from exc
    inst = Instance(
        o=o, c=c, f=f,
        e=_require(det, "e", "det"), p=_require(det, "p", "det"), y0=_require(det, "y0", "det"),
        a=a, b=b, g=_require(stoch, "g", "stoch"), h=_require(stoch, "h", "stoch"),
        prob=prob, seed=meta.get("seed"), name=meta.get("name", ""),
    )
    return check(inst)


def write_instance(inst: Instance, path) -> None:
    check(inst)
    Path(path).write_text(dumps_instance(inst), encoding="utf-8")


def read_instance(path) -> Instance:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: not valid JSON ({exc})") from exc
    return from_dict(data)
