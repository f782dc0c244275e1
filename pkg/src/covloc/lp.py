"""Dense bounded-variable primal simplex.

Every structural variable carries finite bounds ``lo <= x <= hi``; slack
variables are added for inequality rows and artificial variables for rows
whose starting residual has the wrong sign.  Nonbasic variables sit at one of
their bounds, so box constraints never become explicit rows.

Pivoting uses Dantzig's rule and switches to Bland's rule after
``BLAND_AFTER`` consecutive degenerate pivots, which rules out cycling.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
BLAND_AFTER = 50

SENSES = ("<=", "=", ">=")


@dataclass
class LinearProgram:
    """``min c.x + constant`` subject to ``A x (sense) rhs`` and ``lower <= x <= upper``.

    ``A`` is stored as a CSR matrix so that large models can be built for
    export; the simplex densifies it.
    """

    c: np.ndarray
    A: sparse.csr_matrix
    senses: Sequence[str]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    constant: float = 0.0
    var_names: list[str] | None = None
    row_names: list[str] | None = None
    integer: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = sparse.csr_matrix(self.A, dtype=float)
        if self.A.shape == (0, 0) or self.A.shape[1] != len(self.c):
            self.A = sparse.csr_matrix(self.A, shape=(self.A.shape[0], len(self.c)))
        self.senses = list(self.senses)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.integer is None:
            self.integer = np.zeros(len(self.c), dtype=bool)
        self.check()

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def check(self) -> None:
        nv, nr = self.n_vars, self.n_rows
        if self.A.shape != (nr, nv):
            raise ValueError(f"matrix shape {self.A.shape} does not match {nv} variables")
        if len(self.senses) != nr or len(self.rhs) != nr:
            raise ValueError("senses/rhs length must equal the number of rows")
        if len(self.lower) != nv or len(self.upper) != nv:
            raise ValueError("bounds length must equal the number of variables")
        bad = [s for s in self.senses if s not in SENSES]
        if bad:
            raise ValueError(f"unknown row sense {bad[0]!r}")
        for name, arr in (("c", self.c), ("rhs", self.rhs), ("A", self.A.data),
                          ("lower", self.lower), ("upper", self.upper)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains NaN or infinite entries")
        if np.any(self.lower > self.upper):
            k = int(np.argmax(self.lower > self.upper))
            raise ValueError(f"variable {k} has lower bound above upper bound")

    def activity(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def violation(self, x: np.ndarray) -> float:
        """Largest constraint or bound violation of ``x``."""
        act = self.activity(x)
        worst = 0.0
        for k, sense in enumerate(self.senses):
            d = act[k] - self.rhs[k]
            if sense == "<=":
                worst = max(worst, d)
            elif sense == ">=":
                worst = max(worst, -d)
            else:
                worst = max(worst, abs(d))
        if len(x):
            worst = max(worst, float(np.max(self.lower - x)), float(np.max(x - self.upper)))
        return worst


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | iteration-limit
    x: np.ndarray
    objective: float
    iterations: int
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class BoundedSimplex:
    """Simplex engine bound to one constraint system.

    Phase 1 runs once; later calls to :meth:`solve` with a new objective start
    from the last optimal basis, which stays primal feasible because the
    constraints do not change.
    """

    def __init__(self, lp: LinearProgram, max_iters: int | None = None,
                 time_limit: float | None = None):
        self.lp = lp
        # a wall-clock limit also ends with status "iteration-limit"
        self.deadline = None if time_limit is None else time.perf_counter() + time_limit
        A = lp.A.toarray()
        nr, nv = A.shape
        self.nr, self.nv = nr, nv
        self.max_iters = max_iters if max_iters is not None else 50 * (nr + nv) + 1000
        self.iterations = 0

        ineq = [k for k, s in enumerate(lp.senses) if s != "="]
        slack = np.zeros((nr, len(ineq)))
        for col, k in enumerate(ineq):
            slack[k, col] = 1.0 if lp.senses[k] == "<=" else -1.0

        x_struct = lp.lower.copy()
        resid = lp.rhs - A @ x_struct
        init_col = np.empty(nr, dtype=np.int64)
        init_sign = np.empty(nr)
        art_rows = []
        slack_of_row = {k: nv + col for col, k in enumerate(ineq)}
        for k in range(nr):
            sense = lp.senses[k]
            if sense == "<=" and resid[k] >= 0:
                init_col[k], init_sign[k] = slack_of_row[k], 1.0
            elif sense == ">=" and resid[k] <= 0:
                init_col[k], init_sign[k] = slack_of_row[k], -1.0
            else:
                init_col[k] = nv + len(ineq) + len(art_rows)
                init_sign[k] = 1.0 if resid[k] >= 0 else -1.0
                art_rows.append(k)
        art = np.zeros((nr, len(art_rows)))
        for col, k in enumerate(art_rows):
            art[k, col] = init_sign[k]

        self.A_ext = np.hstack([A, slack, art])
        N = self.A_ext.shape[1]
        self.n_art_start = nv + len(ineq)
        self.lo = np.concatenate([lp.lower, np.zeros(len(ineq) + len(art_rows))])
        self.hi = np.concatenate([lp.upper, np.full(len(ineq) + len(art_rows), np.inf)])
        self.allowed = np.ones(N, dtype=bool)
        self.at_upper = np.zeros(N, dtype=bool)
        self.x = np.concatenate([x_struct, np.zeros(N - nv)])
        self.x[init_col] = np.abs(resid)
        self.basis = init_col.copy()
        self.is_basic = np.zeros(N, dtype=bool)
        self.is_basic[self.basis] = True
        self.init_col, self.init_sign = init_col, init_sign
        self.tab = init_sign[:, None] * self.A_ext
        self.feasible: bool | None = None
        self._phase1()

    # -- core pivoting -------------------------------------------------------
    def _reinvert(self) -> None:
        if self.nr == 0:
            return
        B = self.A_ext[:, self.basis]
        self.tab = np.linalg.solve(B, self.A_ext)
        nonbasic = ~self.is_basic
        rest = self.lp.rhs - self.A_ext[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = np.linalg.solve(B, rest)

    def _iterate(self, cost: np.ndarray) -> str:
        degenerate = 0
        while True:
            if self.iterations >= self.max_iters:
                return "iteration-limit"
            if self.deadline is not None and time.perf_counter() > self.deadline:
                return "iteration-limit"
            d = cost - cost[self.basis] @ self.tab if self.nr else cost.copy()
            cand = self.allowed & ~self.is_basic & (self.hi > self.lo)
            up = cand & ~self.at_upper & (d < -OPT_TOL)
            down = cand & self.at_upper & (d > OPT_TOL)
            elig = np.flatnonzero(up | down)
            if elig.size == 0:
                return "optimal"
            if degenerate >= BLAND_AFTER:
                j = int(elig[0])
            else:
                j = int(elig[np.argmax(np.abs(d[elig]))])
            delta = 1.0 if up[j] else -1.0
            alpha = delta * self.tab[:, j] if self.nr else np.zeros(0)
            xb = self.x[self.basis]
            ratio = np.full(self.nr, np.inf)
            pos = alpha > PIVOT_TOL
            neg = alpha < -PIVOT_TOL
            ratio[pos] = (xb[pos] - self.lo[self.basis][pos]) / alpha[pos]
            ratio[neg] = (self.hi[self.basis][neg] - xb[neg]) / -alpha[neg]
            np.maximum(ratio, 0.0, out=ratio)
            flip = self.hi[j] - self.lo[j]
            best = ratio.min() if self.nr else np.inf
            if not np.isfinite(min(best, flip)):
                return "unbounded"
            self.iterations += 1
            if flip <= best:
                self.x[j] += delta * flip
                self.x[self.basis] -= flip * alpha
                self.at_upper[j] = not self.at_upper[j]
                self.x[j] = self.hi[j] if self.at_upper[j] else self.lo[j]
                degenerate = 0
                continue
            theta = best
            ties = np.flatnonzero(ratio <= best + 1e-12)
            if degenerate >= BLAND_AFTER:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            leaving = self.basis[r]
            self.x[j] += delta * theta
            self.x[self.basis] -= theta * alpha
            to_upper = alpha[r] < 0
            self.x[leaving] = self.hi[leaving] if to_upper else self.lo[leaving]
            self.at_upper[leaving] = to_upper
            self.at_upper[j] = False
            piv_row = self.tab[r] / self.tab[r, j]
            col = self.tab[:, j].copy()
            col[r] = 0.0
            self.tab -= np.outer(col, piv_row)
            self.tab[r] = piv_row
            self.is_basic[leaving] = False
            self.is_basic[j] = True
            self.basis[r] = j
            degenerate = degenerate + 1 if theta <= 1e-12 else 0

    def _phase1(self) -> None:
        N = self.A_ext.shape[1]
        art = np.arange(self.n_art_start, N)
        if art.size:
            cost = np.zeros(N)
            cost[art] = 1.0
            status = self._iterate(cost)
            self._reinvert()
            scale = max(1.0, float(np.max(np.abs(self.lp.rhs), initial=0.0)))
            if status != "optimal" or self.x[art].sum() > FEAS_TOL * scale:
                self.feasible = False if status == "optimal" else None
                self.status1 = status
                return
            # Drive zero-level artificials out of the basis where possible.
            for r in range(self.nr):
                if self.basis[r] < self.n_art_start:
                    continue
                row = self.tab[r, : self.n_art_start].copy()
                row[self.is_basic[: self.n_art_start]] = 0.0
                cols = np.flatnonzero(np.abs(row) > 1e-7)
                if cols.size:
                    j = int(cols[np.argmax(np.abs(row[cols]))])
                    leaving = self.basis[r]
                    piv_row = self.tab[r] / self.tab[r, j]
                    col = self.tab[:, j].copy()
                    col[r] = 0.0
                    self.tab -= np.outer(col, piv_row)
                    self.tab[r] = piv_row
                    self.is_basic[leaving] = False
                    self.is_basic[j] = True
                    self.basis[r] = j
            self.hi[art] = 0.0
            self.x[art[~self.is_basic[art]]] = 0.0
            self.at_upper[art] = False
            self.allowed[art] = False
            self._reinvert()
        self.feasible = True
        self.status1 = "optimal"

    # -- public --------------------------------------------------------------
    def solve(self, c: np.ndarray | None = None, constant: float | None = None) -> LpSolution:
        lp = self.lp
        c = lp.c if c is None else np.asarray(c, dtype=float)
        constant = lp.constant if constant is None else constant
        if not self.feasible:
            status = "infeasible" if self.feasible is False else self.status1
            return LpSolution(status, self.x[: self.nv].copy(), np.nan, self.iterations)
        start = self.iterations
        self._reinvert()
        cost = np.zeros(self.A_ext.shape[1])
        cost[: self.nv] = c
        status = self._iterate(cost)
        self._reinvert()
        x = np.clip(self.x[: self.nv], lp.lower, lp.upper)
        obj = float(c @ x) + constant
        if self.nr:
            binv = self.tab[:, self.init_col] * self.init_sign[None, :]
            duals = cost[self.basis] @ binv
        else:
            duals = np.zeros(0)
        return LpSolution(status, x, obj, self.iterations - start, duals)


def solve_lp(lp: LinearProgram, max_iters: int | None = None,
             time_limit: float | None = None) -> LpSolution:
    """Solve ``lp`` from scratch.  Deterministic for identical input."""
    engine = BoundedSimplex(lp, max_iters=max_iters, time_limit=time_limit)
    sol = engine.solve()
    sol.iterations = engine.iterations
    return sol
