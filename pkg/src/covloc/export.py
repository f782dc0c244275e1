"""MPS and CPLEX-LP writers for :class:`~covloc.lp.LinearProgram`.

The MPS output follows the fixed-column layout (fields start at columns 2,
5, 15, 25, 40 and 50).  Names longer than eight characters push later fields
right, so files with long names are read correctly only by free-format MPS
readers, which is what current solvers use by default.  Output is a pure
function of the model, so identical input gives identical bytes.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .lp import LinearProgram

OBJ_ROW = "COST"
CONST_COL = "obj_const"
_MPS_SENSE = {"<=": "L", "=": "E", ">=": "G"}
_LP_SENSE = {"<=": "<=", "=": "=", ">=": ">="}


def fmt(x: float) -> str:
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _names(lp: LinearProgram) -> tuple[list[str], list[str]]:
    cols = lp.var_names or [f"x{k + 1}" for k in range(lp.n_vars)]
    rows = lp.row_names or [f"r{k + 1}" for k in range(lp.n_rows)]
    return cols, rows


def _field_line(code: str, *fields: str) -> str:
    # columns 2-3 code, 5-12 name, 15-22 name, 25-36 value, 40-47 name, 50-61 value
    starts = (4, 14, 24, 39, 49)
    line = " " + code.ljust(2)
    for start, text in zip(starts, fields):
        line = line.ljust(start) if len(line) < start else line + " "
        line += text
    return line.rstrip()


def mps_text(lp: LinearProgram, name: str = "MODEL") -> str:
    cols, rows = _names(lp)
    out = [f"NAME          {name}", "ROWS", _field_line("N", OBJ_ROW)]
    for r, sense in enumerate(lp.senses):
        out.append(_field_line(_MPS_SENSE[sense], rows[r]))
    out.append("COLUMNS")
    A = lp.A.tocsc()
    in_int = False
    marker = 0
    for k in range(lp.n_vars):
        if bool(lp.integer[k]) != in_int:
            tag = "'INTORG'" if not in_int else "'INTEND'"
            out.append(_field_line("", f"MARKER{marker:02d}", "'MARKER'", "", tag))
            marker += int(in_int)
            in_int = not in_int
        entries = []
        if lp.c[k] != 0:
            entries.append((OBJ_ROW, lp.c[k]))
        start, end = A.indptr[k], A.indptr[k + 1]
        entries += [(rows[r], val) for r, val in zip(A.indices[start:end], A.data[start:end])]
        if not entries:
            entries = [(OBJ_ROW, 0.0)]
        for e in range(0, len(entries), 2):
            pair = entries[e: e + 2]
            fields = [cols[k], pair[0][0], fmt(pair[0][1])]
            if len(pair) == 2:
                fields += [pair[1][0], fmt(pair[1][1])]
            out.append(_field_line("", *fields))
    if in_int:
        out.append(_field_line("", f"MARKER{marker:02d}", "'MARKER'", "", "'INTEND'"))
    if lp.constant != 0:
        out.append(_field_line("", CONST_COL, OBJ_ROW, fmt(lp.constant)))
    out.append("RHS")
    nz = [(rows[r], lp.rhs[r]) for r in range(lp.n_rows) if lp.rhs[r] != 0]
    for e in range(0, len(nz), 2):
        pair = nz[e: e + 2]
        fields = ["RHS", pair[0][0], fmt(pair[0][1])]
        if len(pair) == 2:
            fields += [pair[1][0], fmt(pair[1][1])]
        out.append(_field_line("", *fields))
    out.append("BOUNDS")
    for k in range(lp.n_vars):
        lo, hi = lp.lower[k], lp.upper[k]
        if lo == hi:
            out.append(_field_line("FX", "BND", cols[k], fmt(lo)))
            continue
        if lo != 0:
            out.append(_field_line("LO", "BND", cols[k], fmt(lo)))
        out.append(_field_line("UP", "BND", cols[k], fmt(hi)))
    if lp.constant != 0:
        out.append(_field_line("FX", "BND", CONST_COL, "1"))
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def _wrap_terms(head: str, terms: list[str], tail: str = "", width: int = 78) -> list[str]:
    lines, cur = [], head
    for term in terms:
        if len(cur) + len(term) + 1 > width and cur.strip():
            lines.append(cur.rstrip())
            cur = "   "
        cur += " " + term
    cur += tail
    lines.append(cur.rstrip())
    return lines


def _lin(coefs, names) -> list[str]:
    terms = []
    for val, nm in zip(coefs, names):
        sign = "-" if val < 0 else "+"
        mag = abs(val)
        terms.append(f"{sign} {nm}" if mag == 1 else f"{sign} {fmt(mag)} {nm}")
    if terms and terms[0].startswith("+ "):
        terms[0] = terms[0][2:]
    return terms


def lp_text(lp: LinearProgram, name: str = "MODEL") -> str:
    cols, rows = _names(lp)
    out = [f"\\ {name}", "Minimize"]
    nz = np.flatnonzero(lp.c)
    obj = _lin(lp.c[nz], [cols[k] for k in nz])
    if lp.constant != 0:
        obj += _lin([lp.constant], [CONST_COL])
    out += _wrap_terms(f" {OBJ_ROW}:", obj or ["0 " + cols[0]] if lp.n_vars else ["0"])
    out.append("Subject To")
    A = lp.A.tocsr()
    for r in range(lp.n_rows):
        start, end = A.indptr[r], A.indptr[r + 1]
        terms = _lin(A.data[start:end], [cols[k] for k in A.indices[start:end]])
        if not terms:
            terms = ["0 " + cols[0]]
        out += _wrap_terms(f" {rows[r]}:", terms, f" {_LP_SENSE[lp.senses[r]]} {fmt(lp.rhs[r])}")
    out.append("Bounds")
    for k in range(lp.n_vars):
        lo, hi = lp.lower[k], lp.upper[k]
        out.append(f" {cols[k]} = {fmt(lo)}" if lo == hi else f" {fmt(lo)} <= {cols[k]} <= {fmt(hi)}")
    if lp.constant != 0:
        out.append(f" {CONST_COL} = 1")
    ints = [cols[k] for k in range(lp.n_vars) if lp.integer[k]]
    if ints:
        out.append("Generals")
        out += _wrap_terms("", ints)
    out.append("End")
    return "\n".join(out) + "\n"


def write_mps(lp: LinearProgram, path, name: str = "MODEL") -> None:
    Path(path).write_text(mps_text(lp, name), encoding="ascii")


def write_lp(lp: LinearProgram, path, name: str = "MODEL") -> None:
    Path(path).write_text(lp_text(lp, name), encoding="ascii")


def read_mps(path) -> LinearProgram:
    """Parse the subset of free-format MPS written by :func:`write_mps`."""
    from .model import ModelBuilder

    section = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    col_entries: dict[str, dict[str, float]] = {}
    col_order: list[str] = []
    col_int: dict[str, bool] = {}
    rhs: dict[str, float] = {}
    bounds: dict[str, list[float]] = {}
    integer = False
    inv = {v: k for k, v in _MPS_SENSE.items()}
    for line in Path(path).read_text(encoding="ascii").splitlines():
        if not line.strip():
            continue
        if not line.startswith(" "):
            section = line.split()[0]
            continue
        tok = line.split()
        if section == "ROWS":
            if tok[0] != "N":
                row_sense[tok[1]] = inv[tok[0]]
                row_order.append(tok[1])
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "'MARKER'":
                integer = tok[2] == "'INTORG'"
                continue
            col = tok[0]
            if col not in col_entries:
                col_entries[col] = {}
                col_order.append(col)
                col_int[col] = integer
            for r, val in zip(tok[1::2], tok[2::2]):
                col_entries[col][r] = col_entries[col].get(r, 0.0) + float(val)
        elif section == "RHS":
            for r, val in zip(tok[1::2], tok[2::2]):
                rhs[r] = float(val)
        elif section == "BOUNDS":
            kind, col, val = tok[0], tok[2], float(tok[3])
            lohi = bounds.setdefault(col, [0.0, np.inf])
            if kind in ("UP", "FX"):
                lohi[1] = val
            if kind in ("LO", "FX"):
                lohi[0] = val
    mb = ModelBuilder()
    constant = 0.0
    index = {}
    for col in col_order:
        lo, hi = bounds.get(col, [0.0, np.inf])
        if col == CONST_COL:
            constant = col_entries[col].get(OBJ_ROW, 0.0) * lo
            continue
        index[col] = mb.var(col, col_entries[col].get(OBJ_ROW, 0.0), lo, hi, col_int[col])
    for r in row_order:
        terms = [(index[col], ent[r]) for col, ent in col_entries.items() if r in ent and col in index]
        mb.row(r, terms, row_sense[r], rhs.get(r, 0.0))
    return mb.build(constant)
