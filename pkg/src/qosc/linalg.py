"""Exact sparse linear algebra over the coefficient field Q(s).

Rows are dicts {column: QScalar}.  Gaussian elimination is exact; the
fraction-free variant clears row denominators first and keeps entries as
integer Laurent polynomials throughout (Bareiss-style single division).
"""

from __future__ import annotations

from .scalars import ONE, ZERO, QScalar


def _row_scale(row: dict, c: QScalar) -> dict:
    return {j: v * c for j, v in row.items()}


def _row_axpy(row: dict, c: QScalar, other: dict) -> dict:
    out = dict(row)
    for j, v in other.items():
        n = out.get(j, ZERO) + c * v
        if n.is_zero():
            out.pop(j, None)
        else:
            out[j] = n
    return out


def rref(rows: list[dict], col_order: list) -> tuple[list[dict], list, list[dict]]:
    """Reduced row echelon form, eliminating columns in the given order.

    Returns (reduced rows, pivot columns, leftover rows).  Leftover rows are
    nonzero rows supported outside ``col_order`` only.
    """
    rows = [dict(r) for r in rows if r]
    reduced: list[dict] = []
    pivots: list = []
    for col in col_order:
        cand = [k for k, r in enumerate(rows) if col in r]
        if not cand:
            continue
        k = min(cand, key=lambda i: len(rows[i]))
        piv = rows.pop(k)
        piv = _row_scale(piv, piv[col].inverse())
        piv[col] = ONE
        rows = [_row_axpy(r, -r[col], piv) if col in r else r for r in rows]
        reduced = [_row_axpy(r, -r[col], piv) if col in r else r for r in reduced]
        reduced.append(piv)
        pivots.append(col)
        rows = [r for r in rows if r]
    return reduced, pivots, rows


def solve_unique(rows: list[dict], rhs: list[QScalar], cols: list) -> dict:
    """Solve an (over)determined system that must have a unique solution.

    Raises ValueError when the system is singular or inconsistent.
    """
    aug = []
    rhs_col = ("#rhs",)
    for r, b in zip(rows, rhs):
        row = dict(r)
        if not b.is_zero():
            row[rhs_col] = b
        if row:
            aug.append(row)
    reduced, pivots, leftover = rref(aug, list(cols))
    if len(pivots) != len(cols):
        raise ValueError("system is singular")
    if leftover:
        raise ValueError("inconsistent system")
    sol = {}
    for row, col in zip(reduced, pivots):
        if any(j != col and j != rhs_col for j in row):
            raise ValueError("system is underdetermined")
        sol[col] = row.get(rhs_col, ZERO)
    return sol


def solve_fraction_free(rows: list[dict], rhs: list[QScalar], cols: list) -> dict:
    """Fraction-free elimination (denominators cleared per row, exact
    divisions by the previous pivot), then back substitution.

    Solves for every column in ``cols``; raises ValueError if the system does
    not determine them uniquely or is inconsistent.
    """
    rhs_col = ("#rhs",)
    work = []
    for r, b in zip(rows, rhs):
        row = dict(r)
        if not b.is_zero():
            row[rhs_col] = b
        if not row:
            continue
        den = ONE
        for v in row.values():
            c = v.canonical()
            den = den * QScalar(ONE._sc, dict(c._den), {0: 1})
        work.append({j: (v * den).canonical() for j, v in row.items()})

    prev_pivot = ONE
    echelon: list[tuple[object, dict]] = []
    for col in cols:
        cand = [k for k, r in enumerate(work) if col in r]
        if not cand:
            raise ValueError(f"column {col!r} has no pivot (singular system)")
        k = min(cand, key=lambda i: len(work[i]))
        piv = work.pop(k)
        pv = piv[col]
        nxt = []
        for r in work:
            if col in r:
                new = {}
                rc = r[col]
                for j in set(piv) | set(r):
                    val = pv * r.get(j, ZERO) - rc * piv.get(j, ZERO)
                    if not val.is_zero():
                        new[j] = val.div_exact(prev_pivot)
                if new:
                    nxt.append(new)
            else:
                nxt.append(r)
        work = nxt
        prev_pivot = pv
        echelon.append((col, piv))

    for r in work:
        if set(r) == {rhs_col}:
            raise ValueError("inconsistent system")

    sol = {c: ZERO for c in cols}
    for col, row in reversed(echelon):
        acc = row.get(rhs_col, ZERO)
        for j, v in row.items():
            if j == rhs_col or j == col:
                continue
            if j not in sol:
                raise ValueError(f"unknown column {j!r} in echelon row")
            acc = acc - v * sol[j]
        sol[col] = (acc / row[col]).canonical()
    return sol


def solve_cascade(rows: list[dict], rhs: list[QScalar], cols: list) -> dict:
    """Solve a sparse (over)determined system by repeated substitution of
    single-unknown rows, handing any residual coupled core to the
    fraction-free eliminator.  Raises ValueError when singular/inconsistent."""
    work = [(dict(r), b) for r, b in zip(rows, rhs)]
    solved: dict = {}
    while True:
        progress = False
        nxt = []
        for row, b in work:
            live = [c for c in row if c not in solved]
            if not live:
                acc = -b
                for c, v in row.items():
                    acc = acc + v * solved[c]
                if not acc.is_zero():
                    raise ValueError("inconsistent system")
                continue
            if len(live) == 1:
                c0 = live[0]
                acc = b
                for c, v in row.items():
                    if c != c0:
                        acc = acc - v * solved[c]
                solved[c0] = (acc / row[c0]).canonical()
                progress = True
            else:
                nxt.append((row, b))
        work = nxt
        if not progress:
            break
    missing = [c for c in cols if c not in solved]
    if missing:
        sub_rows, sub_rhs = [], []
        for row, b in work:
            r = {}
            for c, v in row.items():
                if c in solved:
                    b = b - v * solved[c]
                else:
                    r[c] = v
            if r or not b.is_zero():
                sub_rows.append(r)
                sub_rhs.append(b)
        solved.update(solve_fraction_free(sub_rows, sub_rhs, missing))
    return {c: solved[c] for c in cols}


def nullspace(rows: list[dict], cols: list) -> list[dict]:
    """Basis of the right nullspace, one dict per basis vector."""
    reduced, pivots, _ = rref(rows, list(cols))
    pivset = set(pivots)
    free = [c for c in cols if c not in pivset]
    basis = []
    for f in free:
        vec = {f: ONE}
        for row, col in zip(reduced, pivots):
            v = row.get(f)
            if v is not None:
                vec[col] = -v
        basis.append(vec)
    return basis


def rank(rows: list[dict], cols: list) -> int:
    _, pivots, _ = rref(rows, list(cols))
    return len(pivots)
