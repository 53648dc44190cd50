"""Sparse exact tensors over Q(s): rank-2 and rank-4 objects on the index
space of the fundamental corepresentation.

A Tensor4 acts on the twofold index space; entries are stored as
{(upper pair, lower pair): QScalar} with composition done column-wise.
"""

from __future__ import annotations

from .scalars import ONE, ZERO, QScalar, qs


class Tensor2:
    __slots__ = ("data",)

    def __init__(self, data: dict | None = None):
        self.data = {k: v for k, v in (data or {}).items() if not v.is_zero()}

    def __getitem__(self, idx) -> QScalar:
        return self.data.get(idx, ZERO)

    def items(self):
        return self.data.items()

    def __eq__(self, other):
        return _dict_eq(self.data, other.data)

    def scale(self, c: QScalar) -> "Tensor2":
        return Tensor2({k: v * c for k, v in self.data.items()})

    def compose(self, other: "Tensor2") -> "Tensor2":
        out: dict = {}
        for (i, j), v in self.data.items():
            for (jj, k), w in other.data.items():
                if j != jj:
                    continue
                _acc(out, (i, k), v * w)
        return Tensor2(out)

    def transpose(self) -> "Tensor2":
        return Tensor2({(j, i): v for (i, j), v in self.data.items()})


class Tensor4:
    __slots__ = ("data", "_cols")

    def __init__(self, data: dict | None = None):
        self.data = {k: v for k, v in (data or {}).items() if not v.is_zero()}
        self._cols = None

    def __getitem__(self, idx) -> QScalar:
        return self.data.get(idx, ZERO)

    def items(self):
        return self.data.items()

    def __eq__(self, other):
        return _dict_eq(self.data, other.data)

    def columns(self) -> dict:
        """col pair -> list of (row pair, value)."""
        if self._cols is None:
            cols: dict = {}
            for (up, lo), v in self.data.items():
                cols.setdefault(lo, []).append((up, v))
            self._cols = cols
        return self._cols

    def is_zero(self) -> bool:
        return not self.data

    def scale(self, c: QScalar) -> "Tensor4":
        if c.is_zero():
            return Tensor4({})
        return Tensor4({k: v * c for k, v in self.data.items()})

    def add(self, other: "Tensor4") -> "Tensor4":
        out = dict(self.data)
        for k, v in other.data.items():
            _acc(out, k, v)
        return Tensor4(out)

    def sub(self, other: "Tensor4") -> "Tensor4":
        return self.add(other.scale(qs(-1)))

    def compose(self, other: "Tensor4") -> "Tensor4":
        """Matrix product self . other on the twofold index space."""
        out: dict = {}
        rows: dict = {}
        for (up, lo), v in self.data.items():
            rows.setdefault(lo, []).append((up, v))
        for (up, lo), w in other.data.items():
            hits = rows.get(up)
            if not hits:
                continue
            for top, v in hits:
                _acc(out, (top, lo), v * w)
        return Tensor4(out)

    def trace(self) -> QScalar:
        t = ZERO
        for (up, lo), v in self.data.items():
            if up == lo:
                t = t + v
        return t.canonical()

    def rows_for_elimination(self) -> list[dict]:
        """One sparse row per upper pair: the linear forms v -> (T v)."""
        rows: dict = {}
        for (up, lo), v in self.data.items():
            rows.setdefault(up, {})[lo] = v
        return list(rows.values())


def _acc(out: dict, key, val: QScalar):
    n = out.get(key, ZERO) + val
    if n.is_zero():
        out.pop(key, None)
    else:
        out[key] = n


def _dict_eq(a: dict, b: dict) -> bool:
    if set(a) != set(b):
        # allow zero-valued mismatches
        for k in set(a) ^ set(b):
            if not (a.get(k, ZERO) - b.get(k, ZERO)).is_zero():
                return False
    for k in set(a) & set(b):
        if a[k] != b[k]:
            return False
    return True


def identity4(indices) -> Tensor4:
    return Tensor4({((i, j), (i, j)): ONE for i in indices for j in indices})


def apply_columns(op: Tensor4, vec: dict) -> dict:
    """Apply a Tensor4 to a sparse vector on the twofold index space."""
    out: dict = {}
    cols = op.columns()
    for lo, c in vec.items():
        for up, v in cols.get(lo, ()):
            _acc(out, up, v * c)
    return out


def apply_at_slots(op: Tensor4, vec: dict, slots: tuple[int, int], arity: int) -> dict:
    """Apply a two-slot operator at the given positions of a sparse tensor
    of the given arity (vec keys are index tuples of that length)."""
    a, b = slots
    out: dict = {}
    cols = op.columns()
    for key, c in vec.items():
        hits = cols.get((key[a], key[b]))
        if not hits:
            continue
        for (i, j), v in hits:
            new = list(key)
            new[a], new[b] = i, j
            _acc(out, tuple(new), v * c)
    return out
