"""Exact coefficient field Q(s), where s stands for q^(1/2).

Every coefficient in the engine is a QScalar: a rational scale factor times a
ratio of two integer Laurent polynomials in s.  All arithmetic is exact;
floating point only ever appears in :func:`eval_numeric`.

Canonical form (used for hashing, printing and serialisation): numerator and
denominator coprime primitive integer polynomials with positive leading
coefficient, denominator with lowest exponent zero, the rational content in
the scale factor.  Equality never needs the canonical form - it is decided by
exact cross multiplication.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd as _igcd, sqrt as _fsqrt


class PoleError(ArithmeticError):
    """Raised when a QScalar is evaluated at a pole."""


# ---------------------------------------------------------------------------
# integer Laurent polynomials as {exponent: coefficient} dicts
# ---------------------------------------------------------------------------

def _padd(a: dict, b: dict) -> dict:
    out = dict(a)
    for e, c in b.items():
        n = out.get(e, 0) + c
        if n:
            out[e] = n
        else:
            out.pop(e, None)
    return out


def _pscale(a: dict, k: int) -> dict:
    if k == 0:
        return {}
    return {e: c * k for e, c in a.items()}


def _pmul(a: dict, b: dict) -> dict:
    if not a or not b:
        return {}
    if len(a) == 1:
        (ea, ca), = a.items()
        return {ea + e: ca * c for e, c in b.items()}
    if len(b) == 1:
        (eb, cb), = b.items()
        return {eb + e: cb * c for e, c in a.items()}
    out: dict = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = ea + eb
            n = out.get(e, 0) + ca * cb
            if n:
                out[e] = n
            else:
                out.pop(e, None)
    return out


def _pshift(a: dict, k: int) -> dict:
    if k == 0 or not a:
        return dict(a)
    return {e + k: c for e, c in a.items()}


def _pcontent(a: dict) -> int:
    g = 0
    for c in a.values():
        g = _igcd(g, abs(c))
        if g == 1:
            break
    return g or 1


def _plead(a: dict) -> int:
    return a[max(a)]


def _peval_one(a: dict) -> int:
    return sum(a.values())


def _dense(a: dict) -> tuple[int, list[int]]:
    lo, hi = min(a), max(a)
    coeffs = [0] * (hi - lo + 1)
    for e, c in a.items():
        coeffs[e - lo] = c
    return lo, coeffs


def _from_dense(lo: int, coeffs: list[int]) -> dict:
    return {lo + i: c for i, c in enumerate(coeffs) if c}


def _list_prim(u: list[int]) -> list[int]:
    while u and u[-1] == 0:
        u.pop()
    while u and u[0] == 0:
        u.pop(0)
    if not u:
        return u
    g = 0
    for c in u:
        g = _igcd(g, abs(c))
    if u[-1] < 0:
        g = -g
    return [c // g for c in u]


def _list_pseudo_rem(u: list[int], v: list[int]) -> list[int]:
    # plain pseudo remainder, content-stripped by the caller
    u = list(u)
    m = v[-1]
    while len(u) >= len(v) and any(u):
        while u and u[-1] == 0:
            u.pop()
        if len(u) < len(v):
            break
        lead = u[-1]
        shift = len(u) - len(v)
        u = [c * m for c in u]
        for i, vc in enumerate(v):
            u[shift + i] -= lead * vc
        while u and u[-1] == 0:
            u.pop()
    return u


def _pgcd(a: dict, b: dict) -> dict:
    """Primitive gcd of two Laurent polynomials, unit-normalised to lowest
    exponent zero and positive leading coefficient."""
    if not a:
        return _prim_unit(b)
    if not b:
        return _prim_unit(a)
    _, u = _dense(a)
    _, v = _dense(b)
    u = _list_prim(u)
    v = _list_prim(v)
    if len(u) < len(v):
        u, v = v, u
    while v:
        r = _list_pseudo_rem(u, v)
        u, v = v, _list_prim(r)
    return _from_dense(0, u)


def _prim_unit(a: dict) -> dict:
    if not a:
        return {}
    lo, coeffs = _dense(a)
    return _from_dense(0, _list_prim(coeffs))


def _pdivexact(a: dict, b: dict) -> dict:
    """Exact division of Laurent polynomials; raises if not exact."""
    if not a:
        return {}
    la, ua = _dense(a)
    lb, ub = _dense(b)
    out = [0] * (len(ua) - len(ub) + 1)
    rem = list(ua)
    for i in range(len(out) - 1, -1, -1):
        c = rem[i + len(ub) - 1]
        if c % ub[-1]:
            raise ArithmeticError("inexact polynomial division")
        f = c // ub[-1]
        out[i] = f
        if f:
            for j, vb in enumerate(ub):
                rem[i + j] -= f * vb
    if any(rem):
        raise ArithmeticError("inexact polynomial division")
    return _from_dense(la - lb, out)


_S_MINUS_1 = {1: 1, 0: -1}
_ONE_POLY = {0: 1}


# ---------------------------------------------------------------------------
# QScalar
# ---------------------------------------------------------------------------

class QScalar:
    """Element of Q(s) = Q(q^(1/2)), exact."""

    __slots__ = ("_sc", "_num", "_den", "_canon")

    def __init__(self, sc: Fraction, num: dict, den: dict, canon: bool = False):
        self._sc = sc
        self._num = num
        self._den = den
        self._canon = canon

    # -- constructors -------------------------------------------------------

    @staticmethod
    def from_fraction(x) -> "QScalar":
        x = Fraction(x)
        if not x:
            return ZERO
        return QScalar(x, dict(_ONE_POLY), dict(_ONE_POLY), True)

    @staticmethod
    def s_power(k: int) -> "QScalar":
        """s^k, i.e. q^(k/2)."""
        return QScalar(Fraction(1), {k: 1}, dict(_ONE_POLY), True)

    @staticmethod
    def from_poly(p: dict) -> "QScalar":
        """Laurent polynomial in s with integer or Fraction coefficients."""
        num: dict = {}
        den = 1
        for e, c in p.items():
            c = Fraction(c)
            den = den * c.denominator // _igcd(den, c.denominator)
        for e, c in p.items():
            c = Fraction(c)
            v = c.numerator * (den // c.denominator)
            if v:
                num[e] = v
        if not num:
            return ZERO
        return QScalar(Fraction(1, den), num, dict(_ONE_POLY), False)

    # -- basic predicates ----------------------------------------------------

    def is_zero(self) -> bool:
        return not self._num or self._sc == 0

    def __bool__(self) -> bool:
        return not self.is_zero()

    def is_one(self) -> bool:
        return self == ONE

    def is_rational(self) -> bool:
        a = self.canonical()
        return set(a._num) <= {0} and a._den == _ONE_POLY

    def as_fraction(self) -> Fraction:
        a = self.canonical()
        if not a.is_rational():
            raise ValueError(f"not a rational constant: {a}")
        return a._sc * a._num.get(0, 0)

    # -- canonical form ------------------------------------------------------

    def canonical(self) -> "QScalar":
        if self._canon:
            return self
        num, den, sc = self._num, self._den, self._sc
        if not num or sc == 0:
            return ZERO
        g = _pgcd(num, den)
        if len(g) > 1:
            num = _pdivexact(num, g)
            den = _pdivexact(den, g)
        m = min(den)
        if m:
            den = _pshift(den, -m)
            num = _pshift(num, -m)
        cn = _pcontent(num)
        if _plead(num) < 0:
            cn = -cn
        cd = _pcontent(den)
        if _plead(den) < 0:
            cd = -cd
        if cn != 1:
            num = {e: c // cn for e, c in num.items()}
        if cd != 1:
            den = {e: c // cd for e, c in den.items()}
        return QScalar(sc * Fraction(cn, cd), num, den, True)

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        if self._den == other._den:
            r = other._sc / self._sc
            num = _padd(_pscale(self._num, r.denominator),
                        _pscale(other._num, r.numerator))
            if not num:
                return ZERO
            out = QScalar(self._sc / r.denominator, num, self._den, False)
        else:
            r = other._sc / self._sc
            num = _padd(_pscale(_pmul(self._num, other._den), r.denominator),
                        _pscale(_pmul(other._num, self._den), r.numerator))
            if not num:
                return ZERO
            out = QScalar(self._sc / r.denominator, num,
                          _pmul(self._den, other._den), False)
        if len(out._den) > 6:
            out = out.canonical()
        return out

    __radd__ = __add__

    def __neg__(self):
        if self.is_zero():
            return self
        return QScalar(-self._sc, self._num, self._den, self._canon)

    def __sub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return _coerce(other) + (-self)

    def __mul__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero() or other.is_zero():
            return ZERO
        out = QScalar(self._sc * other._sc,
                      _pmul(self._num, other._num),
                      _pmul(self._den, other._den), False)
        if len(out._den) > 6:
            out = out.canonical()
        return out

    __rmul__ = __mul__

    def inverse(self) -> "QScalar":
        if self.is_zero():
            raise ZeroDivisionError("QScalar division by zero")
        return QScalar(1 / self._sc, self._den, self._num, False)

    def __truediv__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return self * other.inverse()

    def __rtruediv__(self, other):
        return _coerce(other) * self.inverse()

    def __pow__(self, k: int):
        if k == 0:
            return ONE
        base = self if k > 0 else self.inverse()
        out = base
        for _ in range(abs(k) - 1):
            out = out * base
        return out

    def div_exact(self, other: "QScalar") -> "QScalar":
        """Division known to be exact in the Laurent polynomial ring
        (numerators divide, denominators trivial); used by fraction-free
        elimination to avoid gcd work."""
        if other.is_zero():
            raise ZeroDivisionError("QScalar division by zero")
        if self.is_zero():
            return ZERO
        if self._den != _ONE_POLY or other._den != _ONE_POLY:
            return (self / other).canonical()
        try:
            num = _pdivexact(self._num, other._num)
        except ArithmeticError:
            return (self / other).canonical()
        return QScalar(self._sc / other._sc, num, dict(_ONE_POLY), False)

    # -- comparison / hashing -------------------------------------------------

    def __eq__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero():
            return other.is_zero()
        if other.is_zero():
            return False
        if self._canon and other._canon:
            return (self._sc == other._sc and self._num == other._num
                    and self._den == other._den)
        r = self._sc / other._sc
        return (_pscale(_pmul(self._num, other._den), r.numerator)
                == _pscale(_pmul(other._num, self._den), r.denominator))

    def __hash__(self):
        a = self.canonical()
        return hash((a._sc, frozenset(a._num.items()), frozenset(a._den.items())))

    # -- evaluation ------------------------------------------------------------

    def eval_at(self, q0) -> float:
        """Floating evaluation at q = q0 > 0 (so s = sqrt(q0))."""
        if q0 <= 0:
            raise ValueError("q0 must be positive")
        a = self.canonical()
        s0 = _fsqrt(float(q0))
        num = sum(c * s0 ** e for e, c in a._num.items())
        den = sum(c * s0 ** e for e, c in a._den.items())
        scale = max((abs(c) * s0 ** e for e, c in a._den.items()), default=1.0)
        if abs(den) <= 1e-13 * scale:
            raise PoleError(f"pole at q = {q0}")
        return float(a._sc) * num / den

    def limit_q1(self) -> Fraction:
        """Exact limit q -> 1, cancelling common (s - 1) factors."""
        a = self.canonical()
        if a.is_zero():
            return Fraction(0)
        num, den = a._num, a._den
        while True:
            d1 = _peval_one(den)
            if d1:
                return a._sc * Fraction(_peval_one(num), d1)
            if _peval_one(num):
                raise PoleError("pole at q = 1")
            num = _pdivexact(num, _S_MINUS_1)
            den = _pdivexact(den, _S_MINUS_1)

    # -- printing ---------------------------------------------------------------

    def q_string(self) -> str:
        """Canonical text form using q^(k/2) powers, parseable by the shell."""
        a = self.canonical()
        if a.is_zero():
            return "0"
        num_terms = sorted(a._num.items(), key=lambda t: -t[0])
        num_str, many = _poly_string([(a._sc * c, e) for e, c in num_terms])
        if a._den == _ONE_POLY:
            return num_str
        den_terms = sorted(a._den.items(), key=lambda t: -t[0])
        den_str, _ = _poly_string([(Fraction(c), e) for e, c in den_terms])
        if many:
            num_str = f"({num_str})"
        return f"{num_str}*({den_str})^(-1)"

    def __repr__(self):
        return self.q_string()


def _coerce(x):
    if isinstance(x, QScalar):
        return x
    if isinstance(x, (int, Fraction)):
        return QScalar.from_fraction(x)
    return NotImplemented


def _q_power_str(e: int) -> str:
    # exponent e of s, printed as a power of q
    if e % 2 == 0:
        k = e // 2
        if k == 1:
            return "q"
        return f"q^{k}"
    return f"q^({e}/2)"


def _poly_string(terms: list[tuple[Fraction, int]]) -> tuple[str, bool]:
    parts = []
    for c, e in terms:
        mag = abs(c)
        if e == 0:
            body = str(mag)
        elif mag == 1:
            body = _q_power_str(e)
        else:
            body = f"{mag}*{_q_power_str(e)}"
        parts.append(("-" if c < 0 else "+", body))
    sign, body = parts[0]
    out = body if sign == "+" else f"-{body}"
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out, len(parts) > 1


ZERO = QScalar(Fraction(0), {}, dict(_ONE_POLY), True)
ONE = QScalar(Fraction(1), dict(_ONE_POLY), dict(_ONE_POLY), True)
S = QScalar.s_power(1)      # q^(1/2)
Q = QScalar.s_power(2)      # q
LAMBDA_Q = Q - Q.inverse()  # q - q^-1


def qs(x) -> QScalar:
    """Coerce an int or Fraction to a QScalar."""
    out = _coerce(x)
    if out is NotImplemented:
        raise TypeError(f"cannot coerce {x!r} to QScalar")
    return out


# ---------------------------------------------------------------------------
# q-number combinatorics
# ---------------------------------------------------------------------------

def qnumber_sym(x) -> QScalar:
    """Symmetric q-number (q^x - q^-x)/(q - q^-1) for half-integer x."""
    x = Fraction(x)
    if x.denominator not in (1, 2):
        raise ValueError("argument must be a half-integer")
    e = int(2 * x)  # exponent of s in q^x = s^(2x)
    num = QScalar.s_power(e) - QScalar.s_power(-e)
    return (num / LAMBDA_Q).canonical()


def qbracket(n: int) -> QScalar:
    """(n)_q = (q^n - 1)/(q - 1) = 1 + q + ... + q^(n-1)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return QScalar.from_poly({2 * k: 1 for k in range(n)}) if n else ZERO


def qbracket_base(n: int, base_exp: int) -> QScalar:
    """(n) in base q^base_exp, e.g. base_exp=2 gives (n)_{q^2}."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return ZERO
    return QScalar.from_poly({2 * base_exp * k: 1 for k in range(n)})


def qfactorial(n: int) -> QScalar:
    """(n)_q! with (0)_q! = 1."""
    out = ONE
    for k in range(1, n + 1):
        out = out * qbracket(k)
    return out.canonical()


def qfactorial_base(n: int, base_exp: int) -> QScalar:
    """(n)! in base q^base_exp."""
    out = ONE
    for k in range(1, n + 1):
        out = out * qbracket_base(k, base_exp)
    return out.canonical()


def eval_numeric(a: QScalar, q0) -> float:
    """Floating evaluation of a QScalar at q = q0."""
    return a.eval_at(q0)


def limit_q_to_1(a: QScalar) -> Fraction:
    """Exact rational limit of a QScalar for q -> 1."""
    return a.limit_q1()
