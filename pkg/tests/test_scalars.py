import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from qosc.scalars import (
    ONE, ZERO, Q, S, LAMBDA_Q, PoleError, QScalar, qs,
    eval_numeric, limit_q_to_1, qbracket, qbracket_base, qfactorial, qnumber_sym,
)


def spow(k):
    return QScalar.s_power(k)


# independent float oracle for the symmetric q-number
def qnum_float(x, q0):
    return (q0 ** x - q0 ** (-x)) / (q0 - 1.0 / q0)


class TestArith:
    def test_cancellation_to_one(self):
        a = Q - Q.inverse()
        assert (a / a).is_one()

    def test_polynomial_division(self):
        assert (Q * Q - 1) / (Q - 1) == Q + 1

    def test_half_power_squares_to_q(self):
        assert S * S == Q

    def test_division_by_zero(self):
        with pytest.raises(ZeroDivisionError):
            ONE / ZERO

    def test_pow_negative(self):
        assert (Q + 1) ** -1 * (Q + 1) == ONE

    def test_canonical_den_convention(self):
        a = (ONE / (S + S ** -1)).canonical()
        # denominator starts at exponent 0 with positive leading coefficient
        assert min(a._den) == 0 and a._den[max(a._den)] > 0


class TestQNumbers:
    def test_qnumber_one(self):
        assert qnumber_sym(1).is_one()

    def test_qnumber_two(self):
        assert qnumber_sym(2) == Q + Q.inverse()

    def test_qnumber_three_halves_numeric(self):
        # oracle: direct float evaluation of the defining expression at q=2
        expected = qnum_float(1.5, 2.0)
        assert expected == pytest.approx(1.6499158227686106, abs=1e-12)
        assert eval_numeric(qnumber_sym(Fraction(3, 2)), 2.0) == pytest.approx(expected, abs=1e-12)

    def test_qbracket_three(self):
        assert qbracket(3) == 1 + Q + Q * Q

    def test_qfactorial(self):
        assert qfactorial(0).is_one()
        assert qfactorial(2) == 1 + Q

    def test_qbracket_base_inverse(self):
        # (2)_{q^-2} = 1 + q^-2
        assert qbracket_base(2, -2) == 1 + (Q * Q).inverse()


class TestLimitsAndEval:
    def test_limit_qnumber(self):
        for x in (Fraction(1, 2), 1, Fraction(3, 2), 2, Fraction(5, 2), 3, 4, 5):
            assert limit_q_to_1(qnumber_sym(x)) == Fraction(x)

    def test_limit_qbracket(self):
        assert limit_q_to_1(qbracket(4)) == 4

    def test_limit_after_cancellation(self):
        a = (Q - Q.inverse()) / (Q * Q - 1)
        assert a == Q.inverse()
        assert limit_q_to_1(a) == 1

    def test_pole_detected(self):
        with pytest.raises(PoleError):
            limit_q_to_1(ONE / (Q - 1))

    def test_eval_matches_limit_at_one(self):
        vals = [qnumber_sym(Fraction(5, 2)), qbracket(3), (Q - 1) / (S - 1)]
        for a in vals:
            assert eval_numeric(a, 1.0) == pytest.approx(float(limit_q_to_1(a)), abs=1e-9)

    def test_eval_simple(self):
        assert eval_numeric(qnumber_sym(2), 1.0) == pytest.approx(2.0)
        assert eval_numeric(qbracket(3), 2.0) == pytest.approx(7.0)


small_fracs = st.fractions(min_value=-4, max_value=4, max_denominator=8)


def scalars():
    return st.builds(
        lambda c, e, d: (qs(c) * spow(e) + spow(-1)) / (qs(d) + spow(2)),
        small_fracs,
        st.integers(min_value=-4, max_value=4),
        st.fractions(min_value=1, max_value=3, max_denominator=4),
    )


class TestFieldAxioms:
    @settings(max_examples=60, deadline=None)
    @given(scalars(), scalars(), scalars())
    def test_mul_associative_and_distributive(self, a, b, c):
        assert (a * b) * c == a * (b * c)
        assert a * (b + c) == a * b + a * c

    @settings(max_examples=60, deadline=None)
    @given(scalars(), scalars())
    def test_add_commutes_and_inverse(self, a, b):
        assert a + b == b + a
        if not a.is_zero():
            assert (a * a.inverse()).is_one()
        assert (a - a).is_zero()

    @settings(max_examples=40, deadline=None)
    @given(st.fractions(min_value=-3, max_value=3, max_denominator=2).filter(lambda x: 2 * x == int(2 * x)))
    def test_qnumber_defining_identity(self, x):
        e = int(2 * x)
        assert qnumber_sym(x) * LAMBDA_Q == spow(e) - spow(-e)


class TestPrinting:
    def test_simple_forms(self):
        assert Q.q_string() == "q"
        assert Q.inverse().q_string() == "q^-1"
        assert S.q_string() == "q^(1/2)"
        assert spow(-3).q_string() == "q^(-3/2)"
        assert (S - S.inverse()).q_string() == "q^(1/2) - q^(-1/2)"

    def test_rational_coefficients(self):
        a = qs(Fraction(3, 2)) * S
        assert a.q_string() == "3/2*q^(1/2)"

    def test_denominator_form(self):
        a = ONE / (1 + Q)
        assert a.q_string() == "1*(q + 1)^(-1)"
