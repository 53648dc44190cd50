"""Exact symbolic engine for the SO_q(N)-covariant quantum Euclidean space
and the q-deformed isotropic harmonic oscillator living on it."""

from .scalars import QScalar, qs, qnumber_sym, qbracket, qfactorial, eval_numeric, limit_q_to_1

__all__ = [
    "QScalar", "qs", "qnumber_sym", "qbracket", "qfactorial",
    "eval_numeric", "limit_q_to_1",
]
