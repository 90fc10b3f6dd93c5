from __future__ import annotations

from fractions import Fraction

import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from qclab.exponents import DistortionIndices, conjugate, indices_from_target, t_from_t_prime, t_prime


def test_t_prime_exact_fractions():
    assert t_prime(Fraction(1), Fraction(2)) == Fraction(4, 3)
    # 1/t' - 1/2 = (1/t - 1/2)/K with t = 1/2, K = 3: 1/t' = 1/2 + 1/2 = 1
    assert t_prime(Fraction(1, 2), Fraction(3)) == Fraction(1)


def test_conjugate():
    assert conjugate(Fraction(3, 2)) == 3
    assert conjugate(2.0) == 2.0


@given(st.floats(0.01, 2.0), st.floats(1.0, 50.0))
def test_t_prime_inverse_roundtrip(t, K):
    assert t_from_t_prime(t_prime(t, K), K) == pytest.approx(t, rel=1e-12)


@given(st.floats(0.01, 1.99), st.floats(1.0, 50.0))
def test_t_prime_monotone_distortion(t, K):
    # dimension never decreases under the forward exponent map and stays below 2
    tp = t_prime(t, K)
    assert t * (1 - 1e-12) <= tp <= 2


def test_t_prime_rejects_bad_input():
    with pytest.raises(ValueError):
        t_prime(0.0, 2.0)
    with pytest.raises(ValueError):
        t_prime(1.0, 0.5)
    with pytest.raises(ValueError):
        t_from_t_prime(2.5, 2.0)


def test_indices_exact_case():
    d = indices_from_target(Fraction(1, 3), Fraction(2), Fraction(2))
    assert d.t_prime == Fraction(4, 3)
    assert d.t == Fraction(1)
    # p = 1 + (K t / t') (q - 1) = 1 + 2 / (4/3) = 5/2, alpha = (2 - t)/p = 2/5
    assert d.p == Fraction(5, 2)
    assert d.alpha == Fraction(2, 5)
    assert d.identity_gap() == 0
    assert d.capacity_exponent == Fraction(2, 3)


def test_indices_symbolic_reciprocal_case():
    q, K = sympy.symbols("q K", positive=True)
    d = indices_from_target(1 / q, q, K)
    assert sympy.simplify(d.p - (1 + 2 * K * (q - 1) / (K + 1))) == 0
    assert sympy.simplify(d.capacity_exponent - (K + 1) / (2 * K)) == 0
    assert sympy.simplify(d.identity_gap()) == 0


@given(st.floats(1.05, 8.0), st.floats(0.02, 1.98), st.floats(1.0, 30.0))
def test_identity_gap_vanishes(q, bq, K):
    d = indices_from_target(bq / q, q, K)
    assert abs(d.identity_gap()) <= 1e-12 * d.t * d.K * (d.p_prime - 1)
    assert d.alpha * d.p == pytest.approx(2 - d.t, rel=1e-12)


def test_indices_validation():
    with pytest.raises(ValueError):
        indices_from_target(0.5, 1.0, 2.0)
    with pytest.raises(ValueError):
        indices_from_target(1.5, 2.0, 2.0)


def test_as_dict_floats():
    d = DistortionIndices(2, 1, Fraction(4, 3), Fraction(1, 3), 2, Fraction(2, 5), Fraction(5, 2))
    assert d.as_dict()["t_prime"] == pytest.approx(4 / 3)
