import cmath
import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from solwave.model import DomainError, NonlinearCoupling, solitary_from_C
from solwave.spectrum import (BranchPoint, classify, closed_form_roots, determinant,
                              determinant_derivative, k_branch, rootfind_physical,
                              taylor_coeff_zero)


def wave(coeffs, C):
    return solitary_from_C(NonlinearCoupling.polynomial(coeffs), C)


def test_k_at_origin():
    assert k_branch(0, 1.0, "plus") == pytest.approx(1j)
    assert k_branch(0, 1.0, "minus") == pytest.approx(1j)


def test_k_at_six_i():
    assert k_branch(6j, 6.25, "plus") == pytest.approx(0.5j, abs=1e-14)
    assert k_branch(6j, 6.25, "minus") == pytest.approx(3.5j, abs=1e-14)


def test_k_on_cut_one_sided_limits():
    plus = k_branch(BranchPoint(2j, "plus_side"), 1.0, "plus")
    minus = k_branch(BranchPoint(2j, "minus_side"), 1.0, "plus")
    assert plus.imag == 0 and minus.imag == 0
    assert abs(plus) == pytest.approx(1.0) and plus == pytest.approx(-minus)
    # the limits agree with values just off the cut
    eps = 1e-10
    assert k_branch(eps + 2j, 1.0, "plus") == pytest.approx(plus, abs=1e-8)
    assert k_branch(-eps + 2j, 1.0, "plus") == pytest.approx(minus, abs=1e-8)
    for side in ("plus_side", "minus_side"):
        assert k_branch(BranchPoint(2j, side), 1.0, "minus") == pytest.approx(1j * math.sqrt(3))


def test_cut_side_only_on_cuts():
    with pytest.raises(DomainError):
        k_branch(BranchPoint(0.5 + 2j, "plus_side"), 1.0, "plus")


lam_strategy = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)


@given(lam_strategy, st.floats(0.2, 5.0))
def test_k_on_physical_sheet(lam, omega):
    assume(not (abs(lam.real) < 1e-3 and abs(lam.imag) >= omega - 1e-3))
    for sign in ("plus", "minus"):
        k = k_branch(lam, omega, sign)
        assert k.imag > 0
        arg = -omega - 1j * lam if sign == "plus" else -omega + 1j * lam
        assert k * k == pytest.approx(arg, abs=1e-12 * max(1, abs(arg)))


@given(lam_strategy)
def test_determinant_forms_agree_and_conjugate_symmetric(lam):
    w = wave((1, 1), 1.0)
    assume(not (abs(lam.real) < 1e-3 and abs(lam.imag) >= w.omega - 1e-3))
    d1 = determinant(lam, w, "product")
    d2 = determinant(lam, w, "expanded")
    assert abs(d1 - d2) <= 1e-13 * max(1.0, abs(d1), w.alpha ** 2)
    assert determinant(lam.conjugate(), w) == pytest.approx(d1.conjugate(), abs=1e-12 * max(1, abs(d1)))


def test_determinant_examples():
    w1 = wave((1, 1), 1.0)
    assert abs(determinant(0, w1)) <= 1e-13 * w1.alpha ** 2
    w2 = wave((1, 1), 2.0)
    assert (w2.alpha, w2.beta, w2.omega) == pytest.approx((9, 4, 6.25))
    assert abs(determinant(6j, w2)) <= 1e-12
    # the candidate i sqrt(3)/2 from the closed form is not a root on the physical sheet
    assert determinant(1j * math.sqrt(3) / 2, w1) == pytest.approx(10 - 6 * math.sqrt(3), abs=1e-12)


def test_determinant_derivative_matches_difference():
    w = wave((1, 1), 1.0)
    lam = 0.7 + 0.3j
    h = 1e-6
    fd = (determinant(lam + h, w) - determinant(lam - h, w)) / (2 * h)
    assert determinant_derivative(lam, w) == pytest.approx(fd, rel=1e-7)


def _second_derivative_at_zero(w):
    def d2(h):
        return (determinant(h, w) - 2 * determinant(0, w) + determinant(-h, w)) / h ** 2
    a, b = d2(1e-3), d2(5e-4)
    return (4 * b - a) / 3


@pytest.mark.parametrize("coeffs, C, expected", [
    ((1, 1), 1.0, 0.5), ((0, 1), math.sqrt(2), 0.0), ((2,), 1.0, 1.0)])
def test_taylor_coefficient(coeffs, C, expected):
    w = wave(coeffs, C)
    assert taylor_coeff_zero(w) == pytest.approx(expected, abs=1e-14)
    fd = _second_derivative_at_zero(w).real
    if expected:
        assert fd == pytest.approx(2 * expected, rel=1e-6)
    else:
        assert abs(fd) < 1e-6


@settings(max_examples=25)
@given(st.floats(0.3, 2.5), st.floats(-1.5, 3.0))
def test_origin_is_double_root(C, slope):
    c = NonlinearCoupling.polynomial([1.0, slope])
    assume(c.a(C * C) > 0.05)
    w = solitary_from_C(c, C)
    assert abs(determinant(0, w)) <= 1e-12 * max(1, w.alpha ** 2)
    h = 1e-5
    d1 = (determinant(h, w) - determinant(-h, w)) / (2 * h)
    assert abs(d1) <= 1e-8 * max(1, w.alpha ** 2)


def test_closed_form_roots():
    assert closed_form_roots(4.0, 6.25)[0] == pytest.approx(6j)


@pytest.mark.parametrize("coeffs, C, case, roots", [
    ((1, 1), 1.0, "I", []),
    ((1, 1), 2.0, "II", [6j, -6j]),
    ((0, 1), math.sqrt(2), "III", []),
    ((-1, 2), 1.2, "IV", [1.44 * math.sqrt(2.88 ** 2 - 4 * 0.94 ** 2), -1.44 * math.sqrt(2.88 ** 2 - 4 * 0.94 ** 2)]),
])
def test_classify(coeffs, C, case, roots):
    rep = classify(wave(coeffs, C))
    assert rep.case == case
    assert sorted(rep.nonzero_roots, key=lambda z: (z.imag, z.real)) == pytest.approx(
        sorted(roots, key=lambda z: (complex(z).imag, complex(z).real)), abs=1e-12)
    assert rep.zero_multiplicity == (4 if case == "III" else 2)
    if case == "III":
        assert rep.taylor_coeff == 0


def test_case_four_root_value():
    rep = classify(wave((-1, 2), 1.2))
    # frozen from the closed form (gamma_2 / 2) sqrt(gamma_2^2 - 4 omega)
    assert rep.nonzero_roots[0].real == pytest.approx(3.141709089015085, abs=1e-12)


def test_rootfind_case_one_empty():
    w = wave((1, 1), 1.0)
    assert rootfind_physical(w, (-5, 5, -0.9, 0.9), (81, 41)) == []


def test_rootfind_case_two():
    w = wave((1, 1), 2.0)
    roots = rootfind_physical(w, (-0.5, 0.5, 5.5, 6.2), (41, 41))
    assert len(roots) == 1 and abs(roots[0] - 6j) <= 1e-10


def test_rootfind_case_four():
    w = wave((-1, 2), 1.2)
    roots = rootfind_physical(w, (2.5, 3.5, -0.5, 0.5), (41, 41))
    assert len(roots) == 1
    assert roots[0] == pytest.approx(classify(w).nonzero_roots[0], abs=1e-8)
    assert abs(determinant(roots[0], w)) <= 1e-10


MATRIX = [((1, 1), C) for C in (0.5, 1.0, 1.3, 1.6, 2.0, 2.2)] + \
         [((-1, 2), C) for C in (0.8, 1.0, 1.2, 1.5)] + \
         [((1, -0.3), C) for C in (0.5, 1.0)] + \
         [((0, 1), math.sqrt(2)), ((0, 1), 1.0), ((2,), 1.0), ((1, 0, 1), 1.0)]


@pytest.mark.parametrize("coeffs, C", MATRIX)
def test_classify_agrees_with_rootfinder(coeffs, C):
    w = wave(coeffs, C)
    rep = classify(w)
    R = 3 * max(w.omega, 1.0) + 5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        found = rootfind_physical(w, (-R, R, -R, R), (121, 121))
        # refine near the thresholds, where coarse cells straddle the cuts
        om = w.omega
        for lo, hi in ((om - 0.3, om), (-om, -om + 0.3)):
            for r in rootfind_physical(w, (-0.05, 0.05, lo, hi), (41, 401)):
                if all(abs(r - f) > 1e-8 for f in found):
                    found.append(r)
    expected = list(rep.nonzero_roots)
    assert len(found) == len(expected)
    for r in expected:
        assert min(abs(r - f) for f in found) <= 1e-8
