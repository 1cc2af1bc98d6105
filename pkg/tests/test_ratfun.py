"""Rational calculus: residues, pullbacks, eps^2 extraction.

The residue oracle here is numeric contour integration on small circles,
independent of the polynomial-algebra path under test.
"""
import cmath

import numpy as np
import pytest

from bacurve.errors import InfiniteValue, NotAPole, PoleEvaluation, WrongVanishingOrder
from bacurve.ratfun import (
    INF,
    MobiusMap,
    Polynomial,
    RationalFunction,
    RationalOneForm,
    leading_coefficient_eps2,
    mobius_apply,
    mobius_pullback_form,
    residue_sum,
    rf_eval,
    rf_residue,
)


def contour_residue(f: RationalFunction, p: complex, radius: float, n: int = 512) -> complex:
    """(1/2 pi i) contour integral of f around p, trapezoid on a circle."""
    acc = 0j
    for k in range(n):
        t = 2 * cmath.pi * k / n
        w = radius * cmath.exp(1j * t)
        acc += f(p + w) * w
    return acc / n


def random_form(rng: np.random.Generator, max_poles: int = 6, max_order: int = 3):
    n_poles = int(rng.integers(1, max_poles + 1))
    poles = []
    while len(poles) < n_poles:
        cand = complex(rng.uniform(-3, 3), rng.uniform(-3, 3))
        if all(abs(cand - q) > 0.5 for q, _ in poles):
            poles.append((cand, int(rng.integers(1, max_order + 1))))
    total = sum(m for _, m in poles)
    deg = int(rng.integers(0, total))  # keep the form vanishing at infinity or not
    coeffs = rng.uniform(0.3, 2.0, deg + 1) * np.exp(1j * rng.uniform(0, 2 * np.pi, deg + 1))
    return RationalOneForm.from_parts(coeffs, poles)


class TestEval:
    def test_one_over_z(self):
        f = RationalFunction((1,), [(0, 1)])
        assert rf_eval(f, 2.0) == pytest.approx(0.5)

    def test_degree_rule_at_infinity(self):
        f = RationalFunction((-1, 0, 1), [(0, 1), (1j, 1), (-1j, 1)])
        assert rf_eval(f, INF) == 0

    def test_equal_degree_at_infinity(self):
        f = RationalFunction((0, 3), [(2, 1)], scale=0.5)  # 1.5 z / (z - 2)
        assert rf_eval(f, INF) == pytest.approx(1.5)

    def test_infinite_value(self):
        f = RationalFunction((0, 0, 1), [(1, 1)])
        with pytest.raises(InfiniteValue):
            rf_eval(f, INF)

    def test_numerator_root(self):
        # (z^2 - 1)/(z (z^2 + 1)) at z = 1 vanishes with the numerator
        f = RationalFunction((-1, 0, 1), [(0, 1), (1j, 1), (-1j, 1)])
        assert rf_eval(f, 1.0) == pytest.approx(0.0)

    def test_pole_evaluation(self):
        f = RationalFunction((1,), [(0.5, 1)])
        with pytest.raises(PoleEvaluation):
            rf_eval(f, 0.5)


class TestResidue:
    def test_dz_over_z(self):
        w = RationalOneForm.from_parts((1,), [(0, 1)])
        assert rf_residue(w, 0) == pytest.approx(1.0)
        assert rf_residue(w, INF) == pytest.approx(-1.0)

    def test_pure_double_pole(self):
        w = RationalOneForm.from_parts((1,), [(1, 2)])
        assert rf_residue(w, 1) == pytest.approx(0.0)

    def test_example_form(self):
        # (z^2 - gamma^2) dz / (z (z^2 - b^2)) with gamma=1, b=i
        w = RationalOneForm.from_parts((-1, 0, 1), [(0, 1), (1j, 1), (-1j, 1)])
        assert rf_residue(w, 0) == pytest.approx(-1.0)
        assert rf_residue(w, 1j) == pytest.approx(1.0)
        assert rf_residue(w, -1j) == pytest.approx(1.0)
        assert rf_residue(w, INF) == pytest.approx(-1.0)
        assert residue_sum(w) == pytest.approx(0.0, abs=1e-14)

    def test_not_a_pole(self):
        w = RationalOneForm.from_parts((1,), [(0, 1)])
        with pytest.raises(NotAPole):
            rf_residue(w, 3.0)

    def test_against_contour_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            w = random_form(rng)
            sep = min(
                min((abs(p - q) for q, _ in w.value.poles if q != p), default=2.0)
                for p, _ in w.value.poles
            )
            radius = min(0.4 * sep, 0.45)
            for p, _ in w.value.poles:
                want = contour_residue(w.value, p, radius)
                got = rf_residue(w, p)
                assert abs(got - want) <= 1e-8 * (1 + abs(want))

    def test_residue_theorem_property(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            w = random_form(rng)
            mags = [abs(rf_residue(w, p)) for p, _ in w.value.poles]
            assert abs(residue_sum(w)) <= 1e-10 * (1 + max(mags))

    def test_bilinearity(self):
        rng = np.random.default_rng(3)
        poles = [(1.0 + 0j, 2), (-0.5j, 1), (2.0 - 1j, 1)]
        for _ in range(20):
            w1 = RationalOneForm.from_parts(rng.standard_normal(3) + 1j * rng.standard_normal(3), poles)
            w2 = RationalOneForm.from_parts(rng.standard_normal(2) + 1j * rng.standard_normal(2), poles)
            a, b = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
            combo = w1.scaled(a) + w2.scaled(b)
            for p, _ in poles:
                lhs = combo.residue_or_zero(p)
                rhs = a * rf_residue(w1, p) + b * rf_residue(w2, p)
                assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs) + abs(rhs))


class TestMobius:
    def test_negation(self):
        s = MobiusMap.negation()
        assert mobius_apply(s, 1j) == pytest.approx(-1j)
        assert mobius_apply(s, INF) is INF

    def test_conjugation(self):
        t = MobiusMap.identity(conjugating=True)
        assert mobius_apply(t, 1 + 2j) == pytest.approx(1 - 2j)

    def test_projective_pole(self):
        m = MobiusMap(0, 1, 1, 0)  # z -> 1/z
        assert mobius_apply(m, 0.0) is INF
        assert mobius_apply(m, INF) == pytest.approx(0.0)

    def test_pullback_invariant_form(self):
        w = RationalOneForm.from_parts((1,), [(0, 1)])
        back = mobius_pullback_form(MobiusMap.negation(), w)
        assert back.is_close(w)

    def test_pullback_moves_pole(self):
        # (z -> -z) pullback of dz/(z-1): residues transport to the preimage
        w = RationalOneForm.from_parts((1,), [(1, 1)])
        back = mobius_pullback_form(MobiusMap.negation(), w)
        assert back.value.pole_index(-1 + 0j) is not None
        assert rf_residue(back, -1) == pytest.approx(rf_residue(w, 1))

    def test_pullback_conjugating_real_form(self):
        # Omega_2 of the third bundled example has real coefficients, so the
        # conjugation pullback equals its coefficient conjugate
        w = RationalOneForm.from_parts(
            (-4 / 9, 0, 1), [(0, 1), (1, 1), (-1, 1), (2, 1), (-2, 1)]
        )
        back = mobius_pullback_form(MobiusMap.identity(conjugating=True), w)
        assert back.is_close(w.conj_coefficients())
        assert back.is_close(w)

    @pytest.mark.parametrize(
        "m",
        [
            MobiusMap.negation(),
            MobiusMap(0, 1, 1, 0),
            MobiusMap(2, 3, 5, -2),  # generic involution: trace zero
        ],
    )
    def test_pullback_involutivity(self, m):
        rng = np.random.default_rng(17)
        for _ in range(10):
            w = random_form(rng)
            twice = mobius_pullback_form(m, mobius_pullback_form(m, w))
            assert twice.is_close(w, rtol=1e-12)


class TestEps2:
    def test_definition_unwound(self):
        w = RationalOneForm.from_parts((1,), [(0, 3)], scale=-1.0)  # -dz/z^3
        assert leading_coefficient_eps2(w, INF) == pytest.approx(1.0)

    def test_example3_omega1(self):
        w = RationalOneForm.from_parts((1,), [(0, 1), (1, 1), (-1, 1)], scale=1 / 9)
        assert leading_coefficient_eps2(w, INF) == pytest.approx(-1 / 9)

    def test_example3_omega2(self):
        w = RationalOneForm.from_parts(
            (-(2 / 3) ** 2, 0, 1), [(0, 1), (1, 1), (-1, 1), (2, 1), (-2, 1)]
        )
        assert leading_coefficient_eps2(w, INF) == pytest.approx(-1.0)

    def test_wrong_order(self):
        w = RationalOneForm.from_parts((1,), [(0, 1)])  # pole, not zero, at infinity
        with pytest.raises(WrongVanishingOrder):
            leading_coefficient_eps2(w, INF)

    def test_finite_point_convention(self):
        # R(z) = z - 2 near p = 2: eps^2 = lim R/(z - p) = 1
        w = RationalOneForm.from_parts((-2, 1), [(5, 3)], scale=1.0)
        got = leading_coefficient_eps2(w, 2.0)
        assert got == pytest.approx(1 / (2 - 5) ** 3)


class TestArithmetic:
    def test_add_cancels_pole(self):
        f = RationalFunction((1,), [(0, 1)])
        g = RationalFunction((-1,), [(0, 1)])
        assert (f + g).is_zero

    def test_product_merges_orders(self):
        f = RationalFunction((1,), [(0, 1)])
        h = f * f
        assert h.poles == ((0j, 2),)

    def test_cancellation_against_declared_pole(self):
        # (z^2 - 1)/(z - 1) collapses to z + 1
        f = RationalFunction((-1, 0, 1), [(1, 1)])
        assert not f.poles
        assert f(5.0) == pytest.approx(6.0)

    def test_function_values_after_add(self):
        f = RationalFunction((0, 1), [(1j, 1), (-1j, 1)])
        g = RationalFunction((2, 1), [(3, 2)])
        s = f + g
        for z in (0.3, -1.7 + 0.4j, 2.2j):
            assert s(z) == pytest.approx(f(z) + g(z))


def test_polynomial_taylor_shift():
    p = Polynomial((1, -2, 0, 4))  # 1 - 2z + 4z^3
    shifted = p.taylor_at(1.5, 4)
    direct = [p(1.5), -2 + 12 * 1.5**2, 12 * 1.5, 4.0]
    assert np.allclose(shifted, direct)
