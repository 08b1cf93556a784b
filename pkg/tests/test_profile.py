import json
import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freedisc.profile import (
    BoundarySpec,
    ProfileResult,
    calibrate_c_k,
    calibrate_c_k_rootfind,
    constrained_inner,
    energy_in_T,
    fraction_str,
    hermite_interpolant,
    hermite_profile,
    jet_energy,
    m_k,
    m_k_constrained,
    m_k_general,
    profile_energy_constant,
    profile_energy_constant_float,
    transition_cost,
)
from oracles import clamped_profile_energy, golden_section, m_k_by_search


@pytest.mark.parametrize("k", range(1, 7))
def test_A_k_exact_against_independent_construction(k):
    assert profile_energy_constant(k) == clamped_profile_energy(k)


def test_A_k_small_values():
    assert [profile_energy_constant(k) for k in (1, 2, 3)] == [1, 12, 720]


@pytest.mark.parametrize("k", range(1, 9))
def test_A_k_float_path(k):
    exact = float(clamped_profile_energy(k))
    assert profile_energy_constant_float(k) == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("k", range(1, 6))
def test_m_k_against_search(k):
    r = m_k(k)
    T, val = m_k_by_search(k)
    assert r.energy == pytest.approx(val, rel=1e-12)
    assert r.T_star == pytest.approx(T, rel=1e-6)


def test_m_k_closed_forms():
    assert m_k(1).energy == pytest.approx(2.0, rel=1e-15)
    assert m_k(1).T_star == pytest.approx(1.0, rel=1e-15)
    assert m_k(2).energy == pytest.approx(4 / 3 * 36 ** 0.25, rel=1e-14)
    assert m_k(3).energy == pytest.approx(6 / 5 * 3600 ** (1 / 6), rel=1e-14)


@pytest.mark.parametrize("k", range(1, 6))
def test_profile_boundary_conditions_exact(k):
    T = Fraction(7, 3)
    p = hermite_profile(k, BoundarySpec.clamped(k), T)
    assert p.exact
    assert p(-T / 2) == Fraction(-1, 2) and p(T / 2) == Fraction(1, 2)
    for order in range(1, k):
        assert p(-T / 2, order) == 0 and p(T / 2, order) == 0
    assert p.degree <= 2 * k - 1
    # energy of the profile at length T is A_k T^(1-2k)
    assert p.square_integral(k) == profile_energy_constant(k) * T ** (1 - 2 * k)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_profile_float_matches_exact(k):
    T = 2.5
    pe = hermite_profile(k, BoundarySpec.clamped(k), Fraction(5, 2))
    pf = hermite_profile(k, BoundarySpec.clamped(k), T, exact=False)
    s = np.linspace(-T / 2, T / 2, 17)
    np.testing.assert_allclose(pf(s), [float(pe(Fraction(x))) for x in s], atol=1e-13)


def test_profile_is_odd():
    p = hermite_profile(3, BoundarySpec.clamped(3), Fraction(3))
    for x in (Fraction(1, 3), Fraction(5, 7)):
        assert p(-x) == -p(x)


def test_hermite_interpolant_general_jets():
    left = [Fraction(1), Fraction(2)]
    right = [Fraction(-1), Fraction(3)]
    p = hermite_interpolant(left, right, Fraction(1), center=Fraction(2))
    assert p(1) == 1 and p(1, 1) == 2 and p(3) == -1 and p(3, 1) == 3


@given(k=st.integers(2, 4), length=st.floats(0.1, 10.0))
@settings(max_examples=30, deadline=None)
def test_jet_energy_matches_profile(k, length):
    left = [-0.5] + [0.0] * (k - 1)
    right = [0.5] + [0.0] * (k - 1)
    expected = float(profile_energy_constant(k)) * length ** (1 - 2 * k)
    assert jet_energy(k, length, left, right) == pytest.approx(expected, rel=1e-9)


@given(k=st.integers(1, 5), b=st.floats(0.1, 10.0), c=st.floats(0.01, 100.0))
@settings(max_examples=40, deadline=None)
def test_scaling_law(k, b, c):
    expected = b ** ((2 * k - 1) / (2 * k)) * c ** (1 / (2 * k)) * m_k(k).energy
    assert m_k_general(k, b, c).energy == pytest.approx(expected, rel=1e-12)
    _, val = m_k_by_search(k, b, c)
    assert m_k_general(k, b, c).energy == pytest.approx(val, rel=1e-10)


def test_energy_in_T_minimum():
    r = m_k(2)
    assert energy_in_T(2, r.T_star) == pytest.approx(r.energy, rel=1e-15)
    assert energy_in_T(2, 1.1 * r.T_star) > r.energy


@pytest.mark.parametrize("k", [2, 3])
def test_constrained_monotone_and_bounded(k):
    vals = [m_k_constrained(k, k - 1, 2.0 ** i).energy for i in range(0, 11, 2)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= m_k(k).energy * (1 + 1e-12)


def test_constrained_inner_clamped_limit():
    # tiny bounds force clamped jets: the inner value tends to A_k T^(1-2k)
    T = 2.0
    val, (left, right) = constrained_inner(3, 2, 1e12, T)
    assert val == pytest.approx(720 * T ** -5, rel=1e-6)
    assert abs(left[1]) <= 1e-12 and abs(right[2]) <= 1e-12


def test_constrained_inner_bounds_respected():
    T, N = 1.5, 3.0
    _, (left, right) = constrained_inner(3, 2, N, T)
    for jet in (left, right):
        for order in (1, 2):
            assert abs(jet[order]) <= 1 / N * (1 + 1e-9)


@pytest.mark.parametrize("k,n", [(2, 0), (3, 1), (4, 1), (5, 2), (3, 3)])
def test_constrained_rejects_bad_orders(k, n):
    with pytest.raises(ValueError):
        m_k_constrained(k, n, 10.0)


def test_constrained_rejects_bad_N():
    with pytest.raises(ValueError):
        m_k_constrained(2, 1, 0.0)


def test_transition_cost_at_optimum_is_m_k():
    for k in (2, 3):
        r = m_k(k)
        eps = 2.0 ** -8
        left = [-0.5] + [0.0] * (k - 1)
        right = [0.5] + [0.0] * (k - 1)
        assert transition_cost(k, eps, eps * r.T_star, left, right) == pytest.approx(r.energy, rel=1e-10)


@pytest.mark.parametrize("k", range(1, 7))
@pytest.mark.parametrize("mu", [0.5, 1.0, 3.0])
def test_calibration(k, mu):
    c = calibrate_c_k(k, mu)
    assert c == pytest.approx((mu / m_k(k).energy) ** (2 * k), rel=1e-14)
    assert calibrate_c_k_rootfind(k, mu) == pytest.approx(c, rel=1e-10)
    assert m_k_general(k, 1.0, c).energy == pytest.approx(mu, rel=1e-12)


def test_calibration_value_k2():
    assert calibrate_c_k(2, 1.0) == pytest.approx(m_k(2).energy ** -4, rel=1e-15)
    assert calibrate_c_k(2, 1.0) == pytest.approx(8.7890625e-3, rel=1e-12)


def test_calibration_rejects_nonpositive_mu():
    with pytest.raises(ValueError):
        calibrate_c_k(2, 0.0)


def test_result_serialization():
    r = m_k(2)
    d = json.loads(r.to_json())
    assert d["A_k"] == "12/1"
    assert d["k"] == 2 and d["energy"] == pytest.approx(r.energy)
    assert fraction_str(Fraction(3, 4)) == "3/4"
    assert isinstance(r, ProfileResult)


def test_invalid_k():
    with pytest.raises(ValueError):
        m_k(0)
    with pytest.raises(ValueError):
        m_k_general(2, -1.0, 1.0)
