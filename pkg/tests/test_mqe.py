from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from oracles import direct_mixture_pdf, quad_cdf, quad_mass, side_system_residuals
from scipy.stats import norm

from ptse.exceptions import ConstraintFallbackWarning, MissingData, OneSidedResiduals, SingularSystem
from ptse.frame import TimeSeriesFrame, build_residuals
from ptse.mqe import MqeEmission, emission_cdf, emission_pdf, fit_emission, solve_side_constants


def feasible_emission(seed, q, T=None):
    """Random emission whose constraint system has a nonnegative solution, or None."""
    rng = np.random.default_rng(seed)
    T = T or int(rng.integers(5, 80))
    res = rng.normal(rng.uniform(-1, 1), rng.uniform(0.3, 3), T)
    g = rng.uniform(0.01, 1.0, T)
    sigma = float(rng.uniform(0.05, 1.0)) * res.std()
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConstraintFallbackWarning)
        try:
            return fit_emission(res, g, sigma, q)
        except (ConstraintFallbackWarning, ZeroDivisionError):
            return None


def first_feasible(q, start=0, T=None):
    seed = start
    while (e := feasible_emission(seed, q, T)) is None:
        seed += 1
    return e


def _mass_and_cdf0(e):
    lo, hi = e.support(12.0)
    mass = quad_mass(e.pdf, lo, hi, e.residuals)
    cdf0 = quad_cdf(e.pdf, 0.0, lo, e.residuals)
    return mass, cdf0


# --- residuals ----------------------------------------------------------------


def test_residuals_perfect_member():
    f = TimeSeriesFrame.from_arrays([1.0, 2.0], [1.0, 2.0], 0.5)
    np.testing.assert_array_equal(build_residuals(f), [[0.0], [0.0]])


def test_residuals_arithmetic():
    f = TimeSeriesFrame.from_arrays([3.0, 5.0], [[1.0, 0.0], [1.0, 7.0]], 0.5)
    np.testing.assert_array_equal(build_residuals(f), [[2.0, 3.0], [4.0, -2.0]])


def test_residuals_fixture_hand_computed(fixtures_dir):
    import csv

    with open(fixtures_dir / "toy_k3.csv") as fh:
        rows = list(csv.DictReader(fh))
    y = [float(r["y"]) for r in rows]
    names = [k for k in rows[0] if k.startswith("m:")]
    preds = [[float(r[n]) for n in names] for r in rows]
    f = TimeSeriesFrame.from_arrays(y, preds, 0.5)
    expected = [[yt - p for p in row] for yt, row in zip(y, preds)]
    np.testing.assert_array_equal(build_residuals(f), expected)


def test_residuals_missing_cell():
    f = TimeSeriesFrame.from_arrays([1.0, 2.0, 3.0], [[1.0], [np.nan], [2.0]], 0.5)
    with pytest.raises(MissingData):
        build_residuals(f)


# --- side constants ----------------------------------------------------------------


def test_symmetric_pair_gives_equal_weights():
    w_neg, w_pos = solve_side_constants([-0.8, 0.8], [1.0, 1.0], 0.6, 0.5)
    assert w_neg == pytest.approx(0.5, abs=1e-12) and w_pos == pytest.approx(0.5, abs=1e-12)


def test_two_point_q90_closed_form():
    v1, v2 = norm.cdf(2.0), norm.cdf(-2.0)
    assert v1 == pytest.approx(0.97725, abs=1e-5)
    expected = np.linalg.solve([[1.0, 1.0], [v1, v2]], [1.0, 0.9])
    w_neg, w_pos = solve_side_constants([-1.0, 1.0], [1.0, 1.0], 0.5, 0.9)
    np.testing.assert_allclose([w_neg, w_pos], expected, atol=1e-12)
    r1, r2 = side_system_residuals([-1.0, 1.0], [1.0, 1.0], 0.5, 0.9, w_neg, w_pos)
    assert abs(r1) < 1e-12 and abs(r2) < 1e-12


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.1, 0.25, 0.5, 0.75, 0.9]))
def test_solution_satisfies_system(seed, q):
    rng = np.random.default_rng(seed)
    res = rng.normal(0.3, 1.5, 30)
    assume((res <= 0).any() and (res > 0).any())
    g = rng.uniform(0.01, 2.0, 30)
    w_neg, w_pos = solve_side_constants(res, g, 0.4, q)
    r1, r2 = side_system_residuals(res, g, 0.4, q, w_neg, w_pos)
    assert abs(r1) < 1e-10 and abs(r2) < 1e-10


@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 1e4))
def test_gamma_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    res = np.concatenate([-rng.uniform(0, 2, 10), rng.uniform(0.01, 2, 12)])
    g = rng.uniform(0.05, 1.0, res.size)
    a = np.array(solve_side_constants(res, g, 0.5, 0.7)) * g.sum()
    b = np.array(solve_side_constants(res, c * g, 0.5, 0.7)) * (c * g).sum()
    np.testing.assert_allclose(b, a, atol=1e-10)


@given(st.floats(0.1, 5.0), st.floats(0.05, 3.0), st.integers(1, 10))
def test_symmetric_residuals_symmetric_weights(a, sigma, n):
    rng = np.random.default_rng(n)
    half = rng.uniform(0.1, a, n)
    g = rng.uniform(0.1, 1.0, n)
    w_neg, w_pos = solve_side_constants(np.concatenate([-half, half]), np.concatenate([g, g]), sigma, 0.5)
    assert abs(w_neg - w_pos) <= 1e-12 * max(w_neg, w_pos)


def test_tie_at_zero_counts_as_negative():
    with pytest.raises(OneSidedResiduals):
        solve_side_constants([0.0, -1.0], [1.0, 1.0], 1.0, 0.5)
    w_neg, w_pos = solve_side_constants([0.0, 1.0], [1.0, 1.0], 1.0, 0.5)
    e = MqeEmission([0.0, 1.0], [1.0, 1.0], 1.0, w_neg, w_pos, 0.5)
    np.testing.assert_array_equal(e.coefficients, [w_neg, w_pos])


def test_one_sided_raises():
    with pytest.raises(OneSidedResiduals):
        solve_side_constants([0.5, 1.0, 2.0], [1.0, 1.0, 1.0], 0.3, 0.5)


def test_singular_system():
    # kernels so wide that both sides put the same mass below zero
    with pytest.raises(SingularSystem):
        solve_side_constants([-1e-20, 1e-20], [1.0, 1.0], 1e10, 0.5)


# --- fit_emission fallbacks -------------------------------------------------------


def test_fallback_on_one_sided():
    with pytest.warns(ConstraintFallbackWarning, match="member 'a'"):
        e = fit_emission([0.5, 1.0, 2.0], [1.0, 2.0, 1.0], 0.3, 0.5, label="a")
    assert not e.constrained
    assert e.w_neg == e.w_pos == 0.25


def test_fallback_on_negative_solution():
    # q above every kernel's mass below zero cannot be reached with nonnegative weights
    with pytest.warns(ConstraintFallbackWarning, match="negative"):
        e = fit_emission([-1.0, 1.0], [1.0, 1.0], 0.5, 0.99)
    assert not e.constrained
    assert quad_mass(e.pdf, *e.support(12.0), e.residuals) == pytest.approx(1.0, abs=1e-9)


def test_single_zero_residual_is_one_sided():
    with pytest.warns(ConstraintFallbackWarning):
        e = fit_emission([0.0], [1.0], 1.0, 0.5)
    assert not e.constrained


# --- pdf / cdf ------------------------------------------------------------------


def test_symmetric_pdf_at_zero():
    w_neg, w_pos = solve_side_constants([-1.0, 1.0], [1.0, 1.0], 1.0, 0.5)
    e = MqeEmission([-1.0, 1.0], [1.0, 1.0], 1.0, w_neg, w_pos, 0.5)
    assert emission_pdf(e, 0.0) == pytest.approx(0.24197072451914337, abs=1e-15)


def test_pdf_matches_direct_sum():
    e = first_feasible(0.7, 3)
    for eps in np.linspace(-4, 4, 20):
        expected = direct_mixture_pdf(e.residuals, e.coefficients, e.bandwidth, eps)
        assert emission_pdf(e, eps) == pytest.approx(expected, abs=1e-12)


def test_pdf_at_residuals_matches_pdf():
    e = first_feasible(0.3, 4, T=300)
    np.testing.assert_allclose(e.pdf_at_residuals(), emission_pdf(e, e.residuals), rtol=1e-12)


def test_cdf_tails():
    e = first_feasible(0.5, 5)
    lo = e.residuals.min() - 20 * e.bandwidth
    hi = e.residuals.max() + 20 * e.bandwidth
    assert emission_cdf(e, lo) == pytest.approx(0.0, abs=1e-12)
    assert emission_cdf(e, hi) == pytest.approx(1.0, abs=1e-12)


def test_cdf_matches_quadrature():
    e = first_feasible(0.9, 6)
    lo = e.residuals.min() - 12 * e.bandwidth
    for x in (-1.0, 0.0, 0.8):
        assert emission_cdf(e, x) == pytest.approx(quad_cdf(e.pdf, x, lo, e.residuals), abs=1e-8)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.1, 0.5, 0.9]))
def test_feasible_emission_invariants(seed, q):
    e = feasible_emission(seed, q)
    assume(e is not None)
    assert emission_cdf(e, 0.0) == pytest.approx(q, abs=1e-6)
    mass, cdf0 = _mass_and_cdf0(e)
    assert mass == pytest.approx(1.0, abs=1e-6)
    assert cdf0 == pytest.approx(q, abs=1e-6)
    assert e.w_neg >= 0 and e.w_pos >= 0


@given(st.integers(0, 2**32 - 1), st.floats(-5, 5))
def test_cdf_monotone_and_derivative(seed, x):
    e = feasible_emission(seed, 0.5)
    assume(e is not None)
    xs = np.linspace(x - 3, x + 3, 50)
    assert np.all(np.diff(emission_cdf(e, xs)) >= -1e-15)
    h = 1e-5
    fd = (emission_cdf(e, x + h) - emission_cdf(e, x - h)) / (2 * h)
    assert fd == pytest.approx(emission_pdf(e, x), abs=1e-6)
