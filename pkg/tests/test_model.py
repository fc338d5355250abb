import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from affine_mart.model import (AffineParams, ExprError, classify_moment, density, finite_atoms,
                               is_admissible, measure_integral, parse, series, truncation_h,
                               validate_admissibility)
from affine_mart.reference import CATALOG, dirac_series, stable_half, stoch_exp_series

ZETA2 = math.pi ** 2 / 6
finite = st.floats(-1e6, 1e6, allow_nan=False)


# expressions

def test_expression_evaluates_vectorised():
    e = parse("1/((1+n)*n^2)")
    np.testing.assert_allclose(e(n=np.array([1.0, 2.0])), [0.5, 1 / 12])
    assert e.text == "1/((1+n)*n^2)"


def test_expression_functions_and_coordinates():
    e = parse("exp(xi1) - ln(abs(xi2)) + min(xi1, 2) * max(xi2, 0)")
    assert e(xi1=0.0, xi2=-1.0) == pytest.approx(1.0)
    assert e.max_xi_index() == 2


@pytest.mark.parametrize("text", ["n^^2", "foo(n)", "y + 1", "n.real", "lambda: 1"])
def test_malformed_expressions_are_rejected(text):
    with pytest.raises(ExprError):
        parse(text)


# truncation function

@given(st.lists(finite, min_size=1, max_size=5))
def test_truncation_is_bounded_and_idempotent(xs):
    h = truncation_h(np.array(xs))
    assert np.all(np.abs(h) <= 1)
    np.testing.assert_array_equal(truncation_h(h), h)
    np.testing.assert_array_equal(np.sign(h), np.sign(xs))


def test_truncation_is_identity_inside_unit_box():
    x = np.array([0.3, -0.99, 0.0])
    np.testing.assert_array_equal(truncation_h(x), x)
    np.testing.assert_array_equal(truncation_h(np.array([5.0, -2.0])), [1.0, -1.0])


# integration

def test_series_total_mass():
    r = measure_integral(dirac_series().kappa[1], lambda p: np.ones(len(p)), tol=1e-10)
    assert r.finite
    assert r.value == pytest.approx(ZETA2, abs=1e-10)


def test_density_h_square_integral():
    # int_0^1 x^2 x^-3/2 + int_1^inf x^-3/2 = 2/3 + 2
    r = measure_integral(stable_half().kappa[1], lambda p: np.minimum(np.abs(p[:, 0]), 1) ** 2)
    assert r.value == pytest.approx(8 / 3, abs=1e-10)


def test_finite_atoms_integral_is_exact():
    mu = finite_atoms([((1.0,), 0.5), ((3.0,), 0.25)])
    r = measure_integral(mu, lambda p: p[:, 0] ** 2)
    assert r.value == pytest.approx(0.5 + 2.25, abs=1e-15)


def test_wedge_moment_of_dirac_series_diverges():
    # |xi| ^ |xi|^2 = n against 1/n^2 sums the harmonic series
    assert classify_moment(dirac_series().kappa[1], "wedge", 1).fails


def test_moment_classification_on_star_weights():
    final = stoch_exp_series().kappa[1]
    assert classify_moment(final, "wedge", 1).holds
    assert classify_moment(final, "big_jump_abs", 2).holds
    r = classify_moment(final, "big_jump_abs", 2)
    # strict |xi| > 1 leaves n >= 2: sum 1/((1+n) n) = 1/2
    assert r.evidence[0].value == pytest.approx(0.5, abs=1e-10)


def test_density_divergence_is_detected_from_declared_exponents():
    # xi^2 xi^-7/2 = xi^-3/2 is not integrable at 0
    mu = density("xi1^(-3.5)", [[0, None]], -3.5, -3.5)
    assert classify_moment(mu, "h_square").fails
    assert classify_moment(density("xi1^(-2.5)", [[0, None]], -2.5, -2.5), "h_square").holds


# admissibility

@pytest.mark.parametrize("name", sorted(CATALOG))
def test_reference_models_are_admissible(name):
    assert is_admissible(CATALOG[name]())


def _bullets(params):
    return {v.bullet for v in validate_admissibility(params)}


def test_negative_killing_rate():
    p = AffineParams.build(1, 0, gamma=[0.0, -1.0])
    assert "gamma_nonneg" in _bullets(p)


def test_killing_on_real_coordinates():
    p = AffineParams.build(1, 1, gamma=[0.0, 0.0, 0.5])
    assert "gamma_zero" in _bullets(p)


def test_inward_drift_at_boundary():
    assert "beta_cross" in _bullets(AffineParams.build(1, 0, beta=[[-1.0], [0.0]]))


def test_alpha_must_be_psd_and_structured():
    alpha = np.zeros((2, 1, 1))
    alpha[0] = [[-1.0]]
    assert "alpha_psd" in _bullets(AffineParams.build(0, 1, alpha=alpha))
    alpha = np.zeros((2, 1, 1))
    alpha[0] = [[1.0]]
    assert "alpha_block" in _bullets(AffineParams.build(1, 0, alpha=alpha))
    alpha = np.zeros((3, 2, 2))
    alpha[2] = np.eye(2)
    assert "alpha_zero" in _bullets(AffineParams.build(1, 1, alpha=alpha))


def test_jump_support_outside_state_space():
    p = AffineParams.build(1, 0, kappa={1: finite_atoms([((-0.5,), 1.0)])})
    assert "kappa_support" in _bullets(p)


def test_constant_jump_measure_needs_finite_h_abs_moment():
    # atoms at 1/n with unit weights: sum |h| = sum 1/n diverges
    p = AffineParams.build(1, 0, kappa={0: series(["1/n"], "1", c=None, p=None)})
    hits = [v for v in validate_admissibility(p) if v.bullet == "kappa_h_abs"]
    assert hits and not hits[0].unresolved


def test_shape_mismatch_names_the_field():
    with pytest.raises(ValueError, match="beta"):
        AffineParams.build(1, 0, beta=[[0.0, 1.0]])


@given(st.integers(1, 60))
def test_truncating_atoms_never_breaks_admissibility(n_atoms):
    p = stoch_exp_series()
    pts, w = p.kappa[1].atoms(np.arange(1, n_atoms + 1, dtype=float))
    q = p.replace(kappa=(p.kappa[0], finite_atoms(list(zip(map(tuple, pts), w))), p.kappa[2]))
    assert is_admissible(q)
