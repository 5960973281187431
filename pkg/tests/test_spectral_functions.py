import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epicone.errors import DomainError, InvalidExponent, InvalidOrder
from epicone.spectral_functions import (
    ADMISSIBLE_DEFAULTS,
    NEGATIVE_CONTROL,
    FunctionFamily,
    derivative_function,
    g_deriv,
    g_value,
    validate_family,
)
from epicone.matrix_calculus import matrix_function
from epicone.scb_verifier import sample_ordered_pair


def test_validate_family_examples():
    assert validate_family("neglog") == FunctionFamily("neglog")
    assert validate_family("power", 1.5) == FunctionFamily("power", 1.5)
    with pytest.raises(InvalidExponent):
        validate_family("power", 3.0)


@pytest.mark.parametrize("p", [0.0, -1.0, 2.5, math.nan, math.inf])
def test_power_exponent_out_of_range(p):
    with pytest.raises(InvalidExponent):
        validate_family("power", p)


@pytest.mark.parametrize("p", [1.0, 2.0, 0.25, 0.999])
def test_power_edge_exponents_accepted(p):
    assert validate_family("power", p).exponent == p


def test_bad_kind_and_stray_exponent():
    with pytest.raises(ValueError):
        validate_family("sqrt")
    with pytest.raises(ValueError):
        validate_family("neglog", 2.0)
    with pytest.raises(InvalidExponent):
        validate_family("power")


def test_control_family_needs_opt_in():
    fam = validate_family("power", 3.0, allow_inadmissible=True)
    assert fam == NEGATIVE_CONTROL and fam.control


def test_parse_and_dict_round_trip():
    for fam in ADMISSIBLE_DEFAULTS:
        assert FunctionFamily.from_dict(fam.to_dict()) == fam
    assert FunctionFamily.parse("power:0.5") == FunctionFamily("power", 0.5)
    assert FunctionFamily.parse(" negentropy ") == FunctionFamily("negentropy")
    with pytest.raises(ValueError):
        FunctionFamily.parse("power:abc")


def test_g_value_examples():
    assert g_value(FunctionFamily("neglog"), 1.0) == 0.0
    assert g_value(FunctionFamily("negentropy"), 1.0) == 0.0
    assert g_value(FunctionFamily("power", 2.0), 3.0) == 9.0
    assert g_value(FunctionFamily("power", 0.5), 4.0) == -2.0


def test_g_deriv_examples():
    assert g_deriv(FunctionFamily("neglog"), 2.0, 1) == -0.5
    assert g_deriv(FunctionFamily("negentropy"), 1.0, 2) == 1.0
    assert g_deriv(FunctionFamily("power", 2.0), 5.0, 3) == 0.0


def test_domain_and_order_errors(family):
    for bad in (0.0, -1.0, math.nan):
        with pytest.raises(DomainError):
            g_value(family, bad)
    with pytest.raises(InvalidOrder):
        g_deriv(family, 1.0, 4)
    with pytest.raises(DomainError):
        g_value(family, np.array([1.0, 0.0]))


def test_vectorized_shapes(family):
    x = np.linspace(0.5, 3.0, 7)
    assert g_value(family, x).shape == (7,)
    assert isinstance(g_deriv(family, 2.0, 2), float)


def test_convexity(family):
    x = np.exp(np.random.default_rng(0).uniform(math.log(1e-3), math.log(1e3), 1000))
    assert np.all(g_deriv(family, x, 2) >= 0.0)


@given(x=st.floats(1e-2, 1e2), k=st.sampled_from([1, 2, 3]))
def test_derivatives_match_central_differences(x, k):
    for fam in ADMISSIBLE_DEFAULTS:
        lower = g_value if k == 1 else (lambda f, y: g_deriv(f, y, k - 1))
        h = 1e-4 * x
        fd = (lower(fam, x + h) - lower(fam, x - h)) / (2 * h)
        exact = g_deriv(fam, x, k)
        assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


def test_derivative_function_shift():
    fam = FunctionFamily("power", 1.5)
    h = derivative_function(fam, 1)
    assert h(4.0, 0) == pytest.approx(g_deriv(fam, 4.0, 1))
    assert h(4.0, 2) == pytest.approx(g_deriv(fam, 4.0, 3))


def test_derivative_is_matrix_monotone(family):
    rng = np.random.default_rng(7)
    worst = math.inf
    for i in range(500):
        A, B = sample_ordered_pair(2 + i % 2, rng)
        gA = matrix_function(family, A, order=1)
        gB = matrix_function(family, B, order=1)
        lam = np.linalg.eigvalsh(gA - gB)[0]
        worst = min(worst, lam / (1.0 + np.linalg.norm(gA, 2)))
    assert worst >= -1e-10


def test_cubic_derivative_is_not_matrix_monotone():
    # g'(x) = 3x^2 and A = B + [[1,1],[1,1]] >= B, yet A^2 - B^2 is indefinite
    B = np.diag([1.0, 0.01])
    A = B + np.ones((2, 2))
    assert np.linalg.eigvalsh(A - B)[0] >= 0
    diff = matrix_function(NEGATIVE_CONTROL, A, 1) - matrix_function(NEGATIVE_CONTROL, B, 1)
    assert np.linalg.eigvalsh(diff)[0] < 0
