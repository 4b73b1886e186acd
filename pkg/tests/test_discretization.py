"""Tests for the tau discretization and its rational exponential approximants."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from h2tau.discretization import (
    discretize,
    discretized_transfer,
    rational_exp,
    rational_transfer,
)
from h2tau.errors import ModelInputError
from h2tau.model import DdaeSystem, build_example, transfer


def scalar_system(a0=-1.0, delays=(), coeffs=(), b=1.0, c=1.0, E=1.0):
    A = [np.array([[a0]])] + [np.array([[ak]]) for ak in coeffs]
    return DdaeSystem(
        np.array([[E]]), tuple(A), np.array([[b]]), np.array([[c]]), tuple(delays)
    )


def test_delay_free_structure_degree_two():
    d = discretize(scalar_system(a0=-3.0), 2)
    # Row one imposes the output evaluation at theta = 0 where every basis
    # polynomial equals one; the remaining rows are the tau rows.
    np.testing.assert_allclose(d.E_N, [[1.0, 1.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    np.testing.assert_allclose(
        d.A_N, [[-3.0, -3.0, -3.0], [0.0, 2.0, 0.0], [0.0, 0.0, 6.0]]
    )
    np.testing.assert_allclose(d.B_N, [[1.0], [0.0], [0.0]])
    np.testing.assert_allclose(d.C_N, [[1.0, 1.0, 1.0]])
    assert d.dim == 3 and d.mode == "polynomial"


def test_dimensions():
    sys_, _ = build_example("ndde-2")  # n = 5, m = 2
    assert discretize(sys_, 10).dim == 5 * 11
    assert discretize(sys_, 10, mode="spline").dim == 5 * 2 * 11
    with pytest.raises(ModelInputError):
        discretize(sys_, 10, mode="chebyshev")
    with pytest.raises(ModelInputError):
        discretize(scalar_system(), 4, mode="spline")  # no delays, no segments


def test_rational_exp_undelayed_factor_is_one():
    assert rational_exp((0.8, 2.0), 14, 1.3 + 0.4j, 0) == 1.0 + 0.0j


def test_rational_exp_degree_one_is_diagonal_pade():
    tau, s = 0.7, 0.3 + 1.1j
    got = rational_exp((tau,), 1, s, 1)
    expected = (1.0 - tau * s / 2.0) / (1.0 + tau * s / 2.0)
    np.testing.assert_allclose(got, expected, rtol=1e-13)


def test_rational_exp_unimodular_on_imaginary_axis():
    # At the far end of the interval the approximant has modulus exactly one
    # on the imaginary axis, like the exponential it replaces.
    for N in (6, 13):
        for omega in (0.1, 1.0, 10.0, 100.0):
            r = rational_exp((1.7,), N, 1j * omega, 1)
            assert abs(abs(r) - 1.0) < 1e-12


def test_spline_factors_unimodular_at_every_delay():
    # The piecewise variant telescopes one unimodular factor per segment, so
    # the property holds at every delay, not only the deepest one.
    delays = (0.5, 1.2, 1.7)
    for k in (1, 2, 3):
        for omega in (0.1, 1.0, 10.0, 50.0):
            r = rational_exp(delays, 9, 1j * omega, k, mode="spline")
            assert abs(abs(r) - 1.0) < 1e-12


def test_rational_exp_converges_to_exponential():
    # Degree 30 on [-3, 0]: compare against exp at 200 points along the
    # interval for a few representative arguments.
    for s in (1.0, 1j, 2.0 + 3.0j):
        worst = 0.0
        for theta in np.linspace(0.015, 2.985, 200):
            r = rational_exp((theta, 3.0), 30, s, 1)
            worst = max(worst, abs(r - np.exp(-theta * s)))
        r_end = rational_exp((1.5, 3.0), 30, s, 2)
        worst = max(worst, abs(r_end - np.exp(-3.0 * s)))
        assert worst < 1e-10


def test_rational_exp_at_s_zero_is_exactly_one():
    for mode in ("polynomial", "spline"):
        r = rational_exp((0.4, 1.1), 7, 0.0, 2, mode=mode)
        np.testing.assert_allclose(r, 1.0, atol=1e-13)


@pytest.mark.parametrize("tag", ["rdde-1", "ndde-2"])
def test_resolvent_equals_rational_closed_form(tag):
    # The transfer function of the discretized pencil must agree with the
    # closed form built from the rational exponential approximants; this is
    # an algebraic identity, independent of convergence.
    sys_, _ = build_example(tag)
    d = discretize(sys_, 11)
    rng = np.random.default_rng(5)
    for _ in range(10):
        s = complex(rng.uniform(0.2, 2.0), rng.uniform(-8.0, 8.0))
        G_disc = discretized_transfer(d, s)
        G_rat = rational_transfer(sys_, 11, s)
        np.testing.assert_allclose(G_disc, G_rat, rtol=1e-9, atol=1e-11)


def test_spline_resolvent_equals_rational_closed_form():
    sys_, _ = build_example("ndde-2")
    d = discretize(sys_, 9, mode="spline")
    for s in (0.5 + 1.0j, 1.0 - 4.0j, 0.1 + 0.3j):
        np.testing.assert_allclose(
            discretized_transfer(d, s),
            rational_transfer(sys_, 9, s, mode="spline"),
            rtol=1e-9,
            atol=1e-11,
        )


def test_discretized_transfer_converges_to_true_transfer():
    sys_, _ = build_example("rdde-1")
    d = discretize(sys_, 30)
    for omega in (0.3, 1.0, 2.5):
        G = transfer(sys_, 1j * omega)
        G_N = discretized_transfer(d, 1j * omega)
        assert np.linalg.norm(G_N - G) < 1e-8 * max(1.0, np.linalg.norm(G))


def test_spline_transfer_converges_on_neutral_two_delay_system():
    sys_, _ = build_example("ndde-2")
    d = discretize(sys_, 20, mode="spline")
    for omega in (0.5, 2.0):
        G = transfer(sys_, 1j * omega)
        G_N = discretized_transfer(d, 1j * omega)
        assert np.linalg.norm(G_N - G) < 1e-6 * max(1.0, np.linalg.norm(G))


def test_single_delay_spline_equals_polynomial():
    # With one delay the piecewise grid has a single segment, so the two
    # modes describe the same operator.
    sys_, _ = build_example("ndde-1")
    dp = discretize(sys_, 8)
    ds = discretize(sys_, 8, mode="spline")
    assert dp.dim == ds.dim
    for s in (0.3 + 0.9j, 1.0 + 0.0j, 0.05 - 3.0j):
        np.testing.assert_allclose(
            discretized_transfer(dp, s), discretized_transfer(ds, s), rtol=1e-10, atol=1e-12
        )
    for omega in (0.2, 5.0):
        np.testing.assert_allclose(
            rational_exp((1.0,), 8, 1j * omega, 1),
            rational_exp((1.0,), 8, 1j * omega, 1, mode="spline"),
            rtol=1e-12,
        )


def test_invertible_mass_matrix_gives_invertible_pencil_lead():
    sys_, _ = build_example("rdde-3")  # E = I
    d = discretize(sys_, 6)
    assert np.linalg.matrix_rank(d.E_N) == d.dim
    assert np.linalg.cond(d.E_N) < 1e6


@given(
    N=st.integers(min_value=1, max_value=18),
    tau=st.floats(min_value=0.05, max_value=6.0),
    omega=st.floats(min_value=-30.0, max_value=30.0),
)
def test_unimodularity_property(N, tau, omega):
    r = rational_exp((tau,), N, 1j * omega, 1)
    assert abs(abs(r) - 1.0) < 1e-11
