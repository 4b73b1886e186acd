"""Tests for analytic gradients of the squared norm and their FD validation."""

import numpy as np
import pytest

from h2tau.discretization import discretize
from h2tau.errors import FeedthroughError, ModelInputError, UnstableError
from h2tau.h2core import compute_h2
from h2tau.model import DdaeSystem, ParameterBinding, build_example
from h2tau.reduction import split_and_reduce
from h2tau.sensitivity import fd_check, gradient


def scalar_system(a=-2.0, c=3.0, b=1.0, delays=(), coeffs=()):
    A = [np.array([[a]])] + [np.array([[ak]]) for ak in coeffs]
    return DdaeSystem(
        np.eye(1), tuple(A), np.array([[b]]), np.array([[c]]), tuple(delays)
    )


def test_scalar_closed_form_gradients():
    # xdot = a x + b v, z = c x: |G|^2 = -c^2 b^2 / (2a), so
    # d/da = c^2 b^2 / (2 a^2),  d/db = -b c^2 / a,  d/dc = -c b^2 / a.
    a, b, c = -2.0, 1.0, 3.0
    sys_ = scalar_system(a=a, c=c, b=b)
    bindings = [
        ParameterBinding("a", (("A", 0, 0, 0, 1.0),), a),
        ParameterBinding("b", (("B", 0, 0, 1.0),), b),
        ParameterBinding("c", (("C", 0, 0, 1.0),), c),
    ]
    bundle = gradient(sys_, 10, bindings)
    np.testing.assert_allclose(bundle.norm_sq, -(c * b) ** 2 / (2 * a), rtol=1e-12)
    expected = [c**2 * b**2 / (2 * a**2), -b * c**2 / a, -c * b**2 / a]
    np.testing.assert_allclose(bundle.dparams, expected, rtol=1e-9)


def test_multi_target_binding_chain_rule():
    # One parameter driving both the pole location and the output weight:
    # the entries add up through the chain rule.
    v = -0.5
    sys_ = scalar_system(a=v, c=v, b=1.0)
    shared = ParameterBinding("v", (("A", 0, 0, 0, 1.0), ("C", 0, 0, 1.0)), v)
    bundle = gradient(sys_, 10, [shared])
    # d/dv [-v^2/(2v)] = d/dv [-v/2] = -1/2
    np.testing.assert_allclose(bundle.dparams, [-0.5], rtol=1e-9)


def test_norm_sq_matches_forward_evaluation():
    sys_, _ = build_example("ndde-2")
    bundle = gradient(sys_, 20)
    res = compute_h2(sys_, 20)
    np.testing.assert_allclose(bundle.norm_sq, res.norm_sq, rtol=1e-12)


@pytest.mark.parametrize("tag", ["rdde-1", "ndde-1"])
def test_fd_agreement_on_corpus(tag):
    sys_, bindings = build_example(tag)
    report = fd_check(sys_, 20, bindings, step=1e-5)
    assert report.max_rel_err < 1e-5
    assert [row[0] for row in report.table] == [b.name for b in bindings]
    assert report.step == 1e-5


def test_fd_second_order_scaling():
    # Central differences: the defect shrinks like h^2 until roundoff bites.
    sys_, bindings = build_example("rdde-1")
    coarse = fd_check(sys_, 16, bindings, step=1e-2).max_rel_err
    fine = fd_check(sys_, 16, bindings, step=1e-3).max_rel_err
    assert fine < coarse / 30.0  # ~100x expected


def test_delay_gradient_matches_fd():
    sys_ = scalar_system(a=-2.0, c=1.0, delays=(1.0,), coeffs=(-1.0,))
    tau_bind = [ParameterBinding("tau", (("delay", 0),), 1.0)]
    bundle = gradient(sys_, 24, tau_bind)
    h = 1e-5
    up = compute_h2(scalar_system(a=-2.0, c=1.0, delays=(1.0 + h,), coeffs=(-1.0,)), 24)
    dn = compute_h2(scalar_system(a=-2.0, c=1.0, delays=(1.0 - h,), coeffs=(-1.0,)), 24)
    fd = (up.norm_sq - dn.norm_sq) / (2 * h)
    np.testing.assert_allclose(bundle.dparams[0], fd, rtol=1e-6)
    np.testing.assert_allclose(bundle.dtau[0], bundle.dparams[0], rtol=1e-12)


def test_interior_delay_gradient_matches_fd():
    # Two delays; gradient with respect to the inner one goes through the
    # interior evaluation row rather than the domain endpoint.
    sys_, bindings = build_example("ndde-2")
    by_name = {b.name: b for b in bindings}
    report = fd_check(sys_, 20, [by_name["tau1"], by_name["tau2"]], step=1e-5)
    assert report.max_rel_err < 1e-4


def test_matrix_entry_gradients_match_fd():
    sys_, _ = build_example("ndde-1")
    bundle = gradient(sys_, 20)
    h = 1e-5

    B_up, B_dn = sys_.B.copy(), sys_.B.copy()
    B_up[2, 0] += h
    B_dn[2, 0] -= h
    fd_b = (
        compute_h2(DdaeSystem(sys_.E, sys_.A, B_up, sys_.C, sys_.delays), 20).norm_sq
        - compute_h2(DdaeSystem(sys_.E, sys_.A, B_dn, sys_.C, sys_.delays), 20).norm_sq
    ) / (2 * h)
    np.testing.assert_allclose(bundle.dB[2, 0], fd_b, rtol=1e-6)

    C_up, C_dn = sys_.C.copy(), sys_.C.copy()
    C_up[0, 0] += h
    C_dn[0, 0] -= h
    fd_c = (
        compute_h2(DdaeSystem(sys_.E, sys_.A, sys_.B, C_up, sys_.delays), 20).norm_sq
        - compute_h2(DdaeSystem(sys_.E, sys_.A, sys_.B, C_dn, sys_.delays), 20).norm_sq
    ) / (2 * h)
    np.testing.assert_allclose(bundle.dC[0, 0], fd_c, rtol=1e-6)


def test_zero_coefficient_binding_has_zero_gradient():
    sys_ = scalar_system()
    dead = ParameterBinding("dead", (("A", 0, 0, 0, 0.0),), 0.0)
    bundle = gradient(sys_, 10, [dead])
    assert bundle.dparams[0] == 0.0


def test_spline_reduction_rejected():
    sys_, bindings = build_example("ndde-2")
    red = split_and_reduce(discretize(sys_, 8, "spline"))
    with pytest.raises(ModelInputError):
        gradient(sys_, 8, bindings, red=red)


def test_gradient_requires_finite_norm():
    unstable, _ = build_example("conv-sys", delta=(1, 0, 0, 0))
    with pytest.raises(UnstableError):
        gradient(unstable, 12)
    feedthrough, _ = build_example("intro-feedthrough")
    with pytest.raises(FeedthroughError):
        gradient(feedthrough, 12)
