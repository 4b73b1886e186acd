"""Tests for the Lyapunov solves, pole flipping, quadrature oracle, and
convergence studies."""

import numpy as np
import pytest
import scipy.optimize

from h2tau.errors import (
    FeedthroughError,
    LyapunovError,
    OracleDivergenceError,
    UnstableError,
)
from h2tau.discretization import discretize
from h2tau.h2core import (
    compute_h2,
    convergence_study,
    h2_norm,
    h2_quadrature_oracle,
    lyapunov_solve,
    study_to_csv,
)
from h2tau.model import DdaeSystem, build_example
from h2tau.reduction import split_and_reduce

INV_SQRT2 = 1.0 / np.sqrt(2.0)


def scalar_system(a0=-1.0, delays=(), coeffs=()):
    A = [np.array([[a0]])] + [np.array([[c]]) for c in coeffs]
    return DdaeSystem(np.eye(1), tuple(A), np.eye(1), np.eye(1), tuple(delays))


def test_lyapunov_scalar_closed_form():
    P = lyapunov_solve(np.array([[-1.0]]), np.eye(1), np.eye(1))
    np.testing.assert_allclose(P, [[0.5]], rtol=1e-14)


def test_lyapunov_identity_case():
    P = lyapunov_solve(-np.eye(2), np.eye(2), np.eye(2))
    np.testing.assert_allclose(P, 0.5 * np.eye(2), rtol=1e-14)


def kron_lyapunov_oracle(Atil, E11, rhs, side):
    """Direct vectorised solve of A P E' + E P A' = -rhs (or the dual)."""
    if side == "dual":
        Atil, E11 = Atil.T, E11.T
    n = Atil.shape[0]
    K = np.kron(E11, Atil) + np.kron(Atil, E11)
    return np.linalg.solve(K, -rhs.flatten(order="F")).reshape((n, n), order="F")


@pytest.mark.parametrize("side", ["primal", "dual"])
def test_lyapunov_matches_kronecker_oracle(side):
    rng = np.random.default_rng(17)
    for trial in range(4):
        Aprime = rng.standard_normal((5, 5)) - 6.0 * np.eye(5)
        E11 = np.eye(5) + 0.3 * rng.standard_normal((5, 5))
        assert np.linalg.cond(E11) < 50
        Atil = E11 @ Aprime
        G = rng.standard_normal((5, 2))
        rhs = G @ G.T
        P = lyapunov_solve(Atil, E11, rhs, side=side)
        P_ref = kron_lyapunov_oracle(Atil, E11, rhs, side)
        np.testing.assert_allclose(P, P_ref, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(P, P.T)  # symmetrised exactly
        if side == "primal":
            residual = Atil @ P @ E11.T + E11 @ P @ Atil.T + rhs
        else:
            residual = Atil.T @ P @ E11 + E11.T @ P @ Atil + rhs
        bound = 1e-8 * max(
            1.0,
            np.linalg.norm(Atil) * np.linalg.norm(P) * np.linalg.norm(E11),
        )
        assert np.linalg.norm(residual) < bound


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_lyapunov_detects_unsolvable_spectrum():
    # Eigenvalues +1 and -1 make lambda_1 + lambda_2 = 0; with a nonzero
    # off-diagonal right-hand side the equation has no solution at all and
    # the residual check must refuse whatever the dense solver returns.
    with pytest.raises(LyapunovError):
        lyapunov_solve(np.diag([1.0, -1.0]), np.eye(2), np.ones((2, 2)))


def test_scalar_norm_both_paths():
    sys_ = scalar_system()
    assert abs(compute_h2(sys_, 40).norm - INV_SQRT2) < 1e-10
    assert abs(h2_quadrature_oracle(sys_) - INV_SQRT2) < 1e-8


def test_primal_dual_agreement_and_gramian_psd():
    for tag in ("rdde-1", "rdde-2", "ndde-1", "ndde-2"):
        sys_, _ = build_example(tag)
        res = compute_h2(sys_, 20)
        assert abs(res.norm_sq - res.dual_norm_sq) <= 1e-8 * max(res.norm_sq, 1.0)
        for G in (res.P, res.Q):
            w = np.linalg.eigvalsh(G)
            assert w.min() > -1e-10 * max(np.trace(G), 1.0)


def test_stable_system_has_no_flipped_poles():
    sys_, _ = build_example("rdde-2")
    assert compute_h2(sys_, 20).flipped_poles == ()


def test_unstable_without_flip_raises():
    sys_, _ = build_example("conv-sys", delta=(1, 0, 0, 0))
    with pytest.raises(UnstableError):
        compute_h2(sys_, 12, allow_flip=False)


def test_flip_matches_eigendecomposition_oracle():
    """Reflecting through an explicit eigendecomposition of the companion
    matrix must give the same norm and the same reflected-pole multiset."""
    sys_, _ = build_example("conv-sys", delta=(1, 0, 0, 0))
    red = split_and_reduce(discretize(sys_, 12))
    res = h2_norm(red)
    assert len(res.flipped_poles) >= 1

    Aprime = np.linalg.solve(red.E11, red.Atil)
    lam, V = np.linalg.eig(Aprime)
    unstable = lam.real >= 0.0
    mirrored = np.where(unstable, -np.conj(lam), lam)
    A_flip = np.real(V @ np.diag(mirrored) @ np.linalg.inv(V))
    Bp = np.linalg.solve(red.E11, red.Btil)
    P = lyapunov_solve(A_flip, np.eye(red.order), Bp @ Bp.T)
    norm_oracle = float(np.sqrt(np.trace(red.Ctil @ P @ red.Ctil.T)))
    np.testing.assert_allclose(res.norm, norm_oracle, rtol=1e-8)

    # reported poles = the unstable eigenvalues, up to pairing
    reported = np.array(res.flipped_poles)
    expected = lam[unstable]
    assert reported.size == expected.size
    cost = np.abs(reported[:, None] - expected[None, :])
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    assert cost[rows, cols].max() < 1e-8 * max(1.0, np.abs(expected).max())


def test_feedthrough_blocks_norm_evaluation():
    sys_, _ = build_example("intro-feedthrough")
    with pytest.raises(FeedthroughError):
        compute_h2(sys_, 16)


def test_oracle_scalar_delay_cross_tolerance():
    sys_ = scalar_system(a0=-2.0, delays=(1.0,), coeffs=(-1.0,))
    v8 = h2_quadrature_oracle(sys_, rel_tol=1e-8)
    v10 = h2_quadrature_oracle(sys_, rel_tol=1e-10)
    assert abs(v8 - v10) < 1e-7 * v10


def test_oracle_diverges_on_feedthrough_system():
    sys_, _ = build_example("intro-feedthrough")
    with pytest.raises(OracleDivergenceError):
        h2_quadrature_oracle(sys_, rel_tol=1e-6)


def test_oracle_neutral_benchmark_value():
    sys_, _ = build_example("ndde-1")
    assert abs(h2_quadrature_oracle(sys_) - 0.71) < 0.01


def test_convergence_study_reference_kinds():
    sys_ = scalar_system(a0=-2.0, delays=(1.0,), coeffs=(-1.0,))
    degrees = list(range(8, 21, 2))

    st_oracle = convergence_study(sys_, degrees, reference="oracle")
    assert st_oracle.reference_kind == "oracle"
    assert st_oracle.degrees == tuple(degrees)
    assert len(st_oracle.values) == len(degrees)

    st_self = convergence_study(sys_, degrees, reference="self")
    assert st_self.reference_kind == "self"
    assert st_self.errors[-1] == 0.0  # last degree is its own reference

    st_ref = convergence_study(sys_, degrees, reference="refined")
    assert st_ref.reference_kind == "refined"

    st_value = convergence_study(sys_, degrees, reference=st_oracle.reference)
    assert st_value.reference_kind == "explicit"
    np.testing.assert_allclose(st_value.errors, st_oracle.errors, rtol=1e-12)


def test_convergence_study_floor_blanks_fit():
    # Single-delay system converges so fast that against the quadrature
    # reference every error sits on the numerical floor: the fit must
    # decline rather than report a junk slope.
    sys_, _ = build_example("rdde-1")
    study = convergence_study(sys_, [20, 24, 28, 32], reference="oracle")
    assert study.fit_window == ()
    assert study.algebraic_order is None and study.geometric_rate is None


def test_convergence_study_csv_format_and_determinism():
    sys_ = scalar_system(a0=-2.0, delays=(1.0,), coeffs=(-1.0,))
    degrees = [8, 10, 12, 14]
    a = study_to_csv(convergence_study(sys_, degrees, workers=1))
    b = study_to_csv(convergence_study(sys_, degrees, workers=2))
    assert a == b  # worker count must not leak into the output
    lines = a.strip().split("\n")
    assert lines[0] == "N,h2,abs_error,mode"
    assert len(lines) == 1 + len(degrees)
    first = lines[1].split(",")
    assert first[0] == "8" and first[3] == "polynomial"
    # 17 significant digits survive a round trip
    assert float(first[1]).hex() == np.float64(first[1]).hex()


def test_compute_h2_corpus_values():
    sys1, _ = build_example("rdde-1")
    assert abs(compute_h2(sys1, 40).norm - 8.91) < 0.05
    sys5, _ = build_example("ndde-2")
    assert abs(compute_h2(sys5, 40).norm - 3.23) < 0.03
