"""Shifted-and-scaled Legendre basis machinery for the tau method.

The basis on an interval [a, b] is ``phi_j(theta) = P_j(x(theta))`` with the
affine map ``x(theta) = (2 theta - a - b) / (b - a)`` onto [-1, 1], so that
``phi_j(b) = 1`` and ``phi_j(a) = (-1)**j``.  On the canonical tau interval
[-tau_max, 0] this is the right-endpoint normalisation ``phi_j(0) = 1``.

All block operators act on coefficient vectors in coefficient-major order:
a vector of length ``n * (N + 1)`` stores the n-dimensional coefficient of
``phi_0`` first, then that of ``phi_1``, and so on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg

__all__ = [
    "BasisSpec",
    "eval_row",
    "deriv_row",
    "derivative_matrix_1d",
    "eval_functional",
    "derivative_matrix",
    "truncation_matrix",
]


@dataclass(frozen=True)
class BasisSpec:
    """Degree-graded Legendre basis of degree ``N`` on ``[a, b]``."""

    degree: int
    domain: tuple[float, float]

    def __post_init__(self):
        a, b = self.domain
        if self.degree < 1:
            raise ValueError(f"basis degree must be >= 1, got {self.degree}")
        if not a < b:
            raise ValueError(f"domain must satisfy a < b, got [{a}, {b}]")

    def to_reference(self, theta):
        """Map ``theta`` in [a, b] to x in the reference interval [-1, 1]."""
        a, b = self.domain
        return (2.0 * np.asarray(theta, dtype=float) - a - b) / (b - a)

    @property
    def scale(self) -> float:
        """Derivative scaling d x / d theta = 2 / (b - a)."""
        a, b = self.domain
        return 2.0 / (b - a)


def _check_in_domain(basis: BasisSpec, theta: float) -> None:
    a, b = basis.domain
    slack = 1e-12 * (b - a)
    if theta < a - slack or theta > b + slack:
        raise ValueError(f"evaluation point {theta} outside basis domain [{a}, {b}]")


def eval_row(basis: BasisSpec, theta: float) -> np.ndarray:
    """Row vector ``(phi_0(theta), ..., phi_N(theta))``.

    Parameters
    ----------
    basis : BasisSpec
    theta : float
        Point in the basis domain.

    Returns
    -------
    ndarray of shape (N + 1,)
    """
    _check_in_domain(basis, theta)
    x = basis.to_reference(theta)
    return npleg.legvander(np.atleast_1d(x), basis.degree)[0]


def derivative_matrix_1d(basis: BasisSpec) -> np.ndarray:
    """Scalar differentiation matrix in coefficient space.

    If ``u(theta) = sum_j c_j phi_j(theta)`` then ``u'(theta) =
    sum_j (D c)_j phi_j(theta)``.  Built from the classical expansion
    ``P'_j = sum_{k < j, j-k odd} (2k + 1) P_k`` scaled by the affine map;
    exact in integer arithmetic up to the single scale factor.

    Returns
    -------
    D : ndarray of shape (N + 1, N + 1)
        Strictly upper triangular; the last row is zero.
    """
    N = basis.degree
    D = np.zeros((N + 1, N + 1))
    for j in range(1, N + 1):
        D[j - 1 : : -2, j] = 2.0 * np.arange(j - 1, -1, -2) + 1.0
    return basis.scale * D


def deriv_row(basis: BasisSpec, theta: float) -> np.ndarray:
    """Row vector of derivative values ``(phi'_0(theta), ..., phi'_N(theta))``."""
    # u'(theta) = eval_row(theta) @ D @ c for every coefficient vector c.
    return eval_row(basis, theta) @ derivative_matrix_1d(basis)


def eval_functional(basis: BasisSpec, theta: float, n: int) -> np.ndarray:
    """Block evaluation functional ``[eps_theta]``.

    Applying the returned ``n x n(N+1)`` matrix to a coefficient-major vector
    evaluates the n-dimensional polynomial at ``theta``.
    """
    return np.kron(eval_row(basis, theta), np.eye(n))


def derivative_matrix(basis: BasisSpec, n: int) -> np.ndarray:
    """Block derivative operator ``[D]`` of shape ``nN x n(N+1)``.

    Maps degree-N coefficient vectors to the (degree N-1) coefficients of the
    derivative; the zero last coefficient block is dropped.
    """
    D = derivative_matrix_1d(basis)
    return np.kron(D[: basis.degree, :], np.eye(n))


def truncation_matrix(basis: BasisSpec, n: int) -> np.ndarray:
    """Block tau truncation ``[T]`` of shape ``nN x n(N+1)``.

    In coefficient-major order dropping the top-degree coefficient is simply
    ``(I | 0)``.
    """
    N = basis.degree
    return np.hstack([np.eye(n * N), np.zeros((n * N, n))])
