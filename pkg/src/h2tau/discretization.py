"""Lanczos tau discretization of DDAE systems.

Polynomial mode expands the state history over one Legendre basis on
``[-tau_m, 0]``; spline mode uses one degree-N basis per inter-delay segment
``[-tau_k, -tau_{k-1}]`` with continuity enforced at the knots.  Both produce
a square pencil

    E_N x_N'(t) = A_N x_N(t) + B_N v(t),        z_N(t) = C_N x_N(t),

whose top n rows carry the system dynamics and whose remaining rows carry the
tau (truncated derivative) conditions, plus knot-continuity rows in spline
mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CharacteristicRootError, ModelInputError
from .model import DdaeSystem
from .orthopoly import (
    BasisSpec,
    derivative_matrix,
    derivative_matrix_1d,
    eval_functional,
    eval_row,
    truncation_matrix,
)

__all__ = [
    "TauDiscretization",
    "discretize",
    "rational_exp",
    "discretized_transfer",
    "rational_transfer",
]

@dataclass(frozen=True)
class TauDiscretization:
    """Assembled tau discretization of a DDAE."""

    E_N: np.ndarray
    A_N: np.ndarray
    B_N: np.ndarray
    C_N: np.ndarray
    mode: str
    bases: tuple
    degree: int
    n: int
    m: int
    p: int
    q: int
    delays: tuple

    @property
    def dim(self) -> int:
        return self.E_N.shape[0]


def _segment_domains(delays) -> list:
    knots = [0.0, *delays]
    return [(-knots[k], -knots[k - 1]) for k in range(1, len(knots))]


def _discretize_polynomial(sys: DdaeSystem, N: int) -> TauDiscretization:
    n = sys.n
    tau_max = sys.delays[-1] if sys.m else 1.0
    basis = BasisSpec(N, (-tau_max, 0.0))
    eps0 = eval_functional(basis, 0.0, n)
    top_E = sys.E @ eps0
    top_A = sys.A[0] @ eps0
    for tau, Ak in zip(sys.delays, sys.A[1:]):
        top_A = top_A + Ak @ eval_functional(basis, -tau, n)
    E_N = np.vstack([top_E, truncation_matrix(basis, n)])
    A_N = np.vstack([top_A, derivative_matrix(basis, n)])
    B_N = np.vstack([sys.B, np.zeros((n * N, sys.p))])
    C_N = sys.C @ eps0
    return TauDiscretization(
        E_N, A_N, B_N, C_N, "polynomial", (basis,), N, n, sys.m, sys.p, sys.q, sys.delays
    )


def _discretize_spline(sys: DdaeSystem, N: int) -> TauDiscretization:
    if sys.m < 1:
        raise ModelInputError("spline mode needs at least one delay")
    n, m = sys.n, sys.m
    bases = tuple(BasisSpec(N, dom) for dom in _segment_domains(sys.delays))
    seg = n * (N + 1)
    M = m * seg

    def seg_cols(block_row, k):
        """Place a block acting on segment k (1-based) into full width."""
        out = np.zeros((block_row.shape[0], M))
        out[:, (k - 1) * seg : k * seg] = block_row
        return out

    # Dynamic rows: A_0 acts at theta = 0 (right end of segment 1), A_k at
    # theta = -tau_k (left end of segment k).
    top_E = seg_cols(sys.E @ eval_functional(bases[0], 0.0, n), 1)
    top_A = seg_cols(sys.A[0] @ eval_functional(bases[0], 0.0, n), 1)
    for k in range(1, m + 1):
        top_A += seg_cols(
            sys.A[k] @ eval_functional(bases[k - 1], -sys.delays[k - 1], n), k
        )

    tau_rows_E = [seg_cols(truncation_matrix(bases[k - 1], n), k) for k in range(1, m + 1)]
    tau_rows_A = [seg_cols(derivative_matrix(bases[k - 1], n), k) for k in range(1, m + 1)]

    # Continuity at interior knots: segment k left end equals segment k+1
    # right end; algebraic rows (zero in E_N).
    cont_rows = []
    for k in range(1, m):
        theta = -sys.delays[k - 1]
        row = seg_cols(eval_functional(bases[k - 1], theta, n), k) - seg_cols(
            eval_functional(bases[k], theta, n), k + 1
        )
        cont_rows.append(row)

    E_N = np.vstack([top_E, *tau_rows_E, np.zeros(((m - 1) * n, M))])
    A_N = np.vstack([top_A, *tau_rows_A, *cont_rows]) if cont_rows else np.vstack(
        [top_A, *tau_rows_A]
    )
    B_N = np.vstack([sys.B, np.zeros((M - n, sys.p))])
    C_N = seg_cols(sys.C @ eval_functional(bases[0], 0.0, n), 1)
    return TauDiscretization(
        E_N, A_N, B_N, C_N, "spline", bases, N, n, m, sys.p, sys.q, sys.delays
    )


def discretize(sys: DdaeSystem, degree: int, mode: str = "polynomial") -> TauDiscretization:
    """Assemble the tau discretization at the given basis degree.

    Parameters
    ----------
    sys : DdaeSystem
    degree : int
        Basis degree N >= 1 (per segment in spline mode).
    mode : {"polynomial", "spline"}

    Returns
    -------
    TauDiscretization
    """
    if degree < 1:
        raise ModelInputError(f"degree must be >= 1, got {degree}")
    if mode == "polynomial":
        return _discretize_polynomial(sys, degree)
    if mode == "spline":
        return _discretize_spline(sys, degree)
    raise ModelInputError(f"unknown discretization mode {mode!r}")


def _rational_coeffs(basis: BasisSpec, s: complex) -> np.ndarray:
    """Coefficients of the segment rational function r(s, .) on ``basis``.

    Defined by value 1 at the right domain endpoint together with the N tau
    conditions (D - s T) c = 0.
    """
    N = basis.degree
    D1 = derivative_matrix_1d(basis)[:N, :]
    T1 = np.hstack([np.eye(N), np.zeros((N, 1))])
    rows = np.vstack([eval_row(basis, basis.domain[1])[None, :], D1 - s * T1])
    rhs = np.zeros(N + 1, dtype=complex)
    rhs[0] = 1.0
    try:
        return np.linalg.solve(rows.astype(complex), rhs)
    except np.linalg.LinAlgError as exc:
        raise CharacteristicRootError(f"rational approximation has a pole at s = {s}") from exc


def rational_exp(delays, degree: int, s: complex, k: int, mode: str = "polynomial") -> complex:
    """Value ``r_N(s, -tau_k)`` of the rational approximation of ``exp(-tau_k s)``.

    ``k = 0`` refers to the zero delay and returns 1 for every ``s``.
    """
    delays = tuple(float(t) for t in delays)
    if not 0 <= k <= len(delays):
        raise ModelInputError(f"delay index {k} out of range for {len(delays)} delays")
    if k == 0:
        return 1.0 + 0.0j
    if mode == "polynomial":
        basis = BasisSpec(degree, (-delays[-1], 0.0))
        c = _rational_coeffs(basis, s)
        return complex(eval_row(basis, -delays[k - 1]) @ c)
    if mode == "spline":
        # r accumulates across segments: each segment's local rational is 1 at
        # its right end, and the left-end values multiply up.
        value = 1.0 + 0.0j
        for j, dom in enumerate(_segment_domains(delays), start=1):
            basis = BasisSpec(degree, dom)
            c = _rational_coeffs(basis, s)
            value *= complex(eval_row(basis, dom[0]) @ c)
            if j == k:
                return value
        return value
    raise ModelInputError(f"unknown discretization mode {mode!r}")


def discretized_transfer(d: TauDiscretization, s: complex) -> np.ndarray:
    """Transfer function ``C_N (s E_N - A_N)^{-1} B_N`` of the discretization."""
    pencil = s * d.E_N.astype(complex) - d.A_N
    try:
        sol = np.linalg.solve(pencil, d.B_N.astype(complex))
    except np.linalg.LinAlgError as exc:
        raise CharacteristicRootError(f"discretized resolvent singular at s = {s}") from exc
    return d.C_N @ sol


def rational_transfer(sys: DdaeSystem, degree: int, s: complex, mode: str = "polynomial") -> np.ndarray:
    """Closed form ``C (sE - sum_k A_k r_N(s, -tau_k))^{-1} B``.

    Algebraically identical to :func:`discretized_transfer`; used as a
    cross-check of the assembled block matrices.
    """
    pencil = s * sys.E.astype(complex) - sys.A[0]
    for k in range(1, sys.m + 1):
        pencil = pencil - rational_exp(sys.delays, degree, s, k, mode) * sys.A[k]
    try:
        sol = np.linalg.solve(pencil, sys.B.astype(complex))
    except np.linalg.LinAlgError as exc:
        raise CharacteristicRootError(f"rational transfer singular at s = {s}") from exc
    return sys.C @ sol
