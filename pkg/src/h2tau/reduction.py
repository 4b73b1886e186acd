"""Nullspace splitting of singular pencils.

Two closely related constructions live here:

* ``standard_form`` splits the original DDAE along ker E / ker E*, scaled so
  that the algebraic block of A_0 is exactly ``-I``.  Its A22 blocks drive the
  strong-stability and feedthrough tests.
* ``split_and_reduce`` applies the same splitting to the discretized pencil
  (E_N, A_N) and eliminates the algebraic part by a Schur complement, giving
  the implicit ODE (E11, Atil, Btil, Ctil, Dtil).

The nonzero block E11 is deliberately left un-normalized: scaling it to the
identity amplifies roundoff when the nonzero singular values of E_N are
spread out.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .discretization import TauDiscretization
from .errors import DifferentiationIndexError, ReductionError
from .model import DdaeSystem

__all__ = [
    "IndexReport",
    "StandardForm",
    "ReducedOde",
    "index_check",
    "standard_form",
    "split_and_reduce",
]

_A22_COND_CAP = 1e12


def _rank_split(mat: np.ndarray):
    """SVD-based numerical rank split; returns (W, S, Zt, rank, threshold)."""
    W, S, Zt = np.linalg.svd(mat)
    if S.size == 0 or S[0] == 0.0:
        return W, S, Zt, 0, 0.0
    threshold = np.finfo(float).eps * max(mat.shape) * S[0]
    rank = int(np.sum(S > threshold))
    return W, S, Zt, rank, threshold


@dataclass(frozen=True)
class IndexReport:
    index_le_one: bool
    nu: int
    sigma_min: float
    threshold: float


def index_check(sys: DdaeSystem) -> IndexReport:
    """Differentiation-index test: U~ A_0 V~ nonsingular on the kernels of E.

    With ``V~`` spanning ker E and ``U~*`` spanning ker E*, the system has
    differentiation index at most one exactly when ``U~ A_0 V~`` is
    invertible.  ``nu = 0`` (invertible E) passes vacuously.
    """
    W, S, Zt, rank, _ = _rank_split(sys.E)
    nu = sys.n - rank
    if nu == 0:
        return IndexReport(True, 0, np.inf, 0.0)
    Vker = Zt[rank:, :].T
    Uker = W[:, rank:].T
    M0 = Uker @ sys.A[0] @ Vker
    s = np.linalg.svd(M0, compute_uv=False)
    threshold = np.finfo(float).eps * nu * max(s[0], np.linalg.norm(sys.A[0], 2), 1.0) * 100
    return IndexReport(bool(s[-1] > threshold), nu, float(s[-1]), float(threshold))


@dataclass(frozen=True)
class StandardForm:
    """Kernel-aligned coordinates of a DDAE.

    The transform ``x = Vperp x1 + Vbar x2`` with row maps ``Uperp`` (so that
    ``Uperp E Vperp = I``) and ``Ubar`` (so that ``Ubar A_0 Vbar = -I``) puts
    the system in semi-explicit form.  ``A11[k] .. A22[k]`` are the blocks of
    ``A_k`` in those coordinates.
    """

    nu: int
    Vbar: np.ndarray
    Ubar: np.ndarray
    Vperp: np.ndarray
    Uperp: np.ndarray
    A11: tuple
    A12: tuple
    A21: tuple
    A22: tuple
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    rank_gap_warning: bool


def standard_form(sys: DdaeSystem) -> StandardForm:
    """Split a DDAE along the kernels of E and scale the algebraic block.

    Raises
    ------
    DifferentiationIndexError
        If the index test fails (algebraic equations not solvable).
    """
    n = sys.n
    W, S, Zt, rank, threshold = _rank_split(sys.E)
    nu = n - rank
    rank_gap = bool(
        threshold > 0.0 and np.any((S >= threshold / 10) & (S <= threshold * 10))
    )
    if rank_gap:
        warnings.warn(
            "singular values of E close to the rank threshold; the kernel "
            "split may be ill determined",
            stacklevel=2,
        )
    Vker = Zt[rank:, :].T  # n x nu, orthonormal columns
    Uker = W[:, rank:].T  # nu x n, orthonormal rows
    if nu > 0:
        M0 = Uker @ sys.A[0] @ Vker
        s = np.linalg.svd(M0, compute_uv=False)
        idx_threshold = np.finfo(float).eps * nu * max(s[0], np.linalg.norm(sys.A[0], 2), 1.0) * 100
        if s[-1] <= idx_threshold:
            raise DifferentiationIndexError(
                f"differentiation index exceeds one (smallest singular value "
                f"{s[-1]:.3e} of the algebraic block of A_0)"
            )
        Vbar = -Vker @ np.linalg.inv(M0)
    else:
        Vbar = np.zeros((n, 0))
    Ubar = Uker
    Vperp = Zt[:rank, :].T
    Uperp = (W[:, :rank] / S[:rank]).T  # Sigma_r^-1 W_1^T, so Uperp E Vperp = I

    A11, A12, A21, A22 = [], [], [], []
    for k, Ak in enumerate(sys.A):
        A11.append(Uperp @ Ak @ Vperp)
        A12.append(Uperp @ Ak @ Vbar)
        A21.append(Ubar @ Ak @ Vperp)
        if k == 0:
            A22.append(-np.eye(nu))  # exact by the Vbar scaling
        else:
            A22.append(Ubar @ Ak @ Vbar)
    return StandardForm(
        nu=nu,
        Vbar=Vbar,
        Ubar=Ubar,
        Vperp=Vperp,
        Uperp=Uperp,
        A11=tuple(A11),
        A12=tuple(A12),
        A21=tuple(A21),
        A22=tuple(A22),
        B1=Uperp @ sys.B,
        B2=Ubar @ sys.B,
        C1=sys.C @ Vperp,
        C2=sys.C @ Vbar,
        rank_gap_warning=rank_gap,
    )


@dataclass(frozen=True)
class ReducedOde:
    """Implicit ODE obtained by eliminating the algebraic discretization part."""

    E11: np.ndarray
    Atil: np.ndarray
    Btil: np.ndarray
    Ctil: np.ndarray
    Dtil: np.ndarray
    U: np.ndarray
    Uperp: np.ndarray
    V: np.ndarray
    Vperp: np.ndarray
    A22: np.ndarray
    A22inv: np.ndarray
    A12_A22inv: np.ndarray
    A22inv_A21: np.ndarray
    cond_E11: float
    disc: TauDiscretization

    @property
    def order(self) -> int:
        return self.E11.shape[0]

    @property
    def kappa(self) -> int:
        return self.A22.shape[0]


def split_and_reduce(d: TauDiscretization) -> ReducedOde:
    """Project out ker E_N and Schur-eliminate the algebraic variables.

    Returns the implicit ODE with ``E11`` kept un-normalized, together with
    the projection bases and cached A22 products needed by the gradient
    assembly.

    Raises
    ------
    ReductionError
        If the algebraic block A22 is numerically singular (condition number
        above 1e12); typically a loss of strong stability.
    """
    E_N = d.E_N
    W, S, Zt, rank, _ = _rank_split(E_N)
    M = E_N.shape[0]
    kappa = M - rank
    Vperp = Zt[:rank, :].T
    V = Zt[rank:, :].T
    Uperp = W[:, :rank].T
    U = W[:, rank:].T

    A11 = Uperp @ d.A_N @ Vperp
    A12 = Uperp @ d.A_N @ V
    A21 = U @ d.A_N @ Vperp
    A22 = U @ d.A_N @ V
    B1 = Uperp @ d.B_N
    B2 = U @ d.B_N
    C1 = d.C_N @ Vperp
    C2 = d.C_N @ V

    if kappa > 0:
        s22 = np.linalg.svd(A22, compute_uv=False)
        # The condition number alone is scale-free and therefore blind to a
        # 1 x 1 block that is zero up to roundoff; an absolute floor tied to
        # the magnitude of A_N catches that case as well.
        floor = np.finfo(float).eps * 100 * kappa * max(1.0, float(np.max(np.abs(d.A_N))))
        if s22[-1] <= floor or s22[0] / s22[-1] > _A22_COND_CAP:
            raise ReductionError(
                "algebraic block of the discretization is numerically singular "
                f"(condition {np.inf if s22[-1] == 0 else s22[0] / s22[-1]:.3e})"
            )
        A22inv = np.linalg.inv(A22)
    else:
        A22inv = np.zeros((0, 0))

    X12 = A12 @ A22inv  # rank x kappa
    X21 = A22inv @ A21  # kappa x rank
    Atil = A11 - X12 @ A21
    Btil = B1 - X12 @ B2
    Ctil = C1 - C2 @ X21
    Dtil = -C2 @ A22inv @ B2
    E11 = Uperp @ E_N @ Vperp
    cond_E11 = float(S[0] / S[rank - 1]) if rank > 0 else 1.0
    return ReducedOde(
        E11=E11,
        Atil=Atil,
        Btil=Btil,
        Ctil=Ctil,
        Dtil=Dtil,
        U=U,
        Uperp=Uperp,
        V=V,
        Vperp=Vperp,
        A22=A22,
        A22inv=A22inv,
        A12_A22inv=X12,
        A22inv_A21=X21,
        cond_E11=cond_E11,
        disc=d,
    )
