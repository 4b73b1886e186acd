"""Pre-flight tests for a finite strong H2 norm.

A DDAE has a finite strong H2 norm when (i) it has differentiation index at
most one, (ii) it is strongly exponentially stable, and (iii) the algebraic
input-output coupling products C2 P_k B2 vanish for every multi-index with
|k| < nu.  Strong stability combines a negative nominal spectral abscissa
with the delay-robust condition

    max over the phase torus of  rho( sum_k A22[k] e^(i theta_k) )  <  1.

The torus maximum is approximated by a coarse grid plus local simplex
refinement; an exact certificate is out of scope and the report says so.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.optimize import minimize

from .model import DdaeSystem
from .reduction import StandardForm, index_check, split_and_reduce, standard_form
from .discretization import discretize

__all__ = [
    "matrix_power_sums",
    "essential_radius",
    "nominal_abscissa",
    "feedthrough_family_test",
    "FeedthroughReport",
    "DiagnosticsReport",
    "run_diagnostics",
]


def matrix_power_sums(letters, max_order: int) -> dict:
    """Word sums of matrix products, indexed by letter multiplicities.

    For matrices ``letters = (M_1, ..., M_L)`` returns a dict mapping each
    multi-index ``k`` with ``|k|_1 <= max_order`` to the sum of all words with
    ``k_j`` occurrences of ``M_j`` (each ordering counted once).  Satisfies
    the generating identity ``(sum_j z_j M_j)^r = sum_{|k|=r} z^k P_k`` and
    the first-letter recursion ``P_k = sum_{j: k_j > 0} M_j P_{k - e_j}``.
    """
    letters = [np.asarray(M, dtype=float) for M in letters]
    if letters:
        dim = letters[0].shape[0]
    else:
        dim = 0
    L = len(letters)
    out = {(0,) * L: np.eye(dim)}
    frontier = [(0,) * L]
    for _ in range(max_order):
        new_frontier = []
        for k in frontier:
            for j in range(L):
                kj = k[:j] + (k[j] + 1,) + k[j + 1 :]
                if kj in out:
                    continue
                acc = np.zeros((dim, dim))
                for i in range(L):
                    if kj[i] > 0:
                        prev = kj[:i] + (kj[i] - 1,) + kj[i + 1 :]
                        acc += letters[i] @ out[prev]
                out[kj] = acc
                new_frontier.append(kj)
        frontier = new_frontier
    return out


def _radius(A22_delayed, theta_reduced) -> float:
    """Spectral radius of the phase-weighted A22 sum, last phase fixed to 0."""
    acc = A22_delayed[-1].astype(complex).copy()
    for Ak, th in zip(A22_delayed[:-1], theta_reduced):
        acc += np.exp(1j * th) * Ak
    return float(np.max(np.abs(np.linalg.eigvals(acc))))


def essential_radius(sf: StandardForm, grid: int | None = None, refine_iters: int = 50):
    """Torus maximum of the delayed algebraic spectral radius.

    A common phase rotation multiplies the whole sum by a unimodular scalar
    and leaves the spectral radius unchanged, so the last phase is fixed to
    zero and the search runs over m - 1 dimensions (exact for one delay).

    Returns
    -------
    (rho_max, theta_star) : float, ndarray of shape (m,)
    """
    m = len(sf.A22) - 1
    if sf.nu == 0 or m == 0:
        return 0.0, np.zeros(m)
    delayed = [np.asarray(A) for A in sf.A22[1:]]
    if m == 1:
        return _radius(delayed, ()), np.zeros(1)
    dims = m - 1
    if grid is None:
        grid = 64 if m <= 2 else 24
    axis = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    best_val, best_theta = -np.inf, np.zeros(dims)
    for theta in product(axis, repeat=dims):
        val = _radius(delayed, theta)
        if val > best_val:
            best_val, best_theta = val, np.array(theta)
    res = minimize(
        lambda th: -_radius(delayed, th),
        best_theta,
        method="Nelder-Mead",
        options={"maxiter": refine_iters, "xatol": 1e-10, "fatol": 1e-12},
    )
    if -res.fun > best_val:
        best_val, best_theta = -res.fun, res.x
    return float(best_val), np.append(np.mod(best_theta, 2 * np.pi), 0.0)


def nominal_abscissa(sys: DdaeSystem, degree: int = 40) -> float:
    """Spectral abscissa of the reduced discretization at the nominal delays.

    This approximates the true abscissa through the degree-N discretization;
    callers worried about spurious results should re-check at a higher N.
    """
    red = split_and_reduce(discretize(sys, degree))
    lam = np.linalg.eigvals(np.linalg.solve(red.E11, red.Atil))
    return float(np.max(lam.real))


@dataclass(frozen=True)
class FeedthroughReport:
    passed: bool
    violating_k: tuple | None
    violation_norm: float
    tol: float


def feedthrough_family_test(sf: StandardForm, tol: float = 1e-10) -> FeedthroughReport:
    """Check C2 P_k B2 = 0 for all delay multi-indices with |k| < nu.

    The k_0 exponent of the undelayed letter only contributes a sign and a
    positive multiplicity, so it cannot affect the zero test and is folded
    out; only the delayed letters are enumerated.
    """
    m = len(sf.A22) - 1
    if sf.nu == 0:
        return FeedthroughReport(True, None, 0.0, tol)
    scale = np.linalg.norm(sf.C2) * np.linalg.norm(sf.B2)
    if scale == 0.0:
        return FeedthroughReport(True, None, 0.0, tol)
    if m == 0:
        family = {(): np.eye(sf.nu)}
    else:
        family = matrix_power_sums(sf.A22[1:], sf.nu - 1)
    for k in sorted(family, key=lambda k: (sum(k), k)):
        norm = np.linalg.norm(sf.C2 @ family[k] @ sf.B2)
        if norm >= tol * scale:
            return FeedthroughReport(False, k, float(norm), tol)
    return FeedthroughReport(True, None, 0.0, tol)


@dataclass(frozen=True)
class DiagnosticsReport:
    index_ok: bool
    nu: int
    essential_radius: float | None
    theta_star: np.ndarray | None
    nominal_abscissa: float | None
    strongly_stable: bool | None
    feedthrough_free: bool | None
    violating_k: tuple | None
    violation_norm: float | None
    verdict: str
    degree: int

    def summary(self) -> str:
        lines = [
            f"index <= 1          : {'yes' if self.index_ok else 'NO'} (nu = {self.nu})",
        ]
        if self.essential_radius is not None:
            lines.append(
                f"essential radius    : {self.essential_radius:.6g} "
                f"({'<' if self.essential_radius < 1 else '>='} 1)"
            )
        if self.nominal_abscissa is not None:
            lines.append(
                f"nominal abscissa    : {self.nominal_abscissa:.6g} (degree {self.degree})"
            )
        if self.strongly_stable is not None:
            lines.append(f"strongly stable     : {'yes' if self.strongly_stable else 'NO'}")
        if self.feedthrough_free is not None:
            if self.feedthrough_free:
                lines.append("feedthrough family  : all products zero")
            else:
                lines.append(
                    f"feedthrough family  : VIOLATED at k = {self.violating_k} "
                    f"(|C2 P_k B2| = {self.violation_norm:.3e})"
                )
        lines.append(f"verdict             : {self.verdict}")
        return "\n".join(lines)


def run_diagnostics(sys: DdaeSystem, degree: int = 40) -> DiagnosticsReport:
    """Run the full finite-strong-H2 test battery with early exit.

    Order: index test, essential radius, nominal abscissa, feedthrough
    family.  The verdict is ``finite-strong-H2`` only if every test passes;
    stability or feedthrough failures give ``infinite-strong-H2``; an index
    failure leaves the remaining tests undefined (``indeterminate``).
    """
    idx = index_check(sys)
    if not idx.index_le_one:
        return DiagnosticsReport(
            False, idx.nu, None, None, None, None, None, None, None, "indeterminate", degree
        )
    sf = standard_form(sys)
    rho, theta = essential_radius(sf)
    if rho >= 1.0:
        return DiagnosticsReport(
            True, sf.nu, rho, theta, None, False, None, None, None, "infinite-strong-H2", degree
        )
    alpha = nominal_abscissa(sys, degree)
    stable = bool(alpha < 0.0)
    if not stable:
        return DiagnosticsReport(
            True, sf.nu, rho, theta, alpha, False, None, None, None, "infinite-strong-H2", degree
        )
    ft = feedthrough_family_test(sf)
    verdict = "finite-strong-H2" if ft.passed else "infinite-strong-H2"
    return DiagnosticsReport(
        index_ok=True,
        nu=sf.nu,
        essential_radius=rho,
        theta_star=theta,
        nominal_abscissa=alpha,
        strongly_stable=stable,
        feedthrough_free=ft.passed,
        violating_k=ft.violating_k,
        violation_norm=ft.violation_norm if not ft.passed else 0.0,
        verdict=verdict,
        degree=degree,
    )
