"""Analytic gradient of the squared H2 norm of the discretization.

Both Gramians of the reduced ODE are combined with the discretization's
projection bases into the adjoint kernel

    D_S = P_V E11' Q_U - W_A B_N Btil' Q_U - P_V Ctil' C_N W_A,

from which the derivative with respect to every system matrix and delay is a
short trace formula.  The delay derivatives include the motion of the basis
domain: the largest delay rescales the whole interval, so its derivative
picks up a correction from every interior delay.

Gradients are only defined for the single-polynomial discretization and only
at points where the norm itself is finite and the reduction stable; spline
mode is refused (its knots move with the delays in ways these formulas do
not cover).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import discretize
from .errors import FeedthroughError, ModelInputError, UnstableError
from .h2core import h2_norm, lyapunov_solve
from .model import DdaeSystem, apply_parameters, extract_parameters, with_values
from .orthopoly import deriv_row, derivative_matrix, eval_functional
from .reduction import ReducedOde, split_and_reduce

__all__ = ["GradientBundle", "gradient", "fd_check", "FdReport"]


@dataclass(frozen=True)
class GradientBundle:
    """Derivatives of the squared H2 norm at one parameter point."""

    dA: tuple
    dtau: np.ndarray
    dB: np.ndarray
    dC: np.ndarray
    dparams: np.ndarray
    norm_sq: float


def _bind_gradient(bindings, dA, dtau, dB, dC) -> np.ndarray:
    out = np.zeros(len(bindings))
    for idx, b in enumerate(bindings):
        acc = 0.0
        for t in b.targets:
            if t[0] == "A":
                _, k, i, j, coeff = t
                acc += coeff * dA[k][i, j]
            elif t[0] == "B":
                _, i, j, coeff = t
                acc += coeff * dB[i, j]
            elif t[0] == "C":
                _, i, j, coeff = t
                acc += coeff * dC[i, j]
            else:
                acc += dtau[t[1]]
        out[idx] = acc
    return out


def gradient(
    sys: DdaeSystem, degree: int = 40, bindings=(), red: ReducedOde | None = None
) -> GradientBundle:
    """Analytic gradient of the squared H2 norm of the degree-N discretization.

    Parameters
    ----------
    sys : DdaeSystem
    degree : int
    bindings : sequence of ParameterBinding
        The chain-ruled per-parameter gradient ``dparams`` follows this order.
    red : ReducedOde, optional
        Reuse an already-computed reduction of this system at this degree.

    Raises
    ------
    FeedthroughError, UnstableError
        The gradient is undefined when the norm is infinite or the reduction
        unstable (no gradient through pole flipping).
    """
    if red is None:
        red = split_and_reduce(discretize(sys, degree, "polynomial"))
    if red.disc.mode != "polynomial":
        raise ModelInputError("gradients are only available for polynomial mode")
    d = red.disc
    n, N, M = d.n, d.degree, d.dim
    basis = d.bases[0]

    d_scale = max(1.0, np.linalg.norm(red.Btil) * np.linalg.norm(red.Ctil))
    if np.linalg.norm(red.Dtil) > 1e-8 * d_scale:
        raise FeedthroughError("no gradient: reduced ODE has feedthrough")
    lam = np.linalg.eigvals(np.linalg.solve(red.E11, red.Atil))
    if np.max(lam.real) >= 0.0:
        raise UnstableError("no gradient: reduced discretization is unstable")

    P = lyapunov_solve(red.Atil, red.E11, red.Btil @ red.Btil.T, side="primal")
    Q = lyapunov_solve(red.Atil, red.E11, red.Ctil.T @ red.Ctil, side="dual")
    norm_sq = float(np.trace(red.Ctil @ P @ red.Ctil.T))

    Q_U = Q @ (red.Uperp - red.A12_A22inv @ red.U)
    P_V = (red.Vperp - red.V @ red.A22inv_A21) @ P
    W_A = red.V @ red.A22inv @ red.U
    D_S = (
        P_V @ red.E11.T @ Q_U
        - W_A @ d.B_N @ red.Btil.T @ Q_U
        - P_V @ red.Ctil.T @ d.C_N @ W_A
    )

    taus = (0.0, *d.delays)
    dA = []
    for k in range(d.m + 1):
        eps_k = eval_functional(basis, -taus[k], n)
        dA.append(2.0 * D_S[:, :n].T @ eps_k.T)

    dtau = np.zeros(d.m)
    head = D_S[:, :n]  # D_S [I_n; 0]
    for k in range(1, d.m):
        deps_k = np.kron(deriv_row(basis, -taus[k]), np.eye(n))
        dtau[k - 1] = -2.0 * np.sum(head * (sys.A[k] @ deps_k).T)
    if d.m >= 1:
        tau_m = d.delays[-1]
        Dblk = derivative_matrix(basis, n)
        tail_term = -2.0 / tau_m * np.sum(D_S[:, n:] * Dblk.T)
        chain = sum((taus[k] / tau_m) * dtau[k - 1] for k in range(1, d.m))
        dtau[-1] = tail_term - chain

    dB = 2.0 * Q_U[:, :n].T @ red.Btil
    eps0 = eval_functional(basis, 0.0, n)
    dC = 2.0 * red.Ctil @ (P_V.T @ eps0.T)
    dparams = _bind_gradient(bindings, dA, dtau, dB, dC)
    return GradientBundle(tuple(dA), dtau, dB, dC, dparams, norm_sq)


@dataclass(frozen=True)
class FdReport:
    max_rel_err: float
    table: tuple  # rows (name, analytic, fd, rel_err)
    step: float


def fd_check(sys: DdaeSystem, degree: int, bindings, step: float = 1e-6) -> FdReport:
    """Central finite differences of the squared norm versus the analytic
    gradient, one parameter at a time.

    The step for parameter j is ``step * max(1, |value_j|)``.
    """
    values = extract_parameters(sys, bindings)
    bundle = gradient(sys, degree, bindings)

    def norm_sq_at(vals):
        pert = apply_parameters(sys, with_values(bindings, vals))
        red = split_and_reduce(discretize(pert, degree, "polynomial"))
        return h2_norm(red, allow_flip=False).norm_sq

    rows = []
    gscale = max(np.max(np.abs(bundle.dparams)) if len(bindings) else 0.0, 1e-12)
    worst = 0.0
    for j, b in enumerate(bindings):
        h = step * max(1.0, abs(values[j]))
        up = values.copy()
        dn = values.copy()
        up[j] += h
        dn[j] -= h
        fd = (norm_sq_at(up) - norm_sq_at(dn)) / (2.0 * h)
        an = bundle.dparams[j]
        rel = abs(fd - an) / max(abs(an), abs(fd), 1e-6 * gscale)
        worst = max(worst, rel)
        rows.append((b.name, float(an), float(fd), float(rel)))
    return FdReport(worst, tuple(rows), step)
