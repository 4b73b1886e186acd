"""Gradient-based H2-optimal parameter synthesis.

BFGS on the squared H2 norm of the discretization, with every infeasible
point (delay ordering broken, bounds violated, index above one, strong
stability or feedthrough test failed, unstable reduction) charged an
infinite cost, so the line search backs away from barriers on its own.

The line search follows Hager and Zhang: bracketing by expansion, secant
steps with bisection safeguards, and acceptance by either the standard or
the approximate Wolfe conditions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import essential_radius, feedthrough_family_test
from .discretization import discretize
from .errors import (
    DelayOrderingError,
    DifferentiationIndexError,
    H2TauError,
    LyapunovError,
    ReductionError,
)
from .h2core import H2Result, h2_norm
from .model import DdaeSystem, apply_parameters, extract_parameters, with_values
from .reduction import split_and_reduce, standard_form
from .sensitivity import gradient

__all__ = [
    "SynthesisConfig",
    "SynthesisTrace",
    "SynthesisResult",
    "objective",
    "synthesize",
    "trace_to_csv",
]


@dataclass(frozen=True)
class SynthesisConfig:
    degree: int = 40
    max_iters: int = 200
    grad_tol: float = 1e-6  # on the max-norm of the parameter gradient
    ls_delta: float = 0.1
    ls_sigma: float = 0.9
    ls_eps: float = 1e-6
    ls_rho: float = 5.0  # bracket expansion factor
    max_ls_evals: int = 50

    def __post_init__(self):
        if not 0.0 < self.ls_delta < self.ls_sigma < 1.0:
            raise ValueError("need 0 < delta < sigma < 1 for the Wolfe constants")


@dataclass
class SynthesisTrace:
    rows: list = field(default_factory=list)  # (iter, params, fval, gnorm, step, accepted)
    verdict: str = "running"

    def record(self, it, params, fval, gnorm, step, accepted=True):
        self.rows.append((it, np.array(params), float(fval), float(gnorm), float(step), accepted))


def trace_to_csv(trace: SynthesisTrace) -> str:
    lines = ["iter,fval,gnorm,step,accepted"]
    for it, _, fval, gnorm, step, accepted in trace.rows:
        lines.append(f"{it},{fval:.17g},{gnorm:.17g},{step:.17g},{int(accepted)}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SynthesisResult:
    names: tuple
    values: np.ndarray
    norm: float
    h2: H2Result | None
    trace: SynthesisTrace
    verdict: str
    n_evals: int


def _within_bounds(bindings, values) -> bool:
    for b, v in zip(bindings, values):
        if b.bounds is not None and not (b.bounds[0] <= v <= b.bounds[1]):
            return False
    return True


def _evaluate(sys, bindings, values, degree, want_grad):
    """Objective (and optionally gradient) with the infinity barrier.

    Returns (fval, grad_or_None, H2Result_or_None).
    """
    if not np.all(np.isfinite(values)) or not _within_bounds(bindings, values):
        return np.inf, None, None
    try:
        trial = apply_parameters(sys, with_values(bindings, values))
    except DelayOrderingError:
        return np.inf, None, None
    try:
        sf = standard_form(trial)
    except DifferentiationIndexError:
        return np.inf, None, None
    rho, _ = essential_radius(sf)
    if rho >= 1.0:
        return np.inf, None, None
    if not feedthrough_family_test(sf).passed:
        return np.inf, None, None
    try:
        red = split_and_reduce(discretize(trial, degree, "polynomial"))
        res = h2_norm(red, allow_flip=False)
    except (ReductionError, LyapunovError, H2TauError):
        return np.inf, None, None
    if not want_grad:
        return res.norm_sq, None, res
    bundle = gradient(trial, degree, bindings, red=red)
    return bundle.norm_sq, bundle.dparams, res


def objective(sys: DdaeSystem, bindings, values, degree: int = 40) -> float:
    """Squared H2 norm at the given parameter values, or +inf if infeasible."""
    fval, _, _ = _evaluate(sys, list(bindings), np.asarray(values, float), degree, False)
    return fval


def _wolfe_ok(f0, g0, f, g, alpha, cfg):
    standard = (f <= f0 + cfg.ls_delta * alpha * g0) and (g >= cfg.ls_sigma * g0)
    # Approximate Wolfe, restricted to non-increasing values so accepted
    # iterates never raise the objective.
    approx = ((2 * cfg.ls_delta - 1.0) * g0 >= g >= cfg.ls_sigma * g0) and (f <= f0)
    return standard or approx


def _line_search(phi, f0, g0, alpha0, cfg):
    """Hager-Zhang style line search on phi(alpha) -> (f, slope, payload).

    Returns (alpha, f, payload, evals, ok).  Infinite trial values trigger a
    geometric backoff; failure to make progress within the evaluation budget
    reports ok=False.
    """
    eps_k = cfg.ls_eps * abs(f0)
    evals = 0

    def probe(a):
        nonlocal evals
        evals += 1
        return phi(a)

    alpha = alpha0
    f, g, payload = probe(alpha)
    while not np.isfinite(f) and evals < cfg.max_ls_evals:
        alpha *= 0.3
        f, g, payload = probe(alpha)
    if not np.isfinite(f):
        return None
    best = (alpha, f, payload) if f < f0 else None

    # Bracket [lo, hi] with phi'(lo) < 0 and either phi'(hi) >= 0 or
    # phi(hi) above the relaxed initial value.
    lo, glo = 0.0, g0
    hi = None
    while True:
        if _wolfe_ok(f0, g0, f, g, alpha, cfg):
            return alpha, f, payload, evals, True
        if g >= 0.0 or f > f0 + eps_k:
            hi, ghi = alpha, g
            break
        lo, glo = alpha, g
        if f < f0 and (best is None or f < best[1]):
            best = (alpha, f, payload)
        if evals >= cfg.max_ls_evals:
            hi = None
            break
        grow = cfg.ls_rho * alpha
        fg = probe(grow)
        while not np.isfinite(fg[0]) and evals < cfg.max_ls_evals:
            grow = lo + 0.3 * (grow - lo)
            if grow <= lo * (1 + 1e-14):
                break
            fg = probe(grow)
        if not np.isfinite(fg[0]):
            hi = None
            break
        alpha, (f, g, payload) = grow, fg

    if hi is None:
        if best is not None:
            return best[0], best[1], best[2], evals, True
        return None

    # Zoom: secant with bisection fallback, shrinking [lo, hi].
    while evals < cfg.max_ls_evals:
        denom = ghi - glo
        if abs(denom) > 1e-300:
            cand = (lo * ghi - hi * glo) / denom
        else:
            cand = 0.5 * (lo + hi)
        span = hi - lo
        if not (lo + 0.05 * span <= cand <= hi - 0.05 * span):
            cand = 0.5 * (lo + hi)
        f, g, payload = probe(cand)
        if not np.isfinite(f):
            hi, ghi = cand, 1.0
            continue
        if _wolfe_ok(f0, g0, f, g, cand, cfg):
            return cand, f, payload, evals, True
        if f < f0 and (best is None or f < best[1]):
            best = (cand, f, payload)
        if g >= 0.0 or f > f0 + eps_k:
            hi, ghi = cand, g
        else:
            lo, glo = cand, g
        if span < 1e-14 * max(1.0, abs(alpha0)):
            break
    if best is not None:
        return best[0], best[1], best[2], evals, True
    return None


def synthesize(
    sys: DdaeSystem, bindings, start=None, config: SynthesisConfig | None = None
) -> SynthesisResult:
    """Minimize the squared H2 norm over the bound parameters with BFGS.

    Parameters
    ----------
    sys : DdaeSystem
    bindings : sequence of ParameterBinding
        The free parameters (with optional box bounds).
    start : optional sequence of float
        Starting values; defaults to the binding values.
    config : SynthesisConfig

    Returns
    -------
    SynthesisResult
        Best-found parameter values, the H2 result there, the iteration
        trace, and a verdict in {converged, max-iters, line-search-failure}.

    Raises
    ------
    H2TauError
        If the objective is infinite at the starting point.
    """
    cfg = config or SynthesisConfig()
    bindings = list(bindings)
    names = tuple(b.name for b in bindings)
    x = np.array(start if start is not None else extract_parameters(sys, bindings), dtype=float)
    trace = SynthesisTrace()

    n_evals = 0

    def eval_fg(values):
        nonlocal n_evals
        n_evals += 1
        return _evaluate(sys, bindings, values, cfg.degree, True)

    f, g, h2 = eval_fg(x)
    if not np.isfinite(f):
        raise H2TauError(
            "objective infinite at the starting point; check diagnostics first"
        )
    best = (x.copy(), f, h2)
    dim = len(x)
    H = np.eye(dim) / max(np.linalg.norm(g), 1e-12)
    trace.record(0, x, f, np.max(np.abs(g)) if dim else 0.0, 0.0)

    verdict = "max-iters"
    for it in range(1, cfg.max_iters + 1):
        gnorm = np.max(np.abs(g)) if dim else 0.0
        if gnorm <= cfg.grad_tol:
            verdict = "converged"
            break
        d = -H @ g
        if d @ g >= 0.0:  # safeguard against a corrupted metric
            H = np.eye(dim) / max(np.linalg.norm(g), 1e-12)
            d = -H @ g
        slope0 = float(d @ g)

        def phi(alpha, _d=d, _x=x):
            xa = _x + alpha * _d
            fval, grad, res = eval_fg(xa)
            if not np.isfinite(fval):
                return np.inf, np.nan, None
            return fval, float(grad @ _d), (xa, grad, res)

        alpha0 = 1.0 if it > 1 else min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-12))
        out = _line_search(phi, f, slope0, alpha0, cfg)
        if out is None:
            verdict = "line-search-failure"
            break
        alpha, f_new, payload, evals, _ = out
        x_new, g_new, h2_new = payload
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            rho_b = 1.0 / sy
            I = np.eye(dim)
            H = (I - rho_b * np.outer(s, y)) @ H @ (I - rho_b * np.outer(y, s)) + rho_b * np.outer(
                s, s
            )
        x, f, g, h2 = x_new, f_new, g_new, h2_new
        if f < best[1]:
            best = (x.copy(), f, h2)
        trace.record(it, x, f, np.max(np.abs(g)), alpha)

    trace.verdict = verdict
    x_best, f_best, h2_best = best
    return SynthesisResult(
        names=names,
        values=x_best,
        norm=float(np.sqrt(max(f_best, 0.0))),
        h2=h2_best,
        trace=trace,
        verdict=verdict,
        n_evals=n_evals,
    )
