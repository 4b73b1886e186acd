"""Command-line front end.

Subcommands
-----------
check    finiteness diagnostics (index, stability, feedthrough family)
norm     H2 norm of a system at one discretization degree
oracle   frequency-domain quadrature reference value
sweep    H2 values over a degree range with fitted convergence rates
grad     analytic gradient vs. central finite differences
synth    BFGS minimization of the squared H2 norm over bound parameters
example  list built-in systems or dump one as JSON

Exit codes: 0 success, 1 infinite-strong-H2 / infeasible, 2 input error,
3 numerical failure.  Set H2TAU_WORKERS to parallelize sweep degrees.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .errors import (
    CharacteristicRootError,
    DefectiveEigenproblemError,
    DelayOrderingError,
    DifferentiationIndexError,
    FeedthroughError,
    H2TauError,
    LyapunovError,
    ModelInputError,
    NotStronglyStableError,
    OracleDivergenceError,
    ReductionError,
    UnstableError,
)
from .model import (
    apply_parameters,
    build_example,
    dump_system,
    extract_parameters,
    list_examples,
    load_system,
    with_values,
)
from .diagnostics import feedthrough_family_test, run_diagnostics
from .reduction import standard_form
from .h2core import (
    compute_h2,
    convergence_study,
    h2_quadrature_oracle,
    study_to_csv,
)
from .sensitivity import fd_check
from .synthesis import SynthesisConfig, synthesize, trace_to_csv

_INPUT_ERRORS = (ModelInputError,)
_INFEASIBLE_ERRORS = (
    DelayOrderingError,
    DifferentiationIndexError,
    NotStronglyStableError,
    FeedthroughError,
    UnstableError,
)
_NUMERICAL_ERRORS = (
    ReductionError,
    LyapunovError,
    DefectiveEigenproblemError,
    CharacteristicRootError,
    OracleDivergenceError,
)

_MODES = {"poly": "polynomial", "spline": "spline"}


# ---------------------------------------------------------------------------
# Flag parsing helpers
# ---------------------------------------------------------------------------


def _parse_floats(text, what, count):
    parts = [p for p in text.split(",") if p.strip() != ""]
    if len(parts) != count:
        raise ModelInputError(f"{what} needs {count} comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ModelInputError(f"{what}: {exc}") from exc


def _parse_degrees(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise ModelInputError(f"--degrees expects start:step:stop, got {text!r}")
    try:
        start, step, stop = (int(p) for p in parts)
    except ValueError as exc:
        raise ModelInputError(f"--degrees: {exc}") from exc
    if step <= 0 or start < 1 or stop < start:
        raise ModelInputError(f"--degrees range {text!r} is empty or decreasing")
    return list(range(start, stop + 1, step))


def _parse_bound(text):
    name, sep, spec_part = text.partition("=")
    lo_s, sep2, hi_s = spec_part.partition(":")
    if not sep or not sep2 or not name:
        raise ModelInputError(f"--bound expects NAME=LO:HI, got {text!r}")
    try:
        lo = float(lo_s) if lo_s.strip() else -np.inf
        hi = float(hi_s) if hi_s.strip() else np.inf
    except ValueError as exc:
        raise ModelInputError(f"--bound {text!r}: {exc}") from exc
    if not lo < hi:
        raise ModelInputError(f"--bound {text!r}: lower bound must be below upper")
    return name, (lo, hi)


def _load(args):
    """Resolve --system/--example plus --delta/--taus/--set into a bound system."""
    if getattr(args, "system", None):
        if getattr(args, "delta", None) or getattr(args, "taus", None):
            raise ModelInputError("--delta/--taus only apply to built-in examples")
        sys_, bindings = load_system(args.system)
    else:
        delta = None
        if getattr(args, "delta", None):
            delta = _parse_floats(args.delta, "--delta", 4)
        taus = None
        if getattr(args, "taus", None):
            taus = _parse_floats(args.taus, "--taus", 3)
        sys_, bindings = build_example(args.example, delta=delta, taus=taus)
    for item in getattr(args, "set", None) or []:
        name, sep, sval = item.partition("=")
        if not sep:
            raise ModelInputError(f"--set expects NAME=VALUE, got {item!r}")
        names = [b.name for b in bindings]
        if name not in names:
            raise ModelInputError(
                f"unknown parameter {name!r}; available: {', '.join(names) or '(none)'}"
            )
        try:
            value = float(sval)
        except ValueError as exc:
            raise ModelInputError(f"--set {item!r}: {exc}") from exc
        bindings = [replace(b, value=value) if b.name == name else b for b in bindings]
    sys_ = apply_parameters(sys_, bindings)
    return sys_, list(bindings)


def _ensure_finite(sys_, args, allow_unstable=False):
    """Run diagnostics and raise the matching infeasibility error on failure.

    Returns the report, or None under --force.  With allow_unstable a
    nonnegative nominal abscissa is tolerated (the evaluation reflects those
    poles); index failures, an essential radius at or above one, and
    feedthrough violations stay fatal.
    """
    if getattr(args, "force", False):
        return None
    report = run_diagnostics(sys_, degree=getattr(args, "degree", 40))
    if report.verdict == "finite-strong-H2":
        return report
    if not report.index_ok:
        print(report.summary(), file=sys.stderr)
        raise DifferentiationIndexError(
            "differentiation index exceeds one; the discretization is not applicable"
        )
    if report.strongly_stable is False:
        roots_only = report.essential_radius is not None and report.essential_radius < 1.0
        if allow_unstable and roots_only:
            # The abscissa check stopped the battery early; finish the
            # feedthrough test, which instability does not excuse.
            ft = feedthrough_family_test(standard_form(sys_))
            if not ft.passed:
                print(report.summary(), file=sys.stderr)
                raise FeedthroughError(
                    f"feedthrough family violated at k = {ft.violating_k}; "
                    "the strong H2 norm is infinite (use --force to evaluate anyway)"
                )
            print(
                f"note: nominal abscissa {report.nominal_abscissa:.6g} >= 0; "
                "unstable poles will be reflected",
                file=sys.stderr,
            )
            return report
        print(report.summary(), file=sys.stderr)
        raise NotStronglyStableError(
            "system is not strongly exponentially stable; the H2 norm is infinite"
        )
    print(report.summary(), file=sys.stderr)
    raise FeedthroughError(
        f"feedthrough family violated at k = {report.violating_k}; "
        "the strong H2 norm is infinite (use --force to evaluate anyway)"
    )


def _write_out(args, text):
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    sys_, _ = _load(args)
    report = run_diagnostics(sys_, degree=args.degree)
    print(report.summary())
    payload = {
        "verdict": report.verdict,
        "index_ok": report.index_ok,
        "nu": report.nu,
        "essential_radius": report.essential_radius,
        "theta_star": None if report.theta_star is None else list(report.theta_star),
        "nominal_abscissa": report.nominal_abscissa,
        "strongly_stable": report.strongly_stable,
        "feedthrough_free": report.feedthrough_free,
        "violating_k": None if report.violating_k is None else list(report.violating_k),
        "violation_norm": report.violation_norm,
        "degree": report.degree,
    }
    _write_out(args, json.dumps(payload, indent=2) + "\n")
    return 0 if report.verdict == "finite-strong-H2" else 1


def cmd_norm(args) -> int:
    sys_, _ = _load(args)
    _ensure_finite(sys_, args)
    res = compute_h2(sys_, degree=args.degree, mode=_MODES[args.mode])
    print(f"H2 norm       : {res.norm:.6g}")
    print(f"squared       : {res.norm_sq:.6g}")
    print(f"degree        : {res.degree} ({res.mode})")
    if res.flipped_poles:
        flips = ", ".join(f"{lam:.6g}" for lam in res.flipped_poles)
        print(f"flipped poles : {len(res.flipped_poles)} [{flips}]")
    else:
        print("flipped poles : none")
    _write_out(
        args,
        json.dumps(
            {
                "h2": res.norm,
                "h2_squared": res.norm_sq,
                "dual_squared": res.dual_norm_sq,
                "degree": res.degree,
                "mode": res.mode,
                "flipped_poles": [repr(lam) for lam in res.flipped_poles],
            },
            indent=2,
        )
        + "\n",
    )
    return 0


def cmd_oracle(args) -> int:
    sys_, _ = _load(args)
    _ensure_finite(sys_, args)
    value = h2_quadrature_oracle(sys_, rel_tol=args.tol)
    print(f"H2 oracle : {value:.6g}  (rel tol {args.tol:.6g})")
    _write_out(args, f"{value:.17g}\n")
    return 0


def cmd_sweep(args) -> int:
    sys_, _ = _load(args)
    report = _ensure_finite(sys_, args, allow_unstable=True)
    degrees = _parse_degrees(args.degrees)
    reference = args.reference
    if reference == "auto":
        stable = report is not None and report.strongly_stable is True
        reference = "oracle" if stable else "refined"
    elif reference not in ("oracle", "self", "refined"):
        try:
            reference = float(reference)
        except ValueError as exc:
            raise ModelInputError(
                "--reference must be 'auto', 'oracle', 'self', 'refined', or a "
                f"number, got {reference!r}"
            ) from exc
    study = convergence_study(sys_, degrees, mode=_MODES[args.mode], reference=reference)
    csv = study_to_csv(study)
    summary = [
        f"reference       : {study.reference:.6g} ({study.reference_kind})",
    ]
    if study.fit_window:
        lo, hi = study.degrees[study.fit_window[0]], study.degrees[study.fit_window[-1]]
        summary.append(f"fit window      : N = {lo} .. {hi} ({len(study.fit_window)} points)")
    else:
        summary.append("fit window      : empty (all errors at the floor)")
    if study.algebraic_order is not None:
        summary.append(
            f"algebraic order : {study.algebraic_order:.6g} (corr {study.algebraic_corr:.4f})"
        )
    if study.geometric_rate is not None:
        summary.append(
            f"geometric rate  : {study.geometric_rate:.6g} per degree "
            f"(corr {study.geometric_corr:.4f})"
        )
    if args.out:
        _write_out(args, csv)
        print("\n".join(summary))
    else:
        sys.stdout.write(csv)
        print("\n".join(summary), file=sys.stderr)
    return 0


def cmd_grad(args) -> int:
    sys_, bindings = _load(args)
    if not bindings:
        raise ModelInputError("system declares no parameters to differentiate")
    _ensure_finite(sys_, args)
    report = fd_check(sys_, args.degree, bindings, step=args.step)
    width = max(len(b.name) for b in bindings)
    print(f"{'parameter':<{width}}  {'analytic':>14}  {'central FD':>14}  {'rel err':>10}")
    for name, an, fd, rel in report.table:
        print(f"{name:<{width}}  {an:>14.6g}  {fd:>14.6g}  {rel:>10.3e}")
    print(f"max relative error: {report.max_rel_err:.3e} (step {report.step:.6g})")
    lines = ["name,analytic,fd,rel_err"]
    for name, an, fd, rel in report.table:
        lines.append(f"{name},{an:.17g},{fd:.17g},{rel:.17g}")
    _write_out(args, "\n".join(lines) + "\n")
    return 0


def cmd_synth(args) -> int:
    sys_, bindings = _load(args)
    if args.params:
        wanted = args.params.split(",")
        by_name = {b.name: b for b in bindings}
        missing = [w for w in wanted if w not in by_name]
        if missing:
            raise ModelInputError(
                f"unknown parameter(s) {', '.join(missing)}; "
                f"available: {', '.join(by_name)}"
            )
        bindings = [by_name[w] for w in wanted]
    if not bindings:
        raise ModelInputError("system declares no parameters to optimize")
    for spec_part in args.bound or []:
        name, bounds = _parse_bound(spec_part)
        names = [b.name for b in bindings]
        if name not in names:
            raise ModelInputError(f"--bound {name!r}: not an optimized parameter")
        bindings = [replace(b, bounds=bounds) if b.name == name else b for b in bindings]
    _ensure_finite(sys_, args)
    cfg = SynthesisConfig(degree=args.degree, max_iters=args.max_iters, grad_tol=args.tol)
    result = synthesize(sys_, bindings, config=cfg)
    print(f"verdict    : {result.verdict}")
    print(f"H2 norm    : {result.norm:.6g}")
    print(f"iterations : {len(result.trace.rows) - 1}")
    print(f"evaluations: {result.n_evals}")
    for name, val in zip(result.names, result.values):
        print(f"  {name} = {val:.6g}")
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace_to_csv(result.trace))
    _write_out(
        args,
        json.dumps(
            {
                "verdict": result.verdict,
                "h2": result.norm,
                "parameters": {n: v for n, v in zip(result.names, result.values)},
                "evaluations": result.n_evals,
            },
            indent=2,
        )
        + "\n",
    )
    return 0


def cmd_example(args) -> int:
    if not args.example and not args.system:
        for tag in list_examples():
            print(tag)
        return 0
    sys_, bindings = _load(args)
    text = dump_system(sys_, bindings)
    if args.out:
        _write_out(args, text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def _add_source_flags(p, required=True):
    group = p.add_mutually_exclusive_group(required=required)
    group.add_argument("--system", metavar="PATH", help="system-description JSON file")
    group.add_argument(
        "--example", metavar="TAG", help="built-in example tag (run `example` for the list)"
    )
    p.add_argument(
        "--delta",
        metavar="D1,D2,D3,D4",
        help="conv-sys block switches (retarded@1, retarded@1.9, neutral@1, neutral@1.9)",
    )
    p.add_argument("--taus", metavar="T1,T2,T3", help="intro-feedthrough delay triple")
    p.add_argument(
        "--set",
        action="append",
        metavar="NAME=VALUE",
        help="override a declared parameter (repeatable)",
    )


def _add_eval_flags(p, mode=True):
    p.add_argument("--degree", type=int, default=40, metavar="N", help="basis degree (default 40)")
    if mode:
        p.add_argument(
            "--mode", choices=sorted(_MODES), default="poly", help="basis family (default poly)"
        )
    p.add_argument("--out", metavar="PATH", help="write machine-readable output here")
    p.add_argument("--force", action="store_true", help="skip the finiteness diagnostics")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="h2tau",
        description="H2 norms and H2-optimal design for delay differential algebraic systems.",
        epilog="Set H2TAU_WORKERS to parallelize sweep evaluations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="finiteness diagnostics")
    _add_source_flags(p)
    p.add_argument("--degree", type=int, default=40, metavar="N")
    p.add_argument("--out", metavar="PATH", help="write a JSON report here")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("norm", help="H2 norm at one degree")
    _add_source_flags(p)
    _add_eval_flags(p)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("oracle", help="quadrature reference value")
    _add_source_flags(p)
    p.add_argument("--degree", type=int, default=40, metavar="N", help="diagnostics degree")
    p.add_argument("--tol", type=float, default=1e-8, help="relative tolerance (default 1e-8)")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--force", action="store_true", help="skip the finiteness diagnostics")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="convergence study over a degree range")
    _add_source_flags(p)
    _add_eval_flags(p)
    p.add_argument(
        "--degrees",
        default="8:2:60",
        metavar="START:STEP:STOP",
        help="inclusive degree range (default 8:2:60)",
    )
    p.add_argument(
        "--reference",
        default="auto",
        metavar="REF",
        help="'auto', 'oracle', 'self', 'refined', or an explicit value "
        "(auto: oracle when exponentially stable, else a high-degree value)",
    )
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("grad", help="analytic gradient vs. finite differences")
    _add_source_flags(p)
    _add_eval_flags(p, mode=False)
    p.add_argument("--step", type=float, default=1e-6, help="FD base step (default 1e-6)")
    p.set_defaults(func=cmd_grad)

    p = sub.add_parser("synth", help="H2-optimal parameter synthesis")
    _add_source_flags(p)
    _add_eval_flags(p, mode=False)
    p.add_argument(
        "--params", metavar="NAME[,NAME...]", help="optimize only these parameters"
    )
    p.add_argument(
        "--bound",
        action="append",
        metavar="NAME=LO:HI",
        help="box bounds on a parameter; empty side means unbounded (repeatable)",
    )
    p.add_argument("--tol", type=float, default=1e-6, help="gradient sup-norm stop (default 1e-6)")
    p.add_argument("--max-iters", type=int, default=200, help="BFGS iteration cap (default 200)")
    p.add_argument("--trace", metavar="PATH", help="write the iteration trace CSV here")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("example", help="list built-in systems or dump one as JSON")
    _add_source_flags(p, required=False)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_example)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _INFEASIBLE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except H2TauError as exc:
        # Remaining package errors signal infeasibility (e.g. an infinite
        # objective at the synthesis start point).
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
