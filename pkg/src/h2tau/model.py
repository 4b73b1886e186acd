"""Delay differential-algebraic systems, parameter bindings, and the built-in
example corpus.

A system is

    E x'(t) = sum_k A_k x(t - tau_k) + B v(t),      z(t) = C x(t),

with ``tau_0 = 0`` implicit and ``0 < tau_1 < ... < tau_m`` strict.  The
leading matrix ``E`` may be singular.  Systems are immutable; parameter
updates produce new systems.

All indices (matrix entries, delay indices) are 0-based throughout the code
and the JSON schema; ``delay_index`` 0 refers to the undelayed matrix A_0 and
``delay_index`` k >= 1 to the matrix at ``delays[k-1]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import DelayOrderingError, ModelInputError

__all__ = [
    "DdaeSystem",
    "ParameterBinding",
    "apply_parameters",
    "extract_parameters",
    "with_values",
    "transfer",
    "build_example",
    "list_examples",
    "load_system",
    "dump_system",
    "system_to_dict",
    "system_from_dict",
]


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DdaeSystem:
    """Semi-explicit DDAE with m discrete delays.

    Attributes
    ----------
    E : (n, n) ndarray
    A : tuple of (n, n) ndarrays, length m + 1
        ``A[0]`` acts on the present state, ``A[k]`` on ``x(t - delays[k-1])``.
    B : (n, p) ndarray
    C : (q, n) ndarray
    delays : tuple of float, strictly increasing, all positive
    """

    E: np.ndarray
    A: tuple
    B: np.ndarray
    C: np.ndarray
    delays: tuple

    def __post_init__(self):
        E = _frozen(self.E)
        A = tuple(_frozen(Ak) for Ak in self.A)
        B = _frozen(self.B)
        C = _frozen(self.C)
        delays = tuple(float(t) for t in self.delays)
        n = E.shape[0]
        if E.ndim != 2 or E.shape != (n, n):
            raise ModelInputError(f"E must be square, got shape {E.shape}")
        if len(A) != len(delays) + 1:
            raise ModelInputError(
                f"need {len(delays) + 1} A matrices for {len(delays)} delays, got {len(A)}"
            )
        for k, Ak in enumerate(A):
            if Ak.shape != (n, n):
                raise ModelInputError(f"A[{k}] has shape {Ak.shape}, expected {(n, n)}")
        if B.ndim != 2 or B.shape[0] != n:
            raise ModelInputError(f"B must be n x p with n = {n}, got shape {B.shape}")
        if C.ndim != 2 or C.shape[1] != n:
            raise ModelInputError(f"C must be q x n with n = {n}, got shape {C.shape}")
        for name, mat in (("E", E), ("B", B), ("C", C), *((f"A[{k}]", Ak) for k, Ak in enumerate(A))):
            if not np.all(np.isfinite(mat)):
                raise ModelInputError(f"{name} contains non-finite entries")
        if any(t <= 0.0 for t in delays):
            raise DelayOrderingError(f"delays must be positive, got {delays}")
        if any(t2 <= t1 for t1, t2 in zip(delays, delays[1:])):
            raise DelayOrderingError(f"delays must be strictly increasing, got {delays}")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "delays", delays)

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]

    @property
    def m(self) -> int:
        return len(self.delays)


@dataclass(frozen=True)
class ParameterBinding:
    """A named scalar parameter bound to matrix entries and/or a delay.

    Each target is a tuple: ``("A", k, i, j, coeff)``, ``("B", i, j, coeff)``,
    ``("C", i, j, coeff)``, or ``("delay", k)``; the bound entry equals
    ``coeff * value`` and the bound delay equals ``value``.
    """

    name: str
    targets: tuple
    value: float
    bounds: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(tuple(t) for t in self.targets))
        object.__setattr__(self, "value", float(self.value))
        if self.bounds is not None:
            lo, hi = self.bounds
            object.__setattr__(self, "bounds", (float(lo), float(hi)))
        for t in self.targets:
            if t[0] not in ("A", "B", "C", "delay"):
                raise ModelInputError(f"unknown binding target kind {t[0]!r}")


def with_values(bindings, values) -> list:
    """Return copies of ``bindings`` with their values replaced."""
    values = np.asarray(values, dtype=float)
    if values.shape != (len(bindings),):
        raise ModelInputError(
            f"got {values.shape[0] if values.ndim else 'scalar'} values for {len(bindings)} bindings"
        )
    return [replace(b, value=float(v)) for b, v in zip(bindings, values)]


def _check_targets(sys: DdaeSystem, bindings) -> None:
    seen = set()
    for b in bindings:
        for t in b.targets:
            if t[0] == "A":
                _, k, i, j, _ = t
                if not (0 <= k <= sys.m and 0 <= i < sys.n and 0 <= j < sys.n):
                    raise ModelInputError(f"binding {b.name!r}: A target {t} out of range")
                key = ("A", k, i, j)
            elif t[0] == "B":
                _, i, j, _ = t
                if not (0 <= i < sys.n and 0 <= j < sys.p):
                    raise ModelInputError(f"binding {b.name!r}: B target {t} out of range")
                key = ("B", i, j)
            elif t[0] == "C":
                _, i, j, _ = t
                if not (0 <= i < sys.q and 0 <= j < sys.n):
                    raise ModelInputError(f"binding {b.name!r}: C target {t} out of range")
                key = ("C", i, j)
            else:
                _, k = t
                if not 0 <= k < sys.m:
                    raise ModelInputError(f"binding {b.name!r}: delay index {k} out of range")
                key = ("delay", k)
            if key in seen:
                raise ModelInputError(f"target {key} bound by more than one binding/target")
            seen.add(key)


def apply_parameters(sys: DdaeSystem, bindings, values=None) -> DdaeSystem:
    """Write binding values into the system matrices and delays.

    Parameters
    ----------
    sys : DdaeSystem
    bindings : sequence of ParameterBinding
    values : optional sequence of float
        Overrides the values stored in the bindings (same order).

    Returns
    -------
    DdaeSystem
        New system with each matrix target set to ``coefficient * value`` and
        each delay target set to ``value``.

    Raises
    ------
    DelayOrderingError
        If the resulting delays are not positive and strictly increasing.
    """
    _check_targets(sys, bindings)
    if values is not None:
        bindings = with_values(bindings, values)
    A = [Ak.copy() for Ak in sys.A]
    B = sys.B.copy()
    C = sys.C.copy()
    delays = list(sys.delays)
    for b in bindings:
        for t in b.targets:
            if t[0] == "A":
                _, k, i, j, coeff = t
                A[k][i, j] = coeff * b.value
            elif t[0] == "B":
                _, i, j, coeff = t
                B[i, j] = coeff * b.value
            elif t[0] == "C":
                _, i, j, coeff = t
                C[i, j] = coeff * b.value
            else:
                delays[t[1]] = b.value
    return DdaeSystem(sys.E, tuple(A), B, C, tuple(delays))


def extract_parameters(sys: DdaeSystem, bindings) -> np.ndarray:
    """Read the current parameter values back out of a system.

    Uses the first target of each binding; exact inverse of
    ``apply_parameters`` for consistently bound systems.
    """
    out = np.empty(len(bindings))
    for idx, b in enumerate(bindings):
        t = b.targets[0]
        if t[0] == "A":
            _, k, i, j, coeff = t
            out[idx] = sys.A[k][i, j] / coeff
        elif t[0] == "B":
            _, i, j, coeff = t
            out[idx] = sys.B[i, j] / coeff
        elif t[0] == "C":
            _, i, j, coeff = t
            out[idx] = sys.C[i, j] / coeff
        else:
            out[idx] = sys.delays[t[1]]
    return out


def transfer(sys: DdaeSystem, s):
    """Exact transfer function ``G(s) = C (sE - sum_k A_k e^(-tau_k s))^-1 B``.

    Parameters
    ----------
    s : complex or array of complex

    Returns
    -------
    ndarray
        Shape (q, p) for scalar ``s``, else ``s.shape + (q, p)``.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=complex))
    shape = s_arr.shape
    s_flat = s_arr.ravel()
    pencil = s_flat[:, None, None] * sys.E - sys.A[0]
    for tau, Ak in zip(sys.delays, sys.A[1:]):
        pencil = pencil - np.exp(-tau * s_flat)[:, None, None] * Ak
    try:
        sol = np.linalg.solve(pencil, np.broadcast_to(sys.B.astype(complex), (s_flat.size, sys.n, sys.p)))
    except np.linalg.LinAlgError as exc:
        from .errors import CharacteristicRootError

        raise CharacteristicRootError(f"transfer function singular at s in {s!r}") from exc
    out = sys.C @ sol
    if np.isscalar(s) or np.asarray(s).ndim == 0:
        return out[0]
    return out.reshape(shape + (sys.q, sys.p))


# ---------------------------------------------------------------------------
# Example corpus
# ---------------------------------------------------------------------------

_EXAMPLE_TAGS = (
    "conv-sys",
    "intro-feedthrough",
    "rdde-1",
    "rdde-2",
    "rdde-3",
    "ndde-1",
    "ndde-2",
)


def list_examples() -> tuple:
    """Tags accepted by :func:`build_example`."""
    return _EXAMPLE_TAGS


def _example_conv_sys(delta):
    if delta is None:
        delta = (1, 1, 0, 0)
    delta = tuple(int(d) for d in delta)
    if len(delta) != 4 or any(d not in (0, 1) for d in delta):
        raise ModelInputError(f"conv-sys needs a 0/1 switch vector of length 4, got {delta}")
    dr1, dr2, dn1, dn2 = delta
    E = np.block([[np.eye(2), np.zeros((2, 2))], [np.eye(2), np.zeros((2, 2))]])
    A0 = np.block(
        [[np.array([[-5.0, 1.0], [3.0, 8.0]]), np.zeros((2, 2))], [np.zeros((2, 2)), np.eye(2)]]
    )
    ret1 = np.array([[-2.0, 0.0], [-2.0, 1.0]])
    neu1 = np.array([[-0.2, 0.1], [0.0, -0.1]])
    A_at_1 = np.block([[dr1 * ret1, dn1 * neu1], [np.zeros((2, 4))]])
    A_at_19 = -np.block([[dr2 * np.eye(2), 0.1 * dn2 * np.eye(2)], [np.zeros((2, 4))]])
    B = np.array([[1.0], [1.0], [0.0], [0.0]])
    C = np.array([[1.0, 1.0, 0.0, 0.0]])
    # Only carry delays whose coefficient matrix is actually switched on, so
    # single-delay configurations keep their delay at the basis endpoint.
    delays, A = [], [A0]
    if dr1 or dn1:
        delays.append(1.0)
        A.append(A_at_1)
    if dr2 or dn2:
        delays.append(1.9)
        A.append(A_at_19)
    return DdaeSystem(E, tuple(A), B, C, tuple(delays)), []


def _example_intro_feedthrough(taus):
    if taus is None:
        taus = (1.0, 2.0, 3.0)
    if len(taus) != 3:
        raise ModelInputError(f"intro-feedthrough needs three delays, got {taus}")
    t1, t2, t3 = (float(t) for t in taus)
    if not 0 < t1 < t2 < t3:
        raise DelayOrderingError(f"intro-feedthrough delays must be increasing, got {taus}")
    E = np.zeros((4, 4))
    A0 = np.eye(4)
    A1 = np.zeros((4, 4))
    A1[0, 2] = -1.0
    A2 = np.zeros((4, 4))
    A2[2, 3] = -1.0
    A3 = np.zeros((4, 4))
    A3[1, 3] = -1.0
    B = np.array([[0.0], [0.0], [0.0], [-1.0]])
    C = np.array([[1.0, 1.0, 0.0, 0.0]])
    bindings = [
        ParameterBinding("tau1", (("delay", 0),), t1),
        ParameterBinding("tau2", (("delay", 1),), t2),
        ParameterBinding("tau3", (("delay", 2),), t3),
    ]
    return DdaeSystem(E, (A0, A1, A2, A3), B, C, (t1, t2, t3)), bindings


def _example_rdde_1():
    E = np.diag([1.0, 1.0, 1.0, 0.0])
    A0 = np.array(
        [
            [-0.08, -0.03, 0.2, 0.0],
            [0.2, -0.04, -0.005, 0.0],
            [-0.06, -0.2, -0.07, 0.0],
            [0.472, 0.505, 0.603, -1.0],
        ]
    )
    A1 = np.zeros((4, 4))
    A1[0, 3] = -0.1
    A1[1, 3] = -0.2
    A1[2, 3] = 0.1
    B = np.vstack([np.eye(3), np.zeros((1, 3))])
    C = np.hstack([np.eye(3), np.zeros((3, 1))])
    bindings = [
        ParameterBinding("p1", (("A", 0, 3, 0, 1.0),), 0.472),
        ParameterBinding("p2", (("A", 0, 3, 1, 1.0),), 0.505),
        ParameterBinding("p3", (("A", 0, 3, 2, 1.0),), 0.603),
    ]
    return DdaeSystem(E, (A0, A1), B, C, (5.0,)), bindings


def _example_rdde_2():
    nu, dmp, b = 17.6, 0.0128, 31.0
    E = np.diag([1.0, 1.0, 0.0])
    A0 = np.array([[0.0, 1.0, 0.0], [-nu**2, -2 * dmp * nu, b], [-22.57, 0.0, -1.0]])
    A1 = np.zeros((3, 3))
    A1[2, 0] = 3.0
    B = np.array([[0.0], [b], [0.0]])
    C = np.array([[1.0, 0.0, 0.0]])
    bindings = [
        ParameterBinding("tau", (("delay", 0),), 0.03),
        ParameterBinding("k_r", (("A", 1, 2, 0, 1.0),), 3.0),
    ]
    return DdaeSystem(E, (A0, A1), B, C, (0.03,)), bindings


def _example_rdde_3():
    A0_full = np.array(
        [
            [-4.93, -1.01, 0.0, 0.0],
            [-3.20, -5.30, -12.8, 0.0],
            [6.40, 0.347, -32.5, -1.04],
            [0.0, 0.833, 11.0, -3.96],
        ]
    )
    A1_full = np.diag([1.92, 1.92, 1.87, 0.724])
    B_full = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    C_full = np.array([[1.0, 1.0, 1.0, 1.0]])
    A0r = np.array([[-3.0, -1.0], [-3.0, -2.0]])
    A1r = np.array([[1.0, 0.0], [2.0, 0.0]])
    Br = np.array([[1.6, 0.3], [0.15, 0.7]])
    Cr = np.array([[0.7, -0.7]])
    z2 = np.zeros((4, 2))
    E = np.eye(6)
    A0 = np.block([[A0_full, z2], [z2.T, A0r]])
    A1 = np.block([[A1_full, z2], [z2.T, A1r]])
    B = np.vstack([B_full, Br])
    C = np.hstack([C_full, -Cr])
    bindings = []
    for i in range(2):
        for j in range(2):
            bindings.append(
                ParameterBinding(f"a0r_{i + 1}{j + 1}", (("A", 0, 4 + i, 4 + j, 1.0),), A0r[i, j])
            )
    for i in range(2):
        for j in range(2):
            bindings.append(
                ParameterBinding(f"a1r_{i + 1}{j + 1}", (("A", 1, 4 + i, 4 + j, 1.0),), A1r[i, j])
            )
    for i in range(2):
        for j in range(2):
            bindings.append(
                ParameterBinding(f"br_{i + 1}{j + 1}", (("B", 4 + i, j, 1.0),), Br[i, j])
            )
    for j in range(2):
        bindings.append(ParameterBinding(f"cr_{j + 1}", (("C", 0, 4 + j, -1.0),), Cr[0, j]))
    return DdaeSystem(E, (A0, A1), B, C, (0.1,)), bindings


def _example_ndde_1():
    E = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    A0 = np.array([[-1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
    A1 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    B = np.array([[0.0], [0.0], [1.0]])
    C = np.array([[1.0, 0.0, 0.0]])
    bindings = [
        ParameterBinding("p1", (("A", 1, 2, 1, 1.0),), 0.0),
        ParameterBinding("p2", (("A", 1, 2, 0, 1.0),), -1.0),
    ]
    return DdaeSystem(E, (A0, A1), B, C, (1.0,)), bindings


def _example_ndde_2():
    xi, p1, p2 = 0.2, 0.5, -20.0
    E = np.zeros((5, 5))
    E[0, 1] = 1.0
    E[1, 0] = 1.0
    E[2, 1] = 1.0
    A0 = np.array(
        [
            [-1.0, -2 * xi, 0.0, p1, p2],
            [0.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, -1.0],
        ]
    )
    # Delays stored in increasing order: the derivative measurement acts at
    # 0.1 and the acceleration measurement at 0.2.
    A_at_01 = np.zeros((5, 5))
    A_at_01[4, 1] = 1.0
    A_at_02 = np.zeros((5, 5))
    A_at_02[3, 2] = 1.0
    B = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    C = np.array([[1.0, 0.0, 0.0, 0.0, 0.0]])
    bindings = [
        ParameterBinding("xi", (("A", 0, 0, 1, -2.0),), xi),
        ParameterBinding("p1", (("A", 0, 0, 3, 1.0),), p1),
        ParameterBinding("p2", (("A", 0, 0, 4, 1.0),), p2),
        ParameterBinding("tau1", (("delay", 1),), 0.2),
        ParameterBinding("tau2", (("delay", 0),), 0.1),
    ]
    return DdaeSystem(E, (A0, A_at_01, A_at_02), B, C, (0.1, 0.2)), bindings


def build_example(tag: str, delta=None, taus=None):
    """Construct a corpus system by tag.

    Parameters
    ----------
    tag : str
        One of ``conv-sys``, ``intro-feedthrough``, ``rdde-1``, ``rdde-2``,
        ``rdde-3``, ``ndde-1``, ``ndde-2``.
    delta : optional length-4 0/1 sequence
        conv-sys block switches ``(retarded@1, retarded@1.9, neutral@1,
        neutral@1.9)``; delays with all blocks off are dropped.
    taus : optional length-3 sequence
        intro-feedthrough delays.

    Returns
    -------
    (DdaeSystem, list of ParameterBinding)
    """
    if tag == "conv-sys":
        return _example_conv_sys(delta)
    if delta is not None:
        raise ModelInputError(f"--delta only applies to conv-sys, not {tag!r}")
    if tag == "intro-feedthrough":
        return _example_intro_feedthrough(taus)
    if taus is not None:
        raise ModelInputError(f"delay triples only apply to intro-feedthrough, not {tag!r}")
    builders = {
        "rdde-1": _example_rdde_1,
        "rdde-2": _example_rdde_2,
        "rdde-3": _example_rdde_3,
        "ndde-1": _example_ndde_1,
        "ndde-2": _example_ndde_2,
    }
    if tag not in builders:
        raise ModelInputError(f"unknown example tag {tag!r}; known: {', '.join(_EXAMPLE_TAGS)}")
    return builders[tag]()


# ---------------------------------------------------------------------------
# JSON system description
# ---------------------------------------------------------------------------


def _target_to_dict(t):
    if t[0] == "A":
        return {"matrix": "A", "delay_index": t[1], "row": t[2], "col": t[3], "coefficient": t[4]}
    if t[0] in ("B", "C"):
        return {"matrix": t[0], "row": t[1], "col": t[2], "coefficient": t[3]}
    return {"delay": t[1]}


def _target_from_dict(d):
    try:
        if "delay" in d:
            return ("delay", int(d["delay"]))
        mat = d["matrix"]
        coeff = float(d.get("coefficient", 1.0))
        if mat == "A":
            return ("A", int(d["delay_index"]), int(d["row"]), int(d["col"]), coeff)
        if mat in ("B", "C"):
            return (mat, int(d["row"]), int(d["col"]), coeff)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelInputError(f"malformed binding target {d!r}") from exc
    raise ModelInputError(f"malformed binding target {d!r}")


def system_to_dict(sys: DdaeSystem, bindings=()) -> dict:
    return {
        "n": sys.n,
        "p": sys.p,
        "q": sys.q,
        "E": sys.E.tolist(),
        "A": [{"delay_index": k, "matrix": Ak.tolist()} for k, Ak in enumerate(sys.A)],
        "B": sys.B.tolist(),
        "C": sys.C.tolist(),
        "delays": list(sys.delays),
        "parameters": [
            {
                "name": b.name,
                "value": b.value,
                **({"bounds": list(b.bounds)} if b.bounds is not None else {}),
                "targets": [_target_to_dict(t) for t in b.targets],
            }
            for b in bindings
        ],
    }


def system_from_dict(data: dict):
    """Parse the JSON system schema; returns ``(DdaeSystem, bindings)``."""
    try:
        n = int(data["n"])
        p = int(data["p"])
        q = int(data["q"])
        delays = [float(t) for t in data.get("delays", [])]
        E = np.array(data["E"], dtype=float)
        A = [np.zeros((n, n)) for _ in range(len(delays) + 1)]
        for entry in data["A"]:
            k = int(entry["delay_index"])
            if not 0 <= k <= len(delays):
                raise ModelInputError(f"A delay_index {k} out of range for {len(delays)} delays")
            A[k] = np.array(entry["matrix"], dtype=float)
        B = np.array(data["B"], dtype=float)
        C = np.array(data["C"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelInputError(f"malformed system description: {exc}") from exc
    if B.shape != (n, p):
        raise ModelInputError(f"B has shape {B.shape}, header says {(n, p)}")
    if C.shape != (q, n):
        raise ModelInputError(f"C has shape {C.shape}, header says {(q, n)}")
    sys = DdaeSystem(E, tuple(A), B, C, tuple(delays))
    bindings = []
    for bd in data.get("parameters", []):
        try:
            bindings.append(
                ParameterBinding(
                    name=str(bd["name"]),
                    targets=tuple(_target_from_dict(t) for t in bd["targets"]),
                    value=float(bd["value"]),
                    bounds=tuple(bd["bounds"]) if bd.get("bounds") is not None else None,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelInputError(f"malformed parameter entry {bd!r}") from exc
    _check_targets(sys, bindings)
    return sys, bindings


def load_system(path):
    """Read a system-description JSON file; returns ``(DdaeSystem, bindings)``."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ModelInputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelInputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    return system_from_dict(data)


def dump_system(sys: DdaeSystem, bindings=(), path=None) -> str:
    """Serialize to the JSON schema; writes ``path`` if given."""
    text = json.dumps(system_to_dict(sys, bindings), indent=2) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
