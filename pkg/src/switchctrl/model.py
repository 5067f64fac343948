"""Switch-system data model: modes, jump rates, transition kernel, per-mode
linear coefficients, plus validation, built-in models and JSON model files.

A system couples a pure-jump mode process (rates ``lam``, kernel ``Q`` with
zero diagonal, at most ``max_jumps`` jumps) with a controlled linear state

    dX = [A(mode) X + B u] dt + jumps (I + C(mode-, theta)) at mode switches,

where the jump integral is compensated.  The drift matrix A is switched off
once the max_jumps-th jump has actually occurred; with max_jumps = 0 no jump
ever occurs and A stays active for the whole horizon.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .subspace import (
    SubspaceError,
    as_matrix,
    eye,
    is_exact_array,
    to_float,
    zeros,
)

__all__ = [
    "ModelFormatError",
    "CEMETERY",
    "ModeTrajectory",
    "concat",
    "SwitchSystem",
    "ValidationIssue",
    "ValidationReport",
    "validate",
    "dual_generator",
    "compensated_drift",
    "builtin",
    "parse_model",
    "load_model",
    "dump_model",
]

CEMETERY = "__cemetery__"


class ModelFormatError(Exception):
    """Model file or parameter set that cannot be interpreted."""


# ---------------------------------------------------------------------------
# mode trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeTrajectory:
    """A finite mode path ((t0, g0), ..., (tn, gn)) with t0 = 0.

    Entries after the horizon are represented by (inf, cemetery) pairs; all
    finite times are strictly increasing.  ``jump_count`` counts the finite
    jumps actually recorded.
    """

    times: tuple
    modes: tuple

    def __post_init__(self):
        if len(self.times) != len(self.modes) or not self.times:
            raise ModelFormatError("trajectory needs matching, nonempty times and modes")
        if self.times[0] != 0:
            raise ModelFormatError("trajectory must start at time 0")
        finite = [t for t in self.times if not math.isinf(t)]
        for a, b in zip(finite, finite[1:]):
            if not b > a:
                raise ModelFormatError("finite jump times must be strictly increasing")
        for t, g in zip(self.times, self.modes):
            if math.isinf(t) != (g == CEMETERY):
                raise ModelFormatError("cemetery entries are exactly the infinite-time entries")
        if any(not math.isinf(t) for t in self.times[len(finite):]):
            raise ModelFormatError("finite entries cannot follow cemetery entries")

    @classmethod
    def start(cls, mode) -> "ModeTrajectory":
        return cls((0.0,), (mode,))

    @property
    def jump_count(self) -> int:
        return sum(1 for t in self.times if not math.isinf(t)) - 1

    @property
    def last_time(self):
        """|e|: the last finite jump time."""
        return self.times[self.jump_count]

    @property
    def last_mode(self):
        return self.modes[self.jump_count]

    def finite_entries(self):
        n = self.jump_count
        return tuple(zip(self.times[: n + 1], self.modes[: n + 1]))


def concat(e: ModeTrajectory, t, mode, horizon=None) -> ModeTrajectory:
    """e + (t, mode): append one jump; requires t > |e| (and t <= horizon if given)."""
    if not t > e.last_time:
        raise ModelFormatError(f"jump time {t} must exceed the trajectory time {e.last_time}")
    if horizon is not None and t > horizon:
        raise ModelFormatError(f"jump time {t} exceeds the horizon {horizon}")
    n = e.jump_count
    return ModeTrajectory(e.times[: n + 1] + (t,), e.modes[: n + 1] + (mode,))


# ---------------------------------------------------------------------------
# the system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SwitchSystem:
    """Immutable switch-system model (all coefficient arrays share one backend)."""

    name: str
    modes: tuple
    rates: np.ndarray              # (p,)
    transition: np.ndarray         # (p, p), zero diagonal, stochastic rows
    A: tuple                       # p matrices, each (N, N)
    B: np.ndarray                  # (N, d)
    C: dict                        # (i, j) -> (N, N); missing pairs are zero
    max_jumps: int
    horizon: object
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {m: i for i, m in enumerate(self.modes)})
        if len(self._index) != len(self.modes):
            raise ModelFormatError("duplicate mode identifiers")

    @property
    def p(self) -> int:
        return len(self.modes)

    @property
    def N(self) -> int:
        return self.B.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]

    @property
    def exact(self) -> bool:
        return is_exact_array(self.B)

    def mode_index(self, mode) -> int:
        try:
            return self._index[mode]
        except KeyError:
            raise ModelFormatError(f"unknown mode {mode!r}") from None

    def c_matrix(self, i: int, j: int) -> np.ndarray:
        got = self.C.get((i, j))
        if got is None:
            return zeros((self.N, self.N), self.exact)
        return got

    def rate(self, i: int):
        return self.rates[i]

    def to_float(self) -> "SwitchSystem":
        if not self.exact:
            return self
        return SwitchSystem(
            name=self.name,
            modes=self.modes,
            rates=to_float(self.rates.reshape(1, -1)).reshape(-1),
            transition=to_float(self.transition),
            A=tuple(to_float(a) for a in self.A),
            B=to_float(self.B),
            C={k: to_float(v) for k, v in self.C.items()},
            max_jumps=self.max_jumps,
            horizon=float(self.horizon),
        )

    def with_overrides(self, max_jumps=None, horizon=None) -> "SwitchSystem":
        out = self
        if max_jumps is not None:
            out = replace(out, max_jumps=int(max_jumps))
        if horizon is not None:
            out = replace(out, horizon=horizon)
        return out


def dual_generator(sys: SwitchSystem, mode) -> np.ndarray:
    """A(mode)^T - lam(mode) * sum_theta Q(mode, theta) (C(mode, theta)^T + I)."""
    i = sys.mode_index(mode)
    out = sys.A[i].T.copy()
    lam = sys.rates[i]
    if lam == 0:
        return out
    n = sys.N
    ident = eye(n, sys.exact)
    for j in range(sys.p):
        q = sys.transition[i, j]
        if q == 0:
            continue
        out = out - (lam * q) * (sys.c_matrix(i, j).T + ident)
    return out


def compensated_drift(sys: SwitchSystem, i: int) -> np.ndarray:
    """A(mode) - lam * sum_theta Q(mode, theta) C(mode, theta): the drift felt
    between jumps once the compensator of the jump measure is folded in."""
    out = sys.A[i].copy()
    lam = sys.rates[i]
    if lam == 0:
        return out
    for j in range(sys.p):
        q = sys.transition[i, j]
        if q == 0:
            continue
        out = out - (lam * q) * sys.c_matrix(i, j)
    return out


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationIssue:
    severity: str            # "error" | "warning"
    location: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple

    @property
    def ok(self) -> bool:
        return not any(i.severity == "error" for i in self.issues)

    def errors(self):
        return [i for i in self.issues if i.severity == "error"]

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "issues": [
                {"severity": i.severity, "location": i.location, "message": i.message}
                for i in self.issues
            ],
        }


def validate(sys: SwitchSystem) -> ValidationReport:
    """Check the standing model assumptions; issues are data, not exceptions."""
    issues: list[ValidationIssue] = []

    def err(loc, msg):
        issues.append(ValidationIssue("error", loc, msg))

    def warn(loc, msg):
        issues.append(ValidationIssue("warning", loc, msg))

    p, n = sys.p, sys.N
    if p < 1:
        err("modes", "at least one mode required")
    if sys.max_jumps < 0:
        err("max_jumps", "jump cap must be nonnegative")
    if not sys.horizon > 0:
        err("horizon", "horizon must be positive")
    if n < 1 or sys.d < 1:
        err("dimensions", "state and control dimensions must be positive")
    if sys.rates.shape != (p,):
        err("rates", f"expected {p} rates")
        return ValidationReport(tuple(issues))
    if sys.transition.shape != (p, p):
        err("transition", f"expected a {p}x{p} matrix")
        return ValidationReport(tuple(issues))
    for i, m in enumerate(sys.modes):
        lam = sys.rates[i]
        if lam < 0:
            err(f"rates[{m}]", "jump rate must be nonnegative")
        elif lam == 0:
            warn(f"rates[{m}]", "zero jump rate: absorbing mode, its transition row is ignored")
        if sys.transition[i, i] != 0:
            err(f"transition[{m},{m}]", "self-transition forbidden")
        row = sys.transition[i, :]
        if any(x < 0 for x in row.tolist()):
            err(f"transition[{m}]", "negative transition probability")
        rowsum = sum(row.tolist())
        if rowsum != 1:
            if lam > 0:
                err(f"transition[{m}]", f"transition row not stochastic (sums to {rowsum})")
            else:
                warn(f"transition[{m}]", "non-stochastic row on an absorbing mode (ignored)")
        if sys.A[i].shape != (n, n):
            err(f"A[{m}]", f"expected {n}x{n}")
    if sys.B.ndim != 2 or sys.B.shape[0] != n:
        err("B", "control matrix rows must match the state dimension")
    for (i, j), c in sys.C.items():
        if c.shape != (n, n):
            err(f"C[{sys.modes[i]},{sys.modes[j]}]", f"expected {n}x{n}")
        if sys.transition[i, j] == 0:
            warn(
                f"C[{sys.modes[i]},{sys.modes[j]}]",
                "jump matrix given for a zero-probability transition: ignored",
            )
    return ValidationReport(tuple(issues))


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------

def builtin(name: str, params: dict | None = None) -> SwitchSystem:
    """Construct one of the built-in models: "example1" or "operon"."""
    if name == "example1":
        if params:
            raise ModelFormatError("example1 takes no parameters")
        return _example1()
    if name == "operon":
        return _operon(params or {})
    raise ModelFormatError(f"unknown builtin model {name!r}")


def _example1() -> SwitchSystem:
    a = [
        as_matrix([[0, 0, 0, 0], [0, 0, 0, 0], [1 + g, 0, 0, 0], [0, 2 - g, 0, 0]], exact=True)
        for g in (0, 1)
    ]
    c = {
        (g, 1 - g): as_matrix(
            [[-1, 0, 0, 0], [0, -1, 0, 0], [g, 0, -1, 0], [0, 1 - g, 0, -1]], exact=True
        )
        for g in (0, 1)
    }
    return SwitchSystem(
        name="example1",
        modes=("0", "1"),
        rates=as_matrix([[1, 1]], exact=True).reshape(-1),
        transition=as_matrix([[0, 1], [1, 0]], exact=True),
        A=tuple(a),
        B=as_matrix([[1, 0], [0, 1], [0, 0], [0, 0]], exact=True),
        C=c,
        max_jumps=2,
        horizon=Fraction(1),
    )


_OPERON_MODES = ("e1", "e2", "e3")
_OPERON_GLOBAL = ("k3", "km3", "k4", "k5")
_OPERON_PER_MODE = ("k8", "k9", "k11")


def _operon(params: dict) -> SwitchSystem:
    """Reduced repressed-operon model: three modes, rates from the reaction
    speeds, bursts on the first species while in mode e3."""
    known = set(_OPERON_GLOBAL) | set(_OPERON_PER_MODE)
    unknown = set(params) - known
    if unknown:
        raise ModelFormatError(f"unknown operon parameters: {sorted(unknown)}")
    missing = known - set(params)
    if missing:
        raise ModelFormatError(f"missing operon parameters: {sorted(missing)}")

    def scalar(v):
        if isinstance(v, str):
            v = Fraction(v)
        if isinstance(v, float):
            return v
        return Fraction(v)

    glob = {k: scalar(params[k]) for k in _OPERON_GLOBAL}
    per = {}
    for k in _OPERON_PER_MODE:
        v = params[k]
        if isinstance(v, dict):
            if set(v) != set(_OPERON_MODES):
                raise ModelFormatError(f"per-mode rate {k} must give all of {_OPERON_MODES}")
            per[k] = {m: scalar(v[m]) for m in _OPERON_MODES}
        else:
            per[k] = {m: scalar(v) for m in _OPERON_MODES}
    for k, v in glob.items():
        if not v > 0:
            raise ModelFormatError(f"reaction speed {k} must be strictly positive")
    for k, by_mode in per.items():
        for m, v in by_mode.items():
            if not v > 0:
                raise ModelFormatError(f"reaction speed {k}({m}) must be strictly positive")

    exact = all(isinstance(v, Fraction) for v in glob.values()) and all(
        isinstance(v, Fraction) for by in per.values() for v in by.values()
    )
    k3, km3, k4, k5 = (glob[k] for k in _OPERON_GLOBAL)
    lam = [k3, km3 + k4, k5]
    q21 = km3 / (km3 + k4)
    q23 = k4 / (km3 + k4)
    transition = [[0, 1, 0], [q21, 0, q23], [1, 0, 0]]

    a_mats = []
    for m in _OPERON_MODES:
        k8, k9, k11 = per["k8"][m], per["k9"][m], per["k11"][m]
        a_mats.append(as_matrix([[-k8, 0, 0], [k8, -k9, 0], [0, k9, -k11]], exact=exact))
    # burst coefficient k7*(mode) = 1 exactly in mode e3
    c = {(2, 0): as_matrix([[0, 0, 0], [1, 0, 0], [0, 0, 0]], exact=exact)}
    return SwitchSystem(
        name="operon",
        modes=_OPERON_MODES,
        rates=as_matrix([lam], exact=exact).reshape(-1),
        transition=as_matrix(transition, exact=exact),
        A=tuple(a_mats),
        B=as_matrix([[1], [0], [0]], exact=exact),
        C=c,
        max_jumps=2,
        horizon=Fraction(1) if exact else 1.0,
    )


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

_SCHEMA_KEYS = {
    "name", "state_dim", "control_dim", "modes", "rates", "transition",
    "A", "B", "C", "max_jumps", "horizon",
}
_REQUIRED_KEYS = _SCHEMA_KEYS - {"name", "C"}


def parse_model(doc: dict) -> SwitchSystem:
    """Build a SwitchSystem from the JSON model-file structure.

    Scalars may be numbers or exact-rational strings "p/q"; any float entry
    switches the whole model to the float backend.
    """
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    unknown = set(doc) - _SCHEMA_KEYS
    if unknown:
        raise ModelFormatError(f"unknown model keys: {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(doc)
    if missing:
        raise ModelFormatError(f"missing model keys: {sorted(missing)}")

    try:
        n = int(doc["state_dim"])
        d = int(doc["control_dim"])
        max_jumps = int(doc["max_jumps"])
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"bad integer field: {exc}") from None
    modes = doc["modes"]
    if not isinstance(modes, list) or not all(isinstance(m, str) for m in modes) or not modes:
        raise ModelFormatError("modes must be a nonempty list of strings")
    modes = tuple(modes)
    p = len(modes)

    exact = _doc_is_exact(doc)

    def mat(entries, shape, where):
        try:
            m = as_matrix(entries, exact=exact)
        except (SubspaceError, ValueError, TypeError) as exc:
            raise ModelFormatError(f"{where}: {exc}") from None
        if m.shape != shape:
            raise ModelFormatError(f"{where}: expected shape {shape}, got {m.shape}")
        return m

    rates_doc = doc["rates"]
    if not isinstance(rates_doc, dict) or set(rates_doc) != set(modes):
        raise ModelFormatError("rates must map every mode to a scalar")
    rates = mat([[rates_doc[m] for m in modes]], (1, p), "rates").reshape(-1)

    transition = mat(doc["transition"], (p, p), "transition")

    a_doc = doc["A"]
    if not isinstance(a_doc, dict) or set(a_doc) != set(modes):
        raise ModelFormatError("A must map every mode to an NxN matrix")
    a = tuple(mat(a_doc[m], (n, n), f"A[{m}]") for m in modes)

    b = mat(doc["B"], (n, d), "B")

    c_doc = doc.get("C", {})
    if not isinstance(c_doc, dict):
        raise ModelFormatError("C must be a mode->mode->matrix mapping")
    c = {}
    index = {m: i for i, m in enumerate(modes)}
    for gm, row in c_doc.items():
        if gm not in index or not isinstance(row, dict):
            raise ModelFormatError(f"C[{gm}]: unknown mode or bad mapping")
        for tm, entries in row.items():
            if tm not in index:
                raise ModelFormatError(f"C[{gm}][{tm}]: unknown mode")
            c[(index[gm], index[tm])] = mat(entries, (n, n), f"C[{gm}][{tm}]")

    horizon = _parse_scalar(doc["horizon"], exact)
    return SwitchSystem(
        name=str(doc.get("name", "model")),
        modes=modes,
        rates=rates,
        transition=transition,
        A=a,
        B=b,
        C=c,
        max_jumps=max_jumps,
        horizon=horizon,
    )


def _doc_is_exact(doc) -> bool:
    def walk(x):
        if isinstance(x, float):
            return False
        if isinstance(x, dict):
            return all(walk(v) for v in x.values())
        if isinstance(x, list):
            return all(walk(v) for v in x)
        return True
    return walk(doc)


def _parse_scalar(v, exact: bool):
    if isinstance(v, str):
        v = Fraction(v)
    if exact:
        return Fraction(v) if not isinstance(v, Fraction) else v
    return float(v)


def load_model(path) -> SwitchSystem:
    """Read a model file; decimal literals are parsed losslessly as rationals."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return loads_model(text)


def loads_model(text: str) -> SwitchSystem:
    try:
        doc = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON: {exc}") from None
    return parse_model(doc)


def _scalar_to_json(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    return float(x)


def _matrix_to_json(m: np.ndarray):
    return [[_scalar_to_json(x) for x in row] for row in m.tolist()]


def dump_model(sys: SwitchSystem) -> dict:
    """Inverse of parse_model (exact scalars become "p/q" strings or ints)."""
    return {
        "name": sys.name,
        "state_dim": sys.N,
        "control_dim": sys.d,
        "modes": list(sys.modes),
        "rates": {m: _scalar_to_json(sys.rates[i]) for i, m in enumerate(sys.modes)},
        "transition": _matrix_to_json(sys.transition),
        "A": {m: _matrix_to_json(sys.A[i]) for i, m in enumerate(sys.modes)},
        "B": _matrix_to_json(sys.B),
        "C": _c_to_json(sys),
        "max_jumps": sys.max_jumps,
        "horizon": _scalar_to_json(sys.horizon),
    }


def _c_to_json(sys: SwitchSystem) -> dict:
    out: dict = {}
    for (i, j), m in sorted(sys.C.items()):
        out.setdefault(sys.modes[i], {})[sys.modes[j]] = _matrix_to_json(m)
    return out
