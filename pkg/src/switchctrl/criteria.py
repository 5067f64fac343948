"""Controllability criteria for switch systems.

The central object is the backward chain of mode-indexed subspaces

    V[M] (any mode)  = ker B^T,
    V[n] (mode g)    = largest subspace of ker B^T that the dual generator of
                       mode g maps into itself plus the images of
                       (C(g, th)^T + I) restricted to V[n+1] (mode th), over
                       the reachable targets th,

computed with the invariant-subspace fixed point from :mod:`.subspace`.  The
system is approximately null-controllable from a mode exactly when the
level-0 space of that mode is trivial; the chain is independent of the time
horizon by construction (no operation here reads it).

Two special-case tests from earlier work are provided as independent
cross-check routes, plus the sufficient test for full approximate
controllability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SwitchSystem, dual_generator
from .subspace import (
    Subspace,
    Tolerance,
    equals,
    eye,
    kernel,
    largest_invariant,
    projector,
)

__all__ = [
    "VChain",
    "Verdict",
    "v_chain",
    "is_null_controllable",
    "approx_controllable_sufficient",
    "criterion_no_noise",
    "criterion_mode_independent",
    "default_tolerance",
    "control_kernel",
]


def default_tolerance(sys: SwitchSystem) -> Tolerance:
    return Tolerance.exact() if sys.exact else Tolerance.floating()


def control_kernel(sys: SwitchSystem, tol: Tolerance | None = None) -> Subspace:
    """ker B^T, the common top level of the chain."""
    tol = tol or default_tolerance(sys)
    return kernel(sys.B.T, tol)


@dataclass(frozen=True)
class VChain:
    """The computed chain.  ``families[j]`` is the mode-indexed family at
    level ``max_jumps - j``; once the family repeats, lower levels are copies
    of ``families[-1]``.  ``stabilized_at`` is the highest level n with
    family(n) == family(n+1), or ``max_jumps`` when no two adjacent computed
    levels coincide."""

    system: SwitchSystem
    families: tuple            # tuple of tuple[Subspace, ...]
    stabilized_at: int
    tolerance: Tolerance

    @property
    def max_jumps(self) -> int:
        return self.system.max_jumps

    def family(self, n: int) -> tuple:
        if not 0 <= n <= self.max_jumps:
            raise ValueError(f"level {n} outside 0..{self.max_jumps}")
        j = self.max_jumps - n
        if j < len(self.families):
            return self.families[j]
        return self.families[-1]

    def level(self, n: int, mode) -> Subspace:
        return self.family(n)[self.system.mode_index(mode)]

    def dims(self, n: int) -> list[int]:
        return [s.dim for s in self.family(n)]


def _c_operators(sys: SwitchSystem, i: int, family: tuple, tol: Tolerance) -> list[np.ndarray]:
    """Operators (C(g,th)^T + I) Pi_{V_th} for the reachable targets th.

    A zero jump rate removes every target (the compensator vanishes), which
    degenerates the level update to plain invariance under A(g)^T.
    """
    lam = sys.rates[i]
    if lam == 0:
        return []
    ident = eye(sys.N, tol.is_exact)
    ops = []
    for j in range(sys.p):
        if sys.transition[i, j] == 0:
            continue
        ops.append((sys.c_matrix(i, j).T + ident) @ projector(family[j]))
    return ops


def v_chain(sys: SwitchSystem, tol: Tolerance | None = None) -> VChain:
    """Compute the chain top-down with early exit at stabilization.

    The family loses total dimension at every non-repeating level, so at most
    N*p + 1 distinct levels are ever computed regardless of max_jumps.
    """
    tol = tol or default_tolerance(sys)
    work = sys if (sys.exact == tol.is_exact) else sys.to_float()
    kerb = control_kernel(work, tol)
    top = tuple(kerb for _ in range(work.p))
    families = [top]
    generators = [dual_generator(work, m) for m in work.modes]
    stabilized_at = sys.max_jumps
    guard = work.N * work.p + 1
    for step in range(1, sys.max_jumps + 1):
        prev = families[-1]
        nxt = tuple(
            largest_invariant(generators[i], _c_operators(work, i, prev, tol), kerb, tol)
            for i in range(work.p)
        )
        if all(equals(a, b, tol) for a, b in zip(nxt, prev)):
            stabilized_at = sys.max_jumps - step
            break
        families.append(nxt)
        if step > guard:
            raise RuntimeError(
                "chain failed to stabilize within the total-dimension bound; "
                "rank tolerance is inconsistent"
            )
    return VChain(system=sys, families=tuple(families), stabilized_at=stabilized_at,
                  tolerance=tol)


@dataclass(frozen=True)
class Verdict:
    """A controllability answer plus the subspace that decides it."""

    property_name: str
    initial_mode: str | None
    answer: bool
    deciding: object            # Subspace, or mode -> Subspace mapping
    chain: VChain | None = None

    def to_json(self) -> dict:
        if isinstance(self.deciding, Subspace):
            deciding = _subspace_json(self.deciding)
        else:
            deciding = {m: _subspace_json(s) for m, s in self.deciding.items()}
        return {
            "property": self.property_name,
            "initial_mode": self.initial_mode,
            "answer": self.answer,
            "deciding_subspace": deciding,
        }


def _subspace_json(s: Subspace) -> dict:
    basis = [[_num(x) for x in row] for row in s.basis.tolist()]
    return {"ambient_dim": s.ambient_dim, "dim": s.dim, "basis_columns": basis}


def _num(x):
    from fractions import Fraction
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    return float(x)


def is_null_controllable(sys: SwitchSystem, initial_mode,
                         chain: VChain | None = None,
                         tol: Tolerance | None = None) -> Verdict:
    """Approximate null-controllability from ``initial_mode``: true exactly
    when the level-0 chain space of that mode is {0}."""
    chain = chain or v_chain(sys, tol)
    deciding = chain.level(0, initial_mode)
    return Verdict(
        property_name="null_controllable",
        initial_mode=initial_mode,
        answer=deciding.dim == 0,
        deciding=deciding,
        chain=chain,
    )


def approx_controllable_sufficient(sys: SwitchSystem,
                                   tol: Tolerance | None = None) -> Verdict:
    """Sufficient (not necessary) test for full approximate controllability:
    for every mode, the largest invariant subspace of ker B^T under the dual
    generator with the (C^T + I)-projections onto ker B^T itself must be
    trivial.  A true answer proves controllability; false is inconclusive."""
    tol = tol or default_tolerance(sys)
    work = sys if (sys.exact == tol.is_exact) else sys.to_float()
    kerb = control_kernel(work, tol)
    top = tuple(kerb for _ in range(work.p))
    per_mode = {}
    for i, m in enumerate(work.modes):
        ops = _c_operators(work, i, top, tol)
        per_mode[m] = largest_invariant(dual_generator(work, m), ops, kerb, tol)
    return Verdict(
        property_name="approx_controllable_sufficient",
        initial_mode=None,
        answer=all(s.dim == 0 for s in per_mode.values()),
        deciding=per_mode,
    )


def criterion_no_noise(sys: SwitchSystem, initial_mode,
                       tol: Tolerance | None = None) -> Verdict:
    """No-noise special case: with C identically zero, test whether the
    largest A(initial_mode)^T-invariant subspace of ker B^T is trivial.

    This single-mode test is a necessary condition for null-controllability
    in general, and equivalent to it when the drift does not depend on the
    mode (given max_jumps >= dim ker B^T + 1) or when no jumps can occur; with
    genuinely mode-dependent drift the full chain can stay nonzero even
    though every per-mode test passes, so the chain remains the authority.
    """
    tol = tol or default_tolerance(sys)
    work = sys if (sys.exact == tol.is_exact) else sys.to_float()
    if any(np.any(c != 0) for c in work.C.values()):
        raise ValueError("no-noise criterion requires C = 0 for every mode pair")
    i = work.mode_index(initial_mode)
    kerb = control_kernel(work, tol)
    deciding = largest_invariant(work.A[i].T, [], kerb, tol)
    return Verdict(
        property_name="null_controllable_no_noise",
        initial_mode=initial_mode,
        answer=deciding.dim == 0,
        deciding=deciding,
    )


def criterion_mode_independent(sys: SwitchSystem,
                               tol: Tolerance | None = None) -> Verdict:
    """Poisson-type special case: mode-independent coefficients.

    Requires A(g) = A and C(g, th) = C for every pair actually used, and
    max_jumps >= N + 1 so the chain has room to stabilize.  Computes the
    self-referential fixed point

        V = largest subspace of ker B^T with  A^T V  in  V + (C^T + I) V

    by iterating the invariant-subspace algorithm on the plain transpose
    drift (no jump-rate terms enter: they are absorbed by the C-image), and
    answers true when the fixed point is trivial.
    """
    tol = tol or default_tolerance(sys)
    work = sys if (sys.exact == tol.is_exact) else sys.to_float()
    a0 = work.A[0]
    for a in work.A[1:]:
        if a.shape != a0.shape or np.any(a != a0):
            raise ValueError("mode-independent criterion requires a single drift matrix")
    used = [work.c_matrix(i, j) for i in range(work.p) for j in range(work.p)
            if work.transition[i, j] != 0 and work.rates[i] != 0]
    c0 = used[0] if used else np.zeros_like(a0)
    for c in used[1:]:
        if np.any(c != c0):
            raise ValueError("mode-independent criterion requires a single jump matrix")
    if work.max_jumps < work.N + 1:
        raise ValueError("mode-independent criterion requires max_jumps >= N + 1")
    kerb = control_kernel(work, tol)
    ident = eye(work.N, tol.is_exact)
    v = kerb
    for _ in range(work.N + 1):
        ops = [] if v.dim == 0 else [(c0.T + ident) @ v.basis]
        nxt = largest_invariant(a0.T, ops, kerb, tol)
        if nxt.dim >= v.dim:
            break  # fixed point: the iteration is nested, equal dim means equal space
        v = nxt
    return Verdict(
        property_name="null_controllable_mode_independent",
        initial_mode=None,
        answer=v.dim == 0,
        deciding=v,
    )
