"""Dual witnesses: explicit backward solutions certifying controllability
failures.

A witness seeds a nonzero vector v in the chain space of a chosen level and
mode pattern, then propagates it through the feedback-invariance cascade:
each piece follows the closed loop

    d phi / dt = -(dual_generator + sum_theta (C^T + I) F_theta) phi,

whose feedback operators F keep every piece inside its chain space (hence
inside ker B^T), and each jump to mode theta at time t seeds the child value
F_theta phi(t) / (rate * Q(gamma, theta)).  Pieces at the final level are
constants.  The induced family solves the backward cascade with final data
xi(e) = phi(T) and stays in ker B^T, so pairing any controlled state against
xi is control-independent.

Seeding is by mode pattern: every trajectory whose mode prefix matches the
pattern carries the seed, whatever its jump times, which is what makes the
resulting final data probabilistically nontrivial.  For a start level >= 1
the level below must not see the seeded children, which requires
(C(parent, seed mode)^T + I) v = 0; the builder enforces this and, when
choosing the seed itself, picks it inside that kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .criteria import VChain, default_tolerance, v_chain
from .model import ModeTrajectory, SwitchSystem, dual_generator
from .subspace import (
    Subspace,
    Tolerance,
    contains,
    eye,
    intersect,
    kernel,
    min_norm_solve,
    span,
    to_float,
    vector_in,
)

__all__ = [
    "WitnessError",
    "WitnessUnavailable",
    "FeedbackFamily",
    "DualWitness",
    "feedback_operators",
    "build_witness",
]


class WitnessError(Exception):
    """Invalid witness request (bad seed vector, leaking seed level...)."""


class WitnessUnavailable(Exception):
    """No witness exists: the deciding subspace at the request is trivial."""


# ---------------------------------------------------------------------------
# feedback synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeedbackFamily:
    """Level- and pair-indexed feedback operators in chain coordinates.

    ``maps[(n, i, j)]`` sends coordinates on the level-n space of mode i to
    coordinates on the level-(n+1) space of mode j; together they make every
    chain space invariant under the closed loop.
    """

    chain: VChain
    maps: dict
    tolerance: Tolerance

    def operator(self, n: int, i: int, j: int) -> np.ndarray:
        return self.maps[(n, i, j)]


def _reachable_targets(sys: SwitchSystem, i: int) -> list[int]:
    if sys.rates[i] == 0:
        return []
    return [j for j in range(sys.p) if sys.transition[i, j] != 0]


def feedback_operators(chain: VChain, sys: SwitchSystem | None = None,
                       tol: Tolerance | None = None) -> FeedbackFamily:
    """Solve, per level and mode, the linear systems giving feedbacks under
    which the chain spaces are closed-loop invariant.

    For each basis vector v of a level-n space the minimum-norm pair
    (w_theta in next-level spaces, r in the space itself) solving

        dual_generator v + sum_theta (C^T + I) w_theta = r

    exists by construction of the chain; infeasibility signals a chain
    inconsistency and raises.  The result is checked by substitution.
    """
    sys = sys or chain.system
    tol = tol or chain.tolerance
    work = sys if (sys.exact == tol.is_exact) else sys.to_float()
    ident = eye(work.N, tol.is_exact)
    maps: dict = {}
    for n in range(work.max_jumps):
        for i in range(work.p):
            vn = chain.family(n)[i]
            if vn.dim == 0:
                continue
            targets = _reachable_targets(work, i)
            next_bases = [chain.family(n + 1)[j].basis for j in targets]
            k_blocks = [
                (work.c_matrix(i, j).T + ident) @ b for j, b in zip(targets, next_bases)
            ]
            gen = dual_generator(work, work.modes[i])
            blocks = k_blocks + [-vn.basis]
            widths = [b.shape[1] for b in blocks]
            m_sys = np.concatenate(blocks, axis=1)
            coords = [np.zeros((w, vn.dim)) if not tol.is_exact else
                      np.empty((w, vn.dim), dtype=object) for w in widths]
            for col in range(vn.dim):
                rhs = -(gen @ vn.basis[:, col])
                x = min_norm_solve(m_sys, rhs, tol)
                if x is None:
                    raise RuntimeError(
                        f"feedback synthesis infeasible at level {n}, mode "
                        f"{work.modes[i]}: chain inconsistency"
                    )
                off = 0
                for blk, w in zip(coords, widths):
                    blk[:, col] = x[off:off + w]
                    off += w
            for j, blk in zip(targets, coords[: len(targets)]):
                maps[(n, i, j)] = blk
            _check_closed_loop(work, chain, tol, n, i, targets, coords[: len(targets)])
    return FeedbackFamily(chain=chain, maps=maps, tolerance=tol)


def _check_closed_loop(sys, chain, tol, n, i, targets, f_coords):
    vn = chain.family(n)[i]
    ident = eye(sys.N, tol.is_exact)
    gen = dual_generator(sys, sys.modes[i])
    closed = gen @ vn.basis
    for j, f in zip(targets, f_coords):
        closed = closed + ((sys.c_matrix(i, j).T + ident) @ chain.family(n + 1)[j].basis) @ f
    if not contains(vn, span(closed, tol), tol):
        raise RuntimeError(
            f"closed loop leaves the chain space at level {n}, mode {sys.modes[i]}"
        )


# ---------------------------------------------------------------------------
# the witness object
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Node:
    level: int
    pattern: tuple
    mode_index: int
    basis_f: np.ndarray          # float copy of the chain-space basis
    gen_f: np.ndarray | None     # closed-loop generator on coordinates; None at the last level
    children: dict               # mode id -> (1/(rate*q) float, coordinate feedback matrix)


@dataclass(frozen=True)
class DualWitness:
    """Immutable witness: seed data plus the closed-form cascade pieces."""

    system: SwitchSystem
    chain: VChain
    feedbacks: FeedbackFamily
    start_level: int
    pattern: tuple
    seed: np.ndarray             # float seed vector, in the pattern-end chain space
    seed_coords: np.ndarray
    nodes: dict                  # pattern tuple -> _Node

    @property
    def y0(self) -> np.ndarray:
        """Initial dual value: the seed at level 0, zero otherwise."""
        if self.start_level == 0:
            return self.seed.copy()
        return np.zeros(self.system.N)

    def _propagate(self, node: _Node, coords: np.ndarray, dt: float) -> np.ndarray:
        if node.gen_f is None or dt == 0:
            return coords
        if np.max(np.abs(node.gen_f @ coords), initial=0.0) <= 1e-300:
            return coords  # stationary piece
        return scipy.linalg.expm(-node.gen_f * dt) @ coords

    def _walk(self, traj: ModeTrajectory, upto_level: int):
        return self._walk_raw(traj.times, traj.modes, upto_level)

    def _walk_raw(self, times, modes, upto_level: int):
        """Coordinates at the birth of the level-``upto_level`` node along a path."""
        if tuple(modes[: self.start_level + 1]) != self.pattern:
            return None, None
        coords = self.seed_coords
        for lvl in range(self.start_level, upto_level):
            node = self.nodes.get(tuple(modes[: lvl + 1]))
            if node is None:
                return None, None
            dt = float(times[lvl + 1]) - float(times[lvl])
            phi = self._propagate(node, coords, dt)
            child = node.children.get(modes[lvl + 1])
            if child is None:
                return None, None  # zero-probability branch carries zero
            inv_rate, f = child
            coords = inv_rate * (f @ phi)
        node = self.nodes.get(tuple(modes[: upto_level + 1]))
        return node, coords

    def xi(self, traj: ModeTrajectory) -> np.ndarray:
        """Final data induced on a trajectory: the matching cascade piece at
        the horizon, zero off the seeded pattern cone."""
        k = traj.jump_count
        return self.xi_path(traj.times[: k + 1], traj.modes[: k + 1])

    def xi_path(self, times, modes) -> np.ndarray:
        """xi from raw (finite jump times, mode ids); fast path for samplers."""
        n = self.system.N
        k = len(times) - 1
        if k < self.start_level:
            return np.zeros(n)
        node, coords = self._walk_raw(times, modes, k)
        if node is None:
            return np.zeros(n)
        dt = float(self.system.horizon) - float(times[k])
        coords = self._propagate(node, coords, dt)
        return np.asarray(node.basis_f @ coords, dtype=float)

    def dual_value(self, traj: ModeTrajectory, t: float) -> np.ndarray:
        """Y_t along a realized path (piecewise closed-form evaluation)."""
        n = self.system.N
        level = sum(1 for s in traj.times[: traj.jump_count + 1] if float(s) <= t) - 1
        if level < self.start_level:
            return np.zeros(n)
        node, coords = self._walk(traj, level)
        if node is None:
            return np.zeros(n)
        coords = self._propagate(node, coords, t - float(traj.times[level]))
        return np.asarray(node.basis_f @ coords, dtype=float)

    def to_json(self, trajectories=()) -> dict:
        fb = {}
        for (n, i, j), m in sorted(self.feedbacks.maps.items()):
            key = f"level {n}: {self.system.modes[i]} -> {self.system.modes[j]}"
            fb[key] = to_float(m).tolist() if m.dtype == object else np.asarray(m).tolist()
        return {
            "start_level": self.start_level,
            "pattern": list(self.pattern),
            "seed": self.seed.tolist(),
            "y0": self.y0.tolist(),
            "feedback_operators": fb,
            "xi_on_trajectories": [
                {
                    "times": [float(t) for t in e.times[: e.jump_count + 1]],
                    "modes": list(e.modes[: e.jump_count + 1]),
                    "xi": self.xi(e).tolist(),
                }
                for e in trajectories
            ],
        }


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _as_pattern(sys: SwitchSystem, prefix) -> tuple:
    if isinstance(prefix, ModeTrajectory):
        return tuple(prefix.modes[: prefix.jump_count + 1])
    return tuple(prefix)


def build_witness(sys: SwitchSystem, initial_mode, level: int, prefix=None,
                  v=None, chain: VChain | None = None,
                  tol: Tolerance | None = None) -> DualWitness:
    """Build the witness seeded at ``level`` along the mode pattern ``prefix``.

    The pattern must start at ``initial_mode``, make ``level`` jumps, and be
    reachable (positive rate and transition probability along it).  The seed
    v must be a nonzero member of the chain space at the pattern end; when v
    is omitted the first usable basis vector is taken.  A start level >= 1
    additionally requires the seed to be invisible to the level below,
    (C(parent, end)^T + I) v = 0, otherwise the cascade would leak out of
    ker B^T.  At level 0 the witness certifies failure of approximate
    null-controllability; at higher levels, failure of full approximate
    controllability.
    """
    tol = tol or default_tolerance(sys)
    chain = chain or v_chain(sys, tol)
    work = sys if (sys.exact == tol.is_exact) else sys.to_float()
    if level < 0 or level > work.max_jumps:
        raise WitnessError(f"start level must lie in 0..{work.max_jumps}")
    pattern = _as_pattern(work, prefix) if prefix is not None else None
    if pattern is None:
        if level != 0:
            raise WitnessError("a mode-pattern prefix is required for start level >= 1")
        pattern = (initial_mode,)
    if len(pattern) != level + 1:
        raise WitnessError(f"prefix must contain level+1 = {level + 1} modes")
    if pattern[0] != initial_mode:
        raise WitnessError("prefix must start at the initial mode")
    idx = [work.mode_index(m) for m in pattern]
    for a, b in zip(idx, idx[1:]):
        if work.rates[a] == 0 or work.transition[a, b] == 0:
            raise WitnessError(
                f"prefix transition {work.modes[a]} -> {work.modes[b]} has probability zero"
            )

    end_space = chain.family(level)[idx[-1]]
    if end_space.dim == 0:
        raise WitnessUnavailable(
            f"chain space at level {level}, mode {pattern[-1]} is trivial: no witness exists"
        )
    ident = eye(work.N, tol.is_exact)
    leak_guard = None
    if level >= 1:
        leak_guard = (work.c_matrix(idx[-2], idx[-1]).T + ident)

    if v is None:
        seed_space = end_space
        if leak_guard is not None:
            seed_space = intersect(end_space, kernel(leak_guard, tol), tol)
            if seed_space.dim == 0:
                raise WitnessUnavailable(
                    "no seed vector in the chain space is invisible to the parent "
                    "level; the pattern-seeded construction does not apply here"
                )
        v_arr = seed_space.basis[:, 0]
    else:
        v_arr = np.asarray(v, dtype=object if tol.is_exact else float).reshape(-1)
        if tol.is_exact:
            from .subspace import as_matrix
            v_arr = as_matrix([list(v_arr)], exact=True).reshape(-1)
    if v_arr.shape[0] != work.N:
        raise WitnessError("seed vector has the wrong dimension")
    if all(x == 0 for x in v_arr.tolist()):
        raise WitnessError("seed vector must be nonzero")
    if not vector_in(end_space, v_arr, tol):
        raise WitnessError(
            f"seed vector does not lie in the chain space at level {level}, "
            f"mode {pattern[-1]}"
        )
    if leak_guard is not None:
        leak = leak_guard @ v_arr
        leaky = (np.any(leak != 0) if tol.is_exact
                 else np.max(np.abs(np.asarray(leak, dtype=float))) > tol.membership_tol)
        if leaky:
            raise WitnessError(
                "seed is visible to the parent level: (C(parent, end)^T + I) v != 0; "
                "the induced family would leave ker B^T"
            )

    feedbacks = feedback_operators(chain, work, tol)
    seed_coords = _coords_of(end_space, v_arr, tol)
    nodes: dict = {}
    _grow(work, chain, feedbacks, tol, level, tuple(pattern), idx[-1], nodes)
    return DualWitness(
        system=sys,
        chain=chain,
        feedbacks=feedbacks,
        start_level=level,
        pattern=tuple(pattern),
        seed=np.asarray(to_float(v_arr.reshape(1, -1)).reshape(-1) if tol.is_exact
                        else v_arr, dtype=float),
        seed_coords=np.asarray(seed_coords, dtype=float),
        nodes=nodes,
    )


def _coords_of(space: Subspace, vec, tol: Tolerance) -> np.ndarray:
    x = min_norm_solve(space.basis, np.asarray(vec).reshape(-1), tol)
    if x is None:
        raise WitnessError("vector is not expressible in the chain-space basis")
    return to_float(np.asarray(x, dtype=object).reshape(1, -1)).reshape(-1) \
        if tol.is_exact else x


def _grow(sys, chain, feedbacks, tol, level, pattern, i, nodes):
    space = chain.family(level)[i]
    basis_f = to_float(space.basis) if tol.is_exact else space.basis
    if level == sys.max_jumps:
        nodes[pattern] = _Node(level, pattern, i, basis_f, None, {})
        return
    gen = dual_generator(sys, sys.modes[i])
    ident = eye(sys.N, tol.is_exact)
    closed = gen @ space.basis
    children = {}
    for j in _reachable_targets(sys, i):
        f = feedbacks.maps[(level, i, j)]
        closed = closed + ((sys.c_matrix(i, j).T + ident) @ chain.family(level + 1)[j].basis) @ f
        inv_rate = 1.0 / float(sys.rates[i] * sys.transition[i, j])
        f_f = to_float(f) if tol.is_exact else f
        children[sys.modes[j]] = (inv_rate, np.asarray(f_f, dtype=float))
    gen_coords = np.empty((space.dim, space.dim), dtype=object) if tol.is_exact \
        else np.zeros((space.dim, space.dim))
    for col in range(space.dim):
        c = min_norm_solve(space.basis, closed[:, col], tol)
        if c is None:
            raise RuntimeError("closed loop left the chain space during witness build")
        gen_coords[:, col] = c
    gen_f = to_float(gen_coords) if tol.is_exact else gen_coords
    nodes[pattern] = _Node(level, pattern, i, np.asarray(basis_f, dtype=float),
                           np.asarray(gen_f, dtype=float), children)
    for j in _reachable_targets(sys, i):
        child_pattern = pattern + (sys.modes[j],)
        if child_pattern not in nodes:
            _grow(sys, chain, feedbacks, tol, level + 1, child_pattern, j, nodes)
