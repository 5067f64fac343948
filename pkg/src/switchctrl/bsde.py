"""Deterministic backward cascade solver on a trajectory-tree grid.

The dual backward equation of the switch system is equivalent to a family of
terminal-value linear ODEs indexed by mode trajectories: the piece after the
last allowed jump is the constant final datum, and each lower level feels its
own dual-generator drift plus a coupling that reads the next level's pieces
at their birth instants,

    dy/dt = -dual_generator(mode) y
            - sum_theta rate * Q(mode, theta) (C^T + I) y_child(born at t, t).

Restricting jump times to grid points turns the coupling into a table lookup
of child birth values; pieces are integrated backward with the classical
4-stage explicit one-step scheme, with the coupling interpolated linearly
between grid points (second-order overall, recovered by refinement).

Trajectories that die before the horizon keep the zero value by convention;
they never appear as tree nodes because the tree only enumerates realizable
finite prefixes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModeTrajectory, SwitchSystem, dual_generator
from .subspace import to_float

__all__ = [
    "CascadeError",
    "TreeGrid",
    "CascadeSolution",
    "solve_cascade",
    "residual",
    "z_component",
    "dump_solution",
]

CASCADE_MAX_JUMPS = 3
NODE_BUDGET = 10**6


class CascadeError(Exception):
    """Tree too large, missing final data, or an ill-formed grid."""


@dataclass(frozen=True)
class TreeGrid:
    """Time grid shared by every node; jump times live on grid points."""

    times: np.ndarray          # strictly increasing, times[0] = 0, times[-1] = horizon
    max_jumps: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 3:
            raise CascadeError("grid needs at least three time points")
        if t[0] != 0 or np.any(np.diff(t) <= 0):
            raise CascadeError("grid times must start at 0 and increase strictly")
        object.__setattr__(self, "times", t)
        if self.max_jumps < 0:
            raise CascadeError("jump cap must be nonnegative")

    @classmethod
    def uniform(cls, horizon: float, n_steps: int, max_jumps: int) -> "TreeGrid":
        return cls(np.linspace(0.0, float(horizon), n_steps + 1), max_jumps)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_points(self) -> int:
        return self.times.size

    @property
    def step(self) -> float:
        h = np.diff(self.times)
        if not np.allclose(h, h[0], rtol=1e-12, atol=0.0):
            raise CascadeError("this operation requires a uniform grid")
        return float(h[0])


# A node is keyed by (birth grid indices, mode ids); index 0 / the initial
# mode is the root entry.
NodeKey = tuple


def node_trajectory(grid: TreeGrid, key: NodeKey) -> ModeTrajectory:
    births, modes = key
    return ModeTrajectory(tuple(float(grid.times[b]) for b in births), tuple(modes))


@dataclass(frozen=True)
class CascadeSolution:
    """Values y(node, grid time) for every tree node, flat-extended before
    the node's birth, together with the final data that generated them."""

    system: SwitchSystem
    grid: TreeGrid
    initial_mode: str
    values: dict               # NodeKey -> (n_points, N) array
    final: dict                # NodeKey -> (N,) array

    @property
    def root_key(self) -> NodeKey:
        return ((0,), (self.initial_mode,))

    def y(self, key: NodeKey, grid_index: int) -> np.ndarray:
        return self.values[key][grid_index]

    def y0(self) -> np.ndarray:
        """y at the initial time on the no-jump node."""
        return self.values[self.root_key][0]

    def nodes_by_level(self) -> dict:
        out: dict = {}
        for key in self.values:
            out.setdefault(len(key[0]) - 1, []).append(key)
        return out


def _targets(sysf: SwitchSystem, i: int) -> list[int]:
    if sysf.rates[i] == 0:
        return []
    return [j for j in range(sysf.p) if sysf.transition[i, j] != 0]


def _enumerate_nodes(sysf: SwitchSystem, grid: TreeGrid, initial_mode: str) -> list[NodeKey]:
    root: NodeKey = ((0,), (initial_mode,))
    nodes = [root]
    frontier = [root]
    g = grid.n_points - 1
    for _ in range(grid.max_jumps):
        nxt = []
        for births, modes in frontier:
            i = sysf.mode_index(modes[-1])
            for j in _targets(sysf, i):
                for b in range(births[-1] + 1, g + 1):
                    key = (births + (b,), modes + (sysf.modes[j],))
                    nxt.append(key)
            if len(nodes) + len(nxt) > NODE_BUDGET:
                raise CascadeError(
                    f"trajectory tree exceeds the {NODE_BUDGET} node budget; "
                    "coarsen the grid or lower the jump cap"
                )
        nodes.extend(nxt)
        frontier = nxt
    return nodes


def _final_lookup(final_data, grid: TreeGrid, key: NodeKey, n: int) -> np.ndarray:
    if callable(final_data):
        xi = final_data(node_trajectory(grid, key))
    else:
        try:
            xi = final_data[key]
        except KeyError:
            raise CascadeError(f"final data missing on node {key}") from None
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape != (n,):
        raise CascadeError(f"final datum on node {key} has shape {xi.shape}, wanted ({n},)")
    return xi


def _coupling_table(sysf, grid, key, values, couplers) -> np.ndarray | None:
    """g[k] = sum over targets of rate*q*(C^T+I) (child born at k)(k);
    g[birth] is a linear extrapolation since no child is born exactly then."""
    births, modes = key
    b = births[-1]
    i = sysf.mode_index(modes[-1])
    targets = _targets(sysf, i)
    if not targets or b >= grid.n_points - 1:
        return None
    g_pts = grid.n_points
    table = np.zeros((g_pts, sysf.N))
    for j in targets:
        w = couplers[(i, j)]
        for k in range(b + 1, g_pts):
            child = (births + (k,), modes + (sysf.modes[j],))
            table[k] += w @ values[child][k]
    avail = g_pts - 1 - b
    if avail >= 4:
        table[b] = (4.0 * table[b + 1] - 6.0 * table[b + 2]
                    + 4.0 * table[b + 3] - table[b + 4])
    elif avail == 3:
        table[b] = 3.0 * table[b + 1] - 3.0 * table[b + 2] + table[b + 3]
    elif avail == 2:
        table[b] = 2.0 * table[b + 1] - table[b + 2]
    else:
        table[b] = table[b + 1]
    return table


def solve_cascade(sys: SwitchSystem, final_data, grid: TreeGrid,
                  initial_mode=None) -> CascadeSolution:
    """Solve the cascade backward from the final data, deepest level first.

    ``final_data`` is a callable on mode trajectories (or a mapping on node
    keys) providing the terminal value of every node.  The jump cap must not
    exceed 3: the tree grows exponentially with it.
    """
    if grid.max_jumps > CASCADE_MAX_JUMPS:
        raise CascadeError(f"jump cap {grid.max_jumps} exceeds the solver cap {CASCADE_MAX_JUMPS}")
    sysf = sys.to_float()
    if initial_mode is None:
        initial_mode = sysf.modes[0]
    sysf.mode_index(initial_mode)
    if grid.max_jumps != sysf.max_jumps:
        sysf = sysf.with_overrides(max_jumps=grid.max_jumps)
    nodes = _enumerate_nodes(sysf, grid, initial_mode)
    by_level: dict = {}
    for key in nodes:
        by_level.setdefault(len(key[0]) - 1, []).append(key)

    gens = {m: np.asarray(dual_generator(sysf, m), dtype=float) for m in sysf.modes}
    plain = {m: np.asarray(sysf.A[sysf.mode_index(m)].T, dtype=float) for m in sysf.modes}
    ident = np.eye(sysf.N)
    couplers = {}
    for i in range(sysf.p):
        lam = float(sysf.rates[i])
        for j in _targets(sysf, i):
            q = float(sysf.transition[i, j])
            couplers[(i, j)] = lam * q * (np.asarray(to_float(sysf.c_matrix(i, j).T), dtype=float) + ident)

    times = grid.times
    g_pts = grid.n_points
    m_cap = grid.max_jumps
    values: dict = {}
    final: dict = {}
    for level in sorted(by_level, reverse=True):
        for key in by_level[level]:
            births, modes = key
            b = births[-1]
            xi = _final_lookup(final_data, grid, key, sysf.N)
            final[key] = xi
            arr = np.empty((g_pts, sysf.N))
            arr[-1] = xi
            if level == m_cap and m_cap >= 1:
                arr[:] = xi  # the drift and the jump machinery die with the last jump
                values[key] = arr
                continue
            gen = plain[modes[-1]] if level == m_cap else gens[modes[-1]]
            table = None if level == m_cap else _coupling_table(sysf, grid, key, values, couplers)
            y = xi.copy()
            for k in range(g_pts - 2, b - 1, -1):
                h = times[k + 1] - times[k]
                if table is None:
                    g1 = g0 = gm = None
                else:
                    g1, g0 = table[k + 1], table[k]
                    gm = _midpoint(table, k, b, g_pts - 1)
                y = _rk4_back(gen, y, h, g1, gm, g0)
                arr[k] = y
            arr[:b] = arr[b]  # flat before birth
            values[key] = arr
    return CascadeSolution(system=sys, grid=grid, initial_mode=initial_mode,
                           values=values, final=final)


def _midpoint(table: np.ndarray, k: int, b: int, g_last: int) -> np.ndarray:
    """Coupling value at the midpoint of step [k, k+1]: cubic interpolation
    on the best available 4-point window, plain average on short pieces."""
    if k - 1 >= b and k + 2 <= g_last:
        return (9.0 * (table[k] + table[k + 1]) - (table[k - 1] + table[k + 2])) / 16.0
    if k - 1 < b and k + 3 <= g_last:
        return (5.0 * table[k] + 15.0 * table[k + 1] - 5.0 * table[k + 2]
                + table[k + 3]) / 16.0
    if k + 2 > g_last and k - 2 >= b:
        return (table[k - 2] - 5.0 * table[k - 1] + 15.0 * table[k]
                + 5.0 * table[k + 1]) / 16.0
    return 0.5 * (table[k] + table[k + 1])


def _rk4_back(gen: np.ndarray, y: np.ndarray, h: float,
              g_right, g_mid, g_left) -> np.ndarray:
    """One classical 4-stage step from t+h down to t for y' = -gen y - g(t)."""
    if g_right is None:
        def f(gv, yv):
            return -(gen @ yv)
    else:
        def f(gv, yv):
            return -(gen @ yv) - gv
    k1 = f(g_right, y)
    k2 = f(g_mid, y - 0.5 * h * k1)
    k3 = f(g_mid, y - 0.5 * h * k2)
    k4 = f(g_left, y - h * k3)
    return y - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def residual(sys: SwitchSystem, sol: CascadeSolution) -> float:
    """Max derivative mismatch of the cascade equations over all nodes, by
    centered differences at interior grid points (exact child lookups)."""
    sysf = sys.to_float().with_overrides(max_jumps=sol.grid.max_jumps)
    grid = sol.grid
    h = grid.step
    gens = {m: np.asarray(dual_generator(sysf, m), dtype=float) for m in sysf.modes}
    plain = {m: np.asarray(sysf.A[sysf.mode_index(m)].T, dtype=float) for m in sysf.modes}
    ident = np.eye(sysf.N)
    couplers = {}
    for i in range(sysf.p):
        lam = float(sysf.rates[i])
        for j in _targets(sysf, i):
            q = float(sysf.transition[i, j])
            couplers[(i, j)] = lam * q * (np.asarray(to_float(sysf.c_matrix(i, j).T), dtype=float) + ident)
    worst = 0.0
    m_cap = grid.max_jumps
    for key, arr in sol.values.items():
        births, modes = key
        level = len(births) - 1
        b = births[-1]
        if level == m_cap and m_cap >= 1:
            dev = np.max(np.abs(arr - arr[-1]), initial=0.0)
            worst = max(worst, dev / max(h, 1e-300))
            continue
        gen = plain[modes[-1]] if level == m_cap else gens[modes[-1]]
        table = None if level == m_cap else _coupling_table(sysf, grid, key, sol.values, couplers)
        last = grid.n_points - 1
        for k in range(b + 1, last):
            dy = _diff(arr, k, b, last, h)
            drift = -(gen @ arr[k])
            if table is not None:
                drift = drift - table[k]
            worst = max(worst, float(np.max(np.abs(dy - drift))))
    return worst


_D5 = (
    (-25.0, 48.0, -36.0, 16.0, -3.0),
    (-3.0, -10.0, 18.0, -6.0, 1.0),
    (1.0, -8.0, 0.0, 8.0, -1.0),
    (-1.0, 6.0, -18.0, 10.0, 3.0),
    (3.0, -16.0, 36.0, -48.0, 25.0),
)


def _diff(arr: np.ndarray, k: int, b: int, last: int, h: float) -> np.ndarray:
    """Fourth-order five-point finite-difference derivative at row k of a
    piece living on rows b..last, the stencil shifted as needed at the ends;
    plain centered difference on pieces too short for five points."""
    if last - b < 4:
        return (arr[k + 1] - arr[k - 1]) / (2.0 * h)
    j0 = min(max(b, k - 2), last - 4)
    w = _D5[k - j0]
    acc = w[0] * arr[j0]
    for m in range(1, 5):
        acc = acc + w[m] * arr[j0 + m]
    return acc / (12.0 * h)


def z_component(sol: CascadeSolution, key: NodeKey, grid_index: int, target_mode) -> np.ndarray:
    """z(e, t, theta) = y(level+1)(e + (t, theta), t) - y(level)(e, t)."""
    births, modes = key
    if grid_index <= births[-1]:
        raise CascadeError("the jump component is only defined strictly after the node birth")
    child = (births + (grid_index,), modes + (target_mode,))
    if child not in sol.values:
        raise CascadeError(f"no child node {child}; target transition unreachable or past the cap")
    return sol.values[child][grid_index] - sol.values[key][grid_index]


def dump_solution(sol: CascadeSolution) -> dict:
    """Plot-ready JSON structure: one time series per node."""
    return {
        "initial_mode": sol.initial_mode,
        "times": sol.grid.times.tolist(),
        "nodes": [
            {
                "jump_times": [float(sol.grid.times[b]) for b in key[0]],
                "modes": list(key[1]),
                "y": arr.tolist(),
                "xi": sol.final[key].tolist(),
            }
            for key, arr in sorted(sol.values.items())
        ],
    }
