"""Monte-Carlo engine for the switch system.

Mode paths are sampled from the exponential-clock construction (per-mode
rates, categorical post-jump marks, hard cap on the jump count); the state is
propagated segment-exactly with matrix exponentials of the compensated
per-mode drift, controls held piecewise constant on the output grid.  The
engine is deterministic by construction: every path owns a counter-based
Philox stream keyed by (seed, path index), so results do not depend on how
paths are scheduled, and reductions are numpy pairwise sums over arrays in
path order, which makes whole reports bit-identical for any thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.stats

from .model import ModeTrajectory, SwitchSystem, compensated_drift

__all__ = [
    "RngSpec",
    "ControlSpec",
    "PathRealization",
    "sample_mode_path",
    "integrate_state",
    "duality_check",
    "terminal_pairing",
    "moment_check",
    "master_moments",
    "ks_first_jump",
    "export_paths",
]

# After the cap-th jump the drift and compensator die; only B u keeps acting.


@dataclass(frozen=True)
class RngSpec:
    """Counter-based stream spec: (seed, stream_id) fully determines a path."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed % 2**64, self.stream_id % 2**64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ControlSpec:
    """Admissible control laws: all bounded on [0, T], hence square integrable.

    kinds: "zero"; "constant" (fixed vector); "schedule" (open-loop piecewise
    constant, right-open intervals between the given times); "feedback"
    (u = K(mode) x with per-mode gain matrices).
    """

    kind: str
    vector: np.ndarray | None = None
    times: np.ndarray | None = None
    values: np.ndarray | None = None
    gains: dict | None = None

    @classmethod
    def zero(cls) -> "ControlSpec":
        return cls(kind="zero")

    @classmethod
    def constant(cls, u0) -> "ControlSpec":
        return cls(kind="constant", vector=np.asarray(u0, dtype=float).reshape(-1))

    @classmethod
    def schedule(cls, times, values) -> "ControlSpec":
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if v.ndim != 2 or t.ndim != 1 or v.shape[0] != t.size:
            raise ValueError("schedule needs times (k,) and values (k, d)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("schedule times must increase strictly")
        return cls(kind="schedule", times=t, values=v)

    @classmethod
    def feedback(cls, gains: dict) -> "ControlSpec":
        return cls(kind="feedback", gains={m: np.asarray(k, dtype=float) for m, k in gains.items()})

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "constant":
            out["u0"] = self.vector.tolist()
        elif self.kind == "schedule":
            out["times"] = self.times.tolist()
            out["values"] = self.values.tolist()
        elif self.kind == "feedback":
            out["gains"] = {m: k.tolist() for m, k in self.gains.items()}
        return out

    def eval_batch(self, t: float, x: np.ndarray, regimes: np.ndarray,
                   sysf: SwitchSystem) -> np.ndarray:
        n, d = x.shape[0], sysf.d
        if self.kind == "zero":
            return np.zeros((n, d))
        if self.kind == "constant":
            return np.broadcast_to(self.vector, (n, d)).copy()
        if self.kind == "schedule":
            idx = int(np.searchsorted(self.times, t, side="right")) - 1
            idx = min(max(idx, 0), self.values.shape[0] - 1)
            return np.broadcast_to(self.values[idx], (n, d)).copy()
        out = np.zeros((n, d))
        for m, k in self.gains.items():
            i = sysf.mode_index(m)
            sel = regimes == i
            if np.any(sel):
                out[sel] = x[sel] @ k.T
        return out


@dataclass(frozen=True)
class PathRealization:
    """One sampled path: mode trajectory, state on the output grid, X_T."""

    trajectory: ModeTrajectory
    grid_times: np.ndarray
    states: np.ndarray
    terminal: np.ndarray


# ---------------------------------------------------------------------------
# mode-path sampling
# ---------------------------------------------------------------------------

def _sample_jumps(sysf: SwitchSystem, i0: int, gen: np.random.Generator,
                  horizon: float, cap: int, qcum: np.ndarray, lam: np.ndarray):
    """Jump times and post-jump mode indices of one path (both tuples)."""
    t = 0.0
    i = i0
    times: list[float] = []
    marks: list[int] = []
    while len(times) < cap:
        rate = lam[i]
        if rate <= 0:
            break
        t += gen.exponential(1.0 / rate)
        if t > horizon:
            break
        j = int(np.searchsorted(qcum[i], gen.random(), side="right"))
        j = min(j, qcum.shape[1] - 1)
        times.append(t)
        marks.append(j)
        i = j
    return tuple(times), tuple(marks)


def sample_mode_path(sys: SwitchSystem, initial_mode, rng: RngSpec) -> ModeTrajectory:
    """Sample one mode path: exponential holding times with the current mode's
    rate, marks from the current transition row, truncated at the horizon and
    after max_jumps jumps; a zero-rate mode never jumps again."""
    sysf = sys.to_float()
    i0 = sysf.mode_index(initial_mode)
    lam = np.asarray(sysf.rates, dtype=float)
    qcum = np.cumsum(np.asarray(sysf.transition, dtype=float), axis=1)
    times, marks = _sample_jumps(sysf, i0, rng.generator(), float(sysf.horizon),
                                 sysf.max_jumps, qcum, lam)
    traj_times = (0.0,) + times
    traj_modes = (initial_mode,) + tuple(sysf.modes[j] for j in marks)
    return ModeTrajectory(traj_times, traj_modes)


# ---------------------------------------------------------------------------
# exact segment propagation
# ---------------------------------------------------------------------------

def _segment_propagators(a_eff: np.ndarray, h: float):
    """(E, P) with E = expm(A h) and P = integral_0^h expm(A s) ds."""
    n = a_eff.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = a_eff
    aug[:n, n:] = np.eye(n)
    big = scipy.linalg.expm(aug * h)
    return big[:n, :n], big[:n, n:]


_PADE13_B = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)


def batched_expm(m: np.ndarray) -> np.ndarray:
    """Matrix exponential of a stack (batch, n, n): scaling and squaring with
    the order-13 Pade approximant, one shared squaring depth for the batch."""
    b = _PADE13_B
    norms = np.abs(m).sum(axis=-1).max(axis=-1)
    top = float(np.max(norms, initial=0.0))
    s = max(0, int(math.ceil(math.log2(top / 4.25))) if top > 4.25 else 0)
    a = m / (2.0 ** s)
    n = m.shape[-1]
    ident = np.broadcast_to(np.eye(n), m.shape)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    out = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        out = out @ out
    return out


def _partial_step(a_eff: np.ndarray, bu: np.ndarray, x: np.ndarray, dt: float) -> np.ndarray:
    """Exact advance of dx = A x + bu over dt (augmented exponential)."""
    if dt <= 0:
        return x
    n = x.size
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = a_eff
    aug[:n, n] = bu
    big = scipy.linalg.expm(aug * dt)
    return big[:n, :n] @ x + big[:n, n]


class _Engine:
    """Precomputed per-mode propagators for a fixed output grid step."""

    def __init__(self, sys: SwitchSystem, n_steps: int, horizon: float | None = None):
        self.sysf = sys.to_float()
        self.horizon = float(self.sysf.horizon) if horizon is None else float(horizon)
        if n_steps < 1:
            raise ValueError("need at least one grid step")
        self.times = np.linspace(0.0, self.horizon, n_steps + 1)
        self.h = self.times[1] - self.times[0]
        self.lam = np.asarray(self.sysf.rates, dtype=float)
        self.qcum = np.cumsum(np.asarray(self.sysf.transition, dtype=float), axis=1)
        if self.sysf.max_jumps == 0:
            # no jump can ever occur, so there is nothing to compensate
            self.a_eff = [np.asarray(a, dtype=float) for a in self.sysf.A]
        else:
            self.a_eff = [np.asarray(compensated_drift(self.sysf, i), dtype=float)
                          for i in range(self.sysf.p)]
        self.b = np.asarray(self.sysf.B, dtype=float)
        self.jump_mats = {}
        ident = np.eye(self.sysf.N)
        for i in range(self.sysf.p):
            for j in range(self.sysf.p):
                self.jump_mats[(i, j)] = ident + np.asarray(self.sysf.c_matrix(i, j),
                                                            dtype=float)
        self.props = [_segment_propagators(a, self.h) for a in self.a_eff]

    def sample_batch(self, i0: int, seed: int, start: int, stop: int):
        cap = self.sysf.max_jumps
        out = []
        for pid in range(start, stop):
            gen = RngSpec(seed, pid).generator()
            out.append(_sample_jumps(self.sysf, i0, gen, self.horizon, cap,
                                     self.qcum, self.lam))
        return out

    def propagate(self, i0: int, x0: np.ndarray, control: ControlSpec, jumps: list):
        """Lockstep propagation of all paths over the grid; returns X at T
        and the per-path regime/jump-count arrays."""
        sysf = self.sysf
        n_paths = len(jumps)
        x = np.tile(np.asarray(x0, dtype=float).reshape(1, -1), (n_paths, 1))
        regime = np.full(n_paths, i0, dtype=np.int64)
        njumps = np.zeros(n_paths, dtype=np.int64)
        cap = sysf.max_jumps
        dead = (cap >= 1) & (njumps >= cap)  # all false at start unless cap == 0 semantics
        jt = np.full((n_paths, max(cap, 1)), np.inf)
        jm = np.zeros((n_paths, max(cap, 1)), dtype=np.int64)
        for k, (ts, ms) in enumerate(jumps):
            for q, (tq, mq) in enumerate(zip(ts, ms)):
                jt[k, q] = tq
                jm[k, q] = mq
        next_idx = np.zeros(n_paths, dtype=np.int64)
        bt = self.b.T
        for c in range(self.times.size - 1):
            t0, t1 = self.times[c], self.times[c + 1]
            u = control.eval_batch(t0, x, regime, sysf)
            nxt = jt[np.arange(n_paths), np.clip(next_idx, 0, jt.shape[1] - 1)]
            has_jump = (nxt > t0) & (nxt <= t1) & (next_idx < jt.shape[1])
            plain = ~has_jump
            alive = plain & ~dead
            for r in range(sysf.p):
                sel = alive & (regime == r)
                if np.any(sel):
                    e, pint = self.props[r]
                    x[sel] = x[sel] @ e.T + u[sel] @ (pint @ self.b).T
            sel = plain & dead
            if np.any(sel):
                x[sel] = x[sel] + self.h * (u[sel] @ bt)
            for k in np.nonzero(has_jump)[0]:
                xk = x[k]
                tk = t0
                bu = self.b @ u[k]
                while next_idx[k] < jt.shape[1] and t0 < jt[k, next_idx[k]] <= t1:
                    tj = jt[k, next_idx[k]]
                    if dead[k]:
                        xk = xk + (tj - tk) * bu
                    else:
                        xk = _partial_step(self.a_eff[regime[k]], bu, xk, tj - tk)
                    xk = self.jump_mats[(int(regime[k]), int(jm[k, next_idx[k]]))] @ xk
                    regime[k] = jm[k, next_idx[k]]
                    njumps[k] += 1
                    next_idx[k] += 1
                    tk = tj
                    if cap >= 1 and njumps[k] >= cap:
                        dead[k] = True
                if dead[k]:
                    xk = xk + (t1 - tk) * bu
                else:
                    xk = _partial_step(self.a_eff[regime[k]], bu, xk, t1 - tk)
                x[k] = xk
        return x, regime, njumps


def _run_batches(engine: _Engine, i0: int, x0, control, seed: int, n_paths: int,
                 threads: int):
    """Sample and propagate in path-index chunks (threaded or not); the
    per-path outputs are identical for any chunking."""
    chunk = max(256, math.ceil(n_paths / max(threads, 1)))
    ranges = [(a, min(a + chunk, n_paths)) for a in range(0, n_paths, chunk)]

    def work(rg):
        a, b = rg
        jumps = engine.sample_batch(i0, seed, a, b)
        xt, regime, njumps = engine.propagate(i0, x0, control, jumps)
        return jumps, xt, regime, njumps

    if threads <= 1 or len(ranges) == 1:
        parts = [work(rg) for rg in ranges]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, ranges))
    jumps = [j for p in parts for j in p[0]]
    xt = np.concatenate([p[1] for p in parts], axis=0)
    regime = np.concatenate([p[2] for p in parts])
    njumps = np.concatenate([p[3] for p in parts])
    return jumps, xt, regime, njumps


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def integrate_state(sys: SwitchSystem, path: ModeTrajectory, x0, u: ControlSpec,
                    grid_step: float) -> PathRealization:
    """Integrate the controlled state along one given mode path.

    Between jumps the compensated affine dynamics is advanced by exact matrix
    exponentials (control frozen on each output cell); at a jump the state is
    multiplied by (I + C(from, to)); after the cap-th jump only B u acts.
    """
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    sysf = sys.to_float()
    horizon = float(sysf.horizon)
    n_steps = max(1, int(round(horizon / grid_step)))
    engine = _Engine(sys, n_steps)
    i0 = sysf.mode_index(path.modes[0])
    ts = tuple(float(t) for t in path.times[1: path.jump_count + 1])
    ms = tuple(sysf.mode_index(m) for m in path.modes[1: path.jump_count + 1])
    x = np.asarray(x0, dtype=float).reshape(1, -1)

    states = [x[0].copy()]
    cur = x.copy()
    regime = np.array([i0])
    njumps = np.array([0])
    next_idx = 0
    dead = False
    for c in range(engine.times.size - 1):
        t0, t1 = engine.times[c], engine.times[c + 1]
        uval = u.eval_batch(t0, cur, regime, sysf)[0]
        xk = cur[0]
        tk = t0
        bu = engine.b @ uval
        while next_idx < len(ts) and t0 < ts[next_idx] <= t1:
            tj = ts[next_idx]
            xk = (xk + (tj - tk) * bu) if dead else _partial_step(
                engine.a_eff[regime[0]], bu, xk, tj - tk)
            xk = engine.jump_mats[(int(regime[0]), ms[next_idx])] @ xk
            regime[0] = ms[next_idx]
            njumps[0] += 1
            next_idx += 1
            tk = tj
            if sysf.max_jumps >= 1 and njumps[0] >= sysf.max_jumps:
                dead = True
        xk = (xk + (t1 - tk) * bu) if dead else _partial_step(
            engine.a_eff[regime[0]], bu, xk, t1 - tk)
        cur[0] = xk
        states.append(xk.copy())
    return PathRealization(
        trajectory=path,
        grid_times=engine.times.copy(),
        states=np.asarray(states),
        terminal=states[-1].copy(),
    )


def _mean_stderr(arr: np.ndarray) -> tuple[float, float]:
    n = arr.shape[0]
    mean = float(np.sum(arr) / n)
    if n < 2:
        return mean, 0.0
    var = float(np.sum((arr - mean) ** 2) / (n - 1))
    return mean, math.sqrt(max(var, 0.0) / n)


def _trajectories_from_jumps(sysf, initial_mode, jumps):
    for ts, ms in jumps:
        yield (0.0,) + ts, (initial_mode,) + tuple(sysf.modes[j] for j in ms)


def duality_check(sys: SwitchSystem, witness, u: ControlSpec, x0, n_paths: int,
                  rng: RngSpec, grid_steps: int = 64, threads: int = 1) -> dict:
    """Monte-Carlo check of the pairing identity against a dual witness.

    Estimates LHS = <X_T, xi(path)> - <x0, Y_0> path by path; the witness
    stays in ker B^T so the control integral on the right-hand side vanishes
    identically and the identity reduces to mean(LHS) = 0 within noise.  Also
    reports the moments |xi|^2 and |X_T - xi|^2 used by the
    non-approximate-controllability separation bound.
    """
    if n_paths < 100:
        raise ValueError("at least 100 paths are needed for meaningful statistics")
    engine = _Engine(sys, grid_steps)
    sysf = engine.sysf
    initial_mode = witness.pattern[0]
    i0 = sysf.mode_index(initial_mode)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    jumps, xt, _, _ = _run_batches(engine, i0, x0, u, rng.seed, n_paths, threads)

    n = sysf.N
    xi = np.zeros((n_paths, n))
    for k, (times, modes) in enumerate(_trajectories_from_jumps(sysf, initial_mode, jumps)):
        xi[k] = witness.xi_path(times, modes)
    y0 = witness.y0
    lhs = np.einsum("ij,ij->i", xt, xi) - float(x0 @ y0)
    rhs = np.zeros(n_paths)  # B^T Y = 0 along every witness piece
    diff = lhs - rhs
    mean, stderr = _mean_stderr(diff)
    pass_pairing = abs(mean) <= 3.0 * stderr if stderr > 0 else mean == 0.0

    xi_sq = np.einsum("ij,ij->i", xi, xi)
    sep = np.einsum("ij,ij->i", xt - xi, xt - xi) - xi_sq
    xi_mean, xi_stderr = _mean_stderr(xi_sq)
    sep_mean, sep_stderr = _mean_stderr(sep)
    pass_sep = sep_mean >= -3.0 * sep_stderr
    return {
        "n_paths": n_paths,
        "seed": rng.seed,
        "control": u.describe(),
        "pairing": {"mean": mean, "stderr": stderr, "pass_3sigma": bool(pass_pairing)},
        "xi_sq": {"mean": xi_mean, "stderr": xi_stderr},
        "separation": {"mean": sep_mean, "stderr": sep_stderr, "pass_3sigma": bool(pass_sep)},
        "pass": bool(pass_pairing and pass_sep),
    }


def terminal_pairing(sys: SwitchSystem, final_data, initial_mode, x0, n_paths: int,
                     rng: RngSpec, grid_steps: int = 64, threads: int = 1) -> dict:
    """Uncontrolled Monte-Carlo estimate of E <X_T, xi(path)> for arbitrary
    trajectory-indexed final data (callable on ModeTrajectory)."""
    if n_paths < 100:
        raise ValueError("at least 100 paths are needed for meaningful statistics")
    engine = _Engine(sys, grid_steps)
    sysf = engine.sysf
    i0 = sysf.mode_index(initial_mode)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    jumps, xt, _, _ = _run_batches(engine, i0, x0, ControlSpec.zero(), rng.seed,
                                   n_paths, threads)
    vals = np.zeros(n_paths)
    for k, (times, modes) in enumerate(_trajectories_from_jumps(sysf, initial_mode, jumps)):
        xi = np.asarray(final_data(ModeTrajectory(times, modes)), dtype=float).reshape(-1)
        vals[k] = xt[k] @ xi
    mean, stderr = _mean_stderr(vals)
    return {"n_paths": n_paths, "seed": rng.seed, "mean": mean, "stderr": stderr}


def master_moments(sys: SwitchSystem, x0, t: float, initial_mode) -> dict:
    """Deterministic first-moment reference: solves the closed linear system
    for m[mode, k](t) = E[X_t ; mode at t, k jumps so far] by one matrix
    exponential of the stacked generator.

    Blocks: d m[g,k] = (A(g) - lam SUM Q C - lam I) m[g,k]
                       + SUM_th lam(th) Q(th,g) (I + C(th,g)) m[th,k-1];
    at k = max_jumps (>= 1) the own-block dies (drift off, no further jumps)
    and only the influx from k-1 remains.
    """
    sysf = sys.to_float()
    p, n, cap = sysf.p, sysf.N, sysf.max_jumps
    i0 = sysf.mode_index(initial_mode)
    size = p * (cap + 1) * n

    def ofs(k, i):
        return (k * p + i) * n

    big = np.zeros((size, size))
    lam = np.asarray(sysf.rates, dtype=float)
    q = np.asarray(sysf.transition, dtype=float)
    ident = np.eye(n)
    for k in range(cap + 1):
        for i in range(p):
            if k == cap and cap >= 1:
                own = np.zeros((n, n))
            elif k == cap == 0:
                own = np.asarray(sysf.A[i], dtype=float)  # no jumps, no compensation
            else:
                own = np.asarray(compensated_drift(sysf, i), dtype=float) - lam[i] * ident
            big[ofs(k, i): ofs(k, i) + n, ofs(k, i): ofs(k, i) + n] = own
            if k >= 1:
                for j in range(p):
                    if lam[j] > 0 and q[j, i] > 0:
                        blk = lam[j] * q[j, i] * (
                            ident + np.asarray(sysf.c_matrix(j, i), dtype=float))
                        big[ofs(k, i): ofs(k, i) + n, ofs(k, j): ofs(k, j) + n] = blk
    m0 = np.zeros(size)
    m0[ofs(0, i0): ofs(0, i0) + n] = np.asarray(x0, dtype=float).reshape(-1)
    mt = scipy.linalg.expm(big * float(t)) @ m0
    return {(sysf.modes[i], k): mt[ofs(k, i): ofs(k, i) + n]
            for k in range(cap + 1) for i in range(p)}


def moment_check(sys: SwitchSystem, x0, t: float, n_paths: int, rng: RngSpec,
                 initial_mode=None, grid_steps: int = 64, threads: int = 1) -> dict:
    """Compare Monte-Carlo estimates of E[X_t ; mode, jump count] against the
    deterministic master system, componentwise within four standard errors
    (uncontrolled dynamics only)."""
    if n_paths < 100:
        raise ValueError("at least 100 paths are needed for meaningful statistics")
    sysf = sys.to_float()
    if initial_mode is None:
        initial_mode = sysf.modes[0]
    if not 0 < t <= float(sysf.horizon):
        raise ValueError("time must lie inside the horizon")
    engine = _Engine(sys, grid_steps, horizon=t)
    i0 = sysf.mode_index(initial_mode)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    jumps, xt, regime, njumps = _run_batches(engine, i0, x0, ControlSpec.zero(),
                                             rng.seed, n_paths, threads)
    reference = master_moments(sys, x0, t, initial_mode)
    cells = {}
    overall = True
    for (mode, k), ref in sorted(reference.items()):
        i = sysf.mode_index(mode)
        ind = (regime == i) & (njumps == k)
        contrib = np.where(ind[:, None], xt, 0.0)
        means = np.zeros(sysf.N)
        stderrs = np.zeros(sysf.N)
        for comp in range(sysf.N):
            means[comp], stderrs[comp] = _mean_stderr(contrib[:, comp])
        ok = bool(np.all(np.abs(means - ref) <= 4.0 * stderrs + 1e-12))
        overall = overall and ok
        cells[f"{mode},k={k}"] = {
            "mc_mean": means.tolist(),
            "reference": ref.tolist(),
            "stderr": stderrs.tolist(),
            "pass_4sigma": ok,
        }
    return {
        "n_paths": n_paths,
        "seed": rng.seed,
        "time": t,
        "initial_mode": initial_mode,
        "cells": cells,
        "pass": bool(overall),
    }


def ks_first_jump(sys: SwitchSystem, initial_mode, n_samples: int, rng: RngSpec) -> dict:
    """Kolmogorov-Smirnov test of the first jump time against its exponential
    law (sampled with an inflated horizon so truncation is immaterial)."""
    sysf = sys.to_float()
    i0 = sysf.mode_index(initial_mode)
    lam = float(sysf.rates[i0])
    if lam <= 0:
        raise ValueError("the initial mode never jumps; no first-jump law to test")
    horizon = 50.0 / lam
    qcum = np.cumsum(np.asarray(sysf.transition, dtype=float), axis=1)
    rates = np.asarray(sysf.rates, dtype=float)
    samples = np.empty(n_samples)
    count = 0
    for pid in range(n_samples):
        gen = RngSpec(rng.seed, pid).generator()
        ts, _ = _sample_jumps(sysf, i0, gen, horizon, max(sysf.max_jumps, 1),
                              qcum, rates)
        if ts:
            samples[count] = ts[0]
            count += 1
    samples = samples[:count]
    stat, pvalue = scipy.stats.kstest(samples, "expon", args=(0.0, 1.0 / lam))
    return {
        "n_samples": int(count),
        "seed": rng.seed,
        "statistic": float(stat),
        "pvalue": float(pvalue),
        "pass_1pct": bool(pvalue > 0.01),
    }


def export_paths(sys: SwitchSystem, initial_mode, n_paths: int, rng: RngSpec,
                 grid_steps: int = 16, x0=None, u: ControlSpec | None = None):
    """Yield one JSON-ready record per path (trajectory plus state grid)."""
    sysf = sys.to_float()
    u = u or ControlSpec.zero()
    x0 = np.zeros(sysf.N) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    grid_step = float(sysf.horizon) / grid_steps
    for pid in range(n_paths):
        traj = sample_mode_path(sys, initial_mode, RngSpec(rng.seed, pid))
        real = integrate_state(sys, traj, x0, u, grid_step)
        yield {
            "stream_id": pid,
            "jump_times": [float(t) for t in traj.times[: traj.jump_count + 1]],
            "modes": list(traj.modes[: traj.jump_count + 1]),
            "grid_times": real.grid_times.tolist(),
            "states": real.states.tolist(),
            "terminal": real.terminal.tolist(),
        }
