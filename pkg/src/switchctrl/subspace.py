"""Linear subspaces of R^N with two interchangeable arithmetic backends.

The exact backend stores matrix entries as ``fractions.Fraction`` inside
object-dtype numpy arrays and does Gauss-Jordan elimination, so every rank
decision is exact.  The float backend stores binary64 arrays and makes rank
decisions through SVD with a relative singular-value threshold.  Subspaces
are kept in a canonical form (reduced column echelon basis for the exact
backend, sign-fixed orthonormal basis for the float backend) so equality and
fixed-point detection are plain comparisons.

Everything here is a pure function of immutable inputs; nothing mutates its
arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "SubspaceError",
    "Tolerance",
    "Subspace",
    "as_matrix",
    "is_exact_array",
    "to_float",
    "to_exact",
    "span",
    "kernel",
    "image",
    "subspace_sum",
    "intersect",
    "preimage",
    "projector",
    "contains",
    "vector_in",
    "equals",
    "largest_invariant",
    "min_norm_solve",
    "rank",
]


class SubspaceError(Exception):
    """Inconsistent dimensions or a numerically unstable rank decision."""


@dataclass(frozen=True)
class Tolerance:
    """Rank and membership thresholds; both exactly zero means exact arithmetic."""

    rank_rel_tol: float = 0.0
    membership_tol: float = 0.0

    def __post_init__(self):
        if self.rank_rel_tol < 0 or self.membership_tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if (self.rank_rel_tol == 0) != (self.membership_tol == 0):
            raise ValueError("tolerances must be both zero (exact) or both positive (float)")

    @property
    def is_exact(self) -> bool:
        return self.rank_rel_tol == 0

    @classmethod
    def exact(cls) -> "Tolerance":
        return cls(0.0, 0.0)

    @classmethod
    def floating(cls, rank_rel_tol: float = 1e-9, membership_tol: float = 1e-9) -> "Tolerance":
        if rank_rel_tol <= 0 or membership_tol <= 0:
            raise ValueError("float-backend tolerances must be strictly positive")
        return cls(rank_rel_tol, membership_tol)


def is_exact_array(m: np.ndarray) -> bool:
    return m.dtype == object


def as_matrix(entries, exact: bool | None = None) -> np.ndarray:
    """Coerce nested sequences / arrays to a validated 2-d matrix.

    ``exact=True`` yields an object array of Fractions, ``exact=False`` a
    float64 array; ``None`` keeps Fractions exact when every entry is an
    int / Fraction / "p/q" string and falls back to float otherwise.
    """
    arr = np.asarray(entries, dtype=object)
    if arr.ndim != 2:
        raise SubspaceError(f"matrix must be 2-d, got shape {arr.shape}")
    flat = arr.ravel().tolist()
    if exact is None:
        exact = all(isinstance(x, (int, Fraction, str)) and not isinstance(x, bool) for x in flat)
    if exact:
        out = np.empty(arr.shape, dtype=object)
        out.ravel()[:] = [_to_fraction(x) for x in flat]
        return out
    out = np.asarray([[float(_to_fraction(x)) if isinstance(x, str) else float(x) for x in row]
                      for row in arr.tolist()], dtype=float).reshape(arr.shape)
    if not np.all(np.isfinite(out)):
        raise SubspaceError("matrix entries must be finite")
    return out


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, float):
        if not np.isfinite(x):
            raise SubspaceError("matrix entries must be finite")
        return Fraction(x)
    raise SubspaceError(f"cannot interpret {x!r} as an exact scalar")


def to_float(m: np.ndarray) -> np.ndarray:
    if not is_exact_array(m):
        return np.asarray(m, dtype=float)
    return np.asarray([[float(x) for x in row] for row in m.tolist()], dtype=float).reshape(m.shape)


def to_exact(m: np.ndarray) -> np.ndarray:
    if is_exact_array(m):
        return m
    out = np.empty(m.shape, dtype=object)
    out.ravel()[:] = [Fraction(x).limit_denominator(10**12) if isinstance(x, float) else Fraction(x)
                      for x in np.asarray(m).ravel().tolist()]
    return out


def _exact_zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.ravel()[:] = [Fraction(0)] * out.size
    return out


def _exact_eye(n: int) -> np.ndarray:
    out = _exact_zeros((n, n))
    for i in range(n):
        out[i, i] = Fraction(1)
    return out


def eye(n: int, exact: bool) -> np.ndarray:
    return _exact_eye(n) if exact else np.eye(n)


def zeros(shape, exact: bool) -> np.ndarray:
    return _exact_zeros(shape) if exact else np.zeros(shape)


# ---------------------------------------------------------------------------
# exact Gauss-Jordan kernels
# ---------------------------------------------------------------------------

def _rref(m: np.ndarray) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form of an exact matrix; returns (rows, pivot columns)."""
    rows = [list(r) for r in m.tolist()]
    nrows = len(rows)
    ncols = len(rows[0]) if nrows else 0
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        pr = next((i for i in range(r, nrows) if rows[i][c] != 0), None)
        if pr is None:
            continue
        rows[r], rows[pr] = rows[pr], rows[r]
        pv = rows[r][c]
        rows[r] = [x / pv for x in rows[r]]
        for i in range(nrows):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == nrows:
            break
    return rows, pivots


def rank(m: np.ndarray, tol: Tolerance) -> int:
    if m.size == 0:
        return 0
    if tol.is_exact:
        if not is_exact_array(m):
            raise SubspaceError("exact tolerance requires an exact matrix")
        return len(_rref(m)[1])
    s = np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol.rank_rel_tol * s[0]))


def _exact_column_echelon(m: np.ndarray) -> np.ndarray:
    """Canonical basis of the column space: transposed nonzero RREF rows of m^T."""
    rows, pivots = _rref(m.T)
    k = len(pivots)
    if k == 0:
        return _exact_zeros((m.shape[0], 0))
    basis = np.empty((m.shape[0], k), dtype=object)
    for j in range(k):
        basis[:, j] = rows[j]
    return basis


def _float_orthonormal(m: np.ndarray, tol: Tolerance) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape[1] == 0:
        return np.zeros((m.shape[0], 0))
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((m.shape[0], 0))
    r = int(np.sum(s > tol.rank_rel_tol * s[0]))
    return _fix_signs(u[:, :r])


def _fix_signs(b: np.ndarray) -> np.ndarray:
    b = b.copy()
    for j in range(b.shape[1]):
        i = int(np.argmax(np.abs(b[:, j])))
        if b[i, j] < 0:
            b[:, j] = -b[:, j]
    return b


# ---------------------------------------------------------------------------
# the Subspace type
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Subspace:
    """A linear subspace of R^ambient_dim held by a canonical basis matrix.

    The zero subspace carries an empty (ambient_dim x 0) basis, never a
    near-zero column.
    """

    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self):
        if self.basis.shape[0] != self.ambient_dim:
            raise SubspaceError("basis rows must match ambient dimension")

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def exact(self) -> bool:
        return is_exact_array(self.basis)

    @property
    def is_zero(self) -> bool:
        return self.dim == 0

    @classmethod
    def zero(cls, n: int, exact: bool = True) -> "Subspace":
        return cls(n, _exact_zeros((n, 0)) if exact else np.zeros((n, 0)))

    @classmethod
    def full(cls, n: int, exact: bool = True) -> "Subspace":
        return cls(n, _exact_eye(n) if exact else np.eye(n))

    def to_float(self) -> "Subspace":
        if not self.exact:
            return self
        return span(to_float(self.basis), Tolerance.floating())

    def __repr__(self):
        return f"Subspace(dim={self.dim}, ambient={self.ambient_dim})"


def span(m: np.ndarray, tol: Tolerance) -> Subspace:
    """Subspace spanned by the columns of m, in canonical form."""
    _check_backend(tol, m)
    if m.shape[1] == 0:
        return Subspace.zero(m.shape[0], exact=tol.is_exact)
    basis = _exact_column_echelon(m) if tol.is_exact else _float_orthonormal(m, tol)
    return Subspace(m.shape[0], basis)


def _check_backend(tol: Tolerance, *ms: np.ndarray):
    for m in ms:
        if tol.is_exact and not is_exact_array(m):
            raise SubspaceError("exact tolerance used with a float matrix")
        if not tol.is_exact and is_exact_array(m):
            raise SubspaceError("float tolerance used with an exact matrix")


def _check_same_ambient(u: Subspace, v: Subspace):
    if u.ambient_dim != v.ambient_dim:
        raise SubspaceError(f"ambient dimensions differ: {u.ambient_dim} vs {v.ambient_dim}")


def kernel(m: np.ndarray, tol: Tolerance) -> Subspace:
    """Null space {v : m v = 0}.  A matrix with no rows has full kernel."""
    _check_backend(tol, m)
    nrows, ncols = m.shape
    if nrows == 0 or ncols == 0:
        return Subspace.full(ncols, tol.is_exact) if ncols else Subspace.zero(0, tol.is_exact)
    if tol.is_exact:
        rows, pivots = _rref(m)
        free = [c for c in range(ncols) if c not in pivots]
        if not free:
            return Subspace.zero(ncols, exact=True)
        vecs = _exact_zeros((ncols, len(free)))
        for j, fc in enumerate(free):
            vecs[fc, j] = Fraction(1)
            for i, pc in enumerate(pivots):
                vecs[pc, j] = -rows[i][fc]
        return span(vecs, tol)
    mf = np.asarray(m, dtype=float)
    _, s, vt = np.linalg.svd(mf)
    r = 0 if s.size == 0 or s[0] == 0 else int(np.sum(s > tol.rank_rel_tol * s[0]))
    if r == ncols:
        return Subspace.zero(ncols, exact=False)
    return Subspace(ncols, _fix_signs(vt[r:].T))


def image(m: np.ndarray, tol: Tolerance) -> Subspace:
    """Column space of m."""
    _check_backend(tol, m)
    return span(m, tol)


def subspace_sum(u: Subspace, v: Subspace, tol: Tolerance) -> Subspace:
    """Span of the union of the two bases."""
    _check_same_ambient(u, v)
    if u.is_zero:
        return v
    if v.is_zero:
        return u
    return span(np.concatenate([u.basis, v.basis], axis=1), tol)


def intersect(u: Subspace, v: Subspace, tol: Tolerance) -> Subspace:
    """Intersection, via null vectors of the stacked basis [U | -V]."""
    _check_same_ambient(u, v)
    if u.is_zero or v.is_zero:
        return Subspace.zero(u.ambient_dim, exact=tol.is_exact)
    stacked = np.concatenate([u.basis, -v.basis], axis=1)
    null = kernel(stacked, tol)
    if null.is_zero:
        return Subspace.zero(u.ambient_dim, exact=tol.is_exact)
    return span(u.basis @ null.basis[: u.dim, :], tol)


def orthocomplement(s: Subspace, tol: Tolerance) -> Subspace:
    if s.is_zero:
        return Subspace.full(s.ambient_dim, exact=tol.is_exact)
    return kernel(s.basis.T, tol)


def preimage(m: np.ndarray, s: Subspace, tol: Tolerance) -> Subspace:
    """{v : m v in s}, computed as the kernel of the conditions cutting out s.

    The rows W^T of the orthocomplement basis satisfy (x in s <=> W^T x = 0),
    so the preimage is ker(W^T m) -- the same space as ker(Pi_{s-perp} m).
    """
    _check_backend(tol, m)
    if m.shape[0] != s.ambient_dim:
        raise SubspaceError("matrix codomain does not match the subspace ambient space")
    w = orthocomplement(s, tol)
    if w.is_zero:
        return Subspace.full(m.shape[1], exact=tol.is_exact)
    return kernel(w.basis.T @ m, tol)


def projector(v: Subspace) -> np.ndarray:
    """Orthogonal projector onto v: symmetric, idempotent, image v."""
    n = v.ambient_dim
    if v.is_zero:
        return _exact_zeros((n, n)) if v.exact else np.zeros((n, n))
    b = v.basis
    if not v.exact:
        return b @ b.T  # canonical float basis is orthonormal
    gram = b.T @ b
    x = _exact_solve(gram, b.T)
    return b @ x


def _exact_solve(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a @ x = rhs for square invertible exact a."""
    n = a.shape[0]
    aug = np.concatenate([a, rhs], axis=1)
    rows, pivots = _rref(aug)
    if pivots[:n] != list(range(n)):
        raise SubspaceError("singular exact system")
    out = np.empty((n, rhs.shape[1]), dtype=object)
    for i in range(n):
        out[i, :] = rows[i][n:]
    return out


def contains(u: Subspace, v: Subspace, tol: Tolerance) -> bool:
    """True iff every basis vector of v lies in u (within membership_tol)."""
    _check_same_ambient(u, v)
    if v.is_zero:
        return True
    if u.is_zero:
        return False
    if tol.is_exact:
        combined = np.concatenate([u.basis, v.basis], axis=1)
        return rank(combined, tol) == u.dim
    resid = v.basis - u.basis @ (u.basis.T @ v.basis)
    return bool(np.max(np.abs(resid)) <= tol.membership_tol)


def vector_in(u: Subspace, x: np.ndarray, tol: Tolerance) -> bool:
    x = x.reshape(-1, 1)
    if tol.is_exact:
        if np.all(x == 0):
            return True
        return rank(np.concatenate([u.basis, x], axis=1), tol) == u.dim if not u.is_zero else False
    scale = max(1.0, float(np.max(np.abs(x))))
    if u.is_zero:
        return bool(np.max(np.abs(x)) <= tol.membership_tol * scale)
    resid = x - u.basis @ (u.basis.T @ x)
    return bool(np.max(np.abs(resid)) <= tol.membership_tol * scale)


def equals(u: Subspace, v: Subspace, tol: Tolerance) -> bool:
    if u.dim != v.dim:
        return False
    if tol.is_exact:
        return bool(np.array_equal(u.basis, v.basis))  # canonical form is unique
    return contains(u, v, tol) and contains(v, u, tol)


def largest_invariant(a: np.ndarray, cs: list[np.ndarray] | tuple[np.ndarray, ...],
                      k: Subspace, tol: Tolerance) -> Subspace:
    """Largest V inside k with a V contained in V + sum_i image(cs[i]).

    Fixed-point iteration V <- V  intersect  preimage(a, V + S) starting from
    V = k, where S is the sum of the images of the cs operators.  Dimensions
    strictly decrease until the fixed point, so dim(k)+1 passes always
    suffice; running longer signals an inconsistent rank decision.
    """
    _check_backend(tol, a, *cs)
    if a.shape[0] != a.shape[1] or a.shape[0] != k.ambient_dim:
        raise SubspaceError("operator must be square on the ambient space of k")
    s = Subspace.zero(k.ambient_dim, exact=tol.is_exact)
    for c in cs:
        s = subspace_sum(s, image(c, tol), tol)
    v = k
    for _ in range(k.dim + 1):
        target = subspace_sum(v, s, tol)
        nxt = intersect(v, preimage(a, target, tol), tol)
        if nxt.dim == v.dim:
            return v
        if nxt.dim > v.dim:
            raise SubspaceError("invariant-subspace iteration gained dimension; "
                                "rank tolerance is inconsistent")
        v = nxt
    if v.dim == 0:
        return v
    raise SubspaceError("invariant-subspace iteration failed to stabilize in dim(k)+1 steps")


def min_norm_solve(m: np.ndarray, rhs: np.ndarray, tol: Tolerance) -> np.ndarray | None:
    """Minimum-norm solution of m x = rhs, or None when inconsistent.

    Exact backend: restrict to a maximal independent row set R and return
    M_R^T (M_R M_R^T)^{-1} rhs_R.  Float backend: numpy lstsq with a residual
    consistency check.
    """
    _check_backend(tol, m)
    rhs = rhs.reshape(-1)
    if m.shape[1] == 0:
        ok = np.all(rhs == 0) if tol.is_exact else np.max(np.abs(rhs), initial=0.0) <= tol.membership_tol
        return (zeros((0,), tol.is_exact) if ok else None)
    if tol.is_exact:
        aug = np.concatenate([m, rhs.reshape(-1, 1)], axis=1)
        if rank(aug, tol) != rank(m, tol):
            return None
        _, piv_rows = _rref(m.T)  # pivot columns of m^T == independent rows of m
        if not piv_rows:
            return _exact_zeros((m.shape[1],))
        mr = m[piv_rows, :]
        z = _exact_solve(mr @ mr.T, rhs[piv_rows].reshape(-1, 1))
        return (mr.T @ z).reshape(-1)
    mf = np.asarray(m, dtype=float)
    rf = np.asarray(rhs, dtype=float)
    x, _, _, _ = np.linalg.lstsq(mf, rf, rcond=None)
    resid = mf @ x - rf
    scale = max(1.0, float(np.max(np.abs(rf), initial=0.0)))
    if np.max(np.abs(resid), initial=0.0) > 10 * tol.membership_tol * scale:
        return None
    return x
