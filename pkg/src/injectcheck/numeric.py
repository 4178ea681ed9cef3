"""Dense linear algebra, small LP feasibility and reproducible sampling.

Everything else in the package is built on the handful of kernels here:
SVD-based rank and smallest-singular-value queries, a tri-state linear
feasibility oracle, and a counter-based Gaussian sampler whose output is
fixed by ``(seed, stream)`` alone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionError

RANK_TOL = 1e-9
DELTA_STRICT = 1e-7
TAU_FEAS = 1e-9
TAU_COLLIDE = 1e-9
TAU_NUM = 1e-8

_MASK64 = (1 << 64) - 1
_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def as_matrix(M, name="matrix"):
    """Validate and return ``M`` as a finite 2-D float array."""
    A = np.asarray(M, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(A)):
        raise DimensionError(f"{name} has non-finite entries")
    return A


def as_vector(x, dim=None, name="vector"):
    v = np.asarray(x, dtype=float).reshape(-1)
    if dim is not None and v.shape[0] != dim:
        raise DimensionError(f"{name} has length {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise DimensionError(f"{name} has non-finite entries")
    return v


def relu(z):
    return np.maximum(z, 0.0)


def singular_values(M):
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def smallest_singular_value(M):
    """Return ``min_{|x|=1} |Mx|`` for a matrix with ``rows >= cols``.

    Zero rows are allowed and do not change the result.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError("expected a 2-D matrix")
    rows, cols = M.shape
    if rows < cols:
        raise DimensionError(f"smallest singular value needs rows >= cols, got {M.shape}")
    if cols == 0:
        return 0.0
    return float(singular_values(M)[-1])


def rank(M, tol=RANK_TOL):
    """Numerical rank: number of singular values above ``tol * sigma_max``."""
    s = singular_values(M)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def nullspace_vector(M, tol=RANK_TOL, cols=None):
    """A unit vector in the numerical kernel of ``M``, or ``None``.

    ``M`` may have zero rows when ``cols`` is given, in which case every
    vector is in the kernel and the first basis vector is returned.  The
    sign is fixed so that the largest-magnitude entry is positive.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        if cols is None:
            raise DimensionError("expected a 2-D matrix")
        M = M.reshape(-1, cols)
    n = M.shape[1]
    if M.shape[0] == 0:
        v = np.zeros(n)
        v[0] = 1.0
        return v
    if rank(M, tol) >= n:
        return None
    _, _, vh = np.linalg.svd(M, full_matrices=True)
    v = vh[-1].copy()
    k = int(np.argmax(np.abs(v)))
    if v[k] < 0:
        v = -v
    return v / np.linalg.norm(v)


def complement_basis(h):
    """Orthonormal basis (as columns) of the hyperplane orthogonal to ``h``."""
    h = np.asarray(h, dtype=float)
    d = h.shape[0]
    # Householder reflection mapping e_0 to h/|h|; its other columns span h-perp.
    u = h / np.linalg.norm(h)
    e = np.zeros(d)
    e[0] = 1.0
    w = u - e if u[0] <= 0 else u + e
    nw = np.linalg.norm(w)
    if nw == 0.0:
        return np.eye(d)[:, 1:]
    w /= nw
    H = np.eye(d) - 2.0 * np.outer(w, w)
    return H[:, 1:]


# ---------------------------------------------------------------------------
# Linear feasibility
# ---------------------------------------------------------------------------


class Feasibility(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    INCONCLUSIVE = "inconclusive"


@dataclass
class FeasibilityResult:
    status: Feasibility
    witness: np.ndarray | None = None
    margin: float | None = None
    message: str = ""

    @property
    def feasible(self):
        return self.status is Feasibility.FEASIBLE


def _split_pair(pair, dim, label):
    if pair is None:
        return np.zeros((0, dim if dim is not None else 0)), np.zeros(0)
    A, b = pair
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape[0] != b.shape[0]:
        raise DimensionError(f"{label}: {A.shape[0]} rows but {b.shape[0]} right-hand sides")
    return A, b


def _normalize_rows(A, b):
    norms = np.linalg.norm(A, axis=1)
    nz = norms > 0
    return A[nz] / norms[nz, None], b[nz] / norms[nz], b[~nz]


def linear_feasibility(
    equalities=None,
    weak_inequalities=None,
    strict_inequalities=None,
    *,
    bounds=None,
    objective=None,
    delta_strict=DELTA_STRICT,
    tau_feas=TAU_FEAS,
):
    """Decide feasibility of ``{Ex = e, Ax <= a, Sx < s}``.

    Each constraint family is an ``(matrix, rhs)`` pair.  Rows are scaled
    to unit norm before solving.  Strict rows are interiorized by
    maximizing a common slack ``t <= 1``; the system is reported feasible
    only when ``t >= delta_strict``, infeasible when the best slack is
    non-positive, and inconclusive in between.  ``objective`` (optional,
    only used without strict rows) is minimized to pick a particular
    witness.  ``bounds`` is a list of ``(lo, hi)`` per variable.
    """
    dims = {np.asarray(p[0]).reshape(len(np.atleast_1d(p[1])), -1).shape[1]
            for p in (equalities, weak_inequalities, strict_inequalities) if p is not None}
    if len(dims) > 1:
        raise DimensionError(f"constraint families disagree on dimension: {sorted(dims)}")
    if not dims:
        raise DimensionError("no constraints given")
    n = dims.pop()

    E, e = _split_pair(equalities, n, "equalities")
    A, a = _split_pair(weak_inequalities, n, "weak inequalities")
    S, s = _split_pair(strict_inequalities, n, "strict inequalities")

    E, e, e0 = _normalize_rows(E, e)
    A, a, a0 = _normalize_rows(A, a)
    S, s, s0 = _normalize_rows(S, s)
    # Zero rows are constant constraints: 0 = e, 0 <= a, 0 < s.
    if np.any(np.abs(e0) > tau_feas) or np.any(a0 < -tau_feas) or np.any(s0 <= 0):
        return FeasibilityResult(Feasibility.INFEASIBLE, message="constant constraint violated")

    bnds = list(bounds) if bounds is not None else [(None, None)] * n
    strict = S.shape[0] > 0
    if strict:
        nv = n + 1
        c = np.zeros(nv)
        c[-1] = -1.0
        A_ub = np.vstack([np.hstack([A, np.zeros((A.shape[0], 1))]),
                          np.hstack([S, np.ones((S.shape[0], 1))])])
        b_ub = np.concatenate([a, s])
        A_eq = np.hstack([E, np.zeros((E.shape[0], 1))]) if E.shape[0] else None
        bnds = bnds + [(None, 1.0)]
    else:
        nv = n
        c = np.zeros(n) if objective is None else np.asarray(objective, dtype=float)
        A_ub, b_ub = (A, a) if A.shape[0] else (None, None)
        A_eq = E if E.shape[0] else None
    if strict and A_ub.shape[0] == 0:
        A_ub, b_ub = None, None

    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=e if E.shape[0] else None,
                  bounds=bnds, method="highs", options=_HIGHS_OPTIONS)
    if res.status == 2:
        return FeasibilityResult(Feasibility.INFEASIBLE, message=res.message)
    if res.status == 3 and not strict:
        # Unbounded objective still certifies feasibility; re-solve without it.
        return linear_feasibility(equalities, weak_inequalities, None, bounds=bounds,
                                  tau_feas=tau_feas)
    if res.status != 0:
        return FeasibilityResult(Feasibility.INCONCLUSIVE, message=res.message)

    x = np.asarray(res.x[:n], dtype=float)
    margin = float(res.x[-1]) if strict else None
    if strict:
        if margin <= 10 * TAU_FEAS:
            return FeasibilityResult(Feasibility.INFEASIBLE, margin=margin,
                                     message="strict system has no interior")
        if margin < delta_strict:
            return FeasibilityResult(Feasibility.INCONCLUSIVE, witness=x, margin=margin,
                                     message="interior margin below delta_strict")

    scale = tau_feas * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
    ok = True
    if E.shape[0]:
        ok &= bool(np.all(np.abs(E @ x - e) <= scale))
    if A.shape[0]:
        ok &= bool(np.all(A @ x - a <= scale))
    if S.shape[0]:
        ok &= bool(np.all(S @ x - s < 0))
    if not ok:
        return FeasibilityResult(Feasibility.INCONCLUSIVE, witness=x, margin=margin,
                                 message="solver witness fails verification")
    return FeasibilityResult(Feasibility.FEASIBLE, witness=x, margin=margin)


# ---------------------------------------------------------------------------
# Reproducible sampling
# ---------------------------------------------------------------------------


def _splitmix64(z):
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class Prng:
    """Immutable handle on one random stream.

    The stream is Philox-4x64 keyed by ``(seed, stream)`` with its counter
    starting at zero, so the same pair reproduces the same raw 64-bit
    words on every platform.  Normals are produced from those words by the
    Marsaglia polar method (see :class:`Sampler`).  Independent sub-streams
    come from :meth:`fork`.
    """

    seed: int
    stream: int = 0

    def fork(self, index):
        """Child stream ``splitmix64(splitmix64(stream) ^ index)``."""
        return Prng(self.seed, _splitmix64(_splitmix64(self.stream & _MASK64) ^ (index & _MASK64)))

    def sampler(self):
        return Sampler(self)


class Sampler:
    """Stateful draw sequence for one :class:`Prng`.

    Uniforms are ``(word >> 11) * 2**-53``.  Normals use the polar method
    on pairs of uniforms in ``(-1, 1)``; accepted pairs are emitted in order
    and any unused normal is kept for the next call, so the normal sequence
    does not depend on how requests are batched.
    """

    def __init__(self, prng):
        key = np.array([prng.seed & _MASK64, prng.stream & _MASK64], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self._spare = np.zeros(0)

    def _words(self, count):
        return self._bitgen.random_raw(count)

    def uniform(self, size=None):
        count = int(np.prod(size)) if size is not None else 1
        u = (self._words(count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return u.reshape(size) if size is not None else float(u[0])

    def normal(self, size):
        count = int(np.prod(size))
        out = [self._spare]
        have = self._spare.shape[0]
        while have < count:
            pairs = max(16, int(np.ceil((count - have) / 2 / 0.78)) + 8)
            w = (self._words(2 * pairs) >> np.uint64(11)).astype(np.float64)
            uv = (w + 0.5) * 2.0 ** -52 - 1.0
            u, v = uv[0::2], uv[1::2]
            r = u * u + v * v
            ok = (r > 0.0) & (r < 1.0)
            u, v, r = u[ok], v[ok], r[ok]
            f = np.sqrt(-2.0 * np.log(r) / r)
            z = np.empty(2 * u.shape[0])
            z[0::2] = u * f
            z[1::2] = v * f
            out.append(z)
            have += z.shape[0]
        allz = np.concatenate(out)
        self._spare = allz[count:]
        return allz[:count].reshape(size)

    def sphere(self, count, dim):
        """``count`` points uniform on the unit sphere in ``R^dim``."""
        X = self.normal((count, dim))
        norms = np.linalg.norm(X, axis=1)
        norms[norms == 0] = 1.0
        return X / norms[:, None]


def sample_gaussian_matrix(rows, cols, prng):
    """Matrix of iid standard normals, filled row-major from ``prng``."""
    if rows < 1 or cols < 1:
        raise DimensionError("rows and cols must be >= 1")
    return Sampler(prng).normal((rows, cols))
