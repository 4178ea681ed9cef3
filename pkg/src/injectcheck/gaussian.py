"""Injectivity of ReLU layers with iid Gaussian weights.

Closed-form quantities (half-space probabilities, the union-bound
threshold, the lower-bound root) sit next to a Monte Carlo study that
samples Gaussian layers at several expansivity ratios ``c = m / n`` and
records how often the mean-direction witness fails and, for small ``n``,
how often the layer is exactly certified injective.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np
from scipy.optimize import bisect

from .dss import Verdict, certify_dss_all, has_dss_at
from .errors import ZeroRow
from .numeric import Prng, Sampler, as_matrix, sample_gaussian_matrix

EXACT_MAX_N = 6
EXACT_BUDGET = 10**5


def wedge_count_formula(m, n):
    """Number of wedges cut out by ``m`` generic hyperplanes through the origin of ``R^n``."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    return 2 * sum(math.comb(m - 1, i) for i in range(n))


def halfspace_probability_exact(k, n):
    """Probability that ``k`` iid Gaussian vectors in ``R^n`` share a strictly positive direction.

    Equals the fraction of the ``2**k`` sign patterns realized by the
    generic arrangement, computed in exact rational arithmetic.
    """
    if k < 1 or n < 1:
        raise ValueError("k and n must be positive")
    return Fraction(sum(math.comb(k - 1, i) for i in range(n)), 2 ** (k - 1))


def positive_direction_exists(A, tol=1e-12):
    """Vectorized test whether ``{x : A x > 0}`` is nonempty for a stack of matrices.

    ``A`` has shape ``(trials, k, n)`` with ``k > n`` and generic rows.  The
    closed cone ``{A x >= 0}`` is then either ``{0}`` or full-dimensional and
    pointed; in the latter case the sum of its extreme rays is interior.
    Extreme rays are null vectors of ``n - 1`` rows that satisfy all other
    inequalities up to sign.
    """
    A = np.asarray(A, dtype=float)
    T, k, n = A.shape
    scale = np.linalg.norm(A, axis=2).max(axis=1)
    total = np.zeros((T, n))
    for rows in combinations(range(k), n - 1):
        if n == 1:
            r = np.ones((T, 1))
        else:
            sub = A[:, list(rows), :]
            _, _, vh = np.linalg.svd(sub, full_matrices=True)
            r = vh[:, -1, :]
        vals = np.einsum("tkn,tn->tk", A, r)
        thresh = (tol * scale)[:, None]
        plus = np.all(vals >= -thresh, axis=1)
        minus = np.all(vals <= thresh, axis=1)
        total += plus[:, None] * r - minus[:, None] * r
    vals = np.einsum("tkn,tn->tk", A, total)
    return np.all(vals > 0, axis=1)


def halfspace_probability_mc(k, n, trials, prng, chunk=20000):
    """Monte Carlo estimate of :func:`halfspace_probability_exact`."""
    if k <= n:
        return 1.0
    sampler = Sampler(prng) if isinstance(prng, Prng) else prng
    hits = 0
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        A = sampler.normal((b, k, n))
        hits += int(np.sum(positive_direction_exists(A)))
        done += b
    return hits / trials


def binary_entropy(p):
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def union_bound_exponent(c):
    """Exponent ``-log2(c e) - (c - 1)(H(1/(c - 1)) - 1)`` of the union bound, for ``c > 2``."""
    if c <= 2:
        raise ValueError("exponent is defined for c > 2")
    return -math.log2(c * math.e) - (c - 1) * (binary_entropy(1.0 / (c - 1)) - 1.0)


def union_bound_threshold(xtol=1e-6):
    """Smallest ratio ``c`` at which the union-bound exponent turns positive."""
    grid = np.arange(2.05, 100.0, 0.05)
    vals = [union_bound_exponent(c) for c in grid]
    for lo, hi, vlo, vhi in zip(grid, grid[1:], vals, vals[1:]):
        if vlo <= 0 < vhi:
            return float(bisect(union_bound_exponent, lo, hi, xtol=xtol))
    raise RuntimeError("no sign change of the union-bound exponent on (2, 100)")


def _lower_bound_gap(c):
    return 0.5 * math.erfc(1.0 / math.sqrt(2.0 * c)) - 1.0 / c


def cstar_lower_solve(xtol=1e-10):
    """Root of ``erfc(1 / sqrt(2c)) / 2 = 1 / c``.

    The left side is the probability that a standard normal exceeds
    ``1 / sqrt(c)``; below the root a Gaussian layer fails the
    mean-direction test with probability tending to one.
    """
    return float(bisect(_lower_bound_gap, 1.5, 10.0, xtol=xtol))


def mean_direction(W):
    """``-(1/m) sum_j w_j / |w_j|``."""
    W = as_matrix(W, "W")
    norms = np.linalg.norm(W, axis=1)
    if np.any(norms == 0):
        raise ZeroRow("mean direction needs every row to be nonzero")
    return -np.mean(W / norms[:, None], axis=0)


def mean_direction_test(W):
    """Number of rows active at the mean direction.

    A count below ``n`` proves the layer has no DSS there.  When the
    direction is exactly zero every row counts as active.
    """
    W = as_matrix(W, "W")
    x = mean_direction(W)
    return int(np.sum(W @ x >= 0))


@dataclass
class StudyRow:
    c: float
    m: int
    mean_active_count: float
    dss_at_mean_freq: float
    exact_injective_freq: float | None
    exact_decided: int


@dataclass
class ExpansivityStudy:
    """Per-ratio results of a Gaussian expansivity study."""

    n: int
    c_grid: list
    trials: int
    seed: int
    rows: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# seed={self.seed} n={self.n} trials={self.trials}\n")
        buf.write("c,mean_active_count,dss_at_mean_freq,exact_injective_freq\n")
        for r in self.rows:
            exact = "" if r.exact_injective_freq is None else f"{r.exact_injective_freq:.17g}"
            buf.write(f"{r.c:.17g},{r.mean_active_count:.17g},{r.dss_at_mean_freq:.17g},{exact}\n")
        return buf.getvalue()

    def row(self, c):
        for r in self.rows:
            if math.isclose(r.c, c):
                return r
        raise KeyError(c)


def _trial(n, m, c_index, trial, seed, exact, exact_budget):
    prng = Prng(seed, trial).fork(c_index)
    W = sample_gaussian_matrix(m, n, prng)
    x = mean_direction(W)
    count = int(np.sum(W @ x >= 0))
    dss = has_dss_at(W, x)
    verdict = None
    if exact:
        verdict = certify_dss_all(W, budget=exact_budget, prng=prng.fork(1)).verdict
    return count, dss, verdict


def run_expansivity_study(n, c_grid, trials, seed, exact_max_n=EXACT_MAX_N,
                          exact_budget=EXACT_BUDGET, threads=1):
    """Sample Gaussian layers for each ratio in ``c_grid`` and aggregate.

    Trial ``t`` at grid index ``i`` draws its weights from
    ``Prng(seed, t).fork(i)`` with ``m = round(c n)``, so results do not
    depend on the number of threads.  The exact arm runs only when
    ``n <= exact_max_n``; its frequency is over trials with a decisive
    verdict.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    study = ExpansivityStudy(n, [float(c) for c in c_grid], trials, seed)
    exact = n <= exact_max_n
    for ci, c in enumerate(study.c_grid):
        m = max(1, int(round(c * n)))
        args = [(n, m, ci, t, seed, exact, exact_budget) for t in range(trials)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda a: _trial(*a), args))
        else:
            results = [_trial(*a) for a in args]
        counts = np.array([r[0] for r in results], dtype=float)
        dss = np.array([r[1] for r in results], dtype=float)
        freq = None
        decided = 0
        if exact:
            verdicts = [r[2] for r in results if r[2] is not Verdict.INCONCLUSIVE]
            decided = len(verdicts)
            if decided:
                freq = sum(v is Verdict.INJECTIVE for v in verdicts) / decided
        study.rows.append(StudyRow(c, m, float(counts.mean()), float(dss.mean()), freq, decided))
    return study
