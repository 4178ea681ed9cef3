"""Inverse Lipschitz constants of injective ReLU layers.

For an injective ``x -> ReLU(Wx)`` the output separation is bounded below
by ``C(W) * |x0 - x1|`` with

    C(W) = (2m)**-0.5 * min over wedges of sigma_min(W restricted to active rows).

Adding rows never decreases the smallest singular value, and boundary
points activate supersets of a neighbouring wedge's rows, so the minimum
over open wedges is the minimum over all directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dss import WEDGE_BUDGET, Verdict, batched_sigma_min, certify_dss_all, wedge_arrays
from .errors import BudgetExceeded, NotInjective
from .numeric import TAU_NUM, Prng, Sampler, as_matrix, as_vector, relu


@dataclass
class StabilityReport:
    """Exact and sampled inverse Lipschitz estimates for one matrix.

    ``C_sampled`` and ``empirical_min_ratio`` are both upper bounds on
    ``C_exact`` up to ``TAU_NUM``.  ``argmin_wedge`` is the sign pattern of
    the worst wedge.
    """

    C_exact: float | None
    C_sampled: float
    empirical_min_ratio: float
    argmin_wedge: np.ndarray | None = None
    wedge_count: int | None = None

    def to_dict(self):
        return {
            "C_exact": self.C_exact,
            "C_sampled": self.C_sampled,
            "empirical_min_ratio": self.empirical_min_ratio,
            "argmin_wedge": None if self.argmin_wedge is None
            else [int(s) for s in self.argmin_wedge],
            "wedge_count": self.wedge_count,
        }


def _exact_constant(W, budget):
    row_signs, _ = wedge_arrays(W, budget)
    sig = batched_sigma_min(W, row_signs > 0)
    k = int(np.argmin(sig))
    return float(sig[k]) / np.sqrt(2 * W.shape[0]), row_signs[k].copy(), len(sig)


def inverse_lipschitz_sampled(W, trials, prng):
    """Minimum of the wedge constant over ``trials`` sampled directions."""
    W = as_matrix(W, "W")
    sampler = Sampler(prng) if isinstance(prng, Prng) else prng
    X = sampler.sphere(int(trials), W.shape[1])
    sig = batched_sigma_min(W, (X @ W.T) >= 0)
    return float(sig.min()) / np.sqrt(2 * W.shape[0])


def sample_pairs(n, pairs, sampler):
    """Input pairs for ratio probing: half near, half independent.

    Near pairs start at a uniform point on the unit sphere and move a
    log-uniform distance in ``[1e-3, 10]`` along a uniform direction.
    """
    near = pairs // 2
    x0 = sampler.sphere(pairs, n)
    dist = 10.0 ** (sampler.uniform((near,)) * 4.0 - 3.0)
    x1 = np.empty_like(x0)
    x1[:near] = x0[:near] + dist[:, None] * sampler.sphere(near, n)
    far = pairs - near
    x1[near:] = sampler.normal((far, n)) * 3.0
    x0[near:] = sampler.normal((far, n)) * 3.0
    return x0, x1


def pair_distances(W, b, x0, x1):
    """Input and output distances of paired rows of ``x0`` and ``x1``."""
    W = np.asarray(W, dtype=float)
    b = np.zeros(W.shape[0]) if b is None else np.asarray(b, dtype=float)
    d_in = np.linalg.norm(x0 - x1, axis=1)
    d_out = np.linalg.norm(relu(x0 @ W.T + b) - relu(x1 @ W.T + b), axis=1)
    return d_in, d_out


def empirical_min_ratio(W, b, pairs, prng, return_distances=False):
    """Smallest output/input distance ratio over sampled pairs."""
    W = as_matrix(W, "W")
    sampler = Sampler(prng) if isinstance(prng, Prng) else prng
    x0, x1 = sample_pairs(W.shape[1], int(pairs), sampler)
    d_in, d_out = pair_distances(W, b, x0, x1)
    ok = d_in > 0
    ratio = float(np.min(d_out[ok] / d_in[ok]))
    if return_distances:
        return ratio, d_in, d_out
    return ratio


def inverse_lipschitz_exact(W, budget=WEDGE_BUDGET, trials=1000, pairs=1000, prng=None):
    """Stability report with the exact constant from wedge enumeration.

    Raises
    ------
    NotInjective
        When the layer is not certified injective.
    """
    W = as_matrix(W, "W")
    prng = prng if prng is not None else Prng(0)
    cert = certify_dss_all(W, budget=budget)
    if cert.verdict is not Verdict.INJECTIVE:
        raise NotInjective(f"layer is not certified injective ({cert.verdict.value})")
    try:
        C, pattern, count = _exact_constant(W, budget)
    except BudgetExceeded:
        C, pattern, count = None, None, None
    return StabilityReport(
        C_exact=C,
        C_sampled=inverse_lipschitz_sampled(W, trials, prng.fork(0)),
        empirical_min_ratio=empirical_min_ratio(W, None, pairs, prng.fork(1)),
        argmin_wedge=pattern,
        wedge_count=count,
    )


def colinear_additivity_check(W, x1, x2, breakpoints, tau=TAU_NUM):
    """Check that splitting a segment does not increase total output travel.

    With ``x_t = (1 - t) x1 + t x2`` and breakpoints ``0 = t_1 <= ... <= t_k = 1``,
    verifies both

    * ``sum |f(x_{t_i}) - f(x_{t_{i+1}})|**2 <= |f(x1) - f(x2)|**2`` and
    * ``sum |f(x_{t_i}) - f(x_{t_{i+1}})| <= sqrt(k) |f(x1) - f(x2)|``

    for ``f = ReLU(W .)``, each within ``tau``.
    """
    W = as_matrix(W, "W")
    x1 = as_vector(x1, W.shape[1], "x1")
    x2 = as_vector(x2, W.shape[1], "x2")
    t = np.asarray(breakpoints, dtype=float).reshape(-1)
    if t.size < 2 or t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) < 0):
        raise ValueError("breakpoints must increase from 0 to 1")
    pts = (1.0 - t)[:, None] * x1 + t[:, None] * x2
    out = relu(pts @ W.T)
    steps = np.linalg.norm(np.diff(out, axis=0), axis=1)
    total = float(np.linalg.norm(out[-1] - out[0]))
    squared_ok = float(np.sum(steps ** 2)) <= total ** 2 + tau
    norm_ok = float(np.sum(steps)) <= np.sqrt(t.size) * total + tau
    return bool(squared_ok and norm_ok)


def segment_active_sets(W, x0, x1):
    """Distinct active sets on the open pieces of the segment from ``x0`` to ``x1``.

    Each row's inner product is affine along the segment, so it changes
    sign at most once; the segment is cut into at most ``m + 1`` pieces
    and meets at most that many distinct active sets.
    """
    W = as_matrix(W, "W")
    x0 = as_vector(x0, W.shape[1], "x0")
    x1 = as_vector(x1, W.shape[1], "x1")
    a, d = W @ x0, W @ (x1 - x0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = np.where(d != 0, -a / d, np.nan)
    ts = np.unique(cross[(cross > 0) & (cross < 1)])
    probes = np.concatenate([[0.0], ts, [1.0]])
    mids = 0.5 * (probes[:-1] + probes[1:])
    distinct = []
    for t in mids:
        s = tuple(int(j) for j in np.flatnonzero(a + t * d >= 0))
        if s not in distinct:
            distinct.append(s)
    return distinct
