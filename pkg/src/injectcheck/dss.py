"""Directed-spanning-set checks and exhaustive wedge enumeration.

A ReLU layer ``x -> ReLU(Wx)`` is injective exactly when, for every
direction ``x``, the rows with ``<w_j, x> >= 0`` span the input space.
The active set is constant on each open cell ("wedge") of the central
hyperplane arrangement ``{<w_j, x> = 0}``, and the active set at a
boundary point contains the active set of a neighbouring open cell, so
checking one interior witness per wedge decides the question.

Wedges are enumerated by inserting hyperplanes one at a time.  The cells
cut by a new hyperplane ``h`` are in bijection with the cells of the
previous arrangement restricted to ``h``, which is the same problem one
dimension lower.  Witnesses for the restricted cells are lifted back and
pushed a small step to either side of ``h``.  No LP is needed except to
polish witnesses whose margin ended up below ``DELTA_STRICT``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, DimensionError
from .numeric import (
    DELTA_STRICT,
    RANK_TOL,
    TAU_COLLIDE,
    Feasibility,
    Prng,
    Sampler,
    as_matrix,
    as_vector,
    complement_basis,
    linear_feasibility,
    nullspace_vector,
    rank,
    relu,
)

WEDGE_BUDGET = 10**6
# Two unit normals closer than this (up to sign) define the same hyperplane.
MERGE_TOL = 1e-8
SCREEN_TRIALS = 20000


class Verdict(str, enum.Enum):
    INJECTIVE = "Injective"
    NON_INJECTIVE = "NonInjective"
    INCONCLUSIVE = "Inconclusive"


class _Degenerate(Exception):
    """Internal: the enumeration lost track of a cell numerically."""


@dataclass
class WedgeCell:
    """One open cell of the central arrangement of ``W``.

    ``sign_pattern[j]`` is the sign of ``<w_j, witness>``; zero rows carry
    ``+1`` because they are always active.
    """

    sign_pattern: np.ndarray
    witness: np.ndarray

    @property
    def active_set(self):
        return tuple(int(j) for j in np.flatnonzero(self.sign_pattern > 0))


@dataclass
class InjectivityCertificate:
    """Tri-state injectivity verdict with supporting evidence.

    Attributes
    ----------
    verdict : Verdict
    failing_witness : ndarray or None
        A direction at which the active rows do not span.
    collision : tuple of ndarray or None
        Two distinct inputs with the same layer output.
    wedge_count : int or None
        Number of wedges examined when the arrangement was enumerated.
    evidence : list
        Optional per-wedge ``(sign_pattern, rank)`` records.
    method : str
        How the verdict was reached.
    notes : list of str
    """

    verdict: Verdict
    failing_witness: np.ndarray | None = None
    collision: tuple | None = None
    wedge_count: int | None = None
    evidence: list = field(default_factory=list)
    method: str = ""
    notes: list = field(default_factory=list)

    @property
    def injective(self):
        return self.verdict is Verdict.INJECTIVE

    def to_dict(self, include_evidence=False):
        out = {
            "verdict": self.verdict.value,
            "method": self.method,
            "wedge_count": self.wedge_count,
            "failing_witness": None if self.failing_witness is None
            else [float(v) for v in self.failing_witness],
            "collision": None if self.collision is None
            else [[float(v) for v in p] for p in self.collision],
            "notes": list(self.notes),
        }
        if include_evidence:
            out["evidence"] = [
                {"sign_pattern": [int(s) for s in sp], "rank": int(r)} for sp, r in self.evidence
            ]
        return out


# ---------------------------------------------------------------------------
# Point-wise checks
# ---------------------------------------------------------------------------


def active_rows(W, x):
    """Indices ``j`` (0-based) with ``<w_j, x> >= 0``; zero rows included."""
    W = as_matrix(W, "W")
    x = as_vector(x, W.shape[1], "x")
    return tuple(int(j) for j in np.flatnonzero(W @ x >= 0))


def has_dss_at(W, x, tol=RANK_TOL):
    W = as_matrix(W, "W")
    idx = list(active_rows(W, x))
    if not idx:
        return False
    return rank(W[idx], tol) == W.shape[1]


def batched_ranks(W, masks, tol=RANK_TOL, chunk=4096):
    """Rank of ``W`` restricted to each boolean row mask in ``masks``."""
    W = np.asarray(W, dtype=float)
    masks = np.asarray(masks, dtype=bool)
    out = np.empty(masks.shape[0], dtype=int)
    for start in range(0, masks.shape[0], chunk):
        mk = masks[start:start + chunk]
        M = mk[:, :, None] * W[None, :, :]
        s = np.linalg.svd(M, compute_uv=False)
        smax = s[:, :1]
        r = np.sum(s > tol * smax, axis=1)
        r[smax[:, 0] == 0] = 0
        out[start:start + chunk] = r
    return out


def batched_sigma_min(W, masks, chunk=4096):
    """Smallest singular value of ``W`` restricted to each row mask (0 if too few rows)."""
    W = np.asarray(W, dtype=float)
    n = W.shape[1]
    masks = np.asarray(masks, dtype=bool)
    out = np.empty(masks.shape[0])
    for start in range(0, masks.shape[0], chunk):
        mk = masks[start:start + chunk]
        M = mk[:, :, None] * W[None, :, :]
        s = np.linalg.svd(M, compute_uv=False)
        # Masked rows are zero rows, which leave the smallest singular value unchanged.
        out[start:start + chunk] = s[:, n - 1] if s.shape[1] >= n else 0.0
    return out


# ---------------------------------------------------------------------------
# Arrangement enumeration
# ---------------------------------------------------------------------------


def unique_hyperplanes(V, tol=MERGE_TOL):
    """Merge rows of ``V`` that define the same hyperplane through the origin.

    Returns ``(H, rep, orient, nonzero)`` where ``H`` holds unit normals of
    the distinct hyperplanes, and for every nonzero row ``j`` of ``V``,
    ``sign(<v_j, x>) = orient[j] * sign(<H[rep[j]], x>)``.
    """
    V = np.asarray(V, dtype=float)
    norms = np.linalg.norm(V, axis=1)
    scale = max(float(norms.max()) if norms.size else 0.0, 1e-300)
    nonzero = norms > 1e-13 * scale
    rep = np.full(V.shape[0], -1, dtype=int)
    orient = np.zeros(V.shape[0], dtype=np.int8)
    reps = []
    for j in np.flatnonzero(nonzero):
        u = V[j] / norms[j]
        if reps:
            R = np.asarray(reps)
            dplus = np.linalg.norm(R - u, axis=1)
            dminus = np.linalg.norm(R + u, axis=1)
            i = int(np.argmin(np.minimum(dplus, dminus)))
            if min(dplus[i], dminus[i]) <= tol:
                rep[j] = i
                orient[j] = 1 if dplus[i] <= dminus[i] else -1
                continue
        reps.append(u)
        rep[j] = len(reps) - 1
        orient[j] = 1
    H = np.asarray(reps, dtype=float).reshape(len(reps), V.shape[1])
    return H, rep, orient, nonzero


def max_cell_count(k, d):
    """Upper bound on the open cells of ``k`` central hyperplanes in ``R^d``."""
    if k == 0:
        return 1
    return 2 * sum(math.comb(k - 1, i) for i in range(min(d, k)))


def _cells_planar(H):
    # Lines through the origin of R^2: the cells are arcs between consecutive zero directions.
    k = H.shape[0]
    base = np.arctan2(H[:, 1], H[:, 0]) + np.pi / 2
    angles = np.sort(np.mod(np.concatenate([base, base + np.pi]), 2 * np.pi))
    nxt = np.concatenate([angles[1:], angles[:1] + 2 * np.pi])
    mid = 0.5 * (angles + nxt)
    Wt = np.stack([np.cos(mid), np.sin(mid)], axis=1)
    S = H @ Wt.T
    if np.any(S == 0):
        raise _Degenerate("planar witness on a line")
    return np.where(S > 0, 1, -1).astype(np.int8).T, Wt


def _cells(H, budget):
    """Sign matrix (cells x k) and unit witnesses (cells x d) for distinct normals ``H``."""
    k, d = H.shape
    if k == 0:
        w = np.zeros((1, d))
        w[0, 0] = 1.0
        return np.zeros((1, 0), dtype=np.int8), w
    if d == 1:
        if k > 1:
            raise _Degenerate("several distinct hyperplanes on a line")
        s = 1 if H[0, 0] > 0 else -1
        return np.array([[s], [-s]], dtype=np.int8), np.array([[1.0], [-1.0]])
    if d == 2:
        if 2 * k > budget:
            raise BudgetExceeded(f"more than {budget} cells", count=2 * k)
        return _cells_planar(H)

    signs = np.array([[1], [-1]], dtype=np.int8)
    wit = np.stack([H[0], -H[0]])
    for i in range(1, k):
        h = H[i]
        prev = H[:i]
        Q = complement_basis(h)
        G, rep, orient, nonzero = unique_hyperplanes(prev @ Q)
        if not np.all(nonzero):
            raise _Degenerate("hyperplane parallel to an earlier one")
        sub_signs, sub_wit = _cells(G, budget)
        lifted = sub_wit @ Q.T
        lifted_signs = (sub_signs[:, rep] * orient[None, :]).astype(np.int8)

        index = {row.tobytes(): c for c, row in enumerate(signs)}
        parents = np.array([index.get(row.tobytes(), -1) for row in lifted_signs], dtype=int)
        if np.any(parents < 0) or np.unique(parents).size != parents.size:
            raise _Degenerate("restricted cell does not match a parent cell")
        split = np.zeros(signs.shape[0], dtype=bool)
        split[parents] = True

        # Step off the new hyperplane by half the distance to the nearest old one.
        hp = np.abs(prev @ h)
        ok = hp > 0
        if np.any(ok):
            eps = 0.5 * np.min(np.abs(lifted @ prev[ok].T) / hp[ok], axis=1)
            eps = np.minimum(eps, 1.0)
        else:
            eps = np.ones(lifted.shape[0])
        up = lifted + eps[:, None] * h
        down = lifted - eps[:, None] * h

        keep = np.flatnonzero(~split)
        v = wit[keep] @ h
        if np.any(np.abs(v) < 1e-14):
            raise _Degenerate("unsplit cell witness lies on the new hyperplane")
        L = lifted.shape[0]
        total = 2 * L + keep.size
        if total > budget:
            raise BudgetExceeded(f"more than {budget} cells", count=total)
        new_signs = np.empty((total, i + 1), dtype=np.int8)
        new_signs[:L, :i] = lifted_signs
        new_signs[:L, i] = 1
        new_signs[L:2 * L, :i] = lifted_signs
        new_signs[L:2 * L, i] = -1
        new_signs[2 * L:, :i] = signs[keep]
        new_signs[2 * L:, i] = np.where(v > 0, 1, -1)
        new_wit = np.vstack([up, down, wit[keep]])
        new_wit /= np.linalg.norm(new_wit, axis=1)[:, None]
        signs, wit = new_signs, new_wit
    return signs, wit


def _polish(H, signs, wit, delta=DELTA_STRICT):
    """Re-center witnesses whose strict margin is below ``delta``."""
    if H.shape[0] == 0:
        return wit
    margins = np.min((wit @ H.T) * signs, axis=1)
    for c in np.flatnonzero(margins < delta):
        A = -(signs[c][:, None] * H)
        bounds = [(-1.0, 1.0)] * H.shape[1]
        res = linear_feasibility(strict_inequalities=(A, np.zeros(A.shape[0])), bounds=bounds,
                                 delta_strict=delta)
        if res.status is not Feasibility.FEASIBLE:
            raise _Degenerate("cell interior thinner than the strict margin")
        x = res.witness / np.linalg.norm(res.witness)
        if np.min((H @ x) * signs[c]) < delta / math.sqrt(H.shape[1]):
            raise _Degenerate("polished witness margin too small")
        wit[c] = x
    return wit


def wedge_arrays(W, budget=WEDGE_BUDGET):
    """Per-row sign matrix (cells x m) and unit witnesses (cells x n) of all wedges."""
    W = as_matrix(W, "W")
    H, rep, orient, nonzero = unique_hyperplanes(W)
    signs, wit = _cells(H, budget)
    wit = _polish(H, signs, wit)
    row_signs = np.ones((signs.shape[0], W.shape[0]), dtype=np.int8)
    idx = np.flatnonzero(nonzero)
    row_signs[:, idx] = signs[:, rep[idx]] * orient[idx][None, :]
    return row_signs, wit


def enumerate_wedges(W, budget=WEDGE_BUDGET):
    """All open wedges of the arrangement of ``W`` with interior witnesses.

    Raises
    ------
    BudgetExceeded
        If more than ``budget`` cells would be produced.
    InjectCheckError
        If the arrangement is too degenerate to enumerate reliably.
    """
    try:
        row_signs, wit = wedge_arrays(W, budget)
    except _Degenerate as exc:
        from .errors import InjectCheckError

        raise InjectCheckError(f"arrangement enumeration failed: {exc}") from exc
    return [WedgeCell(s, w) for s, w in zip(row_signs, wit)]


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------


def _collision_from_witness(W, x, tol, tau, nonneg=False):
    """Build a verified colliding pair from a direction without a DSS.

    Follows the constructive argument: ``x_perp`` spans part of the kernel
    of the active rows and ``x + alpha * x_perp`` keeps every inactive row
    negative.  The pair is rescaled to unit input separation.
    """
    n = W.shape[1]
    act = W @ x >= 0
    xp = nullspace_vector(W[act], tol, cols=n)
    if xp is None:
        return None
    inact = np.flatnonzero(~act)
    num = -(W[inact] @ x)
    den = np.abs(W[inact] @ xp)
    ratios = list(num[den > 0] / den[den > 0])
    if nonneg:
        neg = xp < 0
        ratios += list(x[neg] / -xp[neg])
    alpha = 0.5 * min(ratios) if ratios else 1.0
    if alpha <= 0:
        return None
    x1 = x / alpha
    x2 = x1 + xp
    err = float(np.linalg.norm(relu(W @ x1) - relu(W @ x2)))
    lam = 1.0
    if err > 0.5 * tau:
        lam = min(1.0, 0.5 * tau / err)
        x1, x2 = lam * x1, lam * x2
        err = float(np.linalg.norm(relu(W @ x1) - relu(W @ x2)))
    if err > tau or np.linalg.norm(x1 - x2) < 10 * tau:
        return None
    if nonneg and (np.any(x1 < 0) or np.any(x2 < 0)):
        return None
    return x1, x2


def _pick_failing(ranks, counts, candidates):
    order = sorted(candidates, key=lambda c: (ranks[c], counts[c], c))
    return order[0]


def antiparallel_rows(W, tol=MERGE_TOL):
    """Indices of nonzero rows that have an antiparallel partner row."""
    H, rep, orient, nonzero = unique_hyperplanes(W, tol)
    paired = []
    for i in range(H.shape[0]):
        members = np.flatnonzero(rep == i)
        if np.any(orient[members] > 0) and np.any(orient[members] < 0):
            paired.extend(int(j) for j in members)
    return sorted(paired)


def falsify_random(W, trials, prng, tol=RANK_TOL, chunk=8192):
    """First uniformly sampled direction without a DSS, or ``None``.

    Absence of a witness is not evidence of injectivity.
    """
    W = as_matrix(W, "W")
    n = W.shape[1]
    sampler = Sampler(prng) if isinstance(prng, Prng) else prng
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        X = sampler.sphere(b, n)
        masks = (X @ W.T) >= 0
        r = batched_ranks(W, masks, tol)
        bad = np.flatnonzero(r < n)
        if bad.size:
            return X[bad[0]]
        done += b
    return None


def _screen(W, trials, prng, tol):
    """Sampled directions, returning the failing one with the lowest active rank."""
    n = W.shape[1]
    X = Sampler(prng).sphere(trials, n)
    masks = (X @ W.T) >= 0
    r = batched_ranks(W, masks, tol)
    bad = np.flatnonzero(r < n)
    if not bad.size:
        return None
    counts = masks.sum(axis=1)
    c = _pick_failing(r, counts, bad)
    return X[c]


def certify_dss_all(
    W,
    budget=WEDGE_BUDGET,
    tol=RANK_TOL,
    tau_collide=TAU_COLLIDE,
    prng=None,
    screen_trials=SCREEN_TRIALS,
    record_evidence=False,
    shortcut=True,
):
    """Decide injectivity of ``x -> ReLU(Wx)``.

    The search order is: a sound antiparallel-pair shortcut, exhaustive
    wedge enumeration when the cell count fits in ``budget``, and a random
    screen for a failing direction otherwise.  A failing direction is
    turned into an explicit collision and verified before a
    ``NonInjective`` verdict is returned.

    Parameters
    ----------
    W : array_like, shape (m, n)
    budget : int
        Maximum number of wedges to enumerate.
    tol : float
        Relative rank tolerance.
    tau_collide : float
        Maximum output distance for a collision to count as verified.
    prng : Prng, optional
        Stream for the random screen; defaults to ``Prng(0)``.
    record_evidence : bool
        Keep the per-wedge ``(sign_pattern, rank)`` table.
    shortcut : bool
        Allow the antiparallel-pair shortcut.

    Returns
    -------
    InjectivityCertificate
    """
    W = as_matrix(W, "W")
    m, n = W.shape
    prng = prng if prng is not None else Prng(0)

    if shortcut and not record_evidence:
        paired = antiparallel_rows(W)
        if paired and rank(W[paired], tol) == n:
            return InjectivityCertificate(
                Verdict.INJECTIVE, method="antiparallel-basis",
                notes=["rows with antiparallel partners span the input space"])

    H, _, _, _ = unique_hyperplanes(W)
    estimate = max_cell_count(H.shape[0], n)
    notes = []
    if estimate <= budget:
        try:
            row_signs, wit = wedge_arrays(W, budget)
        except _Degenerate as exc:
            notes.append(f"enumeration degenerate: {exc}")
        else:
            return _decide_from_wedges(W, row_signs, wit, tol, tau_collide, record_evidence,
                                       "wedge-enumeration")

    x = _screen(W, screen_trials, prng, tol)
    if x is not None:
        pair = _collision_from_witness(W, x, tol, tau_collide)
        if pair is not None:
            return InjectivityCertificate(
                Verdict.NON_INJECTIVE, failing_witness=x, collision=pair,
                method="random-screen", notes=notes)
        notes.append("sampled failing direction but collision did not verify")
    if estimate > budget:
        try:
            row_signs, wit = wedge_arrays(W, budget)
        except BudgetExceeded as exc:
            notes.append(f"wedge budget {budget} exceeded")
            return InjectivityCertificate(Verdict.INCONCLUSIVE, wedge_count=exc.count,
                                          method="budget", notes=notes)
        except _Degenerate as exc:
            notes.append(f"enumeration degenerate: {exc}")
        else:
            return _decide_from_wedges(W, row_signs, wit, tol, tau_collide, record_evidence,
                                       "wedge-enumeration")
    return InjectivityCertificate(Verdict.INCONCLUSIVE, method="degenerate", notes=notes)


def _decide_from_wedges(W, row_signs, wit, tol, tau, record_evidence, method, nonneg=False):
    n = W.shape[1]
    masks = row_signs > 0
    ranks = batched_ranks(W, masks, tol)
    evidence = [(s.copy(), int(r)) for s, r in zip(row_signs, ranks)] if record_evidence else []
    bad = np.flatnonzero(ranks < n)
    if not bad.size:
        return InjectivityCertificate(Verdict.INJECTIVE, wedge_count=len(ranks), evidence=evidence,
                                      method=method)
    c = _pick_failing(ranks, masks.sum(axis=1), bad)
    x = wit[c]
    pair = _collision_from_witness(W, x, tol, tau, nonneg=nonneg)
    if pair is None:
        return InjectivityCertificate(
            Verdict.INCONCLUSIVE, failing_witness=x, wedge_count=len(ranks), evidence=evidence,
            method=method, notes=["failing wedge found but collision did not verify"])
    return InjectivityCertificate(Verdict.NON_INJECTIVE, failing_witness=x, collision=pair,
                                  wedge_count=len(ranks), evidence=evidence, method=method)


def certify_dss_orthant(W, budget=WEDGE_BUDGET, tol=RANK_TOL, tau_collide=TAU_COLLIDE,
                        record_evidence=False):
    """Injectivity of ``ReLU(W .)`` restricted to the nonnegative orthant.

    The coordinate hyperplanes are added to the arrangement and only cells
    inside the open orthant are checked.  A point on the orthant boundary
    has an active set containing that of a nearby interior cell, so the
    open cells suffice.
    """
    W = as_matrix(W, "W")
    m, n = W.shape
    aug = np.vstack([W, np.eye(n)])
    try:
        row_signs, wit = wedge_arrays(aug, budget)
    except BudgetExceeded as exc:
        return InjectivityCertificate(Verdict.INCONCLUSIVE, wedge_count=exc.count, method="budget",
                                      notes=[f"wedge budget {budget} exceeded"])
    except _Degenerate as exc:
        return InjectivityCertificate(Verdict.INCONCLUSIVE, method="degenerate",
                                      notes=[f"enumeration degenerate: {exc}"])
    inside = np.all(row_signs[:, m:] > 0, axis=1)
    return _decide_from_wedges(W, row_signs[inside, :m], wit[inside], tol, tau_collide,
                               record_evidence, "orthant-enumeration", nonneg=True)
