"""Fully connected layers: bias reduction, injectivity checks and constructors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dss import (
    WEDGE_BUDGET,
    InjectivityCertificate,
    Verdict,
    certify_dss_all,
)
from .errors import DimensionError, NonPositiveScale, SingularBasis
from .numeric import (
    RANK_TOL,
    TAU_COLLIDE,
    Prng,
    Sampler,
    as_matrix,
    as_vector,
    nullspace_vector,
    rank,
)

ACTIVATIONS = ("relu", "leaky_relu", "identity")


@dataclass
class DenseLayer:
    """Affine map followed by a pointwise activation.

    Parameters
    ----------
    weight : array_like, shape (m, n)
    bias : array_like, shape (m,), optional
        Defaults to zeros.
    activation : {"relu", "leaky_relu", "identity"}
    alpha : float
        Negative-side slope of ``leaky_relu``; must lie in (0, 1).
    """

    weight: np.ndarray
    bias: np.ndarray | None = None
    activation: str = "relu"
    alpha: float = 0.01

    def __post_init__(self):
        self.weight = as_matrix(self.weight, "weight")
        m = self.weight.shape[0]
        self.bias = np.zeros(m) if self.bias is None else as_vector(self.bias, m, "bias")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if self.activation == "leaky_relu" and not 0.0 < self.alpha < 1.0:
            raise ValueError(f"leaky slope must lie in (0, 1), got {self.alpha}")

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def activate(self, z):
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        if self.activation == "leaky_relu":
            return np.where(z >= 0, z, self.alpha * z)
        return z

    def __call__(self, x):
        """Evaluate on one input of shape ``(n,)`` or a batch of shape ``(N, n)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.in_dim:
            raise DimensionError(f"input has length {x.shape[-1]}, layer expects {self.in_dim}")
        return self.activate(x @ self.weight.T + self.bias)


def reduce_bias(layer):
    """Copy of the weight with rows of negative bias set to zero.

    Rows with zero bias are kept.
    """
    W = layer.weight.copy()
    W[layer.bias < 0] = 0.0
    return W


def _verify_pair(layer, pair, tau):
    x1, x2 = pair
    err = float(np.linalg.norm(layer(x1) - layer(x2)))
    return err <= tau and float(np.linalg.norm(x1 - x2)) >= 10 * tau


def _biased_collision(layer, cert, tau):
    """Move a collision of the bias-free reduced layer onto the biased layer.

    Both points are scaled by a common ``beta``; rows with positive bias
    that must stay inactive need ``beta`` large, rows with negative bias
    that must stay inactive need it small.  Returns ``None`` when no
    scale works.
    """
    if cert.collision is None:
        return None
    W, b = layer.weight, layer.bias
    x1, x2 = cert.collision
    lo, hi = 0.0, np.inf
    for j in range(W.shape[0]):
        v1, v2 = W[j] @ x1, W[j] @ x2
        if abs(v1 - v2) <= 1e-12 * max(1.0, abs(v1)):
            continue
        # This row must be inactive at both points: beta * v + b_j <= 0.
        for v in (v1, v2):
            if v < 0:
                lo = max(lo, b[j] / -v) if b[j] > 0 else lo
            elif v > 0:
                if b[j] >= 0:
                    return None
                hi = min(hi, -b[j] / v)
            elif b[j] > 0:
                return None
    if lo >= hi:
        return None
    if np.isinf(hi):
        beta = 2.0 * lo if lo > 0 else 1.0
    else:
        beta = 0.5 * (lo + hi)
    pair = (beta * x1, beta * x2)
    return pair if _verify_pair(layer, pair, tau) else None


def check_dense(layer, budget=WEDGE_BUDGET, tol=RANK_TOL, tau_collide=TAU_COLLIDE, prng=None):
    """Injectivity certificate for a single dense layer.

    ReLU layers are reduced to their bias-free form and checked wedge by
    wedge.  A certified reduced layer certifies the biased one.  When the
    reduced layer fails, the collision is transported back to the biased
    layer if possible; otherwise the biased layer is resolved exactly by
    affine-region analysis, since dropping negative-bias rows can lose
    injectivity that the original layer has.
    """
    if layer.activation != "relu":
        r = rank(layer.weight, tol)
        if r == layer.in_dim:
            return InjectivityCertificate(Verdict.INJECTIVE, method="full-rank",
                                          notes=[f"{layer.activation} is one-to-one"])
        v = nullspace_vector(layer.weight, tol)
        pair = (np.zeros(layer.in_dim), v)
        return InjectivityCertificate(Verdict.NON_INJECTIVE, collision=pair, method="kernel",
                                      notes=[f"rank {r} < {layer.in_dim}"])

    reduced = reduce_bias(layer)
    cert = certify_dss_all(reduced, budget=budget, tol=tol, tau_collide=tau_collide, prng=prng)
    if not np.any(layer.bias != 0) or cert.verdict is Verdict.INJECTIVE:
        return cert
    if cert.verdict is Verdict.NON_INJECTIVE:
        pair = _biased_collision(layer, cert, tau_collide)
        if pair is not None:
            cert.collision = pair
            cert.method += "+bias-scaling"
            return cert

    from .network import ReluNetwork, certify_exact

    exact = certify_exact(ReluNetwork([layer]), tau_collide=tau_collide)
    exact.notes.append(f"reduced bias-free layer verdict: {cert.verdict.value}")
    return exact


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def _check_basis(B, D):
    B = as_matrix(B, "B")
    n = B.shape[1]
    if B.shape[0] != n:
        raise DimensionError(f"B must be square, got {B.shape}")
    d = np.asarray(D, dtype=float)
    if d.ndim == 2:
        d = np.diag(d)
    d = d.reshape(-1)
    if d.shape[0] != n:
        raise DimensionError(f"expected {n} scale entries, got {d.shape[0]}")
    if rank(B) < n:
        raise SingularBasis("B is rank deficient")
    if np.any(~(d > 0)):
        raise NonPositiveScale("scale entries must be positive")
    return B, d


def construct_minimal(B, D):
    """The ``2n x n`` matrix ``[B; -diag(D) B]``.

    Each row of ``B`` is paired with a negative multiple of itself, so
    every direction activates one row of each pair and the active rows
    span whenever ``B`` does.
    """
    B, d = _check_basis(B, D)
    return np.vstack([B, -d[:, None] * B])


def construct_expanded(B, D, M=None):
    """``[B; -diag(D) B; M]``; extra rows can only enlarge active sets."""
    base = construct_minimal(B, D)
    if M is None:
        return base
    M = np.asarray(M, dtype=float).reshape(-1, base.shape[1])
    if M.shape[0] == 0:
        return base
    return np.vstack([base, as_matrix(M, "M")])


def minimal_expansivity_gate(m, n):
    """False when ``m`` rows cannot give an injective ReLU layer on ``R^n``.

    Fewer than ``2n`` rows always leave some direction uncovered.  For
    ``n = 1`` the same bound reads ``m >= 2``: one row of each sign is
    needed.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    return m >= 2 * n


def random_minimal(n, prng, extra_rows=0, scale_range=(0.5, 2.0)):
    """Random ``[B; -DB; M]`` with Gaussian ``B`` and ``M`` and uniform ``D``."""
    sampler = Sampler(prng) if isinstance(prng, Prng) else prng
    while True:
        B = sampler.normal((n, n))
        if rank(B) == n:
            break
    lo, hi = scale_range
    d = lo + (hi - lo) * sampler.uniform((n,))
    M = sampler.normal((extra_rows, n)) if extra_rows else None
    return construct_expanded(B, d, M)


@dataclass
class PairingReport:
    """Antiparallel row pairing of a matrix.

    ``pairs`` lists matched ``(i, j)`` with ``w_j`` a negative multiple of
    ``w_i`` up to the angle tolerance.  ``near_misses`` lists
    ``(i, best_partner, angle)`` for unmatched rows whose best angle to an
    antiparallel direction is under ``100 * angle_tol``.
    """

    pairs: list = field(default_factory=list)
    unmatched: list = field(default_factory=list)
    near_misses: list = field(default_factory=list)

    @property
    def complete(self):
        return not self.unmatched


def antiparallel_pairing(W, angle_tol=1e-6):
    W = as_matrix(W, "W")
    norms = np.linalg.norm(W, axis=1)
    U = W / np.where(norms > 0, norms, 1.0)[:, None]
    C = np.clip(-(U @ U.T), -1.0, 1.0)
    angle = np.arccos(C)
    np.fill_diagonal(angle, np.inf)
    angle[norms == 0, :] = np.inf
    angle[:, norms == 0] = np.inf
    free = set(range(W.shape[0]))
    report = PairingReport()
    # Greedy by best available angle; exact pairings are unambiguous.
    order = np.dstack(np.unravel_index(np.argsort(angle, axis=None), angle.shape))[0]
    for i, j in order:
        i, j = int(i), int(j)
        if angle[i, j] > angle_tol:
            break
        if i in free and j in free:
            report.pairs.append((min(i, j), max(i, j)))
            free -= {i, j}
    for i in sorted(free):
        j = int(np.argmin(angle[i]))
        report.unmatched.append(i)
        if np.isfinite(angle[i, j]) and angle[i, j] < 100 * angle_tol:
            report.near_misses.append((i, j, float(angle[i, j])))
    report.pairs.sort()
    return report
