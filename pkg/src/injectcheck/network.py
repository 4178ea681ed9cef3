"""Small deep ReLU networks: evaluation, affine regions and exact injectivity.

A network built from affine maps and ReLU (or leaky ReLU) activations is
affine on each region of fixed activation pattern.  Enumerating those
regions reduces global injectivity to finitely many linear feasibility
problems: a region whose affine map loses rank collides with itself, and
two regions collide when their closures contain separated points with the
same image.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .dense import DenseLayer, check_dense, construct_expanded
from .dss import InjectivityCertificate, Verdict
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
    linear_feasibility,
    nullspace_vector,
    rank,
)

DELTA_SEP = 1e-4
REGION_BUDGET = 10000


@dataclass
class ReluNetwork:
    """Chain of dense layers with an optional final linear map.

    Parameters
    ----------
    layers : list of DenseLayer
    final : array_like, optional
        Weight of a trailing linear map without bias or activation.
    """

    layers: list
    final: np.ndarray | None = None

    def __post_init__(self):
        if not self.layers and self.final is None:
            raise DimensionError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.in_dim != prev.out_dim:
                raise DimensionError(
                    f"layer expects {nxt.in_dim} inputs but previous layer has {prev.out_dim} outputs")
        if self.final is not None:
            self.final = as_matrix(self.final, "final")
            if self.layers and self.final.shape[1] != self.layers[-1].out_dim:
                raise DimensionError("final map does not match the last layer width")

    @property
    def in_dim(self):
        return self.layers[0].in_dim if self.layers else self.final.shape[1]

    @property
    def out_dim(self):
        return self.final.shape[0] if self.final is not None else self.layers[-1].out_dim


def forward(net, z):
    """Evaluate the network on ``z`` of shape ``(n,)`` or ``(N, n)``."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != net.in_dim:
        raise DimensionError(f"input has length {z.shape[-1]}, network expects {net.in_dim}")
    h = z
    for layer in net.layers:
        h = layer(h)
    if net.final is not None:
        h = h @ net.final.T
    return h


# ---------------------------------------------------------------------------
# Affine regions
# ---------------------------------------------------------------------------


@dataclass
class AffineRegion:
    """Open set of inputs sharing one activation pattern.

    ``strict_rows @ x < strict_rhs`` describes the region (unit-norm rows);
    on it the network equals ``A @ x + c``.
    """

    activation_pattern: list
    A: np.ndarray
    c: np.ndarray
    witness: np.ndarray
    strict_rows: np.ndarray
    strict_rhs: np.ndarray

    def contains(self, x, margin=0.0):
        if self.strict_rows.shape[0] == 0:
            return True
        return bool(np.all(self.strict_rows @ x - self.strict_rhs < -margin))


@dataclass
class _Partial:
    pattern: list
    A: np.ndarray
    c: np.ndarray
    G: list
    h: list
    witness: np.ndarray


def _slope(layer):
    return 0.0 if layer.activation == "relu" else layer.alpha


def _margin_ok(G, h, x):
    if not G:
        return True
    return bool(np.all(np.asarray(G) @ x - np.asarray(h) <= -DELTA_STRICT))


def enumerate_regions(net, budget=REGION_BUDGET):
    """All activation regions of ``net`` with affine data and witnesses.

    Neurons are split one at a time; the side containing the current
    witness is kept without an LP when the witness clears the strict
    margin, the other side is tested by a strict feasibility LP.

    Raises
    ------
    BudgetExceeded
        More than ``budget`` regions.
    InjectCheckError
        A split could not be decided within the strict margin.
    """
    from .errors import InjectCheckError

    regions, unresolved = _enumerate(net, budget)
    if unresolved:
        raise InjectCheckError(f"{unresolved} region splits were numerically undecidable")
    return regions


def _enumerate(net, budget):
    n = net.in_dim
    start = _Partial([], np.eye(n), np.zeros(n), [], [], np.zeros(n))
    frontier = [start]
    unresolved = 0
    for layer in net.layers:
        W, b = layer.weight, layer.bias
        nxt_frontier = []
        for part in frontier:
            Z_A = W @ part.A
            Z_c = W @ part.c + b
            if layer.activation == "identity":
                part.pattern.append(np.zeros(0, dtype=np.int8))
                part.A, part.c = Z_A, Z_c
                nxt_frontier.append(part)
                continue
            stack = [(part, 0, np.empty(0, dtype=np.int8))]
            while stack:
                p, j, signs = stack.pop()
                if j == W.shape[0]:
                    slope = np.where(signs > 0, 1.0, _slope(layer))
                    pat = p.pattern + [signs]
                    nxt_frontier.append(_Partial(pat, slope[:, None] * Z_A, slope * Z_c,
                                                 p.G, p.h, p.witness))
                    if len(nxt_frontier) + len(stack) > budget:
                        raise BudgetExceeded(f"more than {budget} regions",
                                             count=len(nxt_frontier) + len(stack))
                    continue
                g, g0 = Z_A[j], Z_c[j]
                gn = float(np.linalg.norm(g))
                if gn <= 1e-12 * max(1.0, float(np.abs(Z_A).max())):
                    s = 1 if g0 >= 0 else -1
                    stack.append((p, j + 1, np.append(signs, np.int8(s))))
                    continue
                # Side s requires s * (g x + g0) > 0, i.e. (-s g / |g|) x < s g0 / |g|.
                children = []
                v = (g @ p.witness + g0) / gn
                for s in (1, -1):
                    row, rhs = -s * g / gn, s * g0 / gn
                    G, h = p.G + [row], p.h + [rhs]
                    if s * v >= DELTA_STRICT and _margin_ok(p.G, p.h, p.witness):
                        children.append((s, G, h, p.witness))
                        continue
                    res = linear_feasibility(strict_inequalities=(np.asarray(G), np.asarray(h)))
                    if res.status is Feasibility.FEASIBLE:
                        children.append((s, G, h, res.witness))
                    elif res.status is Feasibility.INCONCLUSIVE:
                        unresolved += 1
                for s, G, h, wit in children:
                    child = _Partial(p.pattern, p.A, p.c, G, h, wit)
                    stack.append((child, j + 1, np.append(signs, np.int8(s))))
        frontier = nxt_frontier
    regions = []
    for p in frontier:
        A, c = p.A, p.c
        if net.final is not None:
            A, c = net.final @ A, net.final @ c
        G = np.asarray(p.G).reshape(len(p.G), n)
        regions.append(AffineRegion(p.pattern, A, c, p.witness, G, np.asarray(p.h, dtype=float)))
    return regions, unresolved


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------


def certify_layerwise(net, budget=None, tol=RANK_TOL):
    """Injective when every layer is; otherwise Inconclusive.

    A non-injective layer does not make the composition non-injective, so
    this check never returns ``NonInjective``.
    """
    kwargs = {"tol": tol}
    if budget is not None:
        kwargs["budget"] = budget
    notes = []
    for i, layer in enumerate(net.layers):
        cert = check_dense(layer, **kwargs)
        if cert.verdict is not Verdict.INJECTIVE:
            notes.append(f"layer {i}: {cert.verdict.value}")
    if net.final is not None and rank(net.final, tol) < net.final.shape[1]:
        notes.append("final linear map is rank deficient")
    if notes:
        return InjectivityCertificate(Verdict.INCONCLUSIVE, method="layerwise", notes=notes)
    return InjectivityCertificate(Verdict.INJECTIVE, method="layerwise")


def _verified(net, x, y, tau):
    return (float(np.linalg.norm(forward(net, x) - forward(net, y))) <= tau
            and float(np.linalg.norm(x - y)) >= 10 * tau)


def _in_region_collision(net, region, tol, tau):
    v = nullspace_vector(region.A, tol)
    x = region.witness
    G, h = region.strict_rows, region.strict_rhs
    slack = h - G @ x
    gv = G @ v
    pos = np.abs(gv) > 0
    t = 0.5 * float(np.min(slack[pos] / np.abs(gv[pos]))) if np.any(pos) else 1.0
    t = min(t, 1.0)
    y = x + t * v
    return (x, y) if _verified(net, x, y, tau) else None


def _pair_collision(net, ra, rb, n, delta_sep, tau):
    """Look for separated points in the closures of two regions with one image.

    Returns ``("collision", (x, y))``, ``("none", None)`` or
    ``("inconclusive", None)``.
    """
    Z = np.zeros
    E = np.hstack([ra.A, -rb.A])
    e = rb.c - ra.c
    Ga = np.hstack([ra.strict_rows, Z((ra.strict_rows.shape[0], n))])
    Gb = np.hstack([Z((rb.strict_rows.shape[0], n)), rb.strict_rows])
    G = np.vstack([Ga, Gb])
    h = np.concatenate([ra.strict_rhs, rb.strict_rhs])
    base = linear_feasibility(equalities=(E, e), weak_inequalities=(G, h) if G.shape[0] else None)
    if base.status is Feasibility.INFEASIBLE:
        return "none", None
    inconclusive = base.status is Feasibility.INCONCLUSIVE
    for i in range(n):
        for s in (1.0, -1.0):
            row = np.zeros(2 * n)
            row[i], row[n + i] = -s, s
            Gs = np.vstack([G, row])
            hs = np.append(h, -delta_sep)
            res = linear_feasibility(equalities=(E, e), weak_inequalities=(Gs, hs))
            if res.status is Feasibility.FEASIBLE:
                x, y = res.witness[:n], res.witness[n:]
                pair = _refine_pair(net, ra, rb, x, y, tau)
                if pair is not None:
                    return "collision", pair
                inconclusive = True
            elif res.status is Feasibility.INCONCLUSIVE:
                inconclusive = True
    return ("inconclusive" if inconclusive else "none"), None


def _refine_pair(net, ra, rb, x, y, tau):
    """Verify an LP collision, projecting once onto the exact equality if needed."""
    if _verified(net, x, y, tau):
        return x, y
    n = x.shape[0]
    E = np.hstack([ra.A, -rb.A])
    r = E @ np.concatenate([x, y]) - (rb.c - ra.c)
    step = np.linalg.lstsq(E, r, rcond=None)[0]
    z = np.concatenate([x, y]) - step
    x2, y2 = z[:n], z[n:]
    return (x2, y2) if _verified(net, x2, y2, tau) else None


def certify_exact(net, budget=REGION_BUDGET, tol=RANK_TOL, tau_collide=TAU_COLLIDE,
                  delta_sep=DELTA_SEP):
    """Exact injectivity verdict by affine-region pair analysis.

    Every region must have a full-column-rank affine map, and no two
    distinct regions may contain points at ``inf``-distance at least
    ``delta_sep`` with the same image.  Pairs closer than ``delta_sep``
    fall under the per-region rank check.
    """
    n = net.in_dim
    try:
        regions, unresolved = _enumerate(net, budget)
    except BudgetExceeded as exc:
        return InjectivityCertificate(Verdict.INCONCLUSIVE, method="region-pairs",
                                      notes=[f"region budget {budget} exceeded ({exc.count})"])
    notes = [f"{len(regions)} regions"]
    if unresolved:
        notes.append(f"{unresolved} undecidable region splits")
    for region in regions:
        if rank(region.A, tol) < n:
            pair = _in_region_collision(net, region, tol, tau_collide)
            if pair is not None:
                return InjectivityCertificate(Verdict.NON_INJECTIVE, failing_witness=region.witness,
                                              collision=pair, method="region-rank", notes=notes)
            notes.append("rank-deficient region without verified collision")
            return InjectivityCertificate(Verdict.INCONCLUSIVE, method="region-rank", notes=notes)
    inconclusive = 0
    for ra, rb in itertools.combinations(regions, 2):
        status, pair = _pair_collision(net, ra, rb, n, delta_sep, tau_collide)
        if status == "collision":
            return InjectivityCertificate(Verdict.NON_INJECTIVE, collision=pair,
                                          method="region-pairs", notes=notes)
        if status == "inconclusive":
            inconclusive += 1
    if inconclusive or unresolved:
        notes.append(f"{inconclusive} region pairs inconclusive")
        return InjectivityCertificate(Verdict.INCONCLUSIVE, method="region-pairs", notes=notes)
    return InjectivityCertificate(Verdict.INJECTIVE, method="region-pairs", notes=notes)


# ---------------------------------------------------------------------------
# Falsification
# ---------------------------------------------------------------------------


def collision_search(net, trials, prng, tol=1e-6, keep=16, sweeps=200):
    """Randomized search for two distant inputs with nearly equal outputs.

    ``trials`` input pairs are sampled (half with a small log-uniform
    offset, half independent).  The ``keep`` pairs with the lowest
    output/input distance ratio are refined by coordinate descent on the
    squared output distance with the input offset length held fixed.

    Returns
    -------
    tuple of ndarray or None
        ``(z1, z2)`` with output distance at most ``tol`` and input
        distance at least ``1000 * tol``.
    """
    n = net.in_dim
    sampler = Sampler(prng) if isinstance(prng, Prng) else prng
    half = trials // 2
    Z1 = sampler.normal((trials, n)) * 3.0
    dirs = sampler.sphere(trials, n)
    dist = 10.0 ** (sampler.uniform((trials,)) * 4.0 - 3.0)
    Z2 = Z1 + dist[:, None] * dirs
    Z2[half:] = sampler.normal((trials - half, n)) * 3.0
    D = np.linalg.norm(Z1 - Z2, axis=1)
    ok = D >= 1e3 * tol
    out = np.linalg.norm(forward(net, Z1) - forward(net, Z2), axis=1)
    ratio = np.where(ok, out / np.where(D > 0, D, 1.0), np.inf)
    hit = np.flatnonzero(ok & (out <= tol))
    if hit.size:
        i = int(hit[0])
        return Z1[i], Z2[i]
    order = np.argsort(ratio)[:keep]
    order = order[np.isfinite(ratio[order])]
    if order.size == 0:
        return None

    P = 0.5 * (Z1[order] + Z2[order])
    U = Z2[order] - Z1[order]
    d = np.linalg.norm(U, axis=1)
    U /= d[:, None]
    step = 0.1 * np.maximum(np.linalg.norm(P, axis=1), d)[:, None] * np.ones((1, 2 * n))

    def objective(P, U):
        a, b = P - 0.5 * d[:, None] * U, P + 0.5 * d[:, None] * U
        return np.sum((forward(net, a) - forward(net, b)) ** 2, axis=1)

    f = objective(P, U)
    for _ in range(sweeps):
        improved = np.zeros(P.shape[0], dtype=bool)
        for k in range(2 * n):
            for sign in (1.0, -1.0):
                P2, U2 = P.copy(), U.copy()
                if k < n:
                    P2[:, k] += sign * step[:, k]
                else:
                    U2[:, k - n] += sign * step[:, k] / d
                    U2 /= np.linalg.norm(U2, axis=1)[:, None]
                f2 = objective(P2, U2)
                better = f2 < f
                P[better], U[better], f[better] = P2[better], U2[better], f2[better]
                improved |= better
        step[~improved] *= 0.5
        if np.any(np.sqrt(f) <= tol):
            break
    best = int(np.argmin(f))
    if np.sqrt(f[best]) <= tol:
        z1 = P[best] - 0.5 * d[best] * U[best]
        z2 = P[best] + 0.5 * d[best] * U[best]
        return z1, z2
    return None


# ---------------------------------------------------------------------------
# Random projection cascades
# ---------------------------------------------------------------------------


@dataclass
class CascadeSpec:
    """Dimensions ``d_0, d_1, ...`` of an expansion/projection cascade.

    Block ``j`` maps ``R^{d_{2j-2}}`` to ``R^{d_{2j-1}}`` with injective
    ReLU layers; projection ``j`` maps ``R^{d_{2j-1}}`` to ``R^{d_{2j}}``.
    ``projections`` optionally supplies the projection matrices.
    """

    dims: list
    projections: list | None = None
    scale_range: tuple = (0.5, 2.0)
    enforce_hypothesis: bool = True

    def __post_init__(self):
        self.dims = [int(d) for d in self.dims]
        if len(self.dims) < 2 or any(d < 1 for d in self.dims):
            raise DimensionError("dims needs at least an input and one block width, all positive")
        n = self.dims[0]
        for i in range(1, len(self.dims), 2):
            if self.dims[i] < 2 * self.dims[i - 1]:
                raise DimensionError(
                    f"block {i // 2 + 1} maps R^{self.dims[i - 1]} to R^{self.dims[i]}; "
                    "an injective ReLU block needs at least twice the input width")
        if self.enforce_hypothesis:
            for i in range(2, len(self.dims), 2):
                if self.dims[i] < 2 * n + 1:
                    raise DimensionError(
                        f"d_{i} = {self.dims[i]} is below 2n+1 = {2 * n + 1}")


def _block_layers(d_in, d_out, sampler, scale_range):
    layers = []
    cur = d_in
    lo, hi = scale_range
    while True:
        target = 2 * cur if 4 * cur <= d_out else d_out
        while True:
            B = sampler.normal((cur, cur))
            if rank(B) == cur:
                break
        D = lo + (hi - lo) * sampler.uniform((cur,))
        M = sampler.normal((target - 2 * cur, cur)) if target > 2 * cur else None
        layers.append(DenseLayer(construct_expanded(B, D, M)))
        cur = target
        if cur == d_out:
            return layers


def build_cascade(spec, prng):
    """Alternate injective ReLU blocks with Gaussian projection layers."""
    if not isinstance(spec, CascadeSpec):
        spec = CascadeSpec(list(spec))
    sampler = Sampler(prng) if isinstance(prng, Prng) else prng
    dims = spec.dims
    layers = []
    for j, i in enumerate(range(1, len(dims), 2)):
        layers.extend(_block_layers(dims[i - 1], dims[i], sampler, spec.scale_range))
        if i + 1 < len(dims):
            if spec.projections is not None:
                Bj = as_matrix(spec.projections[j], f"projection {j + 1}")
                if Bj.shape != (dims[i + 1], dims[i]):
                    raise DimensionError(f"projection {j + 1} has shape {Bj.shape}")
            else:
                Bj = sampler.normal((dims[i + 1], dims[i]))
            layers.append(DenseLayer(Bj, activation="identity"))
    return ReluNetwork(layers)
