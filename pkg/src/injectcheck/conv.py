"""Convolutional layers: structured matrices and the padded-kernel test.

Convolutions here are stride-1 correlations over a ``p``-dimensional
signal: output position ``J`` reads ``sum_I c[I] * x[J + I]``.  Arrays are
flattened in C order everywhere, so the rows of a convolution matrix and
the zero-padded kernels live in the same coordinates.

The padded-kernel test places every kernel at every offset inside a box
of shape ``P`` and asks whether that small family is injective as a ReLU
layer on ``R^|P|``.  If it is, the full layer is injective on any signal
at least as large as the box.  The test is sufficient only, so failure is
reported as inconclusive.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dss import WEDGE_BUDGET, InjectivityCertificate, Verdict, certify_dss_all
from .errors import DegenerateRatio, NonPositiveScale, ShapeError, UnsupportedStride

BOUNDARIES = ("zero_padded", "periodic")


@dataclass
class Kernel:
    """Convolution kernel; ``values.shape`` is its width."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 0:
            self.values = self.values.reshape(1)
        if self.values.size == 0 or not np.all(np.isfinite(self.values)):
            raise ShapeError("kernel must be non-empty with finite values")

    @property
    def width(self):
        return tuple(self.values.shape)


def _as_kernel(k):
    return k if isinstance(k, Kernel) else Kernel(k)


@dataclass
class ConvSpec:
    """A bank of kernels applied to signals of one shape."""

    kernels: list
    signal_shape: tuple
    boundary: str = "zero_padded"
    stride: int = 1

    def __post_init__(self):
        self.kernels = [_as_kernel(k) for k in self.kernels]
        self.signal_shape = tuple(int(s) for s in np.atleast_1d(self.signal_shape))
        if not self.kernels:
            raise ShapeError("at least one kernel is required")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        if self.stride != 1:
            raise UnsupportedStride(f"only stride 1 is supported, got {self.stride}")
        for k in self.kernels:
            if len(k.width) != len(self.signal_shape):
                raise ShapeError(f"kernel rank {len(k.width)} differs from signal rank "
                                 f"{len(self.signal_shape)}")
            if any(o > n for o, n in zip(k.width, self.signal_shape)):
                raise ShapeError(f"kernel width {k.width} exceeds signal shape {self.signal_shape}")


def _positions(shape):
    return itertools.product(*(range(s) for s in shape))


def kernel_matrix(kernel, signal_shape, boundary="zero_padded"):
    """Convolution matrix of one kernel, one row per output position."""
    c = _as_kernel(kernel).values
    N = tuple(signal_shape)
    if c.ndim != len(N) or any(o > n for o, n in zip(c.shape, N)):
        raise ShapeError(f"kernel width {c.shape} does not fit signal shape {N}")
    size = math.prod(N)
    C = np.zeros((size, size))
    offsets = [(I, c[I]) for I in _positions(c.shape) if c[I] != 0]
    for row, J in enumerate(_positions(N)):
        for I, val in offsets:
            K = tuple(j + i for j, i in zip(J, I))
            if boundary == "periodic":
                K = tuple(k % n for k, n in zip(K, N))
            elif any(k >= n for k, n in zip(K, N)):
                continue
            C[row, np.ravel_multi_index(K, N)] += val
    return C


def conv_matrix(spec):
    """Stacked convolution matrices of every kernel in ``spec``."""
    return np.vstack([kernel_matrix(k, spec.signal_shape, spec.boundary) for k in spec.kernels])


def multichannel_conv_matrix(kernel, signal_shape, boundary="zero_padded"):
    """Matrix of a multi-channel convolution summed over input channels.

    ``kernel`` has shape ``(*O, channels)`` and the signal has shape
    ``(*N, channels)``; the output has one value per position in ``N``.
    """
    c = _as_kernel(kernel).values
    N = tuple(signal_shape)
    channels = c.shape[-1]
    full_shape = N + (channels,)
    size_out = math.prod(N)
    M = np.zeros((size_out, math.prod(full_shape)))
    for ch in range(channels):
        sub = kernel_matrix(c[..., ch], N, boundary)
        cols = [np.ravel_multi_index(J + (ch,), full_shape) for J in _positions(N)]
        M[:, cols] += sub
    return M


def offsets(O, P):
    """Admissible offsets ``0 <= D <= P - O``, first index varying fastest."""
    O, P = tuple(O), tuple(P)
    if len(O) != len(P) or any(o > p for o, p in zip(O, P)):
        return []
    ranges = [range(p - o + 1) for o, p in zip(O, P)]
    return [tuple(reversed(D)) for D in itertools.product(*reversed(ranges))]


def padded_kernels(kernel, P):
    """All placements of ``kernel`` inside a zero box of shape ``P``."""
    c = _as_kernel(kernel).values
    P = tuple(int(p) for p in np.atleast_1d(P))
    out = []
    for D in offsets(c.shape, P):
        box = np.zeros(P)
        box[tuple(slice(d, d + o) for d, o in zip(D, c.shape))] = c
        out.append(box)
    return out


def padded_family(kernels, P):
    """Flattened union of the padded kernels of a bank, one vector per row."""
    rows = [b.reshape(-1) for k in kernels for b in padded_kernels(k, P)]
    if not rows:
        return np.zeros((0, math.prod(P)))
    return np.vstack(rows)


def check_conv(kernels, P, budget=WEDGE_BUDGET):
    """Sufficient injectivity test at box shape ``P``.

    Returns ``Injective`` when the padded family is injective as a ReLU
    layer on ``R^|P|``, otherwise ``Inconclusive``; the inner certificate
    verdict is kept in the notes.
    """
    kernels = [_as_kernel(k) for k in kernels]
    P = tuple(int(p) for p in np.atleast_1d(P))
    F = padded_family(kernels, P)
    if F.shape[0] == 0:
        return InjectivityCertificate(Verdict.INCONCLUSIVE, method="padded-kernels",
                                      notes=[f"no kernel fits in box {P}"])
    inner = certify_dss_all(F, budget=budget)
    notes = [f"box {P}: {F.shape[0]} padded vectors in dimension {F.shape[1]}",
             f"padded family verdict: {inner.verdict.value}"] + inner.notes
    if inner.verdict is Verdict.INJECTIVE:
        return InjectivityCertificate(Verdict.INJECTIVE, wedge_count=inner.wedge_count,
                                      method="padded-kernels", notes=notes)
    return InjectivityCertificate(Verdict.INCONCLUSIVE, failing_witness=inner.failing_witness,
                                  wedge_count=inner.wedge_count, method="padded-kernels",
                                  notes=notes)


def search_padding(kernels, P_max, budget=WEDGE_BUDGET):
    """Smallest box (by volume, then lexicographic) where :func:`check_conv` succeeds.

    Boxes whose padded family has fewer than ``2 |P|`` vectors are skipped:
    such a family can never cover every direction.  Returns ``(P, cert)``
    or ``None``.
    """
    kernels = [_as_kernel(k) for k in kernels]
    P_max = tuple(int(p) for p in np.atleast_1d(P_max))
    boxes = sorted(itertools.product(*(range(1, p + 1) for p in P_max)),
                   key=lambda P: (math.prod(P), P))
    for P in boxes:
        count = sum(len(offsets(k.width, P)) for k in kernels)
        if count < 2 * math.prod(P):
            continue
        cert = check_conv(kernels, P, budget)
        if cert.verdict is Verdict.INJECTIVE:
            return P, cert
    return None


def min_channels(O, P):
    """Kernel count suggested by the closed-form bound ``2 prod 1/(1 - O_j/P_j)``.

    This bound treats each kernel as contributing ``prod (P_j - O_j)``
    placements; :func:`min_channels_exact` counts the real number.
    """
    O, P = tuple(O), tuple(P)
    if len(O) != len(P) or any(o >= p for o, p in zip(O, P)):
        raise DegenerateRatio(f"need O < P componentwise, got O={O}, P={P}")
    value = Fraction(2)
    for o, p in zip(O, P):
        value /= 1 - Fraction(o, p)
    return math.ceil(value)


def min_channels_exact(O, P):
    """Fewest kernels of width ``O`` whose padded family reaches ``2 |P|`` vectors."""
    O, P = tuple(O), tuple(P)
    placements = math.prod(p - o + 1 for o, p in zip(O, P))
    if len(O) != len(P) or placements <= 0 or any(o > p for o, p in zip(O, P)):
        raise DegenerateRatio(f"kernel width {O} does not fit box {P}")
    return -(-2 * math.prod(P) // placements)


def construct_pm_filters(base, scales):
    """Base kernels followed by ``-s_k**2 * c_k`` for each base kernel."""
    base = [_as_kernel(k) for k in base]
    s = np.broadcast_to(np.asarray(scales, dtype=float), (len(base),))
    if np.any(~(s > 0)):
        raise NonPositiveScale("filter scales must be positive")
    return base + [Kernel(-(sk ** 2) * k.values) for k, sk in zip(base, s)]


def cross_check_full(spec, budget=WEDGE_BUDGET):
    """Certify the full convolution matrix directly (small signals only)."""
    return certify_dss_all(conv_matrix(spec), budget=budget)
