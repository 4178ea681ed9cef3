"""End-to-end acceptance checks, one ``test_criterion_NN_*`` group per criterion.

The terminal summary prints one PASS/FAIL line per criterion number.
"""

import math
import time

import numpy as np
import pytest

from injectcheck.conv import ConvSpec, check_conv, cross_check_full, search_padding
from injectcheck.dense import DenseLayer, check_dense, construct_minimal, random_minimal
from injectcheck.dss import Verdict, certify_dss_all, enumerate_wedges
from injectcheck.gaussian import (
    cstar_lower_solve,
    halfspace_probability_exact,
    halfspace_probability_mc,
    run_expansivity_study,
    union_bound_threshold,
    wedge_count_formula,
)
from injectcheck.network import (
    ReluNetwork,
    build_cascade,
    certify_exact,
    certify_layerwise,
    collision_search,
    forward,
)
from injectcheck.numeric import Prng, Sampler, sample_gaussian_matrix
from injectcheck.stability import colinear_additivity_check, empirical_min_ratio, inverse_lipschitz_exact

SPLIT_I2 = np.vstack([np.eye(2), -np.eye(2)])

# 2x2 kernel bank and its negatives, plus the width-3 four-kernel bank.
BANK_2X2_BASE = [
    np.array([[3.0, -1.0], [-1.0, -1.0]]),
    np.array([[-1.0, 3.0], [-1.0, -1.0]]),
    np.array([[-1.0, -1.0], [3.0, -1.0]]),
    np.array([[-1.0, -1.0], [-1.0, 3.0]]),
]
BANK_2X2 = BANK_2X2_BASE + [-c for c in BANK_2X2_BASE]
BANK_WIDTH3 = [np.array(v, dtype=float) for v in
               ([1, 0, -1], [1, 0, 1], [-1, 0, 1], [-1, 0, -1])]


def collision_ok(layer, pair):
    x, y = pair
    return (np.linalg.norm(layer(x) - layer(y)) <= 1e-9
            and np.linalg.norm(x - y) >= 1e-6)


# ---------------------------------------------------------------------------
# 1. Minimal expansivity: constructions certify, narrow layers collide
# ---------------------------------------------------------------------------


def test_criterion_01_minimal_expansivity():
    start = time.perf_counter()
    for seed in range(200):
        sampler = Sampler(Prng(seed, 1))
        n = 2 + seed % 5
        while True:
            B = sampler.normal((n, n))
            if np.linalg.matrix_rank(B) == n:
                break
        D = 0.5 + 1.5 * sampler.uniform((n,))
        W = construct_minimal(B, D)
        assert check_dense(DenseLayer(W)).verdict is Verdict.INJECTIVE, seed
        assert certify_dss_all(W, shortcut=False).verdict is Verdict.INJECTIVE, seed
    for seed in range(200):
        sampler = Sampler(Prng(seed, 2))
        n = 2 + seed % 5
        m = 1 + int(sampler.uniform((1,))[0] * (2 * n - 1))
        layer = DenseLayer(sampler.normal((m, n)))
        cert = check_dense(layer)
        assert cert.verdict is Verdict.NON_INJECTIVE, (seed, m, n)
        assert collision_ok(layer, cert.collision), (seed, m, n)
    assert time.perf_counter() - start < 120


# ---------------------------------------------------------------------------
# 2. Identity layers fail on the negative first axis
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_criterion_02_identity_counterexample(n):
    cert = certify_dss_all(np.eye(n))
    assert cert.verdict is Verdict.NON_INJECTIVE
    assert cert.failing_witness[0] < 0
    assert collision_ok(DenseLayer(np.eye(n)), cert.collision)


# ---------------------------------------------------------------------------
# 3. Wedge count law
# ---------------------------------------------------------------------------


def test_criterion_03_wedge_count_law():
    mismatches = []
    for n in range(1, 5):
        for m in range(1, 11):
            expected = wedge_count_formula(m, n)
            for t in range(100):
                W = sample_gaussian_matrix(m, n, Prng(1000 * n + m, t))
                count = len(enumerate_wedges(W))
                if count != expected:
                    mismatches.append((m, n, t, count, expected))
    assert mismatches == []


# ---------------------------------------------------------------------------
# 4. Exact versus Monte Carlo half-space probability
# ---------------------------------------------------------------------------


def test_criterion_04_halfspace_three_in_plane():
    assert float(halfspace_probability_exact(3, 2)) == 0.75
    est = halfspace_probability_mc(3, 2, 100_000, Prng(4, 0))
    assert abs(est - 0.75) <= 0.01


@pytest.mark.parametrize("k, n", [(4, 2), (5, 3)])
def test_criterion_04_halfspace_three_sigma(k, n):
    p = float(halfspace_probability_exact(k, n))
    trials = 100_000
    est = halfspace_probability_mc(k, n, trials, Prng(4, k * 10 + n))
    assert abs(est - p) <= 3 * math.sqrt(p * (1 - p) / trials)


# ---------------------------------------------------------------------------
# 5. Thresholds
# ---------------------------------------------------------------------------


def test_criterion_05_thresholds():
    start = time.perf_counter()
    lower = cstar_lower_solve()
    union = union_bound_threshold()
    elapsed = time.perf_counter() - start
    assert 3.35 <= lower <= 3.45
    assert 10.4 <= union <= 10.6
    assert elapsed < 1.0


# ---------------------------------------------------------------------------
# 6. Expansivity study at n = 100
# ---------------------------------------------------------------------------


def test_criterion_06_expansivity_study():
    grid = [2.1, 3.0, 4.0, 5.0]
    start = time.perf_counter()
    study = run_expansivity_study(100, grid, 200, seed=6)
    elapsed = time.perf_counter() - start
    f = [study.row(c).dss_at_mean_freq for c in grid]
    print("dss-at-mean-direction frequencies", dict(zip(grid, f)))
    assert f[0] <= 0.1
    assert f[1] <= 0.5
    assert f[2] >= 0.5
    assert f[3] >= 0.9
    for a, b in zip(f, f[1:]):
        sigma = math.sqrt((a * (1 - a) + b * (1 - b)) / 200)
        assert b >= a - 2 * sigma
    assert elapsed < 300


# ---------------------------------------------------------------------------
# 7. Convolutional examples
# ---------------------------------------------------------------------------


def test_criterion_07_bank_2x2_injective_at_2x2():
    # Expected red: every kernel in the bank sums to zero, so the padded family
    # lies in the hyperplane orthogonal to the all-ones box and cannot span.
    cert = check_conv(BANK_2X2, (2, 2))
    assert cert.verdict is Verdict.INJECTIVE, cert.notes


def test_criterion_07_bank_2x2_search_padding():
    found = search_padding(BANK_2X2, (3, 3))
    assert found is not None and found[0] == (2, 2)


def test_criterion_07_width3_inconclusive_at_3():
    assert check_conv(BANK_WIDTH3, (3,)).verdict is Verdict.INCONCLUSIVE


def test_criterion_07_width3_search_padding():
    found = search_padding(BANK_WIDTH3, (6,))
    assert found is not None
    P, cert = found
    assert P == (4,) and cert.verdict is Verdict.INJECTIVE


@pytest.mark.parametrize("boundary", ["zero_padded", "periodic"])
def test_criterion_07_bank_2x2_full_matrices(boundary):
    verdicts = {N: cross_check_full(ConvSpec(BANK_2X2, (N, N), boundary)).verdict
                for N in range(2, 7)}
    assert all(v is Verdict.INJECTIVE for v in verdicts.values()), verdicts


@pytest.mark.parametrize("boundary", ["zero_padded", "periodic"])
def test_criterion_07_width3_full_matrices(boundary):
    verdicts = {N: cross_check_full(ConvSpec(BANK_WIDTH3, (N,), boundary)).verdict
                for N in range(3, 9)}
    assert all(v is Verdict.INJECTIVE for v in verdicts.values()), verdicts


# ---------------------------------------------------------------------------
# 8. Inverse Lipschitz bound
# ---------------------------------------------------------------------------


def test_criterion_08_empirical_ratio_respects_bound():
    worst = np.inf
    for seed in range(50):
        sampler = Sampler(Prng(seed, 8))
        n = 1 + seed % 4
        m = 2 * n + int(sampler.uniform((1,))[0] * (12 - 2 * n + 1))
        W = random_minimal(n, sampler, extra_rows=m - 2 * n)
        C = inverse_lipschitz_exact(W).C_exact
        r = empirical_min_ratio(W, None, 10_000, Prng(seed, 80))
        worst = min(worst, r - C)
        assert r >= C - 1e-8, (seed, r, C)
    print("smallest gap between empirical ratio and exact constant", worst)


def test_criterion_08_split_identity_constant():
    assert abs(inverse_lipschitz_exact(SPLIT_I2).C_exact - 1 / math.sqrt(8)) <= 1e-12


def test_criterion_08_colinear_additivity():
    sampler = Sampler(Prng(88))
    for _ in range(100):
        n = 2 + int(sampler.uniform((1,))[0] * 3)
        m = n + 1 + int(sampler.uniform((1,))[0] * 6)
        W = sampler.normal((m, n))
        x1, x2 = 2 * sampler.normal((n,)), 2 * sampler.normal((n,))
        k = 1 + int(sampler.uniform((1,))[0] * 6)
        t = np.concatenate([[0.0], np.sort(sampler.uniform((k,))), [1.0]])
        assert colinear_additivity_check(W, x1, x2, t)


# ---------------------------------------------------------------------------
# 9. Exact network checker
# ---------------------------------------------------------------------------


def test_criterion_09_identity_middle_layer():
    net = ReluNetwork([DenseLayer(SPLIT_I2), DenseLayer(np.eye(4))])
    assert certify_layerwise(net).verdict is Verdict.INCONCLUSIVE
    assert certify_exact(net).verdict is Verdict.INJECTIVE


def test_criterion_09_three_row_layer():
    net = ReluNetwork([DenseLayer([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])])
    cert = certify_exact(net)
    assert cert.verdict is Verdict.NON_INJECTIVE
    x, y = cert.collision
    assert np.linalg.norm(forward(net, x) - forward(net, y)) <= 1e-9
    assert np.linalg.norm(x - y) >= 1e-6


def test_criterion_09_agrees_with_layerwise():
    for seed in range(50):
        net = ReluNetwork([DenseLayer(random_minimal(2, Prng(seed, 90))),
                           DenseLayer(random_minimal(4, Prng(seed, 91)))])
        layerwise = certify_layerwise(net).verdict
        exact = certify_exact(net).verdict
        assert layerwise is Verdict.INJECTIVE and exact is Verdict.INJECTIVE, seed


# ---------------------------------------------------------------------------
# 10. Projection cascades
# ---------------------------------------------------------------------------


def test_criterion_10_cascades():
    start = time.perf_counter()
    injective = 0
    for seed in range(50):
        net = build_cascade([2, 8, 5], Prng(seed, 10))
        cert = certify_exact(net)
        if cert.verdict is Verdict.INJECTIVE:
            injective += 1
            assert collision_search(net, 100_000, Prng(seed, 100)) is None, seed
        else:
            print(f"cascade seed {seed}: {cert.verdict.value} {cert.notes}")
    assert injective >= 49
    assert time.perf_counter() - start < 600
