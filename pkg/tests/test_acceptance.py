"""Acceptance suite: one test per criterion, summarized as PASS/FAIL lines at the end
of the pytest run."""
import dataclasses
import json
import math
import os
import random
import time
from fractions import Fraction as Fr

import numpy as np
import pytest

from conftest import FIXTURES
from nilcorr.correlate import correlation
from nilcorr.equidist import character_function, obstruction_search, obstruction_witness
from nilcorr.factorize import factorize, verify_factorization
from nilcorr.nilgroup import heisenberg, multiply, torus
from nilcorr.polyseq import PolySeq, one_param
from nilcorr.pretentious import distance, distance_sq, liouville, m_value, mobius, mrt_lhs
from nilcorr.sieve import dense_set, minor_sets, mobius_upto, primes_between, sqfree_surrogate

from test_pretentious import naive_mrt, random_bounded_multiplicative

PHI = (1 + 5 ** 0.5) / 2


def trial_division_mu(n):
    mu, m, p = 1, n, 2
    while p * p <= m:
        if m % p == 0:
            m //= p
            if m % p == 0:
                return 0
            mu = -mu
        p += 1
    return -mu if m > 1 else mu


def is_prime(p):
    return p > 1 and all(p % d for d in range(2, math.isqrt(p) + 1))


def frac_norm(x):
    x -= math.floor(x)
    return min(x, 1 - x)


# 1 ------------------------------------------------------------------------------------

def heis_matrix(c):
    x, y, z = c
    return ((1, x, z + x * y), (0, 1, y), (0, 0, 1))


def matmul(A, B):
    return tuple(tuple(sum(A[i][k] * B[k][j] for k in range(3)) for j in range(3)) for i in range(3))


def test_criterion_1_group_law_oracle():
    t0 = time.perf_counter()
    H3 = heisenberg()
    rng = random.Random(1)

    def rnd():
        return H3.element(tuple(Fr(rng.randint(-99, 99), rng.randint(1, 30)) for _ in range(3)))
    for _ in range(1000):
        a, b = rnd(), rnd()
        M = matmul(heis_matrix(a.coords), heis_matrix(b.coords))
        assert multiply(a, b).coords == (M[0][1], M[1][2], M[0][2] - M[0][1] * M[1][2])
    for _ in range(1000):
        a, b, c = rnd(), rnd(), rnd()
        assert multiply(multiply(a, b), c).coords == multiply(a, multiply(b, c)).coords
    assert time.perf_counter() - t0 < 10


# 2 ------------------------------------------------------------------------------------

def test_criterion_2_sieve():
    t0 = time.perf_counter()
    X = 10 ** 4
    mu = mobius_upto(X)
    oracle = [0] + [trial_division_mu(n) for n in range(1, X + 1)]
    assert mu.tolist() == oracle
    assert int(mu[1:].sum()) == sum(oracle) == -23
    for a in range(1, X + 1):
        for b in range(a, X // a + 1):
            if math.gcd(a, b) == 1:
                assert mu[a * b] == mu[a] * mu[b]
    # inversion: sum_{d | n} mu(d) = [n = 1], and g = 1 * f recovers f = mu * g
    div_sum = np.zeros(X + 1, dtype=np.int64)
    for d in range(1, X + 1):
        div_sum[d::d] += mu[d]
    assert div_sum[1] == 1 and not div_sum[2:].any()
    f = np.arange(X + 1, dtype=np.int64) % 7 - 3
    g = np.zeros(X + 1, dtype=np.int64)
    for d in range(1, X + 1):
        g[d::d] += f[d]
    back = np.zeros(X + 1, dtype=np.int64)
    for d in range(1, X + 1):
        back[d::d] += int(mu[d]) * g[1:X // d + 1]
    assert np.array_equal(back[1:], f[1:])
    assert time.perf_counter() - t0 < 60


# 3 ------------------------------------------------------------------------------------

def test_criterion_3_squarefree_surrogate():
    t0 = time.perf_counter()
    N, H = 10 ** 5, 10 ** 3
    primes = primes_between(10 ** 3, 10 ** 4)
    mu = mobius_upto(N + H + 1)
    ms = minor_sets(10 ** 3, 10 ** 4, N + H)
    bound = 2 * H * sum(Fr(1, int(p) ** 2) for p in primes) + 2 * len(primes)
    worst = Fr(0)
    for n in range(0, N, H):
        vals = sqfree_surrogate(mu, n, H, primes)
        err = Fr(0)
        for h in range(1, H + 1):
            v = n + h
            if ms.S[v] and ms.F[v]:
                assert vals[h - 1] == int(mu[v])
            if ms.S[v]:
                err += abs(vals[h - 1] - int(mu[v]))
        worst = max(worst, err)
    assert worst <= bound
    assert time.perf_counter() - t0 < 300


# 4 ------------------------------------------------------------------------------------

@pytest.mark.parametrize("P1,Q1", [(10 ** 2, 10 ** 4), (10 ** 3, 10 ** 5)])
def test_criterion_4_dense_set_density(P1, Q1):
    t0 = time.perf_counter()
    N = 10 ** 6
    ds = dense_set(P1, Q1, N, r_max_override=1)
    assert ds.deficit <= 4 * math.log(P1) / math.log(Q1)
    (P, Q), = ds.levels
    for n in range(1, 10 ** 4 + 1):
        brute = any(n % p == 0 and is_prime(p) for p in range(int(P), min(int(Q), n) + 1))
        assert ds.mask[n] == brute
    assert time.perf_counter() - t0 < 120


# 5 ------------------------------------------------------------------------------------

def _fault_checks(r, g, N, H):
    grp = g.group
    loud = PolySeq(grp, {k: tuple(c * 10 ** 6 for c in v) for k, v in r.epsilon.coeffs.items()})
    rep = verify_factorization(dataclasses.replace(r, epsilon=loud), g, N, H, smooth_samples=10 ** 4)
    assert not rep.checks["smoothness"]
    bumped = PolySeq(grp, {k: tuple(Fr(c.numerator, c.denominator * 10007) for c in v)
                           for k, v in r.gamma.coeffs.items()})
    rep = verify_factorization(dataclasses.replace(r, gamma=bumped), g, N, H, smooth_samples=10 ** 4)
    assert not rep.checks["rationality"]
    shifted = dict(r.gprime.coeffs)
    key = (1, 0)
    shifted[key] = tuple(c + Fr(1, 7) for c in shifted.get(key, (0,) * grp.m))
    rep = verify_factorization(dataclasses.replace(r, gprime=PolySeq(grp, shifted)), g, N, H,
                               smooth_samples=10 ** 4)
    assert not rep.checks["reconstruction"] and not rep.checks["kernel"]


def test_criterion_5_factorization_round_trip():
    t0 = time.perf_counter()
    half = Fr(1, 2) + Fr(1, 10 ** 6)
    torus_g = PolySeq(torus(1), {(1, 0): (half,), (0, 1): (half,)})
    s2, s3, s5 = (Fr(math.sqrt(x)) for x in (2, 3, 5))
    H3 = heisenberg()
    # rational parts have denominators <= 6; the 1/2 carries a small irrational drift
    drift = Fr(math.sqrt(2) * 1e-7)
    heis_g = PolySeq(H3, {(0, 0): (Fr(1, 6), Fr(1, 5), Fr(1, 3)), (1, 0): (Fr(1, 2) + drift, s2, 0),
                          (0, 1): (Fr(1, 3), s3, 0), (1, 1): (0, 0, s5),
                          (2, 0): (0, 0, Fr(1, 6))})
    for g, N in ((torus_g, 10 ** 4), (heis_g, 10 ** 3)):
        r = factorize(g, N, N)
        assert r.trace, "expected at least one peeled character"
        rep = verify_factorization(r, g, N, N, smooth_samples=10 ** 5)
        assert rep.passed, rep.checks
        assert {"reconstruction", "smoothness", "rationality", "periodicity", "support",
                "kernel"} <= set(rep.checks)
        _fault_checks(r, g, N, N)
    assert time.perf_counter() - t0 < 60


# 6 ------------------------------------------------------------------------------------

def test_criterion_6_obstruction_dichotomy():
    t0 = time.perf_counter()
    T1 = torus(1)
    N, M = 10 ** 4, 10
    g = one_param(T1, [(0.0,), (math.sqrt(2),)])
    ob = obstruction_search(g, N, M)
    scan = [N * frac_norm(k * math.sqrt(2)) for k in range(1, M + 1)]
    assert ob.eta.vector == (5,) == (1 + scan.index(min(scan)),)
    assert ob.norm == pytest.approx(min(scan), rel=1e-6)
    assert abs(ob.norm - 710.7) < 0.1
    rng = random.Random(6)
    hits = 0
    for _ in range(300):
        a, q = rng.randint(0, 9), rng.randint(1, 10)
        alpha = a / q + rng.choice([0.0, 1e-7, 1e-6, 1e-5, 1e-3]) * rng.uniform(-1, 1)
        s = one_param(T1, [(rng.random(),), (alpha,)])
        ob = obstruction_search(s, N, M)
        if ob.norm <= N / (8 * math.pi * M):
            hits += 1
            assert abs(obstruction_witness(ob.eta, s, N).mean) > 0.5
    assert hits > 50
    assert time.perf_counter() - t0 < 30


# 7 ------------------------------------------------------------------------------------

def test_criterion_7_pretentious():
    t0 = time.perf_counter()
    assert distance_sq(mobius(10), np.ones(11, dtype=np.int64), 10) == Fr(494, 210)
    X = 10 ** 4
    rng = np.random.default_rng(7)
    pool = [random_bounded_multiplicative(X, rng) for _ in range(20)]
    pool += [mobius(X).astype(complex), liouville(X).astype(complex)]
    r = np.random.default_rng(8)
    for _ in range(100):
        a, b, c = (pool[i] for i in r.choice(len(pool), 3, replace=False))
        assert distance(a, c, X) <= distance(a, b, X) + distance(b, c, X) + 1e-12
    small = m_value(mobius(10 ** 4), 10 ** 4)[1]
    large = m_value(mobius(10 ** 6), 10 ** 6)[1]
    assert small < large
    assert time.perf_counter() - t0 < 300


# 8 and 9 --------------------------------------------------------------------------------

DECAY_H = (256, 2048, 16384)
DECAY_N = 10 ** 6


def decay_values(threads):
    mu = mobius_upto(DECAY_N + DECAY_H[-1] + 1)
    g0 = torus(1).element((Fr(PHI),))
    F = character_function((1,))
    return [correlation(mu, F, g0, H, DECAY_N, threads=threads, weight="mobius").value
            for H in DECAY_H]


def iid_baseline(H, windows=10 ** 4, seed=8):
    rng = np.random.default_rng(seed)
    tot = 0.0
    for chunk in range(0, windows, 500):
        k = min(500, windows - chunk)
        s = rng.integers(0, 2, size=(k, H), dtype=np.int8).sum(axis=1, dtype=np.int64)
        tot += np.abs(2 * s - H).sum()
    return tot / (windows * H)


@pytest.fixture(scope="module")
def decay_single():
    t0 = time.perf_counter()
    vals = decay_values(1)
    return vals, time.perf_counter() - t0


def test_criterion_8_decay(decay_single):
    vals, seconds = decay_single
    assert all(0 <= v <= 1 for v in vals)
    assert all(b <= 1.1 * a for a, b in zip(vals, vals[1:]))
    base = iid_baseline(DECAY_H[-1])
    assert base == pytest.approx(math.sqrt(2 / (math.pi * DECAY_H[-1])), rel=0.02)
    assert base / 3 <= vals[-1] <= 3 * base
    path = os.path.join(FIXTURES, "decay_fixture.json")
    if not os.path.exists(path):
        with open(path, "w") as fh:
            json.dump({"N": DECAY_N, "H": list(DECAY_H), "values": [v.hex() for v in vals]},
                      fh, indent=1)
            fh.write("\n")
    with open(path) as fh:
        frozen = json.load(fh)
    assert [float.fromhex(v) for v in frozen["values"]] == vals
    assert seconds < 600


def test_criterion_9_determinism(decay_single):
    vals, _ = decay_single
    assert decay_values(4) == vals
    assert decay_values(16) == vals


# 10 ------------------------------------------------------------------------------------

def test_criterion_10_mrt_sliding_window():
    rng = random.Random(10)
    for _ in range(40):
        N, H0 = rng.randint(1, 1000), rng.randint(1, 50)
        top = 2 * N + H0 + 1
        for f in (mobius(top), liouville(top)):
            v, ratio = mrt_lhs(f, None, N, H0)
            assert v == naive_mrt(f, N, H0) and ratio == Fr(v, H0 * H0 * N)
    for N, H0 in ((1000, 50), (37, 1), (500, 17)):
        one = np.ones(2 * N + H0 + 1, dtype=np.int64)
        assert mrt_lhs(one, None, N, H0) == (N * H0 ** 2, 1)
