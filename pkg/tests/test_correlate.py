import json
import math
import random
from pathlib import Path
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nilcorr.correlate import (CoverageError, bilinear_trace, correlation, decay_scan,
                               dense_parameters, partition, progression_intersection)
from nilcorr.equidist import character_function
from nilcorr.factorize import factorize
from nilcorr.nilgroup import heisenberg, torus
from nilcorr.polyseq import PolySeq
from nilcorr.sieve import mobius_upto

from conftest import FIXTURES

PHI = (1 + 5 ** 0.5) / 2
T1 = torus(1)
E1 = character_function((1,))


def one(pts):
    return np.ones(pts.shape[1], dtype=np.complex128)


def zero(pts):
    return np.zeros(pts.shape[1], dtype=np.complex128)


def mobius_oracle(n):
    """mu via smallest-prime-factor division, independent of the segmented sieve."""
    spf = np.zeros(n + 1, dtype=np.int64)
    for p in range(2, n + 1):
        if spf[p] == 0:
            spf[p::p][spf[p::p] == 0] = p
    mu = np.zeros(n + 1, dtype=np.int8)
    mu[1] = 1
    for m in range(2, n + 1):
        p = spf[m]
        r = m // p
        mu[m] = 0 if r % p == 0 else -mu[r]
    return mu


def golden():
    return T1.element((Fr(PHI),))


def test_squarefree_density():
    N = 10 ** 6
    mu = mobius_upto(N + 1)
    rep = correlation(mu, one, T1.identity(), 1, N)
    count = int(np.count_nonzero(mu[2:N + 2]))
    assert rep.value == pytest.approx(count / N, abs=1e-15)
    assert rep.value == pytest.approx(6 / math.pi ** 2, abs=1e-3)


def test_zero_weight():
    w = np.zeros(2000)
    assert correlation(w, E1, golden(), 50, 1000).value == 0.0


def test_coverage_error():
    with pytest.raises(CoverageError):
        correlation(np.ones(100), one, golden(), 10, 95)


def test_mertens_difference_fixture():
    H, N = 10 ** 4, 10 ** 6
    mu = mobius_upto(N + H)
    rep = correlation(mu, one, T1.identity(), H, N)
    M = np.cumsum(mobius_oracle(N + H).astype(np.int64))
    n = np.arange(1, N + 1)
    oracle = math.fsum(np.abs(M[n + H] - M[n]).tolist()) / (H * N)
    assert rep.value == pytest.approx(oracle, rel=1e-12)
    path = Path(FIXTURES) / "mertens_fixture.json"
    if not path.exists():
        path.write_text(json.dumps({"H": H, "N": N, "value": oracle.hex()}) + "\n")
    frozen = float.fromhex(json.loads(path.read_text())["value"])
    assert rep.value == pytest.approx(frozen, rel=1e-12)


def naive(w, alpha, H, N):
    tot = 0.0
    for n in range(1, N + 1):
        s = sum(w[n + h] * complex(math.cos(2 * math.pi * ((n + h) * alpha % 1)),
                                   math.sin(2 * math.pi * ((n + h) * alpha % 1)))
                for h in range(1, H + 1))
        tot += abs(s)
    return tot / (H * N)


def test_orbit_and_polyseq_match_naive():
    H, N = 17, 300
    mu = mobius_upto(N + H)
    orb = correlation(mu, E1, golden(), H, N).value
    seq = PolySeq(T1, {(1, 0): (Fr(PHI),), (0, 1): (Fr(PHI),)})
    poly = correlation(mu, E1, seq, H, N).value
    ref = naive(mu, PHI, H, N)
    assert orb == pytest.approx(ref, rel=1e-9)
    assert poly == pytest.approx(ref, rel=1e-9)


def test_heisenberg_orbit_matches_polyseq():
    grp = heisenberg()
    g0 = grp.element((Fr(PHI), Fr(math.sqrt(2)), Fr(1, 3)))
    from nilcorr.polyseq import from_orbit
    one_p = from_orbit(g0, grp.identity())
    # two-parameter version g(n, h) = g0^(n+h)
    two = PolySeq(grp, {})
    from nilcorr.polyseq import fit_seq
    from nilcorr.nilgroup import power
    two = fit_seq(grp, lambda n, h: power(g0, n + h))
    F = character_function((0, 1, 0))
    mu = mobius_upto(600)
    a = correlation(mu, F, g0, 20, 500).value
    b = correlation(mu, F, two, 20, 500).value
    assert a == pytest.approx(b, rel=1e-9)
    assert one_p.group is grp


@pytest.mark.parametrize("form", ["orbit", "poly"])
def test_thread_determinism(form):
    H, N = 64, 20000
    mu = mobius_upto(N + H)
    g = golden() if form == "orbit" else PolySeq(T1, {(1, 0): (Fr(PHI),), (0, 1): (Fr(PHI),)})
    reps = [correlation(mu, E1, g, H, N, threads=t) for t in (1, 4, 16)]
    assert reps[0].value == reps[1].value == reps[2].value
    assert all(np.array_equal(reps[0].inner, r.inner) for r in reps[1:])
    assert reps[0].partials == reps[1].partials == reps[2].partials


@settings(max_examples=30)
@given(st.integers(1, 40), st.integers(1, 300), st.floats(0, 1), st.integers(0, 10 ** 6))
def test_value_bounded_by_sup_norm(H, N, alpha, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1, 1, N + H + 1)
    rep = correlation(w, E1, T1.element((Fr(alpha),)), H, N)
    assert 0 <= rep.value <= 1 + 1e-12


def test_random_baseline():
    H, N = 256, 20000
    rng = np.random.default_rng(7)
    w = rng.choice([-1, 1], N + H + 1)
    rep = correlation(w, E1, golden(), H, N)
    # simulated oracle: 10^4 windows of i.i.d. signs
    sims = np.abs(np.random.default_rng(11).choice([-1, 1], (10 ** 4, H)).sum(axis=1)).mean() / H
    ref = math.sqrt(2 / (math.pi * H))
    assert sims == pytest.approx(ref, rel=0.05)
    assert ref / 3 <= rep.value <= 3 * ref


def test_partition_example():
    cells = partition(100, 2, 2, 0)
    c = next(c for c in cells if c.k == 1 and c.j == 1)
    assert (c.start, c.step, c.length) == (1, 2, 13)
    assert list(c.indices()) == list(range(1, 26, 2))
    cells = partition(100, 3, 1, 5)
    assert [(c.start, c.length) for c in cells] == [
        (100 * (k - 1) // 9 + 1, 100 * k // 9 - 100 * (k - 1) // 9) for k in range(1, 10)]


def test_partition_errors():
    with pytest.raises(ValueError):
        partition(3, 2, 1, 0)
    with pytest.raises(ValueError):
        partition(100, 3, 4, 0)


def test_partition_disjoint_cover_random():
    rng = random.Random(2024)
    for _ in range(1000):
        W = rng.randint(1, 8)
        H = rng.randint(W * W, 600)
        q = rng.randint(1, W)
        n = rng.randint(-50, 10 ** 6)
        cells = partition(H, W, q, n)
        assert len(cells) == W * W * q
        seen = np.concatenate([c.indices() for c in cells])
        assert sorted(seen.tolist()) == list(range(1, H + 1))
        for c in cells:
            assert all((n + h) % q == c.j for h in c.indices().tolist())


@given(st.integers(2, 10), st.integers(4, 5000), st.integers(0, 100))
def test_partition_cell_sizes(W, H, n):
    if W * W > H:
        return
    for q in range(W // 2 + 1, W + 1):
        for c in partition(H, W, q, n):
            assert H // W ** 3 <= c.length <= math.ceil(2 * H / W ** 3)


def test_progression_intersection_examples():
    assert progression_intersection((1, 2, 50), (0, 5, 21)) == (5, 10, 10)
    assert progression_intersection((3, 7, 9), (3, 7, 9)) == (3, 7, 9)
    assert progression_intersection((0, 2, 10), (1, 4, 10))[2] == 0


@given(st.tuples(st.integers(-30, 30), st.integers(1, 12), st.integers(0, 25)),
       st.tuples(st.integers(-30, 30), st.integers(1, 12), st.integers(0, 25)))
def test_progression_intersection_brute_force(a, b):
    A = {a[0] + a[1] * i for i in range(a[2])}
    B = {b[0] + b[1] * i for i in range(b[2])}
    s, d, L = progression_intersection(a, b)
    assert {s + d * i for i in range(L)} == A & B
    if L >= 2:
        assert d == math.lcm(a[1], b[1])


def near_half_factorized():
    half = Fr(1, 2) + Fr(1, 10 ** 6)
    g = PolySeq(T1, {(1, 0): (half,), (0, 1): (half,)})
    return g, factorize(g, 10 ** 4, 10 ** 4)


def test_trace_torus_example():
    g, r = near_half_factorized()
    H = 400
    mu = mobius_upto(2000)
    rep = bilinear_trace(r, g, E1, mu, H, range(1, 41), W=2)
    assert abs(rep.major + rep.minor - rep.trace) <= 1e-9 * max(1.0, abs(rep.trace))
    # eps drifts by at most 1e-6 * H / W^2 across a cell, and |e(a) - e(b)| <= 2 pi |a - b|
    mass = sum(int(np.abs(mu[n + 1:n + H + 1].astype(int)).sum()) for n in range(1, 41))
    assert rep.defect <= 2 * math.pi * 1e-6 * (H / 4) * mass
    assert rep.original > 0 and not rep.flagged


def test_trace_F_one():
    g, r = near_half_factorized()
    mu = mobius_upto(2000)
    rep = bilinear_trace(r, g, one, mu, 100, range(1, 11), W=2, qmc_points=1 << 10)
    assert abs(rep.minor) <= 1e-12
    assert abs(rep.major + rep.minor - rep.trace) <= 1e-9 * max(1.0, abs(rep.trace))


def test_trace_abelian_character_mean_zero():
    T2 = torus(2)
    g = PolySeq(T2, {(1, 0): (Fr(PHI), Fr(1, 2)), (0, 1): (Fr(PHI), Fr(1, 2))})
    r = factorize(g, 1000, 1000)
    assert r.characters == [(0, 2)]
    mu = mobius_upto(2000)
    F = character_function((1, 0))
    rep = bilinear_trace(r, g, F, mu, 200, range(1, 21), W=2)
    assert all(abs(c.mean) <= 1e-3 for c in rep.cells)
    assert abs(rep.major) <= 1e-3 * sum(abs(c.weight_sum) for c in rep.cells)
    assert abs(rep.major + rep.minor - rep.trace) <= 1e-9 * max(1.0, abs(rep.trace))


def test_trace_requires_factorization():
    with pytest.raises(ValueError):
        bilinear_trace(None, PolySeq(T1, {}), one, np.zeros(10), 4, [1])


def test_dense_parameters():
    eps, P1, Q1 = dense_parameters(10 ** 4)
    L = math.log(10 ** 4)
    assert eps == pytest.approx(math.log(L) / L)
    assert Q1 == pytest.approx(10 ** 3.84)
    assert P1 == pytest.approx(Q1 ** 0.5)


def test_decay_scan_zeros():
    N = 5000
    g = golden()
    rows = decay_scan(g, E1, [64, 128], N, np.zeros(N + 200))
    assert all(r.raw == 0 and r.restricted == 0 for r in rows)
    mu = mobius_upto(N + 200)
    rows = decay_scan(g, zero, [64, 128], N, mu)
    assert all(r.raw == 0 and r.restricted == 0 for r in rows)
    with pytest.raises(ValueError):
        decay_scan(g, E1, [128, 64], N, mu)
