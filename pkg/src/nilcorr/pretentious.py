"""Pretentious distances, Dirichlet characters and the short-interval quantities.

Multiplicative functions are plain numpy arrays indexed by n (entry 0 unused).
Integer-valued arrays are treated exactly where the result is rational.

The minimization over |t| <= X scans the uniform grid t = k * dt with
dt = 1/(4 log X) by default. Evaluating sum_p w_p exp(-i t log p) on a uniform
t-grid is a non-uniform DFT; it is done chunk by chunk with FFTs after a
Taylor expansion of the off-grid part of each frequency. The best grid point is
then refined by golden-section search on direct evaluations.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
import math

import numpy as np

from .sieve import mobius_upto, primes_upto, liouville_upto

GOLDEN = (math.sqrt(5) - 1) / 2


# --- multiplicative functions --------------------------------------------------

def smallest_prime_factor(X):
    spf = np.zeros(X + 1, dtype=np.int64)
    for p in primes_upto(X).tolist():
        block = spf[p::p]
        block[block == 0] = p
    return spf


def completely_multiplicative(prime_values, X):
    """Extend values given at primes (array indexed by p) to [1, X]."""
    pv = np.asarray(prime_values)
    dtype = np.complex128 if np.iscomplexobj(pv) else (
        np.int64 if np.issubdtype(pv.dtype, np.integer) else np.float64)
    out = np.zeros(X + 1, dtype=dtype)
    if X >= 1:
        out[1] = 1
    spf = smallest_prime_factor(X)
    for n in range(2, X + 1):
        p = spf[n]
        out[n] = pv[p] * out[n // p]
    return out


def mobius(X):
    return mobius_upto(X).astype(np.int64)


def liouville(X):
    return liouville_upto(X).astype(np.int64)


def archimedean(t, X):
    """n -> n^{it} on [1, X]."""
    out = np.zeros(X + 1, dtype=np.complex128)
    n = np.arange(1, X + 1)
    out[1:] = np.exp(1j * t * np.log(n))
    return out


def random_unimodular(X, seed):
    """Completely multiplicative function with i.i.d. uniform phases at primes."""
    rng = np.random.default_rng(seed)
    pv = np.zeros(X + 1, dtype=np.complex128)
    ps = primes_upto(X)
    pv[ps] = np.exp(2j * np.pi * rng.random(ps.size))
    return completely_multiplicative(pv, X)


def _is_integer_array(a):
    return np.issubdtype(np.asarray(a).dtype, np.integer)


# --- distances -----------------------------------------------------------------

def distance_sq(beta, beta2, X, exact=None):
    """D(beta, beta2; X)^2 = sum_{p <= X} (1 - Re beta(p) conj(beta2(p))) / p.

    Exact Fraction when both functions are integer valued and exact is not
    False; otherwise an exactly-rounded float sum.
    """
    ps = primes_upto(X)
    a = np.asarray(beta)[ps]
    b = np.asarray(beta2)[ps]
    if exact is None:
        exact = _is_integer_array(beta) and _is_integer_array(beta2)
    if exact:
        return sum((Fraction(1 - int(x) * int(y), int(p)) for p, x, y in zip(ps, a, b)),
                   Fraction(0))
    terms = (1 - np.real(a * np.conj(b))) / ps
    return math.fsum(terms.tolist())


def distance(beta, beta2, X):
    # rounding can push a zero distance slightly negative
    return math.sqrt(max(0.0, float(distance_sq(beta, beta2, X, exact=False))))


def _taylor_terms(tol=1e-15):
    t, term = 0, 1.0
    while term > tol:
        t += 1
        term *= (math.pi / 2) / t
    return t + 1


def exp_sum_grid(freqs, weights, dt, k_lo, k_hi, chunk=1 << 18):
    """S[k] = sum_p w_p exp(-i k dt f_p) for k_lo <= k <= k_hi.

    Each chunk of L outputs is handled by writing dt f_p L / 2pi = j_p + r_p with
    j_p an integer and |r_p| <= 1/2; the integer part is a plain DFT, the
    remainder is expanded as a Taylor series about the chunk midpoint.
    """
    freqs = np.asarray(freqs, dtype=float)
    weights = np.asarray(weights, dtype=np.complex128)
    count = k_hi - k_lo + 1
    L = max(16, min(chunk, 1 << (count - 1).bit_length()))
    T = _taylor_terms()
    theta = dt * freqs / (2 * np.pi) * L
    j = np.rint(theta)
    r = theta - j
    jm = np.mod(j, L).astype(np.int64)
    s = np.arange(L)
    x = s / L - 0.5
    fact = [1.0]
    for i in range(1, T):
        fact.append(fact[-1] * i)
    out = np.empty(count, dtype=np.complex128)
    for start in range(0, count, L):
        k0 = k_lo + start
        # phase for the chunk offset; reduce k0*dt*f mod 2pi in extended precision
        ph = np.mod(np.float64(k0) * dt * freqs, 2 * np.pi)
        w = weights * np.exp(-1j * ph) * np.exp(-1j * np.pi * r)
        acc = np.zeros(L, dtype=np.complex128)
        z = -2j * np.pi * x
        zpow = np.ones(L, dtype=np.complex128)
        rpow = np.ones_like(r)
        for ell in range(T):
            bins = np.bincount(jm, weights=(w * rpow).real, minlength=L) \
                + 1j * np.bincount(jm, weights=(w * rpow).imag, minlength=L)
            acc += zpow / fact[ell] * np.fft.fft(bins)
            zpow = zpow * z
            rpow = rpow * r
        n = min(L, count - start)
        out[start:start + n] = acc[:n]
    return out


def _prime_data(beta, X, twist=None):
    ps = primes_upto(X)
    vals = np.asarray(beta)[ps].astype(np.complex128)
    if twist is not None:
        vals = vals * np.conj(twist(ps))
    return ps, np.log(ps.astype(float)), vals / ps


def _direct(ps, logp, w, t):
    return max(0.0, math.fsum((1.0 / ps - np.real(w * np.exp(-1j * t * logp))).tolist()))


def _golden(f, a, b, iters=80):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


@dataclass
class MResult:
    t: float
    value: float
    grid_value: float
    grid_step: float


def _m_scan(ps, logp, w, X, resolution):
    dt = resolution if resolution is not None else 1.0 / (4 * math.log(X))
    K = int(math.floor(X / dt))
    base = math.fsum((1.0 / ps).tolist())
    symmetric = bool(np.all(w.imag == 0))
    k_lo = 0 if symmetric else -K
    S = exp_sum_grid(logp, w, dt, k_lo, K)
    vals = np.maximum(base - S.real, 0.0)
    i = int(np.argmin(vals))
    t_grid, v_grid = (k_lo + i) * dt, float(vals[i])
    # the endpoint t = X when the grid stops short of it
    if K * dt < X:
        for te in ((X,) if symmetric else (-X, X)):
            ve = _direct(ps, logp, w, te)
            if ve < v_grid:
                t_grid, v_grid = te, ve
    lo, hi = max(-X, t_grid - dt), min(X, t_grid + dt)
    t_ref, v_ref = _golden(lambda t: _direct(ps, logp, w, t), lo, hi)
    if v_ref < v_grid - 1e-12:
        return MResult(t_ref, v_ref, v_grid, dt)
    return MResult(t_grid, v_grid, v_grid, dt)


def m_value(beta, X, resolution=None, twist=None):
    """(t*, M(beta; X)): inf over |t| <= X of D(beta, n^{it}; X)^2."""
    ps, logp, w = _prime_data(beta, X, twist)
    r = _m_scan(ps, logp, w, X, resolution)
    return r.t, r.value


def m_value_report(beta, X, resolution=None, twist=None):
    ps, logp, w = _prime_data(beta, X, twist)
    return _m_scan(ps, logp, w, X, resolution)


# --- Dirichlet characters --------------------------------------------------------

def factorize_int(n):
    out = []
    p = 2
    while p * p <= n:
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
        p += 1
    if n > 1:
        out.append((n, 1))
    return out


def _primitive_root(p):
    phi = p - 1
    fs = [f for f, _ in factorize_int(phi)]
    for g in range(2, p):
        if all(pow(g, phi // f, p) != 1 for f in fs):
            return g
    return 1


def _cyclic_components(q):
    """(modulus, order, dlog table) for each cyclic factor of (Z/qZ)^*."""
    comps = []
    for p, e in factorize_int(q):
        M = p ** e
        if p == 2:
            if e == 1:
                continue
            if e == 2:
                dl = np.full(M, -1, dtype=np.int64)
                dl[1], dl[3] = 0, 1
                comps.append((M, 2, dl))
                continue
            half = M // 4
            dl_sign = np.full(M, -1, dtype=np.int64)
            dl_five = np.full(M, -1, dtype=np.int64)
            x = 1
            for b in range(half):
                dl_sign[x], dl_five[x] = 0, b
                dl_sign[M - x], dl_five[M - x] = 1, b
                x = x * 5 % M
            comps.append((M, 2, dl_sign))
            comps.append((M, half, dl_five))
        else:
            g = _primitive_root(p)
            if e > 1 and pow(g, p - 1, p * p) == 1:
                g += p
            order = M // p * (p - 1)
            dl = np.full(M, -1, dtype=np.int64)
            x = 1
            for k in range(order):
                dl[x] = k
                x = x * g % M
            comps.append((M, order, dl))
    return comps


@dataclass
class DirichletCharacter:
    modulus: int
    index: int
    exponents: tuple
    values: np.ndarray = field(repr=False)   # chi(0..q-1)
    conductor: int = 1

    @property
    def principal(self):
        return not any(self.exponents)

    @property
    def real(self):
        return bool(np.all(np.abs(self.values.imag) < 1e-12))

    def __call__(self, n):
        return self.values[np.asarray(n) % self.modulus]

    def table(self, X):
        """chi on 0..X; integer dtype for real characters."""
        v = self(np.arange(X + 1))
        if self.real:
            return np.rint(v.real).astype(np.int64)
        return v


def characters_mod(q):
    """All phi(q) characters mod q; index 0 is principal."""
    comps = _cyclic_components(q)
    n = np.arange(q)
    unit = np.array([math.gcd(int(v), q) == 1 for v in n])
    chars = []
    for idx, exps in enumerate(product(*[range(o) for _, o, _ in comps])):
        phase = np.zeros(q)
        for (M, order, dl), k in zip(comps, exps):
            phase += k * dl[n % M] / order
        vals = np.where(unit, np.exp(2j * np.pi * phase), 0)
        # snap real values so real characters are exactly +-1
        snapped = np.where(np.abs(vals.imag) < 1e-12, np.rint(vals.real), vals)
        vals = np.where(np.abs(vals.imag) < 1e-12, snapped.real + 0j, vals)
        chars.append(DirichletCharacter(q, idx, tuple(exps), vals))
    for ch in chars:
        ch.conductor = _conductor(ch, unit)
    return chars


def _conductor(ch, unit):
    q = ch.modulus
    for f in range(1, q + 1):
        if q % f:
            continue
        idx = np.arange(1, q, f) if f > 1 else np.arange(q)
        idx = idx[unit[idx]]
        if np.all(np.abs(ch.values[idx] - 1) < 1e-9):
            return f
    return q


@dataclass
class M2Result:
    value: float
    modulus: int
    index: int
    t: float


def m2_value(beta, X, Y, resolution=None):
    """inf over characters chi of modulus <= Y and |t| <= X of D(beta, chi n^{it}; X)^2.

    Ties go to the smallest modulus, then character index, then t.
    """
    best = None
    for q in range(1, Y + 1):
        for ch in characters_mod(q):
            t, v = m_value(beta, X, resolution, twist=ch)
            if best is None or v < best.value:
                best = M2Result(v, q, ch.index, t)
    return best


@dataclass
class MTildeResult:
    value: float
    best_X: int
    ladder: list


def m_tilde(beta, X, Y, X_cap=None, resolution=None):
    """min over X' in {X, 2X, 4X, ..., <= X_cap} of M(beta; X', Y); beta must cover X_cap."""
    X_cap = X * 2 ** 10 if X_cap is None else X_cap
    if len(beta) <= X_cap:
        raise ValueError("beta must be tabulated up to X_cap")
    ladder = []
    Xp = X
    while Xp <= X_cap:
        ladder.append((Xp, m2_value(beta, Xp, Y, resolution)))
        Xp *= 2
    best = min(ladder, key=lambda e: e[1].value)
    return MTildeResult(best[1].value, best[0], ladder)


# --- Dirichlet inversion ---------------------------------------------------------

def dirichlet_convolve(f, g, X):
    f = np.asarray(f)
    g = np.asarray(g)
    dtype = np.result_type(f.dtype, g.dtype)
    out = np.zeros(X + 1, dtype=dtype)
    for d in range(1, X + 1):
        if f[d]:
            k = X // d
            out[d: d * k + 1: d] += f[d] * g[1:k + 1]
    return out


@dataclass
class InversionReport:
    eta: np.ndarray = field(repr=False)
    identity_holds: bool
    max_abs: float
    partial_sums: dict


def dirichlet_inversion(beta, X, sigmas=(0.1, 0.25)):
    """eta = beta * (mu beta_hat), with beta_hat the completely multiplicative
    function agreeing with beta at primes; checks beta = beta_hat * eta."""
    beta = np.asarray(beta)[:X + 1]
    pv = np.zeros(X + 1, dtype=beta.dtype)
    ps = primes_upto(X)
    pv[ps] = beta[ps]
    bhat = completely_multiplicative(pv, X)
    mu = mobius(X)
    eta = dirichlet_convolve(beta, mu * bhat, X)
    back = dirichlet_convolve(bhat, eta, X)
    if _is_integer_array(back) and _is_integer_array(beta):
        ok = bool(np.array_equal(back[1:], beta[1:]))
    else:
        ok = bool(np.allclose(back[1:], beta[1:], atol=1e-9))
    n = np.arange(1, X + 1, dtype=float)
    a = np.abs(eta[1:]).astype(float)
    sums = {s: math.fsum((a * n ** -(0.5 + s)).tolist()) for s in sigmas}
    return InversionReport(eta, ok, float(a.max()) if X else 0.0, sums)


# --- the short-interval mean square ------------------------------------------------

def mrt_lhs(beta, chi, N, H0, S=None):
    """sum_{N < n <= 2N} |sum_{n < v <= n+H0} 1_S(v) beta(v) chi(v)|^2 and its
    ratio to H0^2 N. chi may be None (trivial), a DirichletCharacter or an array."""
    top = 2 * N + H0
    f = np.asarray(beta)[:top + 1].copy()
    if len(f) <= top:
        raise ValueError("beta must be tabulated up to 2N + H0")
    if chi is not None:
        cv = chi.table(top) if isinstance(chi, DirichletCharacter) else np.asarray(chi)[:top + 1]
        f = f * cv
    if S is not None:
        f = f * np.asarray(S)[:top + 1]
    f[0] = 0
    exact = _is_integer_array(f)
    if exact:
        c = np.concatenate([[0], np.cumsum(f.astype(object))])
    else:
        c = np.concatenate([[0], np.cumsum(f.astype(np.complex128))])
    # window (n, n+H0] = c[n+H0+1] - c[n+1] with c[k] = sum_{v<k} f(v)
    n = np.arange(N + 1, 2 * N + 1)
    win = c[n + H0 + 1] - c[n + 1]
    if exact:
        value = sum(int(x) * int(x) for x in win)
        return value, Fraction(value, H0 * H0 * N)
    value = math.fsum((np.abs(win.astype(np.complex128)) ** 2).tolist())
    return value, value / (H0 * H0 * N)
