"""Segmented Mobius/Liouville sieves and the sieve-theoretic sets S and F.

Segments are half-open ranges [lo, hi). Mobius tables are kept packed at two
bits per integer (00 -> 0, 01 -> +1, 10 -> -1) and can be cached on disk in a
small binary format: b"MUT1", u64 lo, u64 hi (little-endian), then the packed
bytes, first integer in the low bits.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
import math
import os
import struct

import numpy as np

BLOCK_SIZE = 1 << 22
MAGIC = b"MUT1"
_MAX_HI = 2 ** 63


class CacheFormatError(ValueError):
    pass


def primes_upto(n):
    """All primes <= n as an int64 array."""
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    is_p = np.ones(n + 1, dtype=bool)
    is_p[:2] = False
    for p in range(2, math.isqrt(n) + 1):
        if is_p[p]:
            is_p[p * p::p] = False
    return np.flatnonzero(is_p).astype(np.int64)


def primes_between(lo, hi):
    """Primes p with lo <= p <= hi."""
    lo, hi = max(2, math.ceil(lo)), math.floor(hi)
    if hi < lo:
        return np.zeros(0, dtype=np.int64)
    ps = primes_upto(hi)
    return ps[ps >= lo]


def _check_segment(lo, hi, block_size):
    if lo < 1 or hi < lo:
        raise ValueError("need 1 <= lo <= hi")
    if hi > _MAX_HI:
        raise OverflowError("segment end exceeds 2^63")
    if hi - lo > block_size:
        raise ValueError(f"segment longer than block size {block_size}")


def _mobius_values(lo, hi):
    n = np.arange(lo, hi, dtype=np.int64)
    mu = np.ones(hi - lo, dtype=np.int8)
    prod = np.ones(hi - lo, dtype=np.int64)
    for p in primes_upto(math.isqrt(max(hi - 1, 1))).tolist():
        start = (-lo) % p
        mu[start::p] *= -1
        prod[start::p] *= p
        pp = p * p
        mu[(-lo) % pp::pp] = 0
    # one prime factor above sqrt(hi) remains wherever prod < n
    mu[(prod < n) & (mu != 0)] *= -1
    return mu


def _liouville_values(lo, hi):
    n = np.arange(lo, hi, dtype=np.int64)
    lam = np.ones(hi - lo, dtype=np.int8)
    prod = np.ones(hi - lo, dtype=np.int64)
    for p in primes_upto(math.isqrt(max(hi - 1, 1))).tolist():
        q = p
        while q < hi:
            start = (-lo) % q
            lam[start::q] *= -1
            prod[start::q] *= p
            if q > (hi - 1) // p:
                break
            q *= p
    lam[prod < n] *= -1
    return lam


def pack_codes(values):
    codes = np.zeros(values.size + (-values.size) % 4, dtype=np.uint8)
    codes[:values.size][values == 1] = 1
    codes[:values.size][values == -1] = 2
    c = codes.reshape(-1, 4)
    return (c[:, 0] | (c[:, 1] << 2) | (c[:, 2] << 4) | (c[:, 3] << 6)).astype(np.uint8)


def unpack_codes(packed, count):
    p = np.asarray(packed, dtype=np.uint8)
    codes = np.stack([(p >> s) & 3 for s in (0, 2, 4, 6)], axis=1).ravel()[:count]
    if np.any(codes == 3):
        raise CacheFormatError("invalid 2-bit code 11")
    out = np.zeros(count, dtype=np.int8)
    out[codes == 1] = 1
    out[codes == 2] = -1
    return out


@dataclass
class MobiusTable:
    lo: int
    hi: int
    packed: np.ndarray = field(repr=False)

    @classmethod
    def from_values(cls, lo, hi, values):
        return cls(lo, hi, pack_codes(np.asarray(values, dtype=np.int8)))

    def values(self):
        """mu(lo..hi-1) as an int8 array."""
        return unpack_codes(self.packed, self.hi - self.lo)

    def __getitem__(self, n):
        if not self.lo <= n < self.hi:
            raise IndexError(n)
        i = n - self.lo
        code = (int(self.packed[i >> 2]) >> (2 * (i & 3))) & 3
        if code == 3:
            raise CacheFormatError("invalid 2-bit code 11")
        return (0, 1, -1)[code]

    def to_bytes(self):
        return MAGIC + struct.pack("<QQ", self.lo, self.hi) + self.packed.tobytes()

    @classmethod
    def from_bytes(cls, data):
        if data[:4] != MAGIC:
            raise CacheFormatError("bad magic")
        lo, hi = struct.unpack("<QQ", data[4:20])
        need = (hi - lo + 3) // 4
        body = np.frombuffer(data[20:], dtype=np.uint8)
        if body.size != need:
            raise CacheFormatError(f"expected {need} payload bytes, found {body.size}")
        table = cls(lo, hi, body.copy())
        table.values()  # validates codes
        return table


def mobius_segment(lo, hi, block_size=BLOCK_SIZE):
    _check_segment(lo, hi, block_size)
    return MobiusTable.from_values(lo, hi, _mobius_values(lo, hi))


def liouville_segment(lo, hi, block_size=BLOCK_SIZE):
    """lambda(lo..hi-1) as an int8 array."""
    _check_segment(lo, hi, block_size)
    return _liouville_values(lo, hi)


def _blocks(lo, hi, block_size):
    return [(a, min(hi, a + block_size)) for a in range(lo, hi, block_size)]


def mobius_range(lo, hi, block_size=BLOCK_SIZE, threads=1, cache_dir=None):
    """mu on [lo, hi) of any length, sieved block by block.

    Blocks are fixed by (lo, block_size) so the result does not depend on the
    thread count. With cache_dir set, the packed table is read from or written
    to mu_<lo>_<hi>.mut there.
    """
    if hi > _MAX_HI:
        raise OverflowError("segment end exceeds 2^63")
    path = None
    if cache_dir:
        path = os.path.join(cache_dir, f"mu_{lo}_{hi}.mut")
        if os.path.exists(path):
            with open(path, "rb") as fh:
                table = MobiusTable.from_bytes(fh.read())
            if (table.lo, table.hi) == (lo, hi):
                return table.values()
    blocks = _blocks(lo, hi, block_size)
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda b: _mobius_values(*b), blocks))
    else:
        parts = [_mobius_values(*b) for b in blocks]
    values = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int8)
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(MobiusTable.from_values(lo, hi, values).to_bytes())
        os.replace(tmp, path)
    return values


def mobius_upto(n, **kw):
    """Array mu[0..n] with mu[0] = 0."""
    out = np.zeros(n + 1, dtype=np.int8)
    if n >= 1:
        out[1:] = mobius_range(1, n + 1, **kw)
    return out


def liouville_upto(n):
    out = np.zeros(n + 1, dtype=np.int8)
    for a, b in _blocks(1, n + 1, BLOCK_SIZE):
        out[a:b] = _liouville_values(a, b)
    return out


# --- the dense set S and its parameters ---------------------------------------

def pq_sequence(P1, Q1, r):
    """(P_r, Q_r) with natural logarithms; values past float range become inf."""
    if r < 1:
        raise ValueError("r >= 1")
    if r == 1:
        return float(P1), float(Q1)
    lp, lq = math.log(P1), math.log(Q1)
    exps = (r ** (4 * r) * lq ** (r - 1) * lp, r ** (4 * r + 2) * lq ** r)
    return tuple(math.exp(e) if e < 709.0 else math.inf for e in exps)


def pq_exponents(P1, Q1, r):
    """log P_r and log Q_r, never saturated."""
    lp, lq = math.log(P1), math.log(Q1)
    return r ** (4 * r) * lq ** (r - 1) * lp, r ** (4 * r + 2) * lq ** r


def r_plus(P1, Q1, N):
    """Largest r with Q_r <= exp(sqrt(log N)/2); 0 if none."""
    cap = math.sqrt(math.log(N)) / 2
    r = 0
    while pq_exponents(P1, Q1, r + 1)[1] <= cap:
        r += 1
    return r


@dataclass
class DenseSet:
    mask: np.ndarray = field(repr=False)   # index 0..N, mask[0] False
    levels: list
    r_plus: int
    size: int
    deficit: float
    bound: float

    @property
    def bitset(self):
        return np.packbits(self.mask[1:], bitorder="little")

    def __contains__(self, n):
        return bool(self.mask[n])


def _has_factor_in(primes, N):
    mask = np.zeros(N + 1, dtype=bool)
    for p in primes.tolist():
        mask[p::p] = True
    return mask


def dense_set(P1, Q1, N, r_max_override=None):
    """S = {n <= N : n has a prime factor in [P_r, Q_r] for every r <= r_+}."""
    if not 2 <= P1 < Q1 <= N:
        raise ValueError("need 2 <= P1 < Q1 <= N")
    rp = r_plus(P1, Q1, N) if r_max_override is None else int(r_max_override)
    mask = np.ones(N + 1, dtype=bool)
    mask[0] = False
    levels = []
    for r in range(1, rp + 1):
        P, Q = pq_sequence(P1, Q1, r)
        levels.append((P, Q))
        mask &= _has_factor_in(primes_between(P, min(Q, N)), N)
    size = int(mask.sum())
    return DenseSet(mask, levels, rp, size, 1 - size / N, math.log(P1) / math.log(Q1))


@dataclass
class MinorSets:
    primes: np.ndarray
    S: np.ndarray   # has a prime factor in the prime set
    F: np.ndarray   # no square of such a prime divides n


def minor_sets(P1, Q1, N):
    primes = primes_between(P1, Q1)
    S = _has_factor_in(primes, N)
    F = np.ones(N + 1, dtype=bool)
    F[0] = False
    for p in primes.tolist():
        if p * p > N:
            break
        F[p * p::p * p] = False
    return MinorSets(primes, S, F)


def prime_divisor_counts(primes, L):
    """c[l] = #{q in primes : q | l} for 0 <= l <= L."""
    c = np.zeros(L + 1, dtype=np.int64)
    for q in primes.tolist():
        if q > L:
            break
        c[q::q] += 1
    return c


def sqfree_surrogate(beta, n, H, primes):
    """sum_{p in primes} sum_l 1_{pl = n+h} beta(p) beta(l) / (1 + #{q | l}), h = 1..H.

    beta is indexable by integers up to n + H. Integer-valued beta gives exact
    Fractions.
    """
    primes = np.asarray(sorted(int(p) for p in primes), dtype=np.int64)
    out = [Fraction(0)] * H
    if primes.size == 0 or H <= 0:
        return out
    top = n + H
    counts = prime_divisor_counts(primes, top // int(primes[0]))
    exact = np.issubdtype(np.asarray(beta[1:2]).dtype, np.integer)
    if not exact:
        out = [0j] * H
    for p in primes.tolist():
        if p > top:
            break
        bp = beta[p]
        first = (n // p + 1) * p
        for v in range(first, top + 1, p):
            l = v // p
            term = int(bp) * int(beta[l]) if exact else complex(bp) * complex(beta[l])
            if term:
                out[v - n - 1] += Fraction(term, 1 + int(counts[l])) if exact \
                    else term / (1 + int(counts[l]))
    return out
