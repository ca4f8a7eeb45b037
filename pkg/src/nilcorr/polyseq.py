"""Polynomial sequences in a filtered nilpotent group, and scalar polynomials mod 1.

A two-parameter sequence is stored by its binomial-basis coefficients:
psi(g(n, h)) = sum_{j+k<=d} w_jk C(n, j) C(h, k). The filtration forces the
first m - m_{j+k} entries of w_jk to vanish; every constructor checks this.
One-parameter sequences use the same class with only k = 0 terms.

TorusPoly is a real polynomial in the binomial basis, read modulo 1.
"""
from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from .nilgroup import FLOAT_TOL, GroupElement, inverse, multiply, power


class MembershipError(ValueError):
    """Coefficients violate the filtration support condition."""


def binom(n, j):
    """Generalized binomial coefficient C(n, j), valid for negative n."""
    if j < 0:
        return 0
    num = 1
    for i in range(j):
        num *= n - i
    return num // math.factorial(j)


def binom_array(n, j):
    n = np.asarray(n, dtype=float)
    out = np.ones_like(n)
    for i in range(j):
        out = out * (n - i) / (i + 1)
    return out


def _zero(exact):
    return Fraction(0) if exact else 0.0


def frac_norm(x):
    """Distance from x to the nearest integer."""
    f = x - math.floor(x)
    return min(f, 1 - f)


class PolySeq:
    """Polynomial sequence Z^2 -> G given by binomial coefficients."""

    def __init__(self, group, coeffs, check=True):
        self.group = group
        self.d = group.d
        m = group.m
        flat = [c for vec in coeffs.values() for c in vec]
        has_float = any(not isinstance(c, (Fraction, int)) for c in flat)
        has_frac = any(isinstance(c, Fraction) and c.denominator != 1 for c in flat)
        if has_float and has_frac:
            raise TypeError("mixed exact and float coefficients")
        self.exact = not has_float
        conv = Fraction if self.exact else float
        clean = {}
        for (j, k), vec in coeffs.items():
            vec = tuple(conv(c) for c in vec)
            if len(vec) != m:
                raise ValueError("coefficient vector has the wrong length")
            if any(vec):
                clean[(int(j), int(k))] = vec
        self.coeffs = clean
        if check:
            self.check_membership()

    def check_membership(self, tol=FLOAT_TOL):
        m = self.group.m
        for (j, k), vec in self.coeffs.items():
            if j < 0 or k < 0:
                raise MembershipError(f"negative index ({j}, {k})")
            lead = m - self.group.dim_at_level(j + k)
            bad = [i for i in range(lead) if (vec[i] != 0 if self.exact else abs(vec[i]) > tol)]
            if bad:
                raise MembershipError(
                    f"coefficient ({j}, {k}) has entries {bad} outside G_{j + k}")

    def coeff(self, j, k=0):
        return self.coeffs.get((j, k), (_zero(self.exact),) * self.group.m)

    def __call__(self, n, h=0):
        return eval2(self, n, h)

    def to_float(self):
        return PolySeq(self.group, {k: tuple(float(c) for c in v) for k, v in self.coeffs.items()},
                       check=False)

    def coords_arrays(self, n, h):
        """Float coordinates at arrays of (n, h); shape (m,) + n.shape."""
        n = np.asarray(n, dtype=float)
        h = np.asarray(h, dtype=float)
        shape = np.broadcast(n, h).shape
        out = np.zeros((self.group.m,) + shape)
        cache_n, cache_h = {}, {}
        for (j, k), vec in self.coeffs.items():
            if j not in cache_n:
                cache_n[j] = binom_array(n, j)
            if k not in cache_h:
                cache_h[k] = binom_array(h, k)
            b = cache_n[j] * cache_h[k]
            for i, c in enumerate(vec):
                if c:
                    out[i] += float(c) * b
        return out

    def scalar(self, vector):
        """The scalar coefficients a . w_jk as a dict, for an integer vector a."""
        out = {}
        for key, vec in self.coeffs.items():
            v = sum(a * c for a, c in zip(vector, vec) if a)
            if v:
                out[key] = v
        return out

    def __eq__(self, other):
        return isinstance(other, PolySeq) and self.group is other.group \
            and self.coeffs == other.coeffs

    def __repr__(self):
        return f"PolySeq({self.coeffs})"


def one_param(group, coeffs):
    """One-parameter sequence from a list of coefficient vectors w_0, w_1, ..."""
    return PolySeq(group, {(j, 0): v for j, v in enumerate(coeffs)})


def constant_seq(element):
    return PolySeq(element.group, {(0, 0): element.coords})


def eval2(g, n, h=0):
    """g(n, h) as a group element (no lattice reduction)."""
    m = g.group.m
    acc = [_zero(g.exact)] * m
    for (j, k), vec in g.coeffs.items():
        b = binom(n, j) * binom(h, k)
        if b:
            for i, c in enumerate(vec):
                if c:
                    acc[i] += c * b
    return GroupElement(g.group, tuple(acc))


def row(g, n):
    """The one-parameter sequence h -> g(n, h), written in the first variable."""
    out = {}
    for (j, k), vec in g.coeffs.items():
        b = binom(n, j)
        if b:
            prev = out.get((k, 0), (_zero(g.exact),) * g.group.m)
            out[(k, 0)] = tuple(p + b * c for p, c in zip(prev, vec))
    return PolySeq(g.group, out)


def fit_seq(group, func, exact=True, tol=1e-7):
    """Recover binomial coefficients of a polynomial sequence from its values.

    func(n, h) returns a GroupElement. Forward differences on the
    (d+1) x (d+1) grid give every w_jk with j, k <= d; those with j + k > d
    must vanish and the result must satisfy the filtration condition.
    """
    d = group.d
    m = group.m
    grid = [[func(n, h).coords for h in range(d + 1)] for n in range(d + 1)]
    coeffs = {}
    for j in range(d + 1):
        for k in range(d + 1):
            acc = [_zero(exact)] * m
            for a in range(j + 1):
                for b in range(k + 1):
                    s = (-1) ** (j - a + k - b) * math.comb(j, a) * math.comb(k, b)
                    vals = grid[a][b]
                    for i in range(m):
                        acc[i] += s * vals[i]
            coeffs[(j, k)] = tuple(acc)
    scale = max([1.0] + [abs(float(c)) for v in coeffs.values() for c in v])
    for (j, k), vec in list(coeffs.items()):
        if j + k > d:
            if any((c != 0) if exact else abs(c) > tol * scale for c in vec):
                raise MembershipError(f"fit residual: nonzero coefficient at ({j}, {k})")
            del coeffs[(j, k)]
    if not exact:
        # snap float noise in the forced-zero entries before checking
        for (j, k), vec in coeffs.items():
            lead = m - group.dim_at_level(j + k)
            if all(abs(vec[i]) <= tol * scale for i in range(lead)):
                coeffs[(j, k)] = tuple(0.0 if i < lead else vec[i] for i in range(m))
    return PolySeq(group, coeffs)


def from_orbit(g0, x):
    """The sequence (n, h) -> g0^(n+h) x."""
    return fit_seq(g0.group, lambda n, h: multiply(power(g0, n + h), x), exact=g0.exact)


def multiply_seqs(f, g):
    if f.group is not g.group:
        raise ValueError("sequences live in different groups")
    return fit_seq(f.group, lambda n, h: multiply(eval2(f, n, h), eval2(g, n, h)),
                   exact=f.exact and g.exact)


def inverse_seq(f):
    return fit_seq(f.group, lambda n, h: inverse(eval2(f, n, h)), exact=f.exact)


def derivative(g, direction="n"):
    """(n, h) -> g(n+1, h) g(n, h)^-1 (or the same step in h)."""
    if direction == "n":
        step = lambda n, h: multiply(eval2(g, n + 1, h), inverse(eval2(g, n, h)))
    elif direction == "h":
        step = lambda n, h: multiply(eval2(g, n, h + 1), inverse(eval2(g, n, h)))
    else:
        raise ValueError("direction must be 'n' or 'h'")
    return fit_seq(g.group, step, exact=g.exact)


# --- smoothness -------------------------------------------------------------

@dataclass
class SmoothReport:
    smooth: bool
    max_size: float
    max_step_n: float
    max_step_h: float
    samples: int


def _sample_grid(N, H, samples, seed):
    if N * H <= samples:
        n, h = np.meshgrid(np.arange(1, N + 1), np.arange(1, H + 1), indexing="ij")
        return n.ravel(), h.ravel()
    # stratified: one random point per cell of a side x side partition
    side = int(math.isqrt(samples))
    rng = np.random.default_rng(seed)
    cn = np.linspace(1, N + 1, side + 1)
    ch = np.linspace(1, H + 1, side + 1)
    i, j = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    i, j = i.ravel(), j.ravel()
    n = np.floor(cn[i] + rng.random(i.size) * (cn[i + 1] - cn[i]))
    h = np.floor(ch[j] + rng.random(j.size) * (ch[j + 1] - ch[j]))
    return np.clip(n, 1, N), np.clip(h, 1, H)


def _dist_arrays(group, a, b):
    # |psi(a b^-1)|_inf, vectorized
    return np.max(np.abs(group.multiply_arrays(a, group.inverse_arrays(b))), axis=0)


def is_smooth(seq, W, N, H, samples=10**6, seed=0):
    """Check d(g(n,h), id) <= W and unit steps <= W/N, W/H on [N] x [H]."""
    n, h = _sample_grid(N, H, samples, seed)
    grp = seq.group
    g = seq.coords_arrays(n, h)
    gn = seq.coords_arrays(n + 1, h)
    gh = seq.coords_arrays(n, h + 1)
    size = float(np.max(np.abs(g))) if g.size else 0.0
    step_n = float(np.max(_dist_arrays(grp, g, gn))) if g.size else 0.0
    step_h = float(np.max(_dist_arrays(grp, g, gh))) if g.size else 0.0
    slack = 1 + 1e-12
    ok = size <= W * slack and step_n <= W / N * slack and step_h <= W / H * slack
    return SmoothReport(ok, size, step_n, step_h, int(n.size))


# --- scalar polynomials mod 1 -----------------------------------------------

class TorusPoly:
    """f(n) = sum_i alpha_i C(n, i), read modulo 1."""

    def __init__(self, coeffs):
        coeffs = list(coeffs)
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs.pop()
        self.coeffs = coeffs or [0]

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, n):
        return sum(a * binom(n, i) for i, a in enumerate(self.coeffs))

    def values(self, n):
        """Float values mod 1 at an integer array (coefficients reduced mod 1 first)."""
        n = np.asarray(n, dtype=float)
        out = np.zeros(n.shape)
        for i, a in enumerate(self.coeffs):
            if a:
                out += float(a - math.floor(a)) * binom_array(n, i)
        return out - np.floor(out)

    def scale(self, D):
        return TorusPoly([D * a for a in self.coeffs])

    def to_taylor(self):
        """Monomial coefficients c_i with f(n) = sum c_i n^i."""
        out = [0] * len(self.coeffs)
        for i, a in enumerate(self.coeffs):
            # C(n, i) = n(n-1)...(n-i+1)/i!
            poly = [Fraction(1)]
            for r in range(i):
                nxt = [Fraction(0)] * (len(poly) + 1)
                for e, c in enumerate(poly):
                    nxt[e + 1] += c
                    nxt[e] -= r * c
                poly = nxt
            for e, c in enumerate(poly):
                out[e] += a * c / math.factorial(i)
        return out

    @classmethod
    def from_taylor(cls, taylor):
        # sample at n = 0..deg and take forward differences
        deg = len(taylor) - 1
        vals = [sum(c * n ** e for e, c in enumerate(taylor)) for n in range(deg + 1)]
        coeffs = []
        for i in range(deg + 1):
            coeffs.append(sum((-1) ** (i - a) * math.comb(i, a) * vals[a] for a in range(i + 1)))
        return cls(coeffs)

    def __repr__(self):
        return f"TorusPoly({self.coeffs})"


def cinf_norm(f, N, start=0):
    """max_{i >= start} N^i ||alpha_i||."""
    return max((N ** i * frac_norm(a) for i, a in enumerate(f.coeffs) if i >= start),
               default=0)


def best_denominator(f, N, D_max):
    """argmin over D <= D_max of the C-infinity norm of D f; ties go to the smallest D."""
    best = None
    for D in range(1, D_max + 1):
        v = cinf_norm(f.scale(D), N)
        if best is None or v < best[1]:
            best = (D, v)
    return best


@dataclass
class ConcentrationReport:
    concentrated: bool
    max_count: int
    D: int | None
    norm: float | None


def concentration_witness(f, N, delta, eps, D_cap=10**6):
    """Detect a window of length eps holding >= delta N of f(1..N) mod 1.

    When found, search D <= D_cap minimizing max_{i>=1} N^i ||D alpha_i||,
    the non-constant part of ||D f||; ties go to the smallest D.
    """
    if not 0 < delta <= 1 or not 0 < eps < delta / 2:
        raise ValueError("need 0 < eps < delta/2 <= 1/2")
    x = np.sort(f.values(np.arange(1, N + 1)))
    ext = np.concatenate([x, x + 1.0])
    right = np.searchsorted(ext, x + eps, side="right")
    count = int(np.max(right - np.arange(N))) if N else 0
    if count < delta * N:
        return ConcentrationReport(False, count, None, None)
    best_d, best_v = 1, math.inf
    alphas = [(i, float(a - math.floor(a))) for i, a in enumerate(f.coeffs) if i >= 1]
    chunk = 1 << 16
    for lo in range(1, D_cap + 1, chunk):
        D = np.arange(lo, min(D_cap, lo + chunk - 1) + 1, dtype=float)
        v = np.zeros_like(D)
        for i, a in alphas:
            t = D * a
            t = t - np.floor(t)
            v = np.maximum(v, float(N) ** i * np.minimum(t, 1 - t))
        k = int(np.argmin(v))
        if v[k] < best_v:
            best_d, best_v = int(D[k]), float(v[k])
        if best_v == 0:
            break
    exact = cinf_norm(f.scale(best_d), N, start=1)
    return ConcentrationReport(True, count, best_d, exact)


# --- serialization ----------------------------------------------------------

def _fmt(c):
    if isinstance(c, Fraction):
        return f"{c.numerator}/{c.denominator}" if c.denominator != 1 else str(c.numerator)
    return repr(float(c))


def _parse_num(tok):
    if any(ch in tok for ch in ".eEn") and "/" not in tok:
        return float(tok)
    return Fraction(tok)


def format_seq(g):
    """One line per nonzero coefficient: 'j k : v_1 ... v_m'."""
    lines = []
    for (j, k), vec in sorted(g.coeffs.items()):
        lines.append(f"{j} {k} : " + " ".join(_fmt(c) for c in vec))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_seq(group, text):
    coeffs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            head, body = line.split(":")
            j, k = (int(t) for t in head.split())
            vec = [_parse_num(t) for t in body.split()]
        except ValueError:
            raise ValueError(f"line {lineno}: expected 'j k : values'") from None
        if len(vec) != group.m:
            raise ValueError(f"line {lineno}: expected {group.m} values")
        if any(isinstance(v, float) for v in vec):
            vec = [float(v) for v in vec]
        coeffs[(j, k)] = tuple(vec)
    return PolySeq(group, coeffs)


def seq_sup_bound(g, N, H):
    """Upper bound for |psi(g(n,h))|_inf over 0 <= n <= N, 0 <= h <= H."""
    bound = 0
    for i in range(g.group.m):
        s = sum(abs(vec[i]) * math.comb(N, j) * math.comb(H, k)
                for (j, k), vec in g.coeffs.items())
        bound = max(bound, s)
    return bound
