"""Small exact-arithmetic helpers shared by the group and factorization code.

Sparse multivariate polynomials over Q, rational Gaussian elimination and
integer kernels. Nothing here is clever; it only has to be exact.
"""
from fractions import Fraction
from math import gcd


class Poly:
    """Sparse polynomial: dict from exponent tuple to Fraction coefficient."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars, terms=None):
        self.nvars = nvars
        self.terms = {}
        if terms:
            for e, c in terms.items():
                if c:
                    self.terms[e] = Fraction(c)

    @classmethod
    def const(cls, nvars, c):
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def var(cls, nvars, i):
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1})

    def is_zero(self):
        return not self.terms

    def __add__(self, other):
        out = dict(self.terms)
        for e, c in other.terms.items():
            v = out.get(e, 0) + c
            if v:
                out[e] = v
            else:
                out.pop(e, None)
        p = Poly(self.nvars)
        p.terms = out
        return p

    def __neg__(self):
        p = Poly(self.nvars)
        p.terms = {e: -c for e, c in self.terms.items()}
        return p

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        c = Fraction(c)
        p = Poly(self.nvars)
        if c:
            p.terms = {e: v * c for e, v in self.terms.items()}
        return p

    def __mul__(self, other):
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                v = out.get(e, 0) + c1 * c2
                if v:
                    out[e] = v
                else:
                    out.pop(e, None)
        p = Poly(self.nvars)
        p.terms = out
        return p

    def __repr__(self):
        return f"Poly({self.terms})"


def compile_poly(p):
    """Flatten a Poly into (coef, ((var, exp), ...)) pairs for fast evaluation."""
    out = []
    for e, c in sorted(p.terms.items()):
        out.append((c, tuple((i, k) for i, k in enumerate(e) if k)))
    return tuple(out)


def eval_compiled(terms, xs, one=1):
    """Evaluate compiled terms at xs; works for Fractions, floats and ndarrays."""
    total = None
    for c, factors in terms:
        t = c
        for i, k in factors:
            x = xs[i]
            t = t * (x if k == 1 else x ** k)
        total = t if total is None else total + t
    if total is None:
        return 0 * one
    return total


# --- rational linear algebra -------------------------------------------------

def rref(rows):
    """Reduced row echelon form over Q. Returns (matrix, pivot columns)."""
    a = [[Fraction(x) for x in r] for r in rows]
    if not a:
        return a, []
    ncols = len(a[0])
    pivots = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(a)) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = 1 / a[r][c]
        a[r] = [x * inv for x in a[r]]
        for i in range(len(a)):
            if i != r and a[i][c] != 0:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == len(a):
            break
    return a[:r], pivots


def rank(rows):
    return len(rref(rows)[1])


def solve_in_span(basis, v):
    """Coefficients x with sum x_i basis_i = v, or None if v is outside the span."""
    k = len(basis)
    if k == 0:
        return [] if all(x == 0 for x in v) else None
    n = len(v)
    # augmented system: columns are basis vectors
    rows = [[basis[j][i] for j in range(k)] + [v[i]] for i in range(n)]
    red, piv = rref(rows)
    if k in piv:
        return None
    x = [Fraction(0)] * k
    for row, c in zip(red, piv):
        x[c] = row[k]
    return x


def in_span(basis, v):
    return solve_in_span(basis, v) is not None


def lcm(a, b):
    return a * b // gcd(a, b) if a and b else max(a, b)


def ext_gcd(a, b):
    """(g, x, y) with a x + b y = g >= 0."""
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a - (a // b) * b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    if a < 0:
        return -a, -x0, -y0
    return a, x0, y0


def _normalize_sign(v):
    for x in v:
        if x:
            return list(v) if x > 0 else [-y for y in v]
    return list(v)


def integer_kernel(rows, n):
    """Basis of the saturated lattice {x in Z^n : rows . x = 0}.

    Column operations with extended gcd keep a unimodular transform; the
    columns that end up zero on every row span the kernel lattice.
    """
    basis = [[int(i == j) for j in range(n)] for i in range(n)]  # columns
    for row in rows:
        row = [int(x) for x in row]
        vals = [sum(r * b for r, b in zip(row, col)) for col in basis]
        # fold all values into the first nonzero column via gcd steps
        cols = list(range(len(basis)))
        while True:
            nz = [i for i in cols if vals[i] != 0]
            if len(nz) <= 1:
                break
            i, j = nz[0], nz[1]
            g, x, y = ext_gcd(vals[i], vals[j])
            a, b = vals[i] // g, vals[j] // g
            ci, cj = basis[i], basis[j]
            basis[i] = [x * p + y * q for p, q in zip(ci, cj)]
            basis[j] = [-b * p + a * q for p, q in zip(ci, cj)]
            vals[i], vals[j] = g, 0
        keep = [i for i in cols if vals[i] == 0]
        basis = [basis[i] for i in keep]
    return [_normalize_sign(b) for b in basis]
