"""Nilpotent Lie groups in Mal'cev coordinates of the second kind.

A presentation fixes a basis V_1..V_m of the Lie algebra, rational structure
constants and a filtration G = G_1 >= G_2 >= ... >= G_d, where G_i is spanned
by the last m_i basis vectors. An element is stored by its coordinates
(w_1..w_m), meaning exp(w_1 V_1) ... exp(w_m V_m). The lattice is the set of
integer coordinate vectors.

Group multiplication is derived once per presentation: the Baker-Campbell-
Hausdorff series (exact up to step 4) is applied to symbolic coordinates, which
gives one polynomial per output coordinate. Those polynomials are then
evaluated either on Fractions (exact flavor) or on floats / numpy arrays.

Indices in the Python API are 0-based; the text file format is 1-based.
"""
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
import math
import re

import numpy as np

from ._exact import Poly, compile_poly, eval_compiled, rank

FLOAT_TOL = 1e-9
MAX_STEP = 4


class PresentationError(ValueError):
    pass


class JacobiViolation(PresentationError):
    pass


class FiltrationViolation(PresentationError):
    pass


class StepTooLarge(PresentationError):
    pass


class FlavorMismatch(TypeError):
    pass


class PresentationParseError(PresentationError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _is_exact(x):
    return isinstance(x, (Fraction, int)) and not isinstance(x, bool)


# --- Lie algebra vectors with polynomial entries ----------------------------

class _Algebra:
    """Bracket and BCH on vectors of Polys, driven by the structure table."""

    def __init__(self, m, table, nvars):
        self.m = m
        self.table = table  # (a, b) -> {k: c}, both orders stored
        self.nvars = nvars

    def zero(self):
        return [Poly(self.nvars) for _ in range(self.m)]

    def add(self, x, y):
        return [a + b for a, b in zip(x, y)]

    def scale(self, x, c):
        return [a.scale(c) for a in x]

    def bracket(self, x, y):
        out = self.zero()
        for (a, b), col in self.table.items():
            if x[a].is_zero() or y[b].is_zero():
                continue
            prod = x[a] * y[b]
            for k, c in col.items():
                out[k] = out[k] + prod.scale(c)
        return out

    def bch(self, x, y):
        xy = self.bracket(x, y)
        xxy = self.bracket(x, xy)
        yxy = self.bracket(y, xy)
        yxxy = self.bracket(y, xxy)
        z = self.add(x, y)
        z = self.add(z, self.scale(xy, Fraction(1, 2)))
        z = self.add(z, self.scale(xxy, Fraction(1, 12)))
        z = self.add(z, self.scale(yxy, Fraction(-1, 12)))
        z = self.add(z, self.scale(yxxy, Fraction(-1, 24)))
        return z

    def basis_multiple(self, i, p):
        v = self.zero()
        v[i] = p
        return v

    def log_of_second_kind(self, coords):
        # exp(w_1 V_1) ... exp(w_m V_m) = exp(L)
        if self.m == 0:
            return []
        z = self.basis_multiple(0, coords[0])
        for i in range(1, self.m):
            z = self.bch(z, self.basis_multiple(i, coords[i]))
        return z

    def second_kind_of_log(self, z):
        # peel exp(w_i V_i) off the left, one coordinate at a time
        out = []
        for i in range(self.m):
            w = z[i]
            out.append(w)
            z = self.bch(self.basis_multiple(i, -w), z)
            if not z[i].is_zero():
                raise PresentationError("coordinate peeling did not converge")
        return out


# --- presentations -----------------------------------------------------------

class MalcevPresentation:
    """A nilpotent Lie group with a filtration-adapted Mal'cev basis.

    Use build_presentation() or one of the built-ins rather than calling this
    directly; the constructor assumes validated input.
    """

    def __init__(self, m, filtration_dims, table, labels=None):
        self.m = m
        self.filtration_dims = tuple(filtration_dims)
        self.d = len(self.filtration_dims)
        self.table = table
        self.labels = labels
        self.step = _nilpotency_step(m, table)
        self._derive_polynomials()

    # structure ------------------------------------------------------------
    def dim_at_level(self, t):
        """m_t, with m_0 = m and m_t = 0 beyond the filtration degree."""
        if t <= 1:
            return self.m
        if t > self.d:
            return 0
        return self.filtration_dims[t - 1]

    @property
    def horizontal_dim(self):
        return self.m - self.dim_at_level(2)

    def level(self, i):
        """Largest t with V_i in G_t (0-based index)."""
        t = 1
        while t < self.d and i >= self.m - self.dim_at_level(t + 1):
            t += 1
        return t

    def structure_constants(self):
        """{(i, j): {k: c}} for i < j, nonzero entries only."""
        return {k: dict(v) for k, v in self.table.items() if k[0] < k[1]}

    @property
    def rationality_height(self):
        h = 1
        for col in self.table.values():
            for c in col.values():
                h = max(h, abs(c.numerator), c.denominator)
        return h

    def is_abelian(self):
        return not self.table

    def __repr__(self):
        return f"MalcevPresentation(m={self.m}, filtration_dims={self.filtration_dims})"

    # polynomial derivation --------------------------------------------------
    def _derive_polynomials(self):
        m = self.m
        alg2 = _Algebra(m, self.table, 2 * m)
        xs = [Poly.var(2 * m, i) for i in range(m)]
        ys = [Poly.var(2 * m, m + i) for i in range(m)]
        z = alg2.bch(alg2.log_of_second_kind(xs), alg2.log_of_second_kind(ys))
        mul = alg2.second_kind_of_log(z)

        alg1 = _Algebra(m, self.table, m)
        us = [Poly.var(m, i) for i in range(m)]
        inv = alg1.second_kind_of_log(alg1.scale(alg1.log_of_second_kind(us), -1))

        self.mul_polys = mul
        self.inv_polys = inv
        self._mul_exact = [compile_poly(p) for p in mul]
        self._inv_exact = [compile_poly(p) for p in inv]
        self._mul_float = [tuple((float(c), f) for c, f in t) for t in self._mul_exact]
        self._inv_float = [tuple((float(c), f) for c, f in t) for t in self._inv_exact]
        self._alg0 = _Algebra(m, self.table, 0)

    # element construction ---------------------------------------------------
    def element(self, coords):
        coords = tuple(coords)
        if len(coords) != self.m:
            raise ValueError(f"expected {self.m} coordinates, got {len(coords)}")
        if all(_is_exact(c) for c in coords):
            coords = tuple(Fraction(c) for c in coords)
        else:
            coords = tuple(float(c) for c in coords)
        return GroupElement(self, coords)

    def identity(self, exact=True):
        z = Fraction(0) if exact else 0.0
        return GroupElement(self, (z,) * self.m)

    # array-level operations (float flavor) ----------------------------------
    def multiply_arrays(self, a, b):
        """Coordinatewise-vectorized product; a, b are sequences of m arrays."""
        xs = list(a) + list(b)
        one = np.ones_like(np.asarray(xs[0], dtype=float))
        return np.array([eval_compiled(t, xs, one) + 0 * one for t in self._mul_float])

    def inverse_arrays(self, a):
        a = list(a)
        one = np.ones_like(np.asarray(a[0], dtype=float))
        return np.array([eval_compiled(t, a, one) + 0 * one for t in self._inv_float])

    def reduce_arrays(self, a):
        """Fundamental-domain representatives of the cosets a*Gamma (float)."""
        x = np.array(a, dtype=float, copy=True)
        for i in range(self.m):
            k = np.floor(x[i])
            if not np.any(k):
                continue
            shift = np.zeros_like(x)
            shift[i] = -k
            x = self.multiply_arrays(x, shift)
            x[i] = np.where(x[i] >= 1.0, x[i] - 1.0, x[i])
            x[i] = np.where(x[i] < 0.0, 0.0, x[i])
        return x

    # numeric exp/log, used by subgroup conversions --------------------------
    def exp_coords(self, lie_vector):
        """Second-kind coordinates of exp(sum_i z_i V_i), exact."""
        z = [Poly.const(0, c) for c in lie_vector]
        out = self._alg0.second_kind_of_log(z)
        return tuple(p.terms.get((), Fraction(0)) for p in out)

    def log_coords(self, coords):
        z = self._alg0.log_of_second_kind([Poly.const(0, c) for c in coords])
        return tuple(p.terms.get((), Fraction(0)) for p in z)

    def bracket(self, x, y):
        """Lie bracket of two coordinate vectors (exact)."""
        out = [Fraction(0)] * self.m
        for (a, b), col in self.table.items():
            if x[a] and y[b]:
                for k, c in col.items():
                    out[k] += c * x[a] * y[b]
        return out


@dataclass(frozen=True)
class GroupElement:
    group: MalcevPresentation
    coords: tuple

    @property
    def exact(self):
        return all(isinstance(c, Fraction) for c in self.coords)

    def __mul__(self, other):
        return multiply(self, other)

    def __getitem__(self, i):
        return self.coords[i]

    def __len__(self):
        return len(self.coords)

    def to_float(self):
        return GroupElement(self.group, tuple(float(c) for c in self.coords))

    def __repr__(self):
        return f"GroupElement({self.coords})"


# --- validation --------------------------------------------------------------

def _nilpotency_step(m, table):
    if m == 0:
        return 0
    alg = _Algebra(m, table, 0)
    basis = [[Fraction(int(i == j)) for j in range(m)] for i in range(m)]
    current = basis
    step = 1
    while True:
        nxt = []
        for u in basis:
            for v in current:
                w = alg.bracket([Poly.const(0, c) for c in u], [Poly.const(0, c) for c in v])
                nxt.append([p.terms.get((), Fraction(0)) for p in w])
        if not nxt or rank(nxt) == 0:
            return step
        current = nxt
        step += 1
        if step > m + 1:
            raise FiltrationViolation("structure constants are not nilpotent")


def build_presentation(m, filtration_dims, structure_constants, labels=None):
    """Validate and build a presentation.

    structure_constants maps (i, j) to {k: c} meaning [V_i, V_j] = sum_k c V_k
    (0-based). Entries for (j, i) are filled in by antisymmetry; if both orders
    are given they must agree.
    """
    fd = tuple(int(x) for x in filtration_dims)
    if m < 0 or not fd or fd[0] != m:
        raise FiltrationViolation("filtration must start with m_1 = m")
    if any(b > a for a, b in zip(fd, fd[1:])) or fd[-1] < 0:
        raise FiltrationViolation("filtration dimensions must be nonincreasing")

    table = {}
    for (i, j), col in structure_constants.items():
        if not (0 <= i < m and 0 <= j < m):
            raise PresentationError(f"bracket index out of range: ({i}, {j})")
        col = {int(k): Fraction(c) for k, c in col.items() if Fraction(c) != 0}
        if any(not 0 <= k < m for k in col):
            raise PresentationError(f"bracket target out of range for ({i}, {j})")
        if i == j:
            if col:
                raise PresentationError(f"[V_{i}, V_{i}] must vanish (antisymmetry)")
            continue
        neg = {k: -c for k, c in col.items()}
        for key, val in (((i, j), col), ((j, i), neg)):
            if key in table and table[key] != val:
                raise PresentationError(f"antisymmetry violated at {key}")
        if col:
            table[(i, j)] = col
            table[(j, i)] = neg

    probe = MalcevPresentation.__new__(MalcevPresentation)
    probe.m, probe.filtration_dims, probe.d = m, fd, len(fd)
    for (a, b), col in table.items():
        for k, c in col.items():
            if k <= max(a, b):
                raise FiltrationViolation(
                    f"[V_{a}, V_{b}] has a component on V_{k}; brackets must land in later tails")
            la, lb = probe.level(a), probe.level(b)
            if la + lb > probe.d or probe.level(k) < la + lb:
                raise FiltrationViolation(
                    f"[V_{a}, V_{b}] leaves G_{la + lb}")

    _check_jacobi(m, table)
    step = _nilpotency_step(m, table)
    if step > MAX_STEP:
        raise StepTooLarge(f"nilpotency step {step} exceeds {MAX_STEP}")
    return MalcevPresentation(m, fd, table, labels)


def _check_jacobi(m, table):
    def br(x, y):
        out = {}
        for a, xa in x.items():
            for b, yb in y.items():
                for k, c in table.get((a, b), {}).items():
                    out[k] = out.get(k, 0) + c * xa * yb
        return {k: v for k, v in out.items() if v}

    for i in range(m):
        for j in range(i + 1, m):
            for k in range(j + 1, m):
                vi, vj, vk = {i: 1}, {j: 1}, {k: 1}
                tot = {}
                for a, b, c in ((vi, vj, vk), (vj, vk, vi), (vk, vi, vj)):
                    for key, v in br(a, br(b, c)).items():
                        tot[key] = tot.get(key, 0) + v
                if any(tot.values()):
                    raise JacobiViolation(f"Jacobi identity fails on (V_{i}, V_{j}, V_{k})")


# --- built-ins ---------------------------------------------------------------

def torus(m):
    """The abelian group R^m with lattice Z^m."""
    return build_presentation(m, (m,), {})


def heisenberg():
    """3-dimensional Heisenberg group, [V_0, V_1] = V_2."""
    return build_presentation(3, (3, 1), {(0, 1): {2: 1}})


def heisenberg5():
    """5-dimensional Heisenberg group, [V_0, V_2] = [V_1, V_3] = V_4."""
    return build_presentation(5, (5, 1), {(0, 2): {4: 1}, (1, 3): {4: 1}})


def direct_product(g, h):
    """G x H with the basis reordered so that every G_i x H_i is a tail."""
    d = max(g.d, h.d)
    entries = [(g.level(i), 0, i) for i in range(g.m)] + [(h.level(i), 1, i) for i in range(h.m)]
    entries.sort()
    index = {(src, i): n for n, (_, src, i) in enumerate(entries)}
    m = g.m + h.m
    fd = tuple(g.dim_at_level(t) + h.dim_at_level(t) for t in range(1, d + 1))
    consts = {}
    for src, grp in ((0, g), (1, h)):
        for (a, b), col in grp.structure_constants().items():
            consts[(index[(src, a)], index[(src, b)])] = {index[(src, k)]: c for k, c in col.items()}
    return build_presentation(m, fd, consts)


# --- group operations --------------------------------------------------------

def _check_same(a, b):
    if a.group is not b.group:
        raise ValueError("elements belong to different presentations")
    if a.exact != b.exact:
        raise FlavorMismatch("cannot combine exact and float elements")


def multiply(a, b):
    _check_same(a, b)
    g = a.group
    xs = a.coords + b.coords
    polys = g._mul_exact if a.exact else g._mul_float
    zero = Fraction(0) if a.exact else 0.0
    return GroupElement(g, tuple(eval_compiled(t, xs, zero) + zero for t in polys))


def inverse(a):
    g = a.group
    polys = g._inv_exact if a.exact else g._inv_float
    zero = Fraction(0) if a.exact else 0.0
    return GroupElement(g, tuple(eval_compiled(t, a.coords, zero) + zero for t in polys))


def identity(group, exact=True):
    return group.identity(exact)


def power(a, n):
    """a**n for any integer n, by repeated squaring."""
    if n < 0:
        return power(inverse(a), -n)
    result = a.group.identity(a.exact)
    base = a
    while n:
        if n & 1:
            result = multiply(result, base)
        base = multiply(base, base)
        n >>= 1
    return result


def _unit(group, i, k, exact):
    c = [Fraction(0) if exact else 0.0] * group.m
    c[i] = Fraction(k) if exact else float(k)
    return GroupElement(group, tuple(c))


def reduce_mod_lattice(g):
    """Return (point, gamma) with g = point * gamma, point in [0,1)^m, gamma in Gamma.

    Right-multiplying by exp(t V_i) leaves coordinates before i unchanged, so
    the coordinates are fixed from the lowest index upward.
    """
    grp = g.group
    x = g
    for i in range(grp.m):
        k = math.floor(x.coords[i])
        if k:
            x = multiply(x, _unit(grp, i, -k if g.exact else float(-k), g.exact))
        if not g.exact and x.coords[i] >= 1.0:
            x = multiply(x, _unit(grp, i, -1.0, False))
        if not g.exact and x.coords[i] < 0.0:
            c = list(x.coords)
            c[i] = 0.0
            x = GroupElement(grp, tuple(c))
    gamma = multiply(inverse(x), g)
    if not g.exact:
        gamma = GroupElement(grp, tuple(float(round(c)) for c in gamma.coords))
    return x, gamma


def in_lattice(g, tol=FLOAT_TOL):
    if g.exact:
        return all(c.denominator == 1 for c in g.coords)
    return all(abs(c - round(c)) <= tol for c in g.coords)


def sup_norm(g):
    return max((abs(c) for c in g.coords), default=0)


def dist(a, b):
    """Right-invariant distance surrogate |psi(a b^-1)|_inf."""
    return sup_norm(multiply(a, inverse(b)))


def manifold_dist(x, y):
    """Distance between cosets xGamma, yGamma, searching translates in {-1,0,1}^m."""
    grp = x.group
    best = None
    for shift in product((-1, 0, 1), repeat=grp.m):
        s = grp.element(shift if y.exact else tuple(float(v) for v in shift))
        d = dist(x, multiply(y, s))
        if best is None or d < best:
            best = d
    return best


# --- characters and rationality ---------------------------------------------

@dataclass(frozen=True)
class HorizontalCharacter:
    """Integer vector supported on the horizontal coordinates."""
    group: MalcevPresentation
    vector: tuple

    def __post_init__(self):
        v = tuple(int(x) for x in self.vector)
        if len(v) != self.group.m:
            raise ValueError("character vector has the wrong length")
        h = self.group.horizontal_dim
        if any(v[h:]):
            raise ValueError("character must vanish on G_2 coordinates")
        object.__setattr__(self, "vector", v)

    @property
    def modulus(self):
        return max((abs(x) for x in self.vector), default=0)

    def is_trivial(self):
        return not any(self.vector)

    def linear(self, coords):
        """a . coords, without reduction mod 1."""
        return sum(a * c for a, c in zip(self.vector, coords) if a)


def char_eval(eta, x):
    """eta(x) in [0, 1)."""
    v = eta.linear(x.coords)
    if isinstance(v, Fraction) or isinstance(v, int):
        return Fraction(v) - math.floor(v)
    return v - math.floor(v)


def is_rational_element(g, R):
    """Smallest r <= R with g^r in Gamma, or None."""
    # the horizontal coordinates of g^r are r times those of g, so r must be
    # a multiple of their common denominator
    step = 1
    if g.exact:
        for c in g.coords[:g.group.horizontal_dim]:
            step = math.lcm(step, Fraction(c).denominator)
    if step > R:
        return None
    h = power(g, step)
    p = h
    for r in range(step, R + 1, step):
        if in_lattice(p):
            return r
        p = multiply(p, h)
    return None


# --- text format -------------------------------------------------------------

_FRAC = re.compile(r"^-?\d+(/\d+)?$")


def parse_presentation(text):
    """Parse the [group]/[brackets] text format (1-based indices)."""
    section = None
    header = {}
    brackets = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line not in ("[group]", "[brackets]"):
                raise PresentationParseError(f"unknown section {line}", lineno)
            section = line[1:-1]
            continue
        if section == "group":
            if "=" not in line:
                raise PresentationParseError("expected key = value", lineno)
            key, val = (s.strip() for s in line.split("=", 1))
            try:
                if key in ("m", "d"):
                    header[key] = int(val)
                elif key == "filtration_dims":
                    header[key] = tuple(int(v) for v in val.replace(",", " ").split())
                else:
                    raise PresentationParseError(f"unknown key {key}", lineno)
            except ValueError:
                raise PresentationParseError(f"bad value for {key}", lineno) from None
        elif section == "brackets":
            parts = line.split()
            if len(parts) != 4 or not all(p.lstrip("-").isdigit() for p in parts[:3]) \
                    or not _FRAC.match(parts[3]):
                raise PresentationParseError("expected 'i j k num/den'", lineno)
            i, j, k = (int(p) - 1 for p in parts[:3])
            m = header.get("m")
            if m is None:
                raise PresentationParseError("[group] must come first", lineno)
            if not all(0 <= x < m for x in (i, j, k)):
                raise PresentationParseError("bracket index out of range", lineno)
            c = Fraction(parts[3])
            col = brackets.setdefault((i, j), {})
            col[k] = col.get(k, 0) + c
            if (j, i) in brackets and k in brackets[(j, i)] and brackets[(j, i)][k] != -col[k]:
                raise PresentationParseError("antisymmetry violated", lineno)
        else:
            raise PresentationParseError("content outside a section", lineno)
    for key in ("m", "filtration_dims"):
        if key not in header:
            raise PresentationParseError(f"missing {key} in [group]")
    if "d" in header and header["d"] != len(header["filtration_dims"]):
        raise PresentationParseError("d does not match filtration_dims")
    merged = {}
    for (i, j), col in brackets.items():
        if (j, i) in merged:
            continue
        merged[(i, j)] = col
    return build_presentation(header["m"], header["filtration_dims"], merged)


def format_presentation(g):
    lines = ["[group]", f"m = {g.m}", f"d = {g.d}",
             "filtration_dims = " + " ".join(str(x) for x in g.filtration_dims),
             "[brackets]"]
    for (i, j), col in sorted(g.structure_constants().items()):
        for k, c in sorted(col.items()):
            lines.append(f"{i + 1} {j + 1} {k + 1} {c.numerator}/{c.denominator}")
    return "\n".join(lines) + "\n"


def load_presentation(path):
    with open(path) as fh:
        return parse_presentation(fh.read())


def builtin_presentation(name):
    """'torusN', 'heisenberg', 'heisenberg5'."""
    if name == "heisenberg":
        return heisenberg()
    if name == "heisenberg5":
        return heisenberg5()
    m = re.fullmatch(r"torus(\d+)", name)
    if m:
        return torus(int(m.group(1)))
    raise PresentationError(f"unknown built-in group {name!r}")
