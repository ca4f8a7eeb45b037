"""Iterative factorization g = eps * g' * gamma of a two-parameter polynomial sequence.

Every horizontal character vanishes on G_2, so each kernel subgroup contains
G_2 and is cut out by linear conditions on the horizontal coordinates. The
whole iteration therefore runs in the parent coordinates: the current subgroup
is {psi : horizontal part in L}, with L the common kernel of the characters
found so far. Each step finds a character with a small score on the current
g', splits its coefficients into a small part (eps), a rational part (gamma)
and a remainder on which the character vanishes identically.

Sequences are handled exactly; float input is converted to exact binary
rationals first.
"""
from dataclasses import dataclass, field
from fractions import Fraction
import math
import random

from ._exact import ext_gcd, in_span, integer_kernel, lcm, solve_in_span
from .equidist import Progression, default_bank, discrepancy, obstruction_search_2p
from .nilgroup import (build_presentation, in_lattice, inverse, is_rational_element,
                       multiply)
from .polyseq import (PolySeq, eval2, fit_seq, format_seq, inverse_seq,
                      is_smooth, multiply_seqs, parse_seq, row, seq_sup_bound)


class FactorizationError(RuntimeError):
    pass


def to_exact(g):
    if g.exact:
        return g
    return PolySeq(g.group, {k: tuple(Fraction(c) for c in v) for k, v in g.coeffs.items()})


def _round_half_to_zero(x):
    f = math.floor(x)
    r = x - f
    if r > Fraction(1, 2):
        return f + 1
    if r < Fraction(1, 2):
        return f
    return f if abs(f) <= abs(f + 1) else f + 1


# --- kernel subgroups ---------------------------------------------------------------

@dataclass
class KernelSubgroup:
    """Common kernel of horizontal characters, with its own presentation."""
    parent: object
    presentation: object
    basis: list            # rows: new basis vectors in parent coordinates
    horizontal_basis: list  # integer basis of the horizontal kernel lattice

    def to_parent(self, coords):
        """Parent coordinates of exp(t_1 W_1) ... exp(t_m' W_m')."""
        g = self.parent.identity()
        for t, w in zip(coords, self.basis):
            step = self.parent.exp_coords([Fraction(t) * c for c in w])
            g = multiply(g, self.parent.element(step))
        return g


def kernel_presentation(group, etas):
    """Presentation of the common kernel of the given horizontal characters."""
    h = group.horizontal_dim
    rows = [list(getattr(e, "vector", e))[:h] for e in etas]
    hb = integer_kernel(rows, h) if rows else [[int(i == j) for j in range(h)] for i in range(h)]
    basis = [[Fraction(x) for x in b] + [Fraction(0)] * (group.m - h) for b in hb]
    basis += [[Fraction(int(i == j)) for j in range(group.m)] for i in range(h, group.m)]
    mp = len(basis)
    consts = {}
    for i in range(mp):
        for j in range(i + 1, mp):
            br = group.bracket(basis[i], basis[j])
            if not any(br):
                continue
            x = solve_in_span(basis, br)
            if x is None:
                raise FactorizationError("kernel is not closed under brackets")
            consts[(i, j)] = {k: c for k, c in enumerate(x) if c}
    fd = [mp] + [group.dim_at_level(t) for t in range(2, group.d + 1)]
    pres = build_presentation(mp, fd, consts)
    return KernelSubgroup(group, pres, basis, hb)


# --- one decomposition step -----------------------------------------------------------

@dataclass
class Decomposition:
    epsilon: PolySeq
    gamma: PolySeq
    gprime: PolySeq
    u: dict
    v: dict


def _matvec(B, y):
    # B given as list of column vectors
    return [sum(col[i] * c for col, c in zip(B, y)) for i in range(len(B[0]))]


def _lattice_preimage(a, B):
    """c in span(B) with a . c = 1 and the smallest denominator available."""
    r = [sum(x * y for x, y in zip(a, col)) for col in B]
    g, y = 0, []
    for val in r:
        if not y:
            g, y = abs(val), [1 if val >= 0 else -1]
            continue
        g2, s, t = ext_gcd(g, val)
        y = [s * c for c in y] + [t]
        g = g2
    if g == 0:
        raise FactorizationError("character is trivial on the current subgroup")
    return [Fraction(x, g) for x in _matvec(B, y)], g


def _projection(a, B):
    """Orthogonal projection of a onto span(B), exact."""
    k = len(B)
    gram = [[sum(x * y for x, y in zip(B[i], B[j])) for j in range(k)] for i in range(k)]
    rhs = [sum(x * y for x, y in zip(B[i], a)) for i in range(k)]
    y = solve_in_span([list(col) for col in zip(*gram)], rhs)
    return _matvec(B, y)


def leibman_decompose(g, eta, subspace=None, denominator_cap=None):
    """Split g = eps * g' * gamma with eta o g' identically zero.

    subspace: integer column basis of the current horizontal lattice L (default
    all of Z^h). For each coefficient, u is the nearest point of w + L with
    eta(u) an integer (ties toward zero) and v is a rational point of L with the
    same eta value.
    """
    g = to_exact(g)
    grp = g.group
    h = grp.horizontal_dim
    a = list(getattr(eta, "vector", eta))[:h]
    B = subspace or [[int(i == j) for j in range(h)] for i in range(h)]
    d = _projection(a, B)
    ad = sum(x * y for x, y in zip(a, d))
    if ad == 0:
        raise FactorizationError("character is trivial on the current subgroup")
    c, den = _lattice_preimage(a, B)
    if denominator_cap is not None and den > denominator_cap:
        raise FactorizationError(f"denominator {den} exceeds cap {denominator_cap}")
    u, v, e = {}, {}, {}
    zero = [Fraction(0)] * (grp.m - h)
    for key, w in g.coeffs.items():
        val = sum(x * y for x, y in zip(a, w[:h]))
        z = _round_half_to_zero(val)
        delta = val - z
        uh = [wi - delta * di / ad for wi, di in zip(w[:h], d)]
        u[key] = tuple(uh) + tuple(w[h:])
        v[key] = tuple(z * ci for ci in c) + tuple(zero)
        e[key] = tuple(delta * di / ad for di in d) + tuple(zero)
    eps = PolySeq(grp, e)
    gam = PolySeq(grp, v)
    gp = multiply_seqs(multiply_seqs(inverse_seq(eps), g), inverse_seq(gam))
    for key, w in gp.coeffs.items():
        if sum(x * y for x, y in zip(a, w[:h])) != 0:
            raise FactorizationError("eta o g' does not vanish")
    return Decomposition(eps, gam, gp, u, v)


# --- the iteration -------------------------------------------------------------------

@dataclass
class TraceStep:
    eta: tuple
    score: object
    M: int
    W: object


@dataclass
class FactorizationResult:
    group: object
    epsilon: PolySeq
    gprime: PolySeq
    gamma: PolySeq
    W: int
    q: int
    q_adjusted: int
    subgroup: KernelSubgroup
    trace: list = field(default_factory=list)

    @property
    def characters(self):
        return [s.eta for s in self.trace]


def _period(gamma):
    """Smallest multiple q of the coefficient denominators with gamma(.)Gamma q-periodic.

    gamma(n,h)^-1 gamma(n+q,h) is a polynomial sequence, so it is integral
    everywhere once it is integral on the (d+1) x (d+1) grid.
    Candidates are tried in increasing order, so the answer is minimal.
    """
    den = 1
    for vec in gamma.coeffs.values():
        for c in vec:
            den = lcm(den, c.denominator)
    d = gamma.group.d
    # products of coefficients feed the higher coordinates, so the period can
    # reach den^d times factorial factors from the binomial bases
    for t in range(1, den ** (d - 1) * math.factorial(d) ** 2 + 1):
        q = den * t
        ok = all(in_lattice(multiply(inverse(eval2(gamma, n, h)), eval2(gamma, n + q, h)))
                 and in_lattice(multiply(inverse(eval2(gamma, n, h)), eval2(gamma, n, h + q)))
                 for n in range(d + 1) for h in range(d + 1))
        if ok:
            return q
    raise FactorizationError("no period found for the rational part")


def _ceil(x):
    return int(math.ceil(x))


def realized_height(eps, gamma, q, N, H, R0):
    """Smallest integer W covering smoothness of eps, rationality of gamma and q."""
    grp = eps.group
    size = seq_sup_bound(eps, N + 1, H + 1)
    step_n = fit_seq(grp, lambda n, h: multiply(eval2(eps, n, h), inverse(eval2(eps, n + 1, h))))
    step_h = fit_seq(grp, lambda n, h: multiply(eval2(eps, n, h), inverse(eval2(eps, n, h + 1))))
    wn = N * seq_sup_bound(step_n, N, H + 1)
    wh = H * seq_sup_bound(step_h, N + 1, H)
    heights = []
    for n in range(q):
        for h in range(q):
            r = is_rational_element(eval2(gamma, n, h), 10 ** 4)
            if r is None:
                raise FactorizationError("gamma value is not rational of small height")
            heights.append(r)
    return max([R0, _ceil(size), _ceil(wn), _ceil(wh), q] + heights)


def adjust_period(q, W):
    """A multiple of q in (W/2, W] when q <= W, else q."""
    if q > W:
        return q
    return q * (W // q)


def factorize(g, N, H, M_schedule=None, W_schedule=None, M0=10, W0=10, max_iter=None,
              denominator_cap=None):
    """Iterate obstruction search and decomposition until no character scores
    below the current smoothness threshold."""
    g = to_exact(g)
    grp = g.group
    h = grp.horizontal_dim
    max_iter = h if max_iter is None else min(max_iter, h)
    M_schedule = list(M_schedule) if M_schedule else [M0 * 2 ** k for k in range(max(h, 1))]
    W_schedule = list(W_schedule) if W_schedule else [W0 * 2 ** k for k in range(max(h, 1))]
    eps_parts, gam_parts, trace, etas = [], [], [], []
    current = g
    basis = [[int(i == j) for j in range(h)] for i in range(h)]
    for k in range(max_iter):
        if not any(any(v) for v in current.coeffs.values()):
            break  # identity: every character scores 0 and peeling changes nothing
        M = M_schedule[min(k, len(M_schedule) - 1)]
        Wk = W_schedule[min(k, len(W_schedule) - 1)]
        ob = obstruction_search_2p(current, N, H, M, exclude=etas)
        if ob is None or ob.norm > Wk:
            break
        dec = leibman_decompose(current, ob.eta, basis, denominator_cap)
        eps_parts.append(dec.epsilon)
        gam_parts.append(dec.gamma)
        etas.append(ob.eta.vector)
        trace.append(TraceStep(ob.eta.vector, ob.norm, M, Wk))
        current = dec.gprime
        basis = integer_kernel([list(e)[:h] for e in etas], h)
        basis = [list(col) for col in basis]
    eps = PolySeq(grp, {})
    for part in eps_parts:
        eps = multiply_seqs(eps, part)
    gam = PolySeq(grp, {})
    for part in gam_parts:
        gam = multiply_seqs(part, gam)
    q = _period(gam)
    W = realized_height(eps, gam, q, N, H, grp.rationality_height)
    sub = kernel_presentation(grp, etas)
    return FactorizationResult(grp, eps, current, gam, W, q, adjust_period(q, W), sub, trace)


# --- verification ---------------------------------------------------------------------

@dataclass
class VerificationReport:
    checks: dict
    details: dict

    @property
    def passed(self):
        return all(self.checks.values())


def verify_factorization(result, g, N, H, samples=64, seed=0, smooth_samples=10 ** 6):
    g = to_exact(g)
    grp = g.group
    h = grp.horizontal_dim
    eps, gp, gam, W, q = result.epsilon, result.gprime, result.gamma, result.W, result.q
    rng = random.Random(seed)
    d = grp.d
    points = [(n, k) for n in range(d + 2) for k in range(d + 2)]
    points += [(rng.randint(1, N), rng.randint(1, H)) for _ in range(samples)]
    checks, details = {}, {}

    checks["reconstruction"] = all(
        multiply(multiply(eval2(eps, n, k), eval2(gp, n, k)), eval2(gam, n, k)) == eval2(g, n, k)
        for n, k in points)

    sm = is_smooth(eps.to_float(), W, N, H, samples=smooth_samples, seed=seed)
    details["smoothness"] = sm
    checks["smoothness"] = sm.smooth

    rat = []
    for n in range(q):
        for k in range(q):
            rat.append(is_rational_element(eval2(gam, n, k), W))
    details["rational_heights"] = rat
    checks["rationality"] = all(r is not None for r in rat)

    per = True
    for n in range(3 * q):
        for k in range(3 * q):
            base = inverse(eval2(gam, n, k))
            if not (in_lattice(multiply(base, eval2(gam, n + q, k)))
                    and in_lattice(multiply(base, eval2(gam, n, k + q)))):
                per = False
                break
        if not per:
            break
    checks["periodicity"] = per

    hb = result.subgroup.horizontal_basis
    checks["support"] = all(in_span(hb, list(w[:h])) if hb else not any(w[:h])
                            for w in gp.coeffs.values())
    checks["kernel"] = all(sum(a * c for a, c in zip(eta, w)) == 0
                           for eta in result.characters for w in gp.coeffs.values())

    # informational: how well the rows g'(n, .) spread over the full nilmanifold
    bank = default_bank(grp, 1, exclude=result.characters)
    disc = {}
    for n in sorted({1, max(1, N // 2), N}):
        disc[n] = discrepancy(row(gp.to_float(), n), Progression(1, 1, min(H, 2000)), bank).deviation
    details["discrepancy"] = disc
    return VerificationReport(checks, details)


# --- serialization --------------------------------------------------------------------

def format_factorization(result):
    out = ["[meta]", f"W = {result.W}", f"q = {result.q}", f"q_adjusted = {result.q_adjusted}"]
    for name, seq in (("epsilon", result.epsilon), ("gprime", result.gprime), ("gamma", result.gamma)):
        out.append(f"[{name}]")
        out.append(format_seq(seq).rstrip("\n"))
    out.append("[trace]")
    for s in result.trace:
        out.append(" ".join(str(x) for x in s.eta) + f" | {s.score} | {s.M} | {s.W}")
    return "\n".join(line for line in out if line != "") + "\n"


def parse_factorization(group, text):
    sections = {}
    name = None
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1]
            sections[name] = []
        elif line and name:
            sections[name].append(line)
    meta = dict((s.strip() for s in l.split("=", 1)) for l in sections.get("meta", []))
    seqs = {n: parse_seq(group, "\n".join(sections.get(n, []))) for n in ("epsilon", "gprime", "gamma")}
    trace = []
    for l in sections.get("trace", []):
        eta, score, M, W = (s.strip() for s in l.split("|"))
        trace.append(TraceStep(tuple(int(x) for x in eta.split()), Fraction(score), int(M),
                               Fraction(W)))
    sub = kernel_presentation(group, [s.eta for s in trace])
    return FactorizationResult(group, seqs["epsilon"], seqs["gprime"], seqs["gamma"],
                               int(meta["W"]), int(meta["q"]), int(meta["q_adjusted"]), sub, trace)
