"""Averaged short-interval correlations and their major/minor decomposition.

The headline quantity is

    (1/HN) sum_{1<=n<=N} | sum_{1<=h<=H} w(n+h) F(g(n,h) Gamma) |.

For an orbit g(n,h) = g0^(n+h) x the summand depends only on v = n+h, so the
inner sums are differences of one prefix-sum array. Orbit points are produced
in fixed blocks of v: each block starts from an exact reduced point and is
then evaluated as a short polynomial in the offset, which keeps float
coordinates small. Blocks are fixed independently of the thread count and all
reductions use math.fsum or a single sequential cumsum, so results do not
depend on the number of workers.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
import math
import time

import numpy as np

from ._exact import ext_gcd, lcm
from .equidist import qmc_mean
from .factorize import to_exact
from .nilgroup import GroupElement, multiply, power, reduce_mod_lattice
from .polyseq import PolySeq, eval2, fit_seq
from .sieve import dense_set

ORBIT_BLOCK = 1 << 12
ROW_CHUNK = 1 << 20
QMC_TRACE_POINTS = 1 << 14


class CoverageError(ValueError):
    """The weight table does not reach n + h for every term."""


@dataclass
class CorrelationReport:
    H: int
    N: int
    value: float
    weight: str = "custom"
    restricted: bool = False
    params: dict = field(default_factory=dict)
    partials: list = field(default_factory=list, repr=False)
    inner: np.ndarray = field(default=None, repr=False)   # |inner sum| for n = 1..N
    seconds: float = 0.0


def _exact_element(g):
    if g.exact:
        return g
    return g.group.element(tuple(Fraction(c) for c in g.coords))


def _orbit_block(g0, x, lo, hi):
    """Reduced float points g0^v x Gamma for v in [lo, hi), shape (m, hi-lo)."""
    start, _ = reduce_mod_lattice(multiply(power(g0, lo), x))
    seq = fit_seq(g0.group, lambda n, h: multiply(power(g0, n + h), start), exact=True)
    t = np.arange(hi - lo)
    return g0.group.reduce_arrays(seq.coords_arrays(t, np.zeros_like(t)))


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _weights(w, N, H, S):
    w = np.asarray(w)
    if w.shape[0] <= N + H:
        raise CoverageError(f"weight table covers up to {w.shape[0] - 1}, need {N + H}")
    w = w[:N + H + 1]
    if S is not None:
        S = np.asarray(S, dtype=bool)
        if S.shape[0] <= N + H:
            raise CoverageError(f"restriction set covers up to {S.shape[0] - 1}, need {N + H}")
        w = w * S[:N + H + 1]
    return w


def _finish(inner_abs, H, N, block):
    partials = [math.fsum(inner_abs[a:a + block].tolist()) for a in range(0, N, block)]
    return math.fsum(inner_abs.tolist()) / (H * N), partials


def correlation(w, F, g, H, N, x=None, S=None, threads=1, weight="custom"):
    """Averaged short-interval correlation of weights w against F(g(n,h) Gamma).

    w: array indexed by integers, covering 1..N+H. F: callable on (m, K)
    point arrays. g: a GroupElement g0 (orbit form, with base point x, default
    the identity) or a two-parameter PolySeq. S: optional boolean mask; the
    weight becomes 1_S w.
    """
    t0 = time.perf_counter()
    if H < 1 or N < 1:
        raise ValueError("need H, N >= 1")
    wv = _weights(w, N, H, S)
    if isinstance(g, GroupElement):
        g0 = _exact_element(g)
        xx = _exact_element(x) if x is not None else g0.group.identity()
        top = N + H + 1
        blocks = [(a, min(top, a + ORBIT_BLOCK)) for a in range(0, top, ORBIT_BLOCK)]

        def work(b):
            lo, hi = b
            vals = np.asarray(F(_orbit_block(g0, xx, lo, hi)), dtype=np.complex128)
            return vals * wv[lo:hi]
        terms = np.concatenate(_map(work, blocks, threads))
        terms[0] = 0
        C = np.concatenate([[0j], np.cumsum(terms)])
        # inner(n) = sum_{v=n+1}^{n+H} terms[v] = C[n+H+1] - C[n+1]
        n = np.arange(1, N + 1)
        inner_abs = np.abs(C[n + H + 1] - C[n + 1])
    elif isinstance(g, PolySeq):
        gf = g.to_float() if g.exact else g
        rows_per = max(1, ROW_CHUNK // H)
        blocks = [(a, min(N + 1, a + rows_per)) for a in range(1, N + 1, rows_per)]
        h = np.arange(1, H + 1)

        def work(b):
            lo, hi = b
            n = np.arange(lo, hi)[:, None]
            pts = gf.group.reduce_arrays(gf.coords_arrays(n, h[None, :]))
            vals = np.asarray(F(pts.reshape(gf.group.m, -1)), dtype=np.complex128)
            vals = vals.reshape(hi - lo, H)
            ww = wv[n + h[None, :]]
            return np.abs(np.array([math.fsum(r.real) + 1j * math.fsum(r.imag)
                                    for r in vals * ww]))
        inner_abs = np.concatenate(_map(work, blocks, threads))
    else:
        raise TypeError("g must be a GroupElement (orbit) or a PolySeq")
    value, partials = _finish(inner_abs, H, N, ORBIT_BLOCK)
    return CorrelationReport(H, N, value, weight, S is not None, {}, partials, inner_abs,
                             time.perf_counter() - t0)


# --- the W^2 x q partition ----------------------------------------------------------

@dataclass(frozen=True)
class PartitionCell:
    n: int
    k: int          # interval index, 1..W^2
    j: int          # residue of n + h mod q
    start: int
    step: int
    length: int

    def indices(self):
        return self.start + self.step * np.arange(self.length)


def partition(H, W, q, n):
    """Cells {h in I_k : n + h = j mod q}, with I_k = (floor((k-1)H/W^2), floor(kH/W^2)]."""
    if W < 1 or W * W > H:
        raise ValueError("need 1 <= W and W^2 <= H")
    if not 1 <= q <= W:
        raise ValueError("need 1 <= q <= W")
    K = W * W
    cells = []
    for k in range(1, K + 1):
        lo, hi = (k - 1) * H // K, k * H // K
        for j in range(q):
            first = lo + 1 + (j - n - lo - 1) % q
            length = (hi - first) // q + 1 if first <= hi else 0
            cells.append(PartitionCell(n, k, j, first, q, length))
    return cells


def progression_intersection(a, b):
    """Intersection of {s + d i : 0 <= i < len} progressions; empty has length 0."""
    (s1, d1, l1), (s2, d2, l2) = a, b
    if d1 < 1 or d2 < 1:
        raise ValueError("steps must be positive")
    if l1 <= 0 or l2 <= 0:
        return (max(s1, s2), lcm(d1, d2), 0)
    g, u, _ = ext_gcd(d1, d2)
    L = d1 // g * d2
    if (s2 - s1) % g:
        return (max(s1, s2), L, 0)
    # x = s1 + d1 * t with d1 t = s2 - s1 (mod d2)
    t = (s2 - s1) // g * u % (d2 // g)
    x0 = s1 + d1 * t
    lo = max(s1, s2)
    hi = min(s1 + d1 * (l1 - 1), s2 + d2 * (l2 - 1))
    first = x0 + -(-(lo - x0) // L) * L
    if first > hi:
        return (first, L, 0)
    return (first, L, (hi - first) // L + 1)


# --- bilinear trace --------------------------------------------------------------

@dataclass
class CellData:
    cell: PartitionCell
    epsilon: tuple      # eps at the first h of the cell
    gamma: tuple        # fundamental-domain representative of gamma(n,h) Gamma
    mean: complex       # E for the cell, including the phase theta_n
    qmc_err: float
    weight_sum: float


@dataclass
class BilinearTraceReport:
    W: int
    q: int
    sample_n: list
    original: float     # sum_n |sum_h w F(g Gamma)|
    trace: complex      # sum_n sum_cells sum_h w F_cell(g_cell(h))
    major: complex
    minor: complex
    defect: float
    qmc_err: float
    flagged: bool
    cells: list = field(default_factory=list, repr=False)


def _fiber_points(group, hbasis, K):
    """Map (r + m - h, K) uniform points to parent coordinates of the kernel subgroup."""
    h = group.horizontal_dim
    r = len(hbasis)
    B = np.array(hbasis, dtype=float).reshape(r, h)

    def embed(u):
        out = np.zeros((group.m, u.shape[1]))
        if r:
            out[:h] = B.T @ u[:r]
        out[h:] = u[r:]
        return out
    return embed


def bilinear_trace(result, g, F, w, H, sample_n, W=None, qmc_points=QMC_TRACE_POINTS,
                   seed=0, qmc_tol=1e-2):
    """Per-cell decomposition data and the major/minor split for the given n.

    result: FactorizationResult for g. The phase theta_n makes the direct
    inner sum real and nonnegative. E for a cell is the mean of
    theta_n F(eps gamma y Gamma) over y in the kernel subgroup modulo its
    lattice, estimated with scrambled Sobol points.
    """
    if result is None:
        raise ValueError("a factorization is required")
    g = to_exact(g)
    grp = g.group
    q = result.q
    W = q if W is None else W
    eps, gp, gam = result.epsilon, result.gprime.to_float(), result.gamma
    embed = _fiber_points(grp, result.subgroup.horizontal_basis, qmc_points)
    dim = len(result.subgroup.horizontal_basis) + grp.m - grp.horizontal_dim
    w = np.asarray(w)
    gf = g.to_float()
    h_all = np.arange(1, H + 1)
    original, trace, major, minor = [], [], [], []
    cells_out, worst = [], 0.0
    gamma_cache = {}
    for n in sample_n:
        pts = grp.reduce_arrays(gf.coords_arrays(np.full(H, n), h_all))
        direct = np.asarray(F(pts), dtype=np.complex128) @ w[n + 1:n + H + 1].astype(float)
        theta = np.conj(direct) / abs(direct) if abs(direct) > 0 else 1.0
        original.append(abs(direct))
        tr, ma, mi = [], [], []
        for cell in partition(H, W, q, n):
            if cell.length == 0:
                continue
            hs = cell.indices()
            key = (n % q, cell.j, cell.start % q)
            if key not in gamma_cache:
                gamma_cache[key] = reduce_mod_lattice(eval2(gam, n, int(hs[0])))[0]
            gnj = gamma_cache[key]
            enj = eval2(eps, n, int(hs[0]))
            left = multiply(enj, gnj).to_float().coords
            left_arr = np.array(left)[:, None]

            def f_cell(y, left_arr=left_arr):
                pts = grp.reduce_arrays(grp.multiply_arrays(
                    np.broadcast_to(left_arr, y.shape), y))
                return theta * np.asarray(F(pts), dtype=np.complex128)

            # y = gamma^-1 g'(n,h) gamma, so eps gamma y = eps g'(n,h) gamma
            gpa = gp.coords_arrays(np.full(hs.shape, n, dtype=float), hs)
            gc = np.array(gnj.to_float().coords)[:, None]
            y = grp.multiply_arrays(grp.multiply_arrays(
                np.broadcast_to(grp.inverse_arrays(gc), gpa.shape), gpa),
                np.broadcast_to(gc, gpa.shape))
            vals = f_cell(y)
            ww = w[n + hs].astype(float)
            E, err = qmc_mean(lambda u: f_cell(embed(u)), dim, n_points=qmc_points, seed=seed)
            worst = max(worst, err)
            wsum = math.fsum(ww)
            tr.append(complex(vals @ ww))
            ma.append(E * wsum)
            mi.append(complex((vals - E) @ ww))
            cells_out.append(CellData(cell, tuple(enj.coords), tuple(gnj.coords), E, err, wsum))
        trace.append(_csum(tr))
        major.append(_csum(ma))
        minor.append(_csum(mi))
    tot_trace = _csum(trace)
    tot_orig = math.fsum(original)
    return BilinearTraceReport(W, q, list(sample_n), tot_orig, tot_trace, _csum(major),
                               _csum(minor), abs(tot_orig - tot_trace), worst,
                               worst > qmc_tol, cells_out)


def _csum(zs):
    return complex(math.fsum(z.real for z in zs), math.fsum(z.imag for z in zs))


# --- decay scan ---------------------------------------------------------------------

@dataclass
class DecayRow:
    H: int
    N: int
    eps: float
    P1: float
    Q1: float
    raw: float
    restricted: float
    reference: float
    seconds: float


def dense_parameters(H, eps=None):
    """(eps, P1, Q1): Q1 = H^0.96 and P1 = Q1^min(500 eps, 1/2), eps >= loglog H / log H."""
    lh = math.log(H)
    if eps is None:
        eps = math.log(lh) / lh
    Q1 = H ** 0.96
    P1 = max(2.0, Q1 ** min(500 * eps, 0.5))
    return eps, P1, Q1


def decay_scan(g, F, H_list, N, w, x=None, eps=None, threads=1, restricted=True):
    """One correlation run per H, raw and restricted to the dense set built from (H, N, eps)."""
    if list(H_list) != sorted(H_list):
        raise ValueError("H_list must be ascending")
    rows = []
    for H in H_list:
        t0 = time.perf_counter()
        e, P1, Q1 = dense_parameters(H, eps)
        raw = correlation(w, F, g, H, N, x=x, threads=threads).value
        res = math.nan
        if restricted:
            S = dense_set(math.floor(P1), math.floor(Q1), N + H, r_max_override=1).mask
            res = correlation(w, F, g, H, N, x=x, S=S, threads=threads).value
        lh = math.log(H)
        rows.append(DecayRow(H, N, e, P1, Q1, raw, res, math.log(lh) / lh,
                             time.perf_counter() - t0))
    return rows
