"""Equidistribution tests and obstruction search for polynomial orbits.

Discrepancy is measured against a finite bank of test functions on G/Gamma:
the horizontal characters e(a . x) with |a| bounded, plus products of
sin^{2k}(pi x_i) over the fundamental-domain coordinates (these vanish on the
boundary of the unit cube, so they are continuous on the nilmanifold). Bank
means come from scrambled Sobol points.

Obstruction search enumerates horizontal characters up to sign (first nonzero
entry positive), ordered by max-norm and then lexicographically.
"""
from dataclasses import dataclass, field
from itertools import product
import math

import numpy as np
from scipy.stats import qmc

from ._exact import integer_kernel
from .nilgroup import HorizontalCharacter
from .polyseq import TorusPoly, binom, binom_array, frac_norm

QMC_POINTS = 1 << 16
QMC_REPLICATES = 8
MAX_VECTORS = 10 ** 4


# --- characters on sequences ---------------------------------------------------

def char_compose(eta, g):
    """eta o g: a TorusPoly for one-parameter g, else {(j, k): scalar}."""
    vec = eta.vector if isinstance(eta, HorizontalCharacter) else tuple(eta)
    coeffs = g.scalar(vec)
    if all(k == 0 for _, k in coeffs):
        top = max((j for j, _ in coeffs), default=0)
        zero = 0 * next(iter(coeffs.values()), 0)
        return TorusPoly([coeffs.get((j, 0), zero) for j in range(top + 1)])
    return coeffs


# --- test-function bank --------------------------------------------------------

@dataclass
class BankFunction:
    name: str
    func: object = field(repr=False)   # (m, K) points -> complex (K,)
    mean: float
    mean_err: float
    lipschitz: float

    def __call__(self, pts):
        return self.func(pts)


def qmc_mean(func, dim, n_points=QMC_POINTS, seed=0, replicates=QMC_REPLICATES):
    """Mean of func over [0,1)^dim from scrambled Sobol replicates; (mean, stderr)."""
    if dim == 0:
        v = complex(np.asarray(func(np.zeros((0, 1))))[0])
        return v, 0.0
    per = n_points // replicates
    means = []
    for r in range(replicates):
        pts = qmc.Sobol(dim, scramble=True, seed=seed + r).random(per).T
        means.append(np.mean(func(pts)))
    means = np.array(means)
    err = float(np.std(means, ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0
    return complex(np.mean(means)), err


def character_function(vector):
    a = np.asarray(vector, dtype=float)

    def f(pts):
        return np.exp(2j * np.pi * np.tensordot(a, pts, axes=(0, 0)))
    return f


def bump_function(k):
    def f(pts):
        return np.prod(np.sin(np.pi * pts) ** (2 * k), axis=0).astype(np.complex128)
    return f


def canonical_vectors(h, M):
    """Nonzero integer vectors in [-M, M]^h with first nonzero entry positive,
    ordered by max-norm then lexicographically."""
    vecs = []
    for v in product(range(-M, M + 1), repeat=h):
        first = next((x for x in v if x), 0)
        if first > 0:
            vecs.append(v)
    vecs.sort(key=lambda v: (max(abs(x) for x in v), v))
    return vecs


def default_bank(group, bound=2, bumps=(1, 2), seed=0, exclude=()):
    """Characters up to sign with |a| <= bound, then the bumps.

    exclude: character vectors whose span is dropped from the bank, so only
    characters nontrivial on their common kernel remain.
    """
    h = group.horizontal_dim
    bank = []
    vecs = canonical_vectors(h, bound)
    if exclude:
        ker = integer_kernel([list(e)[:h] for e in exclude], h)
        vecs = [v for v in vecs if any(sum(a * b for a, b in zip(v, k)) for k in ker)]
    for v in vecs:
        full = tuple(v) + (0,) * (group.m - h)
        bank.append(BankFunction(f"e{full}", character_function(full), 0.0, 0.0,
                                 1 + 2 * math.pi * sum(abs(x) for x in v)))
    for k in bumps:
        f = bump_function(k)
        mean, err = qmc_mean(f, group.m, seed=seed)
        bank.append(BankFunction(f"bump{k}", f, mean.real, err, 1 + 2 * math.pi * k * group.m))
    return bank


# --- discrepancy ---------------------------------------------------------------

@dataclass(frozen=True)
class Progression:
    start: int
    step: int
    length: int

    def indices(self):
        return self.start + self.step * np.arange(self.length)


def orbit_points(seq, n):
    """Reduced points g(n) Gamma for a one-parameter sequence, shape (m, K)."""
    n = np.asarray(n)
    return seq.group.reduce_arrays(seq.coords_arrays(n, np.zeros_like(n)))


@dataclass
class DiscrepancyReport:
    deviation: float             # max |E F - int F| over the bank
    normalized: float            # same, divided by each function's Lipschitz norm
    worst: str
    per_function: dict = field(repr=False)


def discrepancy(seq, progression, bank):
    pts = orbit_points(seq, progression.indices())
    per = {}
    for b in bank:
        per[b.name] = abs(np.mean(b(pts)) - b.mean) if progression.length else 0.0
    worst = max(per, key=per.get)
    norm = max(per[b.name] / b.lipschitz for b in bank)
    return DiscrepancyReport(float(per[worst]), float(norm), worst, per)


@dataclass
class TotalDiscrepancyReport:
    value: float
    progression: Progression
    function: str


def _window_max(vals, mean, min_len, endpoints=None):
    """max over windows [a, b) with b - a >= min_len of |avg - mean|; (value, a, b)."""
    L = vals.size
    c = np.concatenate([[0], np.cumsum(vals - mean)])
    best = (-1.0, 0, L)
    if endpoints is None:
        for ell in range(max(1, min_len), L + 1):
            dev = np.abs(c[ell:] - c[:-ell]) / ell
            i = int(np.argmax(dev))
            if dev[i] > best[0]:
                best = (float(dev[i]), i, i + ell)
    else:
        e = np.asarray(endpoints)
        for ai in e:
            b = e[e - ai >= max(1, min_len)]
            if b.size == 0:
                continue
            dev = np.abs(c[b] - c[ai]) / (b - ai)
            i = int(np.argmax(dev))
            if dev[i] > best[0]:
                best = (float(dev[i]), int(ai), int(b[i]))
    return best


def total_discrepancy(seq, N, delta, bank, full_scan_limit=10 ** 4):
    """max deviation over progressions in [1, N] of length >= delta N.

    Steps run up to ceil(1/delta) with every offset. Windows are scanned
    exhaustively when N <= full_scan_limit, else with endpoints on a grid of
    spacing ceil(sqrt(N)) (plus the last index).
    """
    n = np.arange(1, N + 1)
    pts = orbit_points(seq, n)
    values = {b.name: b(pts) for b in bank}
    means = {b.name: b.mean for b in bank}
    if delta >= 1:
        pairs = [(1, 0)]
        min_len = N
    else:
        pairs = [(s, r) for s in range(1, math.ceil(1 / delta) + 1) for r in range(s)]
        min_len = math.ceil(delta * N)
    best = TotalDiscrepancyReport(-1.0, Progression(1, 1, N), "")
    for s, r in pairs:
        for name, v in values.items():
            sub = v[r::s]
            if sub.size < min_len:
                continue
            if N <= full_scan_limit:
                ends = None
            else:
                sp = math.ceil(math.sqrt(N))
                ends = np.unique(np.concatenate([np.arange(0, sub.size + 1, sp), [sub.size]]))
            dev, a, b = _window_max(sub, means[name], min_len, ends)
            if dev > best.value:
                best = TotalDiscrepancyReport(dev, Progression(1 + r + s * a, s, b - a), name)
    return best


# --- obstruction search ---------------------------------------------------------

@dataclass
class Obstruction:
    eta: HorizontalCharacter
    norm: object
    bound: int


def _candidate_matrix(group, M, exclude, max_vectors):
    h = group.horizontal_dim
    count = ((2 * M + 1) ** h - 1) // 2
    if count > max_vectors:
        raise ValueError(f"{count} candidate characters exceed the cap of {max_vectors}")
    vecs = canonical_vectors(h, M)
    if exclude:
        # drop vectors in the span of the excluded ones: those vanish on the
        # integer kernel of the excluded rows
        ker = integer_kernel([list(e)[:h] for e in exclude], h)
        if ker:
            K = np.array(ker, dtype=np.int64).T
            A = np.array(vecs, dtype=np.int64).reshape(-1, h)
            keep = np.any(A @ K != 0, axis=1)
            vecs = [v for v, k in zip(vecs, keep) if k]
        else:
            vecs = []
    return vecs


def _score(vecs, coeffs, weights, exact):
    """max_key weight[key] * ||a . coeff[key]|| for each candidate a."""
    keys = sorted(coeffs)
    h = len(vecs[0]) if vecs else 0
    if exact:
        out = []
        for v in vecs:
            s = 0
            for key in keys:
                c = coeffs[key]
                x = sum(a * c[i] for i, a in enumerate(v) if a)
                s = max(s, weights[key] * frac_norm(x))
            out.append(s)
        return out
    if not keys:
        return [0.0] * len(vecs)
    A = np.array(vecs, dtype=float).reshape(-1, h)
    C = np.array([[float(coeffs[k][i]) for k in keys] for i in range(h)])
    W = np.array([float(weights[k]) for k in keys])
    X = A @ C
    X = X - np.floor(X)
    return (np.max(np.minimum(X, 1 - X) * W, axis=1)).tolist()


def _search(g, weights_fn, M, exclude, max_vectors):
    grp = g.group
    vecs = _candidate_matrix(grp, M, exclude, max_vectors)
    if not vecs:
        return None
    coeffs = {key: vec for key, vec in g.coeffs.items()}
    weights = {key: weights_fn(*key) for key in coeffs}
    scores = _score(vecs, coeffs, weights, g.exact)
    i = min(range(len(vecs)), key=lambda k: scores[k])  # first minimal in order
    full = tuple(vecs[i]) + (0,) * (grp.m - grp.horizontal_dim)
    return Obstruction(HorizontalCharacter(grp, full), scores[i], M)


def obstruction_search(g, N, M, exclude=(), max_vectors=MAX_VECTORS):
    """argmin over 0 < |eta| <= M of ||eta o g||_{C^inf[N]} (one-parameter g)."""
    return _search(g, lambda j, k: N ** j, M, exclude, max_vectors)


def obstruction_search_2p(g, N, H, M, exclude=(), max_vectors=MAX_VECTORS):
    """argmin over 0 < |eta| <= M of max_{j,k} N^j H^k ||eta(w_jk)||."""
    return _search(g, lambda j, k: N ** j * H ** k, M, exclude, max_vectors)


@dataclass
class Witness:
    progression: Progression
    mean: complex
    delta: float
    drift_bound: float


def _drift(f, n):
    # ||f(n) - f(0)|| <= sum_{i>=1} C(n, i) ||alpha_i||, since C(n, i) is an integer
    n = np.asarray(n, dtype=float)
    out = np.zeros(n.shape)
    for i, a in enumerate(f.coeffs):
        if i >= 1 and a:
            out += binom_array(n, i) * float(frac_norm(a))
    return out


def _chord(x):
    # |e(x) - 1| for ||x|| <= x
    return 2 * np.sin(np.pi * np.minimum(np.asarray(x, dtype=float), 0.5))


def obstruction_witness(eta, g, N, threshold=0.5):
    """Prefix progression {1..L} on which |E e(eta o g)| > threshold.

    L is the largest n <= N for which the averaged drift bound
    (1/L) sum_{n<=L} |e(f(n)) - e(f(0))| stays below 1 - threshold; fails if
    L < 2, i.e. no witness at delta >= 2/N.
    """
    f = char_compose(eta, g)
    if not isinstance(f, TorusPoly):
        raise ValueError("obstruction_witness expects a one-parameter sequence")
    n = np.arange(1, N + 1)
    # drift is nondecreasing in n, so the running mean of the chords is too
    running = np.cumsum(_chord(_drift(f, n))) / n
    L = int(np.searchsorted(running, 1 - threshold, side="left"))
    if L < 2:
        raise ValueError("norm too large to build a witness at any delta >= 2/N")
    mean = complex(np.mean(np.exp(2j * np.pi * f.values(np.arange(1, L + 1)))))
    return Witness(Progression(1, 1, L), mean, L / N, float(running[L - 1]))
