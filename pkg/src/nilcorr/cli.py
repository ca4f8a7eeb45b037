"""Command-line experiment driver.

    nilcorr SUBCOMMAND --config run.ini [--threads K] [--cache-dir D] [--out F]
                       [--seed S] [--override section.key=value ...]

Configs are INI files. Numbers may be written as exact expressions
(``1/2 + 1/10**6``, ``sqrt(2)``, ``phi``, ``pi``); anything involving a
float or an irrational constant becomes a float. Every run writes CSV (to
--out or stdout) and appends one JSON provenance record to ``<out>.jsonl``.
Exit status: 0 on success, 1 on a runtime failure, 2 on a bad config.
"""
import argparse
import ast
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import operator
import os
import platform
import sys
import time
from fractions import Fraction

import numpy as np

log = logging.getLogger("nilcorr")

# keys that only affect how a run executes, never what it computes
RUNTIME_KEYS = {("run", "threads"), ("run", "cache_dir"), ("run", "out")}
CORR_HEADER = ["experiment_id", "H", "N", "eps", "P1", "Q1", "W", "q", "weight",
               "restricted", "value", "defect", "qmc_err", "seconds"]


class ConfigError(ValueError):
    pass


# --- value parsing ---------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_CONSTS = {"pi": math.pi, "phi": (1 + math.sqrt(5)) / 2, "e": math.e}
_FUNCS = {"sqrt": math.sqrt, "log": math.log, "exp": math.exp}


def _eval_node(node):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and type(node.value) in (int, float):
        return Fraction(node.value) if isinstance(node.value, int) else node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_node(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        a, b = _eval_node(node.left), _eval_node(node.right)
        if isinstance(node.op, ast.Pow) and isinstance(b, Fraction) and b.denominator != 1:
            a, b = float(a), float(b)
        return _BINOPS[type(node.op)](a, b)
    if isinstance(node, ast.Name) and node.id in _CONSTS:
        return _CONSTS[node.id]
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id in _FUNCS and len(node.args) == 1:
        return _FUNCS[node.func.id](float(_eval_node(node.args[0])))
    raise ConfigError(f"unsupported expression element {ast.dump(node)[:40]}")


def parse_number(text):
    """Exact Fraction when possible, else float."""
    try:
        return _eval_node(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError, OverflowError) as exc:
        raise ConfigError(f"cannot parse number {text!r}: {exc}") from None


_OPS = ("+", "-", "*", "/")


def split_exprs(text):
    """Split on whitespace or commas, rejoining pieces around binary operators.

    '1/2 + 1/10**6  sqrt(2) -1' gives ['1/2+1/10**6', 'sqrt(2)', '-1']: a
    token that is a bare operator, starts with + * /, or follows a token
    ending in an operator continues the previous entry.
    """
    out = []
    for tok in text.replace(",", " ").split():
        if out and (tok in _OPS or tok[0] in "+*/" or out[-1].endswith(_OPS)):
            out[-1] += tok
        else:
            out.append(tok)
    return out


def parse_vector(text):
    return [parse_number(t) for t in split_exprs(text)]


class Config:
    """configparser wrapper that reports the section and key on bad values."""

    def __init__(self, parser, path):
        self.cp = parser
        self.path = path

    def has(self, section, key):
        return self.cp.has_option(section, key)

    def get(self, section, key, default=None, required=False):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        if required:
            raise ConfigError(f"{self.path}: missing [{section}] {key}")
        return default

    def _typed(self, section, key, default, required, conv, what):
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        try:
            return conv(raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{self.path}: [{section}] {key} = {raw!r} is not {what}: {exc}") \
                from None

    def int(self, section, key, default=None, required=False):
        def conv(raw):
            v = parse_number(raw)
            if v != int(v):
                raise ValueError("not an integer")
            return int(v)
        return self._typed(section, key, default, required, conv, "an integer")

    def float(self, section, key, default=None, required=False):
        return self._typed(section, key, default, required, lambda r: float(parse_number(r)),
                           "a number")

    def bool(self, section, key, default=False):
        raw = self.get(section, key)
        if raw is None:
            return default
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{self.path}: [{section}] {key} = {raw!r} is not a boolean")

    def int_list(self, section, key, required=False):
        raw = self.get(section, key, None, required)
        if raw is None:
            return None
        try:
            return [int(parse_number(t)) for t in raw.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"{self.path}: [{section}] {key}: {exc}") from None

    def canonical(self):
        lines = []
        for sec in sorted(self.cp.sections()):
            for key in sorted(self.cp.options(sec)):
                if (sec, key) not in RUNTIME_KEYS:
                    lines.append(f"{sec}.{key}={self.cp.get(sec, key).strip()}")
        return "\n".join(lines)

    def as_dict(self):
        return {s: dict(self.cp.items(s)) for s in self.cp.sections()}


def load_config(path, overrides=()):
    cp = configparser.ConfigParser(interpolation=None)
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh, source=path)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, value = item.split("=", 1)
        sec, key = lhs.split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key.strip(), value)
    return Config(cp, path or "<overrides>")


# --- building experiment objects from a config ---------------------------------------

def build_group(cfg):
    from .nilgroup import PresentationError, builtin_presentation, load_presentation
    path = cfg.get("group", "file")
    try:
        if path:
            return load_presentation(path)
        return builtin_presentation(cfg.get("group", "builtin", "torus1"))
    except (OSError, PresentationError, ValueError) as exc:
        raise ConfigError(f"[group]: {exc}") from None


def build_sequence(cfg, group):
    """('orbit', g0, x) or ('poly', PolySeq)."""
    from .polyseq import MembershipError, parse_seq
    form = cfg.get("sequence", "form", "orbit")
    try:
        if form == "orbit":
            # exact binary rationals, so orbit blocks can start from exact points
            g0 = group.element([Fraction(v) for v in
                                parse_vector(cfg.get("sequence", "g0", required=True))])
            xs = cfg.get("sequence", "x")
            x = group.element([Fraction(v) for v in parse_vector(xs)]) if xs \
                else group.identity()
            return "orbit", g0, x
        if form == "poly":
            path = cfg.get("sequence", "file")
            if path:
                with open(path) as fh:
                    text = fh.read()
            else:
                text = cfg.get("sequence", "coeffs", required=True).replace(";", "\n")
            return "poly", _parse_seq_exprs(group, text)
    except (OSError, MembershipError, TypeError) as exc:
        raise ConfigError(f"[sequence]: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"[sequence]: {exc}") from None
    raise ConfigError(f"[sequence] form must be orbit or poly, got {form!r}")


def _parse_seq_exprs(group, text):
    """Coefficient lines 'j k : v1 ... vm' with expression entries."""
    from .polyseq import PolySeq
    coeffs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ConfigError(f"sequence line {lineno}: expected 'j k : values'")
        lhs, rhs = line.split(":", 1)
        try:
            j, k = (int(t) for t in lhs.split())
        except ValueError:
            raise ConfigError(f"sequence line {lineno}: bad index pair {lhs!r}") from None
        vals = parse_vector(rhs)
        if len(vals) != group.m:
            raise ConfigError(f"sequence line {lineno}: expected {group.m} values")
        coeffs[(j, k)] = vals
    # exact input throughout: floats become exact binary rationals
    exact = {key: tuple(Fraction(v) for v in vec) for key, vec in coeffs.items()}
    return PolySeq(group, exact)


def build_function(cfg, group):
    from .equidist import bump_function, character_function
    kind = cfg.get("function", "kind", "character")
    if kind == "character":
        vec = [int(v) for v in parse_vector(cfg.get("function", "vector", "1"))]
        vec = vec + [0] * (group.m - len(vec))
        if len(vec) != group.m:
            raise ConfigError("[function] vector is longer than the group dimension")
        return f"e{tuple(vec)}", character_function(vec)
    if kind == "bump":
        k = cfg.int("function", "k", 1)
        return f"bump{k}", bump_function(k)
    if kind == "one":
        return "one", lambda p: np.ones(p.shape[1], dtype=np.complex128)
    if kind == "zero":
        return "zero", lambda p: np.zeros(p.shape[1], dtype=np.complex128)
    raise ConfigError(f"[function] kind {kind!r} is not one of character, bump, one, zero")


def build_weight(cfg, top, threads, cache_dir):
    """(name, array indexed 0..top)."""
    from .sieve import liouville_upto, mobius_upto
    kind = cfg.get("weight", "kind", "mobius")
    if kind == "mobius":
        return kind, mobius_upto(top, threads=threads, cache_dir=cache_dir)
    if kind == "liouville":
        return kind, liouville_upto(top)
    if kind == "zero":
        return kind, np.zeros(top + 1, dtype=np.int8)
    if kind == "random":
        seed = cfg.int("run", "seed", 0)
        rng = np.random.default_rng(seed)
        w = rng.choice(np.array([-1, 1], dtype=np.int8), size=top + 1)
        w[0] = 0
        return kind, w
    if kind == "custom":
        path = cfg.get("weight", "path", required=True)
        try:
            arr = np.load(path) if path.endswith(".npy") else np.loadtxt(path)
        except OSError as exc:
            raise ConfigError(f"[weight] path: {exc}") from None
        return kind, arr
    raise ConfigError(f"[weight] kind {kind!r} is not one of mobius, liouville, zero, random, custom")


# --- output -------------------------------------------------------------------

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, complex):
        return repr(x)
    return str(x)


class Run:
    def __init__(self, args, cfg, subcommand):
        self.args = args
        self.cfg = cfg
        self.subcommand = subcommand
        self.threads = args.threads or cfg.int("run", "threads", 1)
        self.cache_dir = args.cache_dir or cfg.get("run", "cache_dir") or ".nilcorr-cache"
        self.seed = args.seed if args.seed is not None else cfg.int("run", "seed", 0)
        self.config_hash = hashlib.sha256(
            (cfg.canonical() + f"\nseed={self.seed}\ncommand={subcommand}").encode()).hexdigest()
        self.experiment_id = self.config_hash[:12]
        self.out = args.out or cfg.get("run", "out")
        if self.out and os.path.dirname(self.out):
            os.makedirs(os.path.dirname(self.out), exist_ok=True)
        self.extra = {}

    def write_csv(self, header, rows):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([self.experiment_id] + [_fmt(v) for v in r])
        text = buf.getvalue()
        if self.out:
            with open(self.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)

    def provenance(self, status, seconds):
        import scipy
        from . import __version__
        rec = {
            "experiment_id": self.experiment_id,
            "config_hash": self.config_hash,
            "subcommand": self.subcommand,
            "status": status,
            "seed": self.seed,
            "threads": self.threads,
            "seconds": seconds,
            "versions": {"nilcorr": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "config": self.cfg.as_dict(),
            "extra": self.extra,
        }
        path = (self.out or "nilcorr-run") + ".jsonl"
        with open(path, "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True, default=str) + "\n")


# --- subcommands ------------------------------------------------------------------

def cmd_sieve(run):
    from .sieve import MobiusTable, mobius_range
    cfg = run.cfg
    N = cfg.int("params", "N", required=True)
    H = cfg.int("params", "H", 0)
    hi = N + H + 1
    path = os.path.join(run.cache_dir, f"mu_1_{hi}.mut")
    cached = os.path.exists(path)
    log.info("%s cached table %s", "reusing" if cached else "building", path)
    mu = mobius_range(1, hi, threads=run.threads, cache_dir=run.cache_dir)
    digest = hashlib.sha256(MobiusTable.from_values(1, hi, mu).to_bytes()).hexdigest()
    mertens = int(mu.sum(dtype=np.int64))
    run.extra.update(cached=cached, table=path, sha256=digest)
    # cache reuse goes to the log and provenance only, so the CSV stays identical
    run.write_csv(["experiment_id", "lo", "hi", "mertens", "sha256"],
                  [[1, hi, mertens, digest]])


def _dense_params(cfg, H):
    from .correlate import dense_parameters
    eps, P1, Q1 = dense_parameters(H, cfg.float("params", "eps"))
    P1 = cfg.float("params", "P1", P1)
    Q1 = cfg.float("params", "Q1", Q1)
    return eps, P1, Q1


def cmd_corr(run):
    from .correlate import bilinear_trace, correlation
    from .factorize import factorize
    from .polyseq import from_orbit
    from .sieve import dense_set
    cfg = run.cfg
    group = build_group(cfg)
    seq = build_sequence(cfg, group)
    fname, F = build_function(cfg, group)
    H = cfg.int("params", "H", required=True)
    N = cfg.int("params", "N", required=True)
    if not 1 <= H <= N:
        raise ConfigError("[params] need 1 <= H <= N")
    wname, w = build_weight(cfg, N + H, run.threads, run.cache_dir)
    restricted = cfg.bool("params", "restricted")
    eps, P1, Q1 = _dense_params(cfg, H)
    t0 = time.perf_counter()
    S = None
    if restricted:
        S = dense_set(math.floor(P1), math.floor(Q1), N + H,
                      r_max_override=cfg.int("params", "r_max_override", 1)).mask
    if seq[0] == "orbit":
        rep = correlation(w, F, seq[1], H, N, x=seq[2], S=S, threads=run.threads)
    else:
        rep = correlation(w, F, seq[1], H, N, S=S, threads=run.threads)
    W = q = defect = qerr = None
    sample = cfg.int_list("params", "sample_n")
    if sample:
        g = seq[1] if seq[0] == "poly" else from_orbit(seq[1], seq[2])
        fact = factorize(g, N, H)
        wt = w if S is None else w * S[:len(w)]
        tr = bilinear_trace(fact, g, F, wt, H, sample, W=cfg.int("params", "W"), seed=run.seed)
        W, q, defect, qerr = tr.W, tr.q, tr.defect, tr.qmc_err
        run.extra.update(major=str(tr.major), minor=str(tr.minor), flagged=tr.flagged)
    secs = time.perf_counter() - t0
    run.extra.update(function=fname)
    run.write_csv(CORR_HEADER, [[H, N, eps, P1, Q1, W, q, wname, restricted, rep.value,
                                 defect, qerr, round(secs, 3)]])


def cmd_scan(run):
    from .correlate import decay_scan
    cfg = run.cfg
    group = build_group(cfg)
    seq = build_sequence(cfg, group)
    if seq[0] != "orbit":
        raise ConfigError("scan needs an orbit sequence")
    _, F = build_function(cfg, group)
    H_list = cfg.int_list("params", "H_list", required=True)
    N = cfg.int("params", "N", required=True)
    wname, w = build_weight(cfg, N + max(H_list), run.threads, run.cache_dir)
    rows = decay_scan(seq[1], F, H_list, N, w, x=seq[2], eps=cfg.float("params", "eps"),
                      threads=run.threads, restricted=cfg.bool("params", "restricted", True))
    out = []
    for r in rows:
        out.append([r.H, r.N, r.eps, r.P1, r.Q1, None, None, wname, False, r.raw, None, None,
                    round(r.seconds, 3)])
        if not math.isnan(r.restricted):
            out.append([r.H, r.N, r.eps, r.P1, r.Q1, None, None, wname, True, r.restricted,
                        None, None, round(r.seconds, 3)])
    run.extra["reference"] = {r.H: r.reference for r in rows}
    run.write_csv(CORR_HEADER, out)


def cmd_factor(run):
    from .factorize import factorize, format_factorization, verify_factorization
    from .polyseq import from_orbit
    cfg = run.cfg
    group = build_group(cfg)
    seq = build_sequence(cfg, group)
    g = seq[1] if seq[0] == "poly" else from_orbit(seq[1], seq[2])
    N = cfg.int("params", "N", required=True)
    H = cfg.int("params", "H", required=True)
    res = factorize(g, N, H, M0=cfg.int("params", "M0", 10), W0=cfg.int("params", "W0", 10))
    rep = verify_factorization(res, g, N, H, seed=run.seed,
                               smooth_samples=cfg.int("params", "smooth_samples", 10 ** 5))
    if run.out:
        with open(run.out + ".fact", "w") as fh:
            fh.write(format_factorization(res))
    run.extra.update(characters=[list(e) for e in res.characters],
                     details={k: str(v) for k, v in rep.details.items()})
    run.write_csv(["experiment_id", "N", "H", "W", "q", "check", "passed"],
                  [[N, H, res.W, res.q, name, ok] for name, ok in rep.checks.items()])
    if not rep.passed:
        raise RuntimeError("factorization verification failed: "
                           + ", ".join(k for k, v in rep.checks.items() if not v))


def cmd_equidist(run):
    from .equidist import (default_bank, obstruction_search, obstruction_witness,
                           total_discrepancy)
    from .polyseq import from_orbit, row
    cfg = run.cfg
    group = build_group(cfg)
    seq = build_sequence(cfg, group)
    g2 = seq[1] if seq[0] == "poly" else from_orbit(seq[1], seq[2])
    g = row(g2, 0) if seq[0] == "orbit" else g2
    if any(k for _, k in g.coeffs):
        raise ConfigError("equidist needs a one-parameter sequence")
    N = cfg.int("params", "N", required=True)
    M = cfg.int("params", "M", 10)
    delta = cfg.float("params", "delta", 0.1)
    ob = obstruction_search(g, N, M)
    wl = wm = None
    if ob is not None and float(ob.norm) <= N / (8 * math.pi * M):
        wit = obstruction_witness(ob.eta, g, N)
        wl, wm = wit.progression.length, abs(wit.mean)
    td = total_discrepancy(g, N, delta, default_bank(group, cfg.int("params", "bank_bound", 2),
                                                      seed=run.seed))
    eta = " ".join(str(x) for x in ob.eta.vector) if ob else None
    norm = float(ob.norm) if ob else None
    run.write_csv(["experiment_id", "N", "M", "eta", "norm", "witness_length", "witness_mean",
                   "delta", "discrepancy", "discrepancy_function"],
                  [[N, M, eta, norm, wl, wm, delta, td.value, td.function]])


def cmd_pretentious(run):
    from .pretentious import distance_sq, liouville, m2_value, m_value, mobius
    cfg = run.cfg
    X_list = cfg.int_list("params", "X_list", required=True)
    Y = cfg.int("params", "Y", 1)
    kind = cfg.get("weight", "kind", "mobius")
    top = max(X_list)
    if kind == "mobius":
        beta = mobius(top)
    elif kind == "liouville":
        beta = liouville(top)
    else:
        raise ConfigError("pretentious supports weight kind mobius or liouville")
    one = np.ones(top + 1, dtype=np.int64)
    rows = []
    for X in X_list:
        d2 = distance_sq(beta[:X + 1], one[:X + 1], X)
        t, M = m_value(beta[:X + 1], X)
        m2 = m2_value(beta[:X + 1], X, Y)
        rows.append([X, float(d2), M, t, Y, m2.value, m2.modulus, m2.index, m2.t])
    run.write_csv(["experiment_id", "X", "D2_to_one", "M", "t", "Y", "M2", "modulus",
                   "character", "t2"], rows)


def cmd_densitycheck(run):
    from .sieve import dense_set
    cfg = run.cfg
    N = cfg.int("params", "N", required=True)
    pairs = cfg.get("params", "pairs", required=True)
    override = cfg.int("params", "r_max_override")
    rows = []
    for item in pairs.replace(",", " ").split():
        try:
            P1, Q1 = (int(parse_number(t)) for t in item.split(":"))
        except ValueError:
            raise ConfigError(f"[params] pairs entry {item!r} is not P1:Q1") from None
        ds = dense_set(P1, Q1, N, r_max_override=override)
        ratio = ds.deficit / ds.bound
        rows.append([N, P1, Q1, ds.r_plus, ds.size, ds.deficit, ds.bound, ratio])
    run.write_csv(["experiment_id", "N", "P1", "Q1", "r_plus", "size", "deficit",
                   "log_ratio", "deficit_over_log_ratio"], rows)


COMMANDS = {
    "sieve": cmd_sieve, "corr": cmd_corr, "scan": cmd_scan, "factor": cmd_factor,
    "equidist": cmd_equidist, "pretentious": cmd_pretentious, "densitycheck": cmd_densitycheck,
}


def make_parser():
    p = argparse.ArgumentParser(prog="nilcorr", description="Nilsequence correlation experiments")
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--config", help="INI config file")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("--cache-dir", help="directory for cached Mobius tables")
    p.add_argument("--out", help="CSV output path (provenance goes to OUT.jsonl)")
    p.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set section.key=value, may repeat")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    run = None
    try:
        cfg = load_config(args.config, args.override)
        run = Run(args, cfg, args.subcommand)
        COMMANDS[args.subcommand](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any failure of the run itself
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if run is not None:
            run.provenance("error", time.perf_counter() - t0)
        return 1
    run.provenance("ok", time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
