import csv
import json
import logging
import os
from pathlib import Path

import pytest

from nilcorr.cli import (ConfigError, load_config, main, parse_number, parse_vector,
                         split_exprs)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def provenance(path):
    return [json.loads(l) for l in Path(str(path) + ".jsonl").read_text().splitlines()]


def run(tmp_path, sub, config, *extra, name="out.csv"):
    out = tmp_path / name
    argv = [sub, "--config", str(CONFIGS / config), "--out", str(out),
            "--cache-dir", str(tmp_path / "cache"), *extra]
    return main(argv), out


def test_parse_number():
    from fractions import Fraction as Fr
    assert parse_number("1/2 + 1/10**6") == Fr(1, 2) + Fr(1, 10 ** 6)
    assert parse_number("phi") == pytest.approx((1 + 5 ** 0.5) / 2)
    assert parse_number("sqrt(2)") == pytest.approx(2 ** 0.5)
    with pytest.raises(ConfigError):
        parse_number("__import__('os')")
    with pytest.raises(ConfigError):
        parse_number("1 +")
    assert split_exprs("1/2 + 1  sqrt(2) 0") == ["1/2+1", "sqrt(2)", "0"]
    assert len(parse_vector("1/3 sqrt(3) 0")) == 3


def test_overrides():
    cfg = load_config(str(CONFIGS / "torus_golden.ini"), ["params.N=500", "run.seed=3"])
    assert cfg.int("params", "N") == 500 and cfg.int("run", "seed") == 3
    with pytest.raises(ConfigError):
        load_config(str(CONFIGS / "torus_golden.ini"), ["no_section_key"])


def test_corr_value_in_range(tmp_path):
    code, out = run(tmp_path, "corr", "torus_golden.ini", "--override", "params.N=20000")
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 1
    assert list(rows[0]) == ["experiment_id", "H", "N", "eps", "P1", "Q1", "W", "q", "weight",
                             "restricted", "value", "defect", "qmc_err", "seconds"]
    assert 0 <= float(rows[0]["value"]) <= 1
    rec = provenance(out)[-1]
    assert rec["status"] == "ok" and rec["config_hash"].startswith(rows[0]["experiment_id"])
    assert {"numpy", "scipy", "python", "nilcorr"} <= set(rec["versions"])


def test_corr_csv_reproducible(tmp_path):
    a = run(tmp_path, "corr", "torus_golden.ini", "--override", "params.N=20000", name="a.csv")[1]
    b = run(tmp_path, "corr", "torus_golden.ini", "--override", "params.N=20000",
            "--threads", "4", name="b.csv")[1]
    ra, rb = read_csv(a), read_csv(b)
    for r in ra + rb:
        r.pop("seconds")
    assert ra == rb


def test_sieve_reuses_cache(tmp_path, caplog):
    caplog.set_level(logging.INFO)
    over = ["--override", "params.N=200000", "-v"]
    code1, a = run(tmp_path, "sieve", "torus_golden.ini", *over, name="a.csv")
    cache = tmp_path / "cache"
    files = sorted(os.listdir(cache))
    first = {f: (cache / f).read_bytes() for f in files}
    code2, b = run(tmp_path, "sieve", "torus_golden.ini", *over, name="b.csv")
    assert code1 == code2 == 0
    assert sorted(os.listdir(cache)) == files
    assert all((cache / f).read_bytes() == data for f, data in first.items())
    assert a.read_bytes() == b.read_bytes()
    assert provenance(a)[-1]["extra"]["cached"] is False
    assert provenance(b)[-1]["extra"]["cached"] is True
    assert any("reusing" in r.getMessage() for r in caplog.records)


def test_factor_passes(tmp_path):
    code, out = run(tmp_path, "factor", "factor_torus.ini")
    assert code == 0
    rows = read_csv(out)
    assert rows and all(r["passed"] == "true" for r in rows)
    assert Path(str(out) + ".fact").exists()


def test_equidist_and_density(tmp_path):
    code, out = run(tmp_path, "equidist", "equidist_sqrt2.ini")
    assert code == 0
    row = read_csv(out)[0]
    assert row["eta"] == "5" and float(row["norm"]) == pytest.approx(710.678, rel=1e-5)
    code, out = run(tmp_path, "densitycheck", "density.ini", name="d.csv")
    assert code == 0 and read_csv(out)


def test_exit_codes(tmp_path):
    assert main(["corr", "--config", str(tmp_path / "missing.ini")]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[params]\nH = banana\n")
    assert main(["corr", "--config", str(bad), "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["nosuch"]) == 2
    assert main(["corr", "--seed", "-1"]) == 2
    # valid config, failing run: W^2 exceeds H so the partition is degenerate
    code, out = run(tmp_path, "corr", "torus_golden.ini", "--override", "params.N=1000",
                    "--override", "params.sample_n=1 2", "--override", "params.W=100",
                    name="fail.csv")
    assert code == 1
    assert provenance(out)[-1]["status"] == "error"
