import json
import os

import numpy as np
import pytest

from torwalk.cli import main
from torwalk.errors import ConfigError
from torwalk.runner import RunConfig, pseudocritical_z, run, verify_manifest
from torwalk.tableio import read_csv, write_csv


def test_pseudocritical_z_values():
    assert pseudocritical_z(0.11314084, 0.1, 1.0, 10) == pytest.approx(0.10314084, abs=1e-12)
    assert pseudocritical_z(0.5, 0.0, 2.0, 7) == 0.5
    # lambda -> infinity approaches z_c
    assert pseudocritical_z(0.5, 0.1, 50.0, 3) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ConfigError):
        pseudocritical_z(0.1, 0.5, 1.0, 2)


def test_config_validation_names_offending_key():
    with pytest.raises(ConfigError, match="model"):
        RunConfig({"model": "zeta"})
    with pytest.raises(ConfigError, match="unknown config keys.*frobnicate"):
        RunConfig({"model": "verify", "frobnicate": 1})
    with pytest.raises(ConfigError, match="'d'"):
        RunConfig({"model": "saw", "L": 5, "z": 0.1, "steps": 10})
    with pytest.raises(ConfigError, match="law"):
        RunConfig({"model": "exact-rlrw", "d": 2, "L": 4})
    with pytest.raises(ConfigError, match="exactly one of"):
        RunConfig({"model": "saw", "d": 2, "L": 5, "steps": 10})
    with pytest.raises(ConfigError, match="steps"):
        RunConfig({"model": "ising", "d": 2, "L": 4, "z": 0.3})
    with pytest.raises(ConfigError, match="samples"):
        RunConfig({"model": "rllerw", "d": 2, "L": 5, "law": {"variant": "geometric", "mean": 3}})


def test_exact_rlrw_run_identity(tmp_path):
    cfg = RunConfig(
        {
            "model": "exact-rlrw",
            "d": 3,
            "L": 9,
            "law": {"variant": "geometric", "mu": 2.0},
            "out_dir": str(tmp_path / "ex"),
        }
    )
    manifest = run(cfg)
    assert "exact-rlrw_L0009_field.csv" in manifest["files"]
    _, rows = read_csv(str(tmp_path / "ex" / "exact-rlrw_L0009_field.csv"))
    total = sum(r["g"] for r in rows)
    bound = max(r["stderr"] for r in rows)
    assert abs(total - 82.0) <= bound + 1e-9  # mean L^2 = 81, plus one
    assert verify_manifest(str(tmp_path / "ex"))


def test_run_determinism_and_replica_extension(tmp_path):
    base = {
        "model": "saw",
        "d": 2,
        "L": [4, 5],
        "z": 0.15,
        "steps": 20_000,
        "replicas": 2,
        "seed": 99,
    }
    m1 = run(RunConfig({**base, "out_dir": str(tmp_path / "a")}))
    m2 = run(RunConfig({**base, "out_dir": str(tmp_path / "b")}))
    assert m1["files"] == m2["files"]  # byte-identical CSV bodies
    m3 = run(RunConfig({**base, "replicas": 4, "out_dir": str(tmp_path / "c")}))
    seeds2 = m1["info"]["runs"][0]["replica_seeds"]
    seeds4 = m3["info"]["runs"][0]["replica_seeds"]
    assert seeds4[:2] == seeds2  # replica seeds never depend on the count


def test_rllerw_run_writes_profiles(tmp_path):
    cfg = RunConfig(
        {
            "model": "rllerw",
            "d": 3,
            "L": 5,
            "law": {"variant": "geometric", "mean": 4.0},
            "samples": 2000,
            "replicas": 2,
            "seed": 5,
            "out_dir": str(tmp_path / "lerw"),
        }
    )
    manifest = run(cfg)
    assert "rllerw_L0005_profile.csv" in manifest["files"]
    _, rows = read_csv(str(tmp_path / "lerw" / "scalars.csv"))
    assert rows[0]["L"] == 5.0
    assert rows[0]["chi"] > 1.0


def test_verify_run(tmp_path):
    cfg = RunConfig({"model": "verify", "out_dir": str(tmp_path / "v")})
    manifest = run(cfg)
    assert manifest["info"]["all_passed"] is True
    report = json.load(open(tmp_path / "v" / "verify.json"))
    assert report["all_passed"]
    assert all(c["ok"] for c in report["tail_limit_closed_form"])


def test_analyze_run(tmp_path):
    rows = []
    for L in (8, 12, 16, 24, 32):
        chi = 1.3 * L**2.0 + 0.7
        rows.append((L, 0.2, float("nan"), chi, 0.01 * chi, 0.0, 1.0, 1.0))
    path = tmp_path / "scalars.csv"
    write_csv(
        str(path),
        ["L", "z", "lambda", "chi", "chi_err", "meanN", "meanN_err", "tau_int"],
        rows,
    )
    cfg = RunConfig(
        {"model": "analyze", "inputs": [str(path)], "out_dir": str(tmp_path / "fit")}
    )
    manifest = run(cfg)
    fit = json.load(open(tmp_path / "fit" / "fit.json"))
    assert fit["b"] == pytest.approx(2.0, abs=0.05)
    assert fit["y_column"] == "chi"


def test_collapse_run(tmp_path):
    d, mu = 5, 2.5
    kappa = (d - mu) / (d - 2.0)
    for L in (16, 32):
        r = np.arange(1.0, 20.0)
        y = r / L**kappa
        g = r ** (2.0 - d) * (0.1 + 2.0 * y**3)
        write_csv(
            str(tmp_path / f"syn_L{L:04d}_profile.csv"),
            ["r", "g", "stderr", "n_sites_in_bin"],
            [(r[i], g[i], 1e-3 * g[i], 1) for i in range(len(r))],
        )
    cfg = RunConfig(
        {
            "model": "collapse",
            "d": d,
            "mu": mu,
            "inputs": [str(tmp_path / "syn_L*_profile.csv")],
            "out_dir": str(tmp_path / "col"),
        }
    )
    manifest = run(cfg)
    quality = json.load(open(tmp_path / "col" / "collapse_quality.json"))
    (pair,) = quality.values()
    assert pair["ratio"] < 2.0
    _, rows = read_csv(str(tmp_path / "col" / "collapse.csv"))
    assert {r["L"] for r in rows} == {16.0, 32.0}


def test_cli_exit_codes(tmp_path):
    assert main(["verify", "--out-dir", str(tmp_path / "v")]) == 0
    # unknown model in config file
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": "nope"}))
    assert main(["simulate", "--config", str(bad)]) == 1
    # simulate without model
    assert main(["simulate", "--out-dir", str(tmp_path / "x")]) == 1


def test_cli_simulate_and_analyze_roundtrip(tmp_path):
    out = tmp_path / "saw"
    rc = main(
        [
            "simulate", "--model", "saw", "--d", "2", "--L", "4,5,6,7",
            "--z", "0.2", "--steps", "20000", "--replicas", "2",
            "--seed", "3", "--out-dir", str(out),
        ]
    )
    assert rc == 0
    rc = main(
        [
            "analyze", "--inputs", str(out / "scalars.csv"),
            "--y-column", "chi", "--out-dir", str(tmp_path / "fit"),
        ]
    )
    assert rc == 0
    assert os.path.exists(tmp_path / "fit" / "fit.json")


def test_cli_exact_with_law_flag(tmp_path):
    rc = main(
        [
            "exact", "--d", "2", "--L", "5",
            "--law", '{"variant": "deterministic", "n0": 3}',
            "--out-dir", str(tmp_path / "e"),
        ]
    )
    assert rc == 0
    _, rows = read_csv(str(tmp_path / "e" / "exact-rlrw_L0005_field.csv"))
    assert sum(r["g"] for r in rows) == pytest.approx(4.0, abs=1e-12)


def test_resource_abort_writes_partial_manifest(tmp_path):
    from torwalk.errors import ResourceLimit

    cfg = RunConfig(
        {
            "model": "exact-rlrw",
            "d": 5,
            "L": [4, 40],  # second size exceeds the dense-field budget
            "law": {"variant": "deterministic", "n0": 2},
            "out_dir": str(tmp_path / "abort"),
        }
    )
    with pytest.raises(ResourceLimit):
        run(cfg)
    manifest = json.load(open(tmp_path / "abort" / "manifest.json"))
    assert manifest["info"]["aborted"] == "resource limit"
    assert "exact-rlrw_L0004_field.csv" in manifest["files"]
