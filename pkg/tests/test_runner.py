"""Experiment runner: artifacts, manifests, determinism, error wrapping."""

import hashlib
import json
import math
import os

import numpy as np
import pytest

from conftest import GOLDEN_OMEGA
from latticekg.errors import RunError
from latticekg.harness.config import parse_config
from latticekg.harness.runner import _jsonable, run

SPECTRUM_TEXT = """
[model]
potential = zero

[lattice]
n = 1

[run]
kind = spectrum
seed = 7

[output]
formats = csv, json, bin
"""

ROTATION_TEXT = """
[model]
potential = cos
lam = 0.05
omega = %.17g

[lattice]
n = 8

[run]
kind = rotation
seed = 7
e_min = -1.0
e_max = 1.0
e_points = 5
n_iter = 2000
""" % GOLDEN_OMEGA


def sha256_of(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def test_spectrum_artifacts(tmp_path):
    report = run(parse_config(SPECTRUM_TEXT), out_dir=str(tmp_path))
    assert report.all_passed
    names = [c["name"] for c in report.checks]
    assert "eigenvalue_count" in names and "eigenvalues_sorted" in names

    lines = (tmp_path / "eigenvalues.csv").read_text().strip().splitlines()
    assert lines[0] == "index,eigenvalue"
    vals = [float(line.split(",")[1]) for line in lines[1:]]
    np.testing.assert_allclose(vals, [-math.sqrt(2), 0.0, math.sqrt(2)], atol=1e-9)
    binary = np.fromfile(tmp_path / "eigenvalues.bin", dtype="<f8")
    np.testing.assert_array_equal(binary, vals)  # repr round-trips exactly

    doc = json.loads((tmp_path / "run_report.json").read_text())
    assert set(doc) == {"config", "version", "wall_time_s", "checks", "manifest"}
    listed = {entry["path"] for entry in doc["manifest"]}
    assert listed == {"eigenvalues.csv", "eigenvalues.bin"}
    for entry in doc["manifest"]:
        assert entry["sha256"] == sha256_of(str(tmp_path / entry["path"]))
    assert parse_config(doc["config"]) == parse_config(SPECTRUM_TEXT)


def test_content_hash_is_reproducible(tmp_path):
    r1 = run(parse_config(SPECTRUM_TEXT), out_dir=str(tmp_path / "a"))
    r2 = run(parse_config(SPECTRUM_TEXT), out_dir=str(tmp_path / "b"))
    assert r1.content_hash() == r2.content_hash()
    # the hash covers everything except the wall time
    body = r1.to_dict()
    del body["wall_time_s"]
    blob = json.dumps(_jsonable(body), sort_keys=True, separators=(",", ":"))
    assert r1.content_hash() == hashlib.sha256(blob.encode()).hexdigest()


def test_worker_pool_keeps_results_bit_identical(tmp_path):
    serial = run(
        parse_config(ROTATION_TEXT), out_dir=str(tmp_path / "s"), workers=1,
        fixed_order=True,
    )
    pooled = run(parse_config(ROTATION_TEXT), out_dir=str(tmp_path / "p"), workers=3)
    assert serial.content_hash() == pooled.content_hash()
    assert (tmp_path / "s" / "rotation.csv").read_text() == (
        tmp_path / "p" / "rotation.csv"
    ).read_text()


def test_module_errors_are_wrapped(tmp_path):
    text = """
[model]
potential = cos
lam = 5.0
omega = %.17g
m = 0.1

[lattice]
n = 30

[run]
kind = balakrishnan
seed = 1
""" % GOLDEN_OMEGA
    with pytest.raises(RunError) as err:
        run(parse_config(text), out_dir=str(tmp_path))
    assert err.value.kind == "balakrishnan"
    assert len(err.value.config_hash) == 64
    assert "positive definite" in str(err.value)


def test_vdc_probe_artifacts(tmp_path):
    text = """
[model]
potential = zero

[lattice]
n = 1

[run]
kind = vdc-probe
seed = 2
t_min = 100
t_max = 1000
t_points = 8
"""
    report = run(parse_config(text), out_dir=str(tmp_path))
    assert report.all_passed
    flat = [c for c in report.checks if c["name"] == "scaled_table_flat"][0]
    assert flat["measured"] == pytest.approx(1.121788277449941, rel=1e-9)
    lines = (tmp_path / "vdc_probe.csv").read_text().strip().splitlines()
    assert lines[0] == "t,sup_abs_K,scaled_value,n_argmax"
    assert len(lines) == 9


def test_gaps_artifacts(tmp_path):
    text = """
[model]
potential = cos
lam = 0.5
omega = %.17g
theta_grid = 2

[lattice]
n = 64

[run]
kind = gaps
seed = 5
e_min = -2.6
e_max = 2.6
e_points = 105
n_iter = 20000

[output]
formats = csv, json
""" % GOLDEN_OMEGA
    report = run(parse_config(text), out_dir=str(tmp_path))
    names = {c["name"]: c for c in report.checks}
    assert names["gaps_found"]["pass"]

    gaps = json.loads((tmp_path / "gaps.json").read_text())
    assert gaps and all(
        set(g) >= {"e_lo", "e_hi", "rho_plateau", "k", "residual", "labeled"}
        for g in gaps
    )
    assert any(any(ki != 0 for ki in g["k"]) for g in gaps)
    header = (tmp_path / "scan.csv").read_text().splitlines()[0]
    assert header == "E,rho,rho_err,lyapunov,count_below,is_gap,gap_k"
