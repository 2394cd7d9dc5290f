"""Smoke tests for the vreglab python module."""

import json

import pytest

import vreglab


def test_predicted_delta_closed_forms():
    rep = vreglab.predicted_delta(n=2, p=3, q=3, alpha=1)
    assert rep["delta_predicted"] == pytest.approx(0.75, abs=1e-12)
    assert rep["q_upper_bounds"]["basic"] == pytest.approx(4.5)

    strong = vreglab.predicted_delta(n=2, p=4, q=4, alpha=0.5, beta=2.0)
    assert strong["delta_predicted"] == pytest.approx(0.5, abs=1e-12)


def test_iteration_matches_prediction():
    tr = vreglab.iterate_deltas(n=2, p=2, q=2, alpha=1, k_max=120)
    assert tr["applicable"]
    assert tr["deltas"][:3] == pytest.approx([0.5, 0.75, 0.875])
    assert tr["limit"] == pytest.approx(1.0, abs=1e-9)
    assert tr["kappa_infinity"] == pytest.approx(0.5)


def test_v_transform():
    assert vreglab.v_transform(2.0, 7.0, [0.3, -1.2]) == pytest.approx([0.3, -1.2])
    out = vreglab.v_transform(4.0, 0.0, [2.0, 0.0])
    assert out == pytest.approx([4.0, 0.0])
    assert vreglab.v_norm_sq(3.0, 0.0, [2.0]) == pytest.approx(8.0)


def test_solve_preset_benchmark():
    rep = vreglab.solve_preset("pLaplace1d-p3")
    assert rep["converged"]
    assert rep["el_residual"] <= 1e-8

    n = rep["grid_res"][0]
    values = rep["values"]
    lo, hi = rep["grid_lo"][0], rep["grid_hi"][0]
    h = (hi - lo) / (n - 1)

    def exact(x):
        return (2.0 / 3.0) * (0.5 ** 1.5 - abs(x - 0.5) ** 1.5)

    err = max(abs(values[i] - exact(lo + i * h)) for i in range(n))
    assert err <= 2e-3


def test_decay_fit_power_slope():
    n = 4097
    xs = [-1.0 + 2.0 * i / (n - 1) for i in range(n)]
    est = vreglab.decay_fit_1d([abs(x) ** 0.25 for x in xs], -1.0, 1.0)
    assert est["slope"] == pytest.approx(0.75, abs=0.07)
    assert not est["saturated"]


def test_run_experiment_artifacts(tmp_path):
    cfg = "[experiment]\nkind = exponents\nseed = 1\n[scenario]\nn = 2\np = 3\nq = 3\nalpha = 1\n"
    res = vreglab.run_experiment(cfg, str(tmp_path))
    assert res["exit_code"] == 0
    assert "0.75" in res["table"]
    report = json.loads((tmp_path / "exponents.json").read_text())
    assert report["delta_predicted"] == pytest.approx(0.75)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert any(f["name"] == "exponents.json" for f in manifest["files"])


def test_run_experiment_config_error(tmp_path):
    res = vreglab.run_experiment("", str(tmp_path))
    assert res["exit_code"] == 2
    assert "kind" in res["message"]


def test_verify_growth():
    rep = vreglab.verify_growth_p_energy(p=3, q=3, mu=0.5, nu=0.5, Lambda=2.0)
    assert rep["all_pass"]
    names = {c["name"] for c in rep["checks"]}
    assert {"H1", "H2", "H3", "H4"} <= names
