import json
import math
from pathlib import Path

import numpy as np
import pytest

import pdmp_lab as pl

CONFIGS = Path(__file__).resolve().parents[2] / "configs"


def test_registry():
    assert pl.model_names() == ["contracting-lines", "dirac-trap", "planar-rotor"]
    assert pl.model_params("dirac-trap") == {"lambda": 1.0}
    model = pl.Model("contracting-lines", {"theta": "interval", "lambda": 2.0})
    assert model.rate == 2.0
    assert model.dim == 1 and model.modes == 2
    assert "contracting-lines" in repr(model)


def test_bad_parameters_raise_value_error():
    with pytest.raises(ValueError, match="lambda must be > 0"):
        pl.Model("dirac-trap", {"lambda": -1.0})
    with pytest.raises(ValueError):
        pl.Model("no-such-model")


def test_flow_matches_closed_form():
    model = pl.Model("contracting-lines")
    y = model.flow(2, 0.3, np.array([0.5]))
    assert y[0] == pytest.approx(math.exp(-0.3) * (0.5 - 2.0) + 2.0, rel=1e-14)


def test_simulate_shapes_and_determinism():
    model = pl.Model("planar-rotor")
    a = pl.simulate(model, n_traj=5, n_steps=7, seed=3)
    b = pl.simulate(model, n_traj=5, n_steps=7, seed=3, workers=4)
    assert a["y"].shape == (5, 8, 2)
    assert a["tau"].shape == (5, 8)
    assert a["theta"].shape == (5, 7)
    for key in a:
        np.testing.assert_array_equal(a[key], b[key])
    assert np.all(np.diff(a["tau"], axis=1) > 0)


def test_dirac_chain_mean():
    model = pl.Model("dirac-trap")
    out = pl.simulate(model, y0=np.array([1.0]), n_traj=20000, n_steps=10, seed=1)
    assert abs(out["y"][:, -1, 0].mean() - 0.5**10) < 3e-4


def test_invariant_dirac_is_atomic():
    mu = pl.sample_invariant(pl.Model("dirac-trap"), n_traj=100, burn_in=200, n_keep=10, seed=2)
    assert len(mu) == 1000
    assert np.all(np.abs(mu.y) < 1e-40)
    report = pl.classify_continuity(mu)
    assert report["evidence"]["verdict"] == "atomic-singular"


def test_fm_distance_between_diracs():
    mu = pl.Measure(np.array([[0.0]]), np.array([1]))
    nu = pl.Measure(np.array([[0.25]]), np.array([1]))
    far = pl.Measure(np.array([[0.25]]), np.array([2]))
    assert pl.fm_distance(mu, nu) == pytest.approx(0.25, abs=1e-15)
    assert pl.fm_distance(mu, far) == pytest.approx(1.0, abs=1e-15)
    assert pl.fm_distance(mu, far, c=0.5) == pytest.approx(0.75, abs=1e-15)


def test_measure_round_trip():
    y = np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
    mu = pl.Measure(y, np.array([1, 2, 1]), np.array([0.2, 0.3, 0.5]))
    np.testing.assert_array_equal(mu.y, y)
    np.testing.assert_array_equal(mu.mode, [1, 2, 1])
    np.testing.assert_array_equal(mu.weight, [0.2, 0.3, 0.5])
    with pytest.raises(ValueError):
        pl.Measure(y, np.array([1, 2]))


def test_rank_on_contracting_lines():
    model = pl.Model("contracting-lines")
    r = pl.check_rank(model, np.array([1.5]), 1, [1], [0.1], [1.0])
    assert r["verdict"] == "pass"
    assert r["evidence"]["rank"] == 1
    expected = -math.exp(-0.1) * 0.75
    assert r["jacobian"][0, 0] == pytest.approx(expected, rel=1e-12)
    fd = pl.check_rank(model, np.array([1.5]), 1, [1], [0.1], [1.0], method="fd")
    assert fd["jacobian"][0, 0] == pytest.approx(expected, rel=1e-6)


def test_rank_fails_at_dirac_fixed_point():
    r = pl.check_rank(pl.Model("dirac-trap"), np.array([0.0]), 1, [1], [0.1], [1.0])
    assert r["verdict"] == "fail"
    assert r["evidence"]["rank"] == 0


def test_positivity_and_broken_switching():
    good = pl.check_positivity(pl.Model("contracting-lines"), np.array([1.5]), 1, [1], [0.1], [1.0])
    bad = pl.check_positivity(pl.Model("contracting-lines", {"pi_stay": 1.0}), np.array([1.5]), 1, [1], [0.1], [1.0])
    assert good["verdict"] == "pass"
    assert bad["verdict"] == "fail"


def test_hypotheses():
    model = pl.Model("contracting-lines")
    report = pl.check_hypotheses(model, n_pairs=2000, seed=4)
    assert report["overall"] == "pass"
    assert report["checks"][0]["name"] == "contraction-balance"
    assert report["checks"][0]["evidence"]["value"] == 0.0
    worse = pl.check_hypotheses(model, n_pairs=2000, seed=4, constants={"L_w": 2.2})
    assert worse["overall"] == "fail"


def test_anchors():
    anchors = pl.suggest_anchors(pl.Model("contracting-lines"))
    assert any(abs(a["y_hat"][0] - 1.5) < 1e-9 and a["mode"] == 1 for a in anchors)


def test_correspondence_on_dirac_trap():
    model = pl.Model("dirac-trap")
    mu = pl.sample_invariant(model, n_traj=100, n_keep=10, seed=5)
    r = pl.check_correspondence(model, mu, n_boot=2, seed=6)
    assert r["d_WG"] < 1e-12


def test_pushforward_keeps_size():
    model = pl.Model("planar-rotor")
    mu = pl.sample_invariant(model, n_traj=10, burn_in=10, n_keep=5, seed=7)
    for op in ("P", "G", "W"):
        assert len(pl.pushforward(op, model, mu, seed=8)) == len(mu)


def test_run_cli(tmp_path):
    code, out, err = pl.run_cli("diagnose", str(CONFIGS / "lines.toml"), out=str(tmp_path), check="rank")
    assert code == 0, err
    assert "rank: pass, rank 1" in out
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["outputs"] == ["diagnostics.json"]

    code, _, err = pl.run_cli("simulate", str(tmp_path / "missing.toml"), out=str(tmp_path / "bad"))
    assert code == 2
    assert json.loads((tmp_path / "bad" / "manifest.json").read_text())["status"] == "usage-error"
