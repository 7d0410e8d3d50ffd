import json

import numpy as np
import pytest
from scipy import optimize, stats

from windscen import synth
from windscen.features import FeatureSpec, build_dataset
from windscen.hetero import fit_model, h_floor_for, predict_many


def test_feed_shapes_and_bounds(small_feed):
    panel, truth = small_feed
    assert panel.power.shape == (synth.days(12), 3)
    assert panel.nwp.shape == (synth.days(12), 3, 6)
    caps = panel.capacities
    assert np.all((panel.power >= 0) & (panel.power <= caps))
    assert np.all((panel.nwp >= 0) & (panel.nwp <= caps[:, None]))
    assert truth.power_ext.shape == (panel.n_times + 6, 3)
    np.testing.assert_array_equal(truth.power_ext[:panel.n_times], panel.power)
    assert panel.registry.ids == ["WF001", "WF002", "WF003"]


def test_feed_is_deterministic():
    spec = synth.OracleSpec(n_farms=2, n_tau=3, seed=4)
    a, _ = synth.generate_feed(spec, 500)
    b, _ = synth.generate_feed(spec, 500)
    np.testing.assert_array_equal(a.nwp, b.nwp)
    c, _ = synth.generate_feed(synth.OracleSpec(n_farms=2, n_tau=3, seed=5), 500)
    assert not np.array_equal(a.power, c.power)


def test_zero_noise_nwp_is_perfect():
    spec = synth.OracleSpec(n_farms=2, n_tau=4, h0=0.0, h1=0.0, bias_std=0.0, seed=2)
    panel, _ = synth.generate_feed(spec, 3000)
    spec_f = FeatureSpec()
    for tau in (1, 4):
        ds = build_dataset(panel, 0, tau, spec_f)
        np.testing.assert_array_equal(ds.y, 0.0)
        floor = h_floor_for(100.0)
        model, _ = fit_model(ds, ds, spec_f, 100.0, floor)
        _, h = predict_many(model, ds.X)
        np.testing.assert_array_equal(h, floor)


def test_true_quantile_normal_closed_form(small_feed):
    _, truth = small_feed
    x = truth.context(1, 3, 500)
    q = np.array([0.1, 0.5, 0.9])
    h = truth.h(1, 3, x.level_mw)
    expected = np.clip(x.bias_mw + h * stats.norm.ppf(q), x.level_mw - 100, x.level_mw)
    np.testing.assert_allclose(synth.true_quantile(truth, 1, 3, x, q), expected, rtol=1e-14)
    assert synth.true_quantile(truth, 1, 3, x, 0.5) == pytest.approx(
        np.clip(x.bias_mw, x.level_mw - 100, x.level_mw))


def test_scaled_t_quantile_matches_root_find():
    spec = synth.OracleSpec(marginal="scaled-t", t_dof=4.5)
    for q in (0.01, 0.2, 0.5, 0.77, 0.995):
        root = optimize.brentq(lambda x: synth.marginal_cdf(spec, x) - q, -50, 50, xtol=1e-14)
        assert synth.marginal_quantile(spec, q) == pytest.approx(root, abs=1e-8)
    # unit variance
    u = synth.marginal_quantile(spec, (np.arange(1, 200001) - 0.5) / 200000)
    assert np.var(u) == pytest.approx(1.0, rel=0.05)


def test_true_quantile_coverage(small_feed):
    """Realized errors fall below the true 90% quantile at the nominal rate."""
    panel, truth = small_feed
    hits, n = 0, 0
    for w in range(3):
        for tau in (1, 6):
            t = np.arange(0, panel.n_times - tau)
            y = panel.power[t + tau, w] - panel.nwp[t, w, tau - 1]
            for ti, yi in zip(t, y):
                qv = synth.true_quantile(truth, w, tau, truth.context(w, tau, int(ti)), 0.9)
                hits += yi <= qv + 1e-9
                n += 1
    se = np.sqrt(0.9 * 0.1 / n)
    # rounding to 1 kW and clipping at 0/cap only move mass onto the quantile
    assert abs(hits / n - 0.9) <= 4 * se + 0.01


def test_copula_noise_correlation():
    spec = synth.OracleSpec(n_farms=3, n_tau=4, spatial_rho=0.5, horizon_rho=0.7)
    u = synth.copula_noise(spec, 20000, np.random.default_rng(0))
    emp = np.corrcoef(u.reshape(20000, -1).T)
    truth = np.kron(synth.spatial_correlation(spec), synth.horizon_correlation(spec))
    np.testing.assert_allclose(emp, truth, atol=0.03)


def test_spatial_correlation_options():
    R = synth.spatial_correlation(synth.OracleSpec(n_farms=4, spatial_rho=0.3))
    assert R[0, 1] == 0.3 and R[2, 2] == 1.0
    R = synth.spatial_correlation(synth.OracleSpec(n_farms=4))
    assert np.all(np.linalg.eigvalsh(R) > 0)
    with pytest.raises(ValueError):
        synth.spatial_correlation(synth.OracleSpec(n_farms=2, spatial_corr=((1, 2), (2, 1))))


def test_neighbors_by_correlation():
    R = np.array([[1, 0.2, 0.9], [0.2, 1, 0.5], [0.9, 0.5, 1]])
    assert synth.neighbors_by_correlation(R, 1) == [[2], [2], [0]]


def test_spec_validation():
    with pytest.raises(ValueError):
        synth.OracleSpec(ar_coef=1.0)
    with pytest.raises(ValueError):
        synth.OracleSpec(marginal="cauchy")
    with pytest.raises(ValueError):
        synth.OracleSpec(marginal="scaled-t", t_dof=2.0)


def test_issue_cadence_carries_forward():
    spec = synth.OracleSpec(n_farms=1, n_tau=3, nwp_issue_steps=3, seed=1)
    panel, _ = synth.generate_feed(spec, 30)
    np.testing.assert_array_equal(panel.nwp[4], panel.nwp[3])
    np.testing.assert_array_equal(panel.nwp[5], panel.nwp[3])
    assert not np.array_equal(panel.nwp[6], panel.nwp[3])


def test_truth_record_is_json(tmp_path, small_feed):
    synth.write_truth(small_feed[1], tmp_path / "t.json", {"seed": 1})
    rec = json.loads((tmp_path / "t.json").read_text())
    assert rec["seed"] == 1 and len(rec["spatial_corr"]) == 3
