import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from windscen.errors import FeatureUnavailableError, InsufficientDataError
from windscen.features import (FeatureSpec, build_dataset, build_online_row, feature_names,
                               layout)

from conftest import make_panel

PLAIN = dict(nwp_trailing_lags=0, error_lag_multiples=(), neighbor_count=0, basis={})


def _ramp_panel(T=6, n_tau=2, n_w=1):
    rng = np.random.default_rng(3)
    power = np.round(rng.uniform(0, 100, (T, n_w)), 3)
    nwp = np.round(rng.uniform(0, 100, (T, n_w, n_tau)), 3)
    return make_panel(power, nwp)


def test_hand_enumerated_rows():
    panel = _ramp_panel()
    P, F = panel.power[:, 0], panel.nwp[:, 0, :]
    ds = build_dataset(panel, 0, 2, FeatureSpec(power_lags=1, **PLAIN))
    assert ds.feature_names == ("intercept", "nwp", "power_lag_0")
    rows = [[1.0, F[t, 1], P[t]] for t in range(4)]
    np.testing.assert_array_equal(ds.X, rows)
    np.testing.assert_array_equal(ds.y, [P[t + 2] - F[t, 1] for t in range(4)])
    np.testing.assert_array_equal(ds.row_index, np.arange(4))


def test_row_count_with_two_lags():
    panel = _ramp_panel(T=10, n_tau=1)
    ds = build_dataset(panel, 0, 1, FeatureSpec(power_lags=2, **PLAIN))
    assert ds.n_rows == 8


def test_perfect_nwp_gives_zero_target():
    T, n_tau = 40, 3
    power = 50 + 20 * np.sin(np.arange(T + n_tau) / 5)
    nwp = np.stack([power[1 + j:T + 1 + j] for j in range(n_tau)], axis=1)[:, None, :]
    panel = make_panel(power[:T, None], nwp)
    for tau in range(1, n_tau + 1):
        ds = build_dataset(panel, 0, tau, FeatureSpec())
        np.testing.assert_allclose(ds.y, 0.0, atol=1e-12)


def test_error_and_neighbor_columns():
    panel = make_panel(np.random.default_rng(0).uniform(0, 100, (30, 2)),
                       np.random.default_rng(1).uniform(0, 100, (30, 2, 4)),
                       neighbors=[["F1"], ["F0"]])
    spec = FeatureSpec(nwp_trailing_lags=1, power_lags=1, error_lag_multiples=(1,),
                       error_lag_offsets=(3,), neighbor_count=1, basis={})
    ds = build_dataset(panel, 0, 2, spec)
    names = list(ds.feature_names)
    assert names == ["intercept", "nwp", "nwp_trail_1", "power_lag_0", "error_lag_2",
                     "error_lag_3", "nbr1_error_lag_2", "nbr1_error_lag_3"]
    P, F = panel.power, panel.nwp
    t = int(ds.row_index[0])
    assert t == 3
    x = ds.X[0]
    assert x[2] == F[t, 0, 0]
    assert x[4] == P[t, 0] - F[t - 2, 0, 1]
    assert x[5] == P[t, 0] - F[t - 3, 0, 2]
    assert x[7] == P[t, 1] - F[t - 3, 1, 2]


def test_error_offsets_clip_to_horizon():
    spec = FeatureSpec(error_lag_multiples=(1, 2), error_lag_offsets=(40,))
    assert spec.error_offsets(20, 36) == [20, 36]
    assert spec.error_offsets(1, 36) == [1, 2, 36]


def test_basis_columns_scaled_by_capacity():
    panel = _ramp_panel(T=12)
    spec = FeatureSpec(power_lags=1, basis={"nwp": 3, "power": 2}, **{
        k: v for k, v in PLAIN.items() if k != "basis"})
    ds = build_dataset(panel, 0, 1, spec)
    assert ds.feature_names[-3:] == ("nwp^2", "power_lag_0^2", "nwp^3")
    f = ds.X[:, 1]
    np.testing.assert_allclose(ds.X[:, -1], f ** 3 / 100.0 ** 2)


def test_degenerate_spec_rejected():
    with pytest.raises(ValueError):
        layout(FeatureSpec(include_nwp=False, power_lags=0, **PLAIN), 0, 1, 3, [])
    with pytest.raises(ValueError):
        FeatureSpec(basis={"bogus": 2})


def test_missing_rows_dropped_and_counted():
    panel = _ramp_panel(T=20)
    power = panel.power.copy()
    power[7, 0] = np.nan
    panel2 = make_panel(power, panel.nwp)
    full = build_dataset(panel, 0, 1, FeatureSpec(power_lags=2, **PLAIN))
    ds = build_dataset(panel2, 0, 1, FeatureSpec(power_lags=2, **PLAIN))
    # P_7 enters as lag 0 at t=7, lag 1 at t=8 and as the target of t=6
    assert ds.n_dropped == 3
    assert ds.n_rows == full.n_rows - 3
    assert not set(ds.row_index) & {6, 7, 8}
    with pytest.raises(InsufficientDataError):
        build_dataset(panel2, 0, 1, FeatureSpec(power_lags=2, **PLAIN), min_rows=1000)


def test_online_row_matches_training_row(small_feed):
    panel = small_feed[0]
    spec = FeatureSpec()
    for tau in (1, 4):
        ds = build_dataset(panel, 1, tau, spec)
        for j in (0, ds.n_rows // 2, ds.n_rows - 1):
            t = int(ds.row_index[j])
            np.testing.assert_array_equal(
                build_online_row(panel, panel.timestamps[t], 1, tau, spec), ds.X[j])


def test_online_row_beyond_training_targets(small_feed):
    """At the last slot there is no target, but the row still reconstructs offline."""
    panel = small_feed[0]
    spec = FeatureSpec()
    t = panel.n_times - 1
    x = build_online_row(panel, t, 0, 3, spec)
    ext = make_panel(np.vstack([panel.power, np.zeros((3, panel.n_farms))]),
                     np.concatenate([panel.nwp, np.zeros((3, panel.n_farms, panel.n_tau))]),
                     caps=list(panel.capacities), ids=panel.registry.ids,
                     neighbors=[[panel.registry.ids[v] for v in panel.registry.neighbor_indices(w)]
                                for w in range(panel.n_farms)],
                     start=panel.start)
    ds = build_dataset(ext, 0, 3, spec)
    np.testing.assert_array_equal(ds.X[ds.row_index == t][0], x)


def test_online_missing_power_names_feature():
    panel = _ramp_panel(T=12)
    power = panel.power.copy()
    power[-1, 0] = np.nan
    panel = make_panel(power, panel.nwp)
    with pytest.raises(FeatureUnavailableError) as exc:
        build_online_row(panel, 11, 0, 1, FeatureSpec(power_lags=2, **PLAIN))
    assert exc.value.feature == "power_lag_0"


def test_online_needs_history():
    panel = _ramp_panel(T=12)
    with pytest.raises(FeatureUnavailableError):
        build_online_row(panel, 1, 0, 1, FeatureSpec(power_lags=4, **PLAIN))


@settings(max_examples=30, deadline=None)
@given(trail=st.integers(0, 3), lags=st.integers(0, 4), mults=st.lists(st.integers(1, 3), max_size=2),
       nbrs=st.integers(0, 3), tau=st.integers(1, 6), deg=st.integers(1, 3))
def test_names_match_matrix_width(trail, lags, mults, nbrs, tau, deg):
    spec = FeatureSpec(nwp_trailing_lags=trail, power_lags=lags, error_lag_multiples=tuple(mults),
                       neighbor_count=nbrs, basis={"nwp": deg})
    names = feature_names(spec, tau, 6, 2)
    assert len(names) == len(set(names))
    lay = layout(spec, 0, tau, 6, [1, 2])
    assert lay.n_features == len(names)
