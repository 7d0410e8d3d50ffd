"""Point, calibration, copula and scenario-quality diagnostics."""
from __future__ import annotations

import dataclasses
import logging

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import ndtr, ndtri

from .copula import rank_transform
from .errors import InsufficientDataError
from .features import Dataset, build_dataset
from .hetero import ecdf_inverse, predict_many, standardize
from .pipeline import PipelineConfig, TrainedBundle, generate, train
from .timeseries import (STEP, FarmRegistry, SeriesPanel, format_time, parse_time,
                         slice_window)

log = logging.getLogger(__name__)

DEFAULT_LEVELS = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2))
MIN_EVAL = 200


def rmse(actual, forecast) -> float:
    a = np.asarray(actual, dtype=float)
    f = np.asarray(forecast, dtype=float)
    if a.shape != f.shape:
        raise ValueError("actual and forecast must have the same shape")
    if a.size == 0:
        raise ValueError("rmse of an empty series")
    return float(np.sqrt(np.mean((a - f) ** 2)))


# ---------------------------------------------------------------- calibration

@dataclasses.dataclass(frozen=True, eq=False)
class ReliabilityCurve:
    levels: np.ndarray
    observed: np.ndarray
    gaussian_observed: np.ndarray | None
    n_eval: int
    flags: tuple[str, ...] = ()

    def max_deviation(self, gaussian: bool = False) -> float:
        obs = self.gaussian_observed if gaussian else self.observed
        return float(np.max(np.abs(obs - self.levels)))


def reliability_curve(realized, quantiles, levels=DEFAULT_LEVELS) -> np.ndarray:
    """Fraction of realizations at or below each level's forecast quantile.

    ``quantiles`` has shape (n, len(levels)).
    """
    realized = np.asarray(realized, dtype=float)
    quantiles = np.asarray(quantiles, dtype=float)
    if quantiles.shape != (realized.size, len(levels)):
        raise ValueError("quantiles must be (n_eval, n_levels)")
    return (realized[:, None] <= quantiles).mean(axis=0)


def _check_levels(levels) -> np.ndarray:
    lv = np.asarray(levels, dtype=float)
    if lv.ndim != 1 or lv.size == 0 or np.any(np.diff(lv) <= 0):
        raise ValueError("levels must be strictly increasing")
    if lv[0] <= 0 or lv[-1] >= 1:
        raise ValueError("levels must lie inside (0, 1)")
    return lv


def eval_dataset(bundle: TrainedBundle, panel: SeriesPanel, w: int, tau: int,
                 eval_window, stride: int = 1) -> Dataset:
    """Rows of model (w, tau) issued in ``eval_window``, every ``stride`` slots.

    Targets may reach past the window end when the panel extends that far.
    """
    start, end = (parse_time(t) for t in eval_window)
    train_end = parse_time(bundle.metadata["windows"]["regression"][1])
    if start < train_end:
        raise ValueError(f"evaluation window starts at {start}, before the training "
                         f"end {train_end}")
    margin = STEP * (panel.n_tau + bundle.config.features.power_lags + 1)
    lo = max(panel.start, start - margin)
    hi = min(panel.end, end + STEP * tau)
    ds = build_dataset(slice_window(panel, lo, hi), w, tau, bundle.model(w, tau).spec)
    keep = (ds.row_times >= start) & (ds.row_times < end)
    offset = ((ds.row_times - start) // STEP).astype(np.int64)
    keep &= offset % stride == 0
    return ds.subset(keep)


def reliability(bundle: TrainedBundle, panel: SeriesPanel, w: int, tau: int, eval_window,
                levels=DEFAULT_LEVELS, stride: int = 1) -> ReliabilityCurve:
    """Observed frequency of the realized error at or below each model quantile.

    Also returns the curve of a Gaussian error shape (mean 0, the ECDF sample
    standard deviation) scaled by the same conditional h.  Frequencies count
    y <= quantile, so a noise-free model whose errors and quantiles are all 0
    reports 1.0 at every level.
    """
    lv = _check_levels(levels)
    model = bundle.model(w, tau)
    ds = eval_dataset(bundle, panel, w, tau, eval_window, stride)
    flags = []
    if ds.n_rows == 0:
        raise InsufficientDataError(f"no evaluation rows for (w={w}, tau={tau})")
    if ds.n_rows < MIN_EVAL:
        flags.append(f"few_eval_points={ds.n_rows}")
        log.warning("reliability for (w=%d, tau=%d) uses only %d points", w, tau, ds.n_rows)
    y_hat, h_hat = predict_many(model, ds.X)
    q_model = y_hat[:, None] + h_hat[:, None] * ecdf_inverse(model.ecdf, lv)[None, :]
    q_gauss = y_hat[:, None] + h_hat[:, None] * (model.ecdf.std() * ndtri(lv))[None, :]
    return ReliabilityCurve(lv, reliability_curve(ds.y, q_model, lv),
                            reliability_curve(ds.y, q_gauss, lv), ds.n_rows, tuple(flags))


# ----------------------------------------------------------------- scenarios

@dataclasses.dataclass(frozen=True)
class ScoreTriple:
    energy: float
    integrated_distance: float
    variogram: float

    def __add__(self, other: "ScoreTriple") -> "ScoreTriple":
        return ScoreTriple(self.energy + other.energy,
                           self.integrated_distance + other.integrated_distance,
                           self.variogram + other.variogram)

    def scaled(self, c: float) -> "ScoreTriple":
        return ScoreTriple(self.energy * c, self.integrated_distance * c, self.variogram * c)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.energy, self.integrated_distance, self.variogram)


def _check(realization, scenarios) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(realization, dtype=float).reshape(-1)
    s = np.asarray(scenarios, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.ndim != 2 or s.shape[1] != x.size:
        raise ValueError(f"scenarios of shape {s.shape} do not match a realization of "
                         f"dimension {x.size}")
    return x, s


def energy_score(realization, scenarios) -> float:
    """(1/S) sum ||x - x_s|| - (1/(2 S^2)) sum_{s,s'} ||x_s - x_s'||."""
    x, s = _check(realization, scenarios)
    S = s.shape[0]
    if S == 0:
        raise ValueError("energy score needs at least one scenario")
    first = np.linalg.norm(s - x, axis=1).mean()
    second = pdist(s).sum() / S**2
    return float(max(first - second, 0.0))


def integrated_distance(realization, scenarios) -> float:
    """Summed absolute distance between the realization and every scenario."""
    x, s = _check(realization, scenarios)
    return float(np.abs(s - x).sum())


def variogram_score(realization, scenarios, p: float = 0.5) -> float:
    x, s = _check(realization, scenarios)
    i, j = np.triu_indices(x.size, 1)
    obs = np.abs(x[i] - x[j]) ** p
    # mean of differences, so identical scenarios give exactly zero
    gap = (np.abs(s[:, i] - s[:, j]) ** p - obs).mean(axis=0)
    return float((gap ** 2).sum())


def score_scenarios(realization, scenarios, p: float = 0.5) -> ScoreTriple:
    return ScoreTriple(energy_score(realization, scenarios),
                       integrated_distance(realization, scenarios),
                       variogram_score(realization, scenarios, p))


# -------------------------------------------------------------- rank domain

@dataclasses.dataclass(frozen=True, eq=False)
class RankScatter:
    real: np.ndarray     # (n, 2) ranks of observed residual pairs
    model: np.ndarray    # (n, 2) ranks sampled from a Gaussian copula at rho
    rho: float           # Pearson correlation of the Gaussian scores of real data

    def rows(self):
        for src, arr in (("real", self.real), ("model", self.model)):
            for r1, r2 in arr:
                yield src, float(r1), float(r2)


def standardized_residuals(bundle: TrainedBundle, panel: SeriesPanel, w: int, tau: int,
                           window) -> tuple[np.ndarray, np.ndarray]:
    """(row slot indices, u) of model (w, tau) over ``window`` of ``panel``."""
    start, end = (parse_time(t) for t in window)
    model = bundle.model(w, tau)
    margin = STEP * (panel.n_tau + model.spec.power_lags + 1)
    lo = max(panel.start, start - margin)
    sub = slice_window(panel, lo, min(panel.end, end + STEP * tau))
    ds = build_dataset(sub, w, tau, model.spec)
    keep = (ds.row_times >= start) & (ds.row_times < end)
    ds = ds.subset(keep)
    u = standardize(ds, model.alpha, model.beta, model.h_floor)
    rows = ((ds.row_times - panel.start) // STEP).astype(np.int64)
    return rows, u


def rank_scatter(bundle: TrainedBundle, panel: SeriesPanel, pair, window,
                 seed: int = 0) -> RankScatter:
    """Observed rank pairs of two models and same-size Gaussian-copula samples."""
    (w1, t1), (w2, t2) = pair
    rows1, u1 = standardized_residuals(bundle, panel, w1, t1, window)
    rows2, u2 = standardized_residuals(bundle, panel, w2, t2, window)
    common, i1, i2 = np.intersect1d(rows1, rows2, assume_unique=True, return_indices=True)
    if common.size < 3:
        raise InsufficientDataError("fewer than 3 aligned residual pairs")
    r1 = rank_transform(u1[i1], bundle.model(w1, t1).ecdf)
    r2 = rank_transform(u2[i2], bundle.model(w2, t2).ecdf)
    g1, g2 = ndtri(r1), ndtri(r2)
    rho = float(np.corrcoef(g1, g2)[0, 1]) if g1.std() > 0 and g2.std() > 0 else 0.0
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((common.size, 2))
    a = z[:, 0]
    b = rho * z[:, 0] + np.sqrt(max(1.0 - rho * rho, 0.0)) * z[:, 1]
    model = np.column_stack([ndtr(a), ndtr(b)])
    return RankScatter(np.column_stack([r1, r2]), model, rho)


# -------------------------------------------------- representation comparison

def aggregate_panel(panel: SeriesPanel, farm_id: str = "AGGREGATE") -> SeriesPanel:
    """One pseudo-farm holding the fleet sums; a slot is missing if any farm is."""
    reg = FarmRegistry.build([farm_id], [float(panel.capacities.sum())])
    power = panel.power.sum(axis=1, keepdims=True)
    nwp = panel.nwp.sum(axis=1, keepdims=True)
    return SeriesPanel.from_arrays(reg, panel.start, power, nwp, panel.n_flagged)


@dataclasses.dataclass(frozen=True, eq=False)
class ComparisonResult:
    per_farm: ScoreTriple
    aggregate_only: ScoreTriple
    issue_times: np.ndarray
    per_farm_issues: list[ScoreTriple]
    aggregate_issues: list[ScoreTriple]

    @property
    def n_issues(self) -> int:
        return len(self.issue_times)

    def means(self) -> tuple[ScoreTriple, ScoreTriple]:
        n = max(self.n_issues, 1)
        return self.per_farm.scaled(1 / n), self.aggregate_only.scaled(1 / n)

    def per_farm_better(self) -> tuple[bool, bool, bool]:
        return tuple(a <= b for a, b in zip(self.per_farm.as_tuple(),
                                            self.aggregate_only.as_tuple()))


def issue_slots(panel: SeriesPanel, window, cadence_minutes: int, n_tau: int) -> np.ndarray:
    """Issue slot indices in ``window`` whose full horizon lies inside the panel."""
    start, end = (parse_time(t) for t in window)
    step = cadence_minutes // 5
    first = panel.index_of(start)
    last = min(panel.index_of(end - STEP), panel.n_times - 1 - n_tau)
    return np.arange(first, last + 1, step)


def aggregate_realization(panel: SeriesPanel, i: int) -> np.ndarray:
    return panel.power[i + 1:i + 1 + panel.n_tau].sum(axis=1)


def score_issues(bundle: TrainedBundle, panel: SeriesPanel, slots, S: int,
                 p: float = 0.5) -> tuple[list[int], list[ScoreTriple]]:
    """Aggregate-level scores at each issue slot; issues without a full realization are skipped."""
    used, scores = [], []
    for i in slots:
        real = aggregate_realization(panel, int(i))
        if not np.isfinite(real).all():
            continue
        sset = generate(bundle, panel, panel.timestamps[i], S)
        scores.append(score_scenarios(real, sset.aggregate(), p))
        used.append(int(i))
    return used, scores


def compare_representations(panel: SeriesPanel, cfg: PipelineConfig, eval_window,
                            S: int = 200, cadence_minutes: int = 15,
                            p: float = 0.5) -> ComparisonResult:
    """Score aggregate scenarios from per-farm models against an aggregate-only model.

    Both representations are trained with ``cfg`` up to the window start and
    scored against the fleet realization at every issue; scores are summed.
    """
    start = parse_time(eval_window[0])
    cfg_eval = dataclasses.replace(cfg, train_end=str(format_time(start)))
    slots = issue_slots(panel, eval_window, cadence_minutes, cfg.n_tau)

    per_farm = train(panel, cfg_eval)
    used_a, farm_scores = score_issues(per_farm, panel, slots, S, p)
    del per_farm

    agg_panel = aggregate_panel(panel)
    agg_bundle = train(agg_panel, cfg_eval)
    used_b, agg_scores = score_issues(agg_bundle, agg_panel, slots, S, p)
    if used_a != used_b:
        raise RuntimeError("representations were scored on different issues")
    zero = ScoreTriple(0.0, 0.0, 0.0)
    total_a = sum(farm_scores, zero)
    total_b = sum(agg_scores, zero)
    return ComparisonResult(total_a, total_b, panel.timestamps[np.array(used_a, dtype=int)],
                            farm_scores, agg_scores)


def point_rmse_by_horizon(bundle: TrainedBundle, panel: SeriesPanel, slots) -> np.ndarray:
    """(n_tau, 2) RMSE of the model point forecast and of raw NWP, all farms pooled."""
    n_tau = bundle.index_map.n_tau
    caps = panel.capacities
    err_model = [[] for _ in range(n_tau)]
    err_nwp = [[] for _ in range(n_tau)]
    for i in slots:
        sset = generate(bundle, panel, panel.timestamps[i], 1)
        for tau in range(1, n_tau + 1):
            actual = panel.power[i + tau]
            nwp = panel.nwp[i, :, tau - 1]
            ok = np.isfinite(actual) & np.isfinite(nwp)
            err_model[tau - 1].append((actual - sset.point_forecast[:, tau - 1])[ok])
            err_nwp[tau - 1].append((actual - np.clip(nwp, 0, caps))[ok])
    out = np.full((n_tau, 2), np.nan)
    for j in range(n_tau):
        em = np.concatenate(err_model[j]) if err_model[j] else np.empty(0)
        en = np.concatenate(err_nwp[j]) if err_nwp[j] else np.empty(0)
        if em.size:
            out[j] = [rmse(em, np.zeros_like(em)), rmse(en, np.zeros_like(en))]
    return out


def training_end(bundle: TrainedBundle) -> np.datetime64:
    return parse_time(bundle.metadata["windows"]["regression"][1])
