"""Conditional heteroscedastic regression and the empirical error CDF.

The error model is y = f1(x) + u * f2(x), with f1 and f2 linear in the
expanded features.  f1 is fit by least squares on y, f2 by least squares on
|y - f1(x)|; the standardized residuals u define an empirical CDF that is
interpolated linearly between plotting positions (i - 0.5) / n.
"""
from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg
from scipy.special import ndtri

from .errors import InsufficientDataError
from .features import Dataset, FeatureSpec

RANK_RTOL = 1e-10


@dataclasses.dataclass(frozen=True, eq=False)
class EcdfTable:
    """Sorted standardized residuals with a piecewise-linear CDF.

    Tied values are merged into one knot at the mean of their plotting
    positions so the interpolation stays strictly monotone.
    """

    sorted_u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.sorted_u, dtype=float)
        if u.ndim != 1 or u.size == 0:
            raise ValueError("ECDF table needs a non-empty 1-d sample")
        if not np.isfinite(u).all():
            raise ValueError("ECDF table must be finite")
        if np.any(np.diff(u) < 0):
            raise ValueError("ECDF table must be sorted ascending")
        u.setflags(write=False)
        object.__setattr__(self, "sorted_u", u)
        n = u.size
        knots, start = np.unique(u, return_index=True)
        if knots.size == n:
            # no ties: knots are the sample itself, positions are implicit
            object.__setattr__(self, "_knots_u", u)
            object.__setattr__(self, "_knots_p", None)
        else:
            pos = (np.arange(1, n + 1) - 0.5) / n
            ends = np.append(start[1:], n)
            object.__setattr__(self, "_knots_u", knots)
            object.__setattr__(self, "_knots_p", (pos[start] + pos[ends - 1]) / 2.0)

    @classmethod
    def from_samples(cls, u) -> "EcdfTable":
        return cls(np.sort(np.asarray(u, dtype=float)))

    @property
    def n(self) -> int:
        return self.sorted_u.size

    @property
    def p_min(self) -> float:
        return 0.5 / self.n

    def std(self) -> float:
        return float(self.sorted_u.std(ddof=1)) if self.n > 1 else 0.0


def ecdf_eval(table: EcdfTable, z):
    """Pr(u <= z), clamped to [p_min, 1 - p_min]."""
    ku, kp = table._knots_u, table._knots_p
    if ku.size == 1:
        return np.full_like(np.asarray(z, dtype=float), 0.5)[()]
    if kp is not None:
        return np.interp(z, ku, kp)
    n = ku.size
    z = np.asarray(z, dtype=float)
    i = np.clip(np.searchsorted(ku, z, side="right") - 1, 0, n - 2)
    lo, hi = ku[i], ku[i + 1]
    frac = np.clip((z - lo) / (hi - lo), 0.0, 1.0)
    return ((i + 0.5 + frac) / n)[()]


def _inverse(table: EcdfTable, p):
    ku, kp = table._knots_u, table._knots_p
    if ku.size == 1:
        return np.full_like(np.asarray(p, dtype=float), ku[0])[()]
    if kp is not None:
        return np.interp(p, kp, ku)
    n = ku.size
    x = np.clip(np.asarray(p, dtype=float) * n - 0.5, 0.0, n - 1.0)
    i = np.minimum(x.astype(np.intp), n - 2)
    frac = x - i
    return (ku[i] + frac * (ku[i + 1] - ku[i]))[()]


def ecdf_inverse(table: EcdfTable, p):
    """Quantile function matching :func:`ecdf_eval`; p must lie in (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if not ((arr > 0) & (arr < 1)).all():
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    return _inverse(table, arr)


def normal_table(n: int) -> EcdfTable:
    """Standard-normal quantiles at the plotting positions."""
    return EcdfTable(ndtri((np.arange(1, n + 1) - 0.5) / n))


# ------------------------------------------------------------------ regression

def lstsq(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    """Least squares by pivoted QR; ridge refit if X is effectively rank deficient.

    Returns the coefficients and whether the ridge fallback was used.
    """
    n, p = X.shape
    if n < p:
        raise InsufficientDataError(f"{n} rows < {p} features")
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True, check_finite=False)
    d = np.abs(np.diag(R))
    if d[0] > 0 and d.min() > RANK_RTOL * d[0]:
        coef = np.empty(p)
        coef[piv] = scipy.linalg.solve_triangular(R, Q.T @ y, check_finite=False)
        return coef, False
    gram = X.T @ X
    lam = 1e-6 * np.trace(gram) / p
    if lam <= 0:
        return np.zeros(p), True
    coef = scipy.linalg.solve(gram + lam * np.eye(p), X.T @ y, assume_a="pos")
    return coef, True


def fit_point(ds: Dataset) -> tuple[np.ndarray, bool]:
    return lstsq(ds.X, ds.y)


def fit_scale(ds: Dataset, alpha: np.ndarray) -> tuple[np.ndarray, bool]:
    return lstsq(ds.X, np.abs(ds.y - ds.X @ alpha))


def standardize(ds: Dataset, alpha, beta, h_floor: float) -> np.ndarray:
    h = np.maximum(ds.X @ beta, h_floor)
    return (ds.y - ds.X @ alpha) / h


def h_floor_for(capacity: float, abs_mw: float = 1e-3, rel: float = 1e-4) -> float:
    return max(abs_mw, rel * capacity)


@dataclasses.dataclass(frozen=True, eq=False)
class HeteroModel:
    alpha: np.ndarray
    beta: np.ndarray
    ecdf: EcdfTable
    spec: FeatureSpec
    h_floor: float
    w: int = 0
    tau: int = 1
    clim_scale: float = 1.0   # MW per unit of u giving the climatological spread
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.alpha.shape != self.beta.shape:
            raise ValueError("alpha and beta must have the same length")
        if not self.h_floor > 0:
            raise ValueError("h_floor must be > 0")

    @property
    def n_features(self) -> int:
        return self.alpha.shape[0]

    @property
    def is_fallback(self) -> bool:
        return "climatological" in self.flags


def predict(model: HeteroModel, x: np.ndarray) -> tuple[float, float]:
    """Point forecast of the NWP error and the floored scale."""
    x = np.asarray(x, dtype=float)
    if x.shape != model.alpha.shape:
        raise ValueError(f"feature vector has length {x.shape}, model expects "
                         f"{model.alpha.shape[0]}")
    return float(x @ model.alpha), max(float(x @ model.beta), model.h_floor)


def predict_many(model: HeteroModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return X @ model.alpha, np.maximum(X @ model.beta, model.h_floor)


def _clim_scale(y: np.ndarray, table: EcdfTable, capacity: float) -> float:
    sy = float(np.std(y, ddof=1)) if y.size > 1 else 0.0
    su = table.std()
    if sy > 0 and su > 0:
        return sy / su
    return 0.1 * capacity


def climatological_model(y: np.ndarray, spec: FeatureSpec, n_features: int,
                         capacity: float, h_floor: float, w: int = 0, tau: int = 1,
                         n_table: int = 500, reason: str = "") -> HeteroModel:
    """Intercept-only fallback with a normal error shape.

    The mean is the sample mean of ``y`` and the scale its standard deviation;
    with too little data the scale is 10% of capacity.
    """
    alpha = np.zeros(n_features)
    beta = np.zeros(n_features)
    y = y[np.isfinite(y)]
    alpha[0] = float(y.mean()) if y.size else 0.0
    sd = float(y.std(ddof=1)) if y.size > 1 else 0.0
    beta[0] = max(sd if sd > 0 else 0.1 * capacity, h_floor)
    flags = ("climatological",) + ((reason,) if reason else ())
    return HeteroModel(alpha, beta, normal_table(n_table), spec, h_floor, w, tau,
                       clim_scale=beta[0], flags=flags)


def fit_model(ds_fit: Dataset, ds_cdf: Dataset, spec: FeatureSpec, capacity: float,
              h_floor: float, w: int = 0, tau: int = 1, min_rows_per_feature: int = 10,
              min_ecdf: int = 500, alpha=None, beta=None) -> tuple[HeteroModel, np.ndarray]:
    """Fit f1/f2 on ``ds_fit`` and the error CDF on ``ds_cdf``.

    ``alpha``/``beta`` may be given to skip the regression.  Returns the model
    and the standardized residuals of ``ds_cdf`` (empty for a fallback).
    """
    p = ds_cdf.X.shape[1]
    flags: list[str] = []
    if alpha is None:
        if ds_fit.n_rows < min_rows_per_feature * p:
            m = climatological_model(ds_fit.y, spec, p, capacity, h_floor, w, tau,
                                     n_table=min_ecdf,
                                     reason=f"fit_rows={ds_fit.n_rows}<{min_rows_per_feature * p}")
            return m, np.empty(0)
        alpha, ridge_a = fit_point(ds_fit)
        beta, ridge_b = fit_scale(ds_fit, alpha)
        if ridge_a or ridge_b:
            flags.append("ridge")
    u = standardize(ds_cdf, alpha, beta, h_floor)
    if u.size < min_ecdf:
        m = climatological_model(ds_cdf.y, spec, p, capacity, h_floor, w, tau,
                                 n_table=min_ecdf, reason=f"ecdf_rows={u.size}<{min_ecdf}")
        return m, np.empty(0)
    table = EcdfTable.from_samples(u)
    model = HeteroModel(np.asarray(alpha, float), np.asarray(beta, float), table, spec,
                        h_floor, w, tau, _clim_scale(ds_cdf.y, table, capacity), tuple(flags))
    return model, u
