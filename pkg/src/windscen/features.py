"""Regression features and targets for one (farm, horizon) model.

Columns, in order: ``intercept``, ``nwp`` (F_t^tau), ``nwp_trail_i``
(F_t^{tau-i}), ``power_lag_j`` (P_{t-j}), ``error_lag_o`` (P_t - F_{t-o}^o),
``nbr{k}_error_lag_o`` (same errors for the k-th registry neighbour), then the
polynomial basis terms ``name^d``.  The target is the future NWP error
P_{t+tau} - F_t^tau.
"""
from __future__ import annotations

import dataclasses
from typing import Mapping

import numpy as np

from .errors import FeatureUnavailableError, InsufficientDataError
from .timeseries import SeriesPanel

FAMILIES = ("nwp", "nwp_trail", "power", "error", "neighbor_error")


@dataclasses.dataclass(frozen=True)
class FeatureSpec:
    nwp_trailing_lags: int = 2
    power_lags: int = 3
    # past-error offsets as multiples of tau, plus absolute offsets in steps;
    # every offset is clipped to n_tau and de-duplicated
    error_lag_multiples: tuple[int, ...] = (1, 2)
    error_lag_offsets: tuple[int, ...] = ()
    neighbor_count: int = 2
    basis: Mapping[str, int] = dataclasses.field(default_factory=lambda: {"nwp": 2})
    include_nwp: bool = True

    def __post_init__(self):
        object.__setattr__(self, "error_lag_multiples", tuple(int(m) for m in self.error_lag_multiples))
        object.__setattr__(self, "error_lag_offsets", tuple(int(o) for o in self.error_lag_offsets))
        object.__setattr__(self, "basis", {str(k): int(v) for k, v in dict(self.basis).items()})
        counts = (self.nwp_trailing_lags, self.power_lags, self.neighbor_count)
        if min(counts) < 0:
            raise ValueError("feature counts must be >= 0")
        if any(m < 1 for m in self.error_lag_multiples + self.error_lag_offsets):
            raise ValueError("error lag offsets must be >= 1")
        for fam, deg in self.basis.items():
            if fam not in FAMILIES:
                raise ValueError(f"unknown basis family {fam!r}")
            if deg < 1:
                raise ValueError("basis degree must be >= 1")

    def error_offsets(self, tau: int, n_tau: int) -> list[int]:
        raw = [m * tau for m in self.error_lag_multiples] + list(self.error_lag_offsets)
        return sorted({min(o, n_tau) for o in raw})

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["error_lag_multiples"] = list(self.error_lag_multiples)
        out["error_lag_offsets"] = list(self.error_lag_offsets)
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSpec":
        return cls(**dict(d))


@dataclasses.dataclass(frozen=True)
class _Column:
    name: str
    family: str
    kind: str      # "nwp" | "power" | "error"
    farm: int
    lag: int       # backward step offset of the measurement / issue
    horizon: int   # 1-based horizon of the NWP value used


@dataclasses.dataclass(frozen=True)
class Layout:
    """Resolved column layout of one (w, tau) model."""

    w: int
    tau: int
    columns: tuple[_Column, ...]
    expansions: tuple[tuple[int, int], ...]  # (column position, degree)
    scale: float                             # capacity used to keep basis terms in MW
    reach: int                               # deepest backward step needed

    @property
    def names(self) -> list[str]:
        base = ["intercept"] + [c.name for c in self.columns]
        return base + [f"{self.columns[i].name}^{d}" for i, d in self.expansions]

    @property
    def n_features(self) -> int:
        return 1 + len(self.columns) + len(self.expansions)


def layout(spec: FeatureSpec, w: int, tau: int, n_tau: int, neighbors: list[int],
           capacity: float = 1.0) -> Layout:
    if not 1 <= tau <= n_tau:
        raise ValueError(f"tau={tau} outside 1..{n_tau}")
    cols: list[_Column] = []
    if spec.include_nwp:
        cols.append(_Column("nwp", "nwp", "nwp", w, 0, tau))
    for i in range(1, min(spec.nwp_trailing_lags, tau - 1) + 1):
        cols.append(_Column(f"nwp_trail_{i}", "nwp_trail", "nwp", w, 0, tau - i))
    for j in range(spec.power_lags):
        cols.append(_Column(f"power_lag_{j}", "power", "power", w, j, 0))
    offsets = spec.error_offsets(tau, n_tau)
    for o in offsets:
        cols.append(_Column(f"error_lag_{o}", "error", "error", w, o, o))
    for k, v in enumerate(neighbors[:spec.neighbor_count], start=1):
        for o in offsets:
            cols.append(_Column(f"nbr{k}_error_lag_{o}", "neighbor_error", "error", v, o, o))
    if not cols:
        raise ValueError("degenerate feature spec: no features besides the intercept")
    expansions = []
    for d in range(2, max(spec.basis.values(), default=1) + 1):
        for i, c in enumerate(cols):
            if spec.basis.get(c.family, 1) >= d:
                expansions.append((i, d))
    reach = max((c.lag for c in cols), default=0)
    return Layout(w, tau, tuple(cols), tuple(expansions), float(capacity), reach)


def panel_layout(panel: SeriesPanel, w: int, tau: int, spec: FeatureSpec) -> Layout:
    reg = panel.registry
    return layout(spec, w, tau, panel.n_tau, reg.neighbor_indices(w), reg.farms[w].capacity)


def feature_names(spec: FeatureSpec, tau: int, n_tau: int, n_neighbors: int) -> list[str]:
    return layout(spec, 0, tau, n_tau, list(range(1, n_neighbors + 1))).names


def _matrix(panel: SeriesPanel, lay: Layout, t: np.ndarray) -> np.ndarray:
    """Feature matrix for slot indices ``t`` (may contain NaN)."""
    P, N = panel.power, panel.nwp
    X = np.empty((t.shape[0], lay.n_features))
    X[:, 0] = 1.0
    for i, c in enumerate(lay.columns, start=1):
        if c.kind == "nwp":
            X[:, i] = N[t, c.farm, c.horizon - 1]
        elif c.kind == "power":
            X[:, i] = P[t - c.lag, c.farm]
        else:
            X[:, i] = P[t, c.farm] - N[t - c.lag, c.farm, c.horizon - 1]
    base = 1 + len(lay.columns)
    for j, (i, d) in enumerate(lay.expansions):
        X[:, base + j] = X[:, 1 + i] ** d / lay.scale ** (d - 1)
    return X


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    row_times: np.ndarray       # datetime64[s] issue times
    row_index: np.ndarray       # slot indices into the source panel
    base: np.ndarray            # F_t^tau of each row
    feature_names: tuple[str, ...]
    n_dropped: int = 0          # candidate rows excluded for missing inputs

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(self.X[mask], self.y[mask], self.row_times[mask],
                       self.row_index[mask], self.base[mask], self.feature_names,
                       self.n_dropped)


def build_dataset(panel: SeriesPanel, w: int, tau: int, spec: FeatureSpec,
                  min_rows: int = 1) -> Dataset:
    """All usable training rows of model (w, tau).

    Candidate rows are the slots with enough history for the deepest lag and
    a target inside the panel; candidates touching any missing value are
    dropped and counted.
    """
    lay = panel_layout(panel, w, tau, spec)
    t = np.arange(lay.reach, panel.n_times - tau)
    if t.size == 0:
        raise InsufficientDataError(
            f"model (w={w}, tau={tau}): panel of {panel.n_times} slots is too short")
    X = _matrix(panel, lay, t)
    base = panel.nwp[t, w, tau - 1]
    y = panel.power[t + tau, w] - base
    ok = np.isfinite(X).all(axis=1) & np.isfinite(y)
    n_dropped = int(t.size - ok.sum())
    if ok.sum() < min_rows:
        raise InsufficientDataError(
            f"model (w={w}, tau={tau}): {int(ok.sum())} usable rows < {min_rows}")
    t = t[ok]
    return Dataset(X[ok], y[ok], panel.timestamps[t], t, base[ok],
                   tuple(lay.names), n_dropped)


def build_online_row(panel: SeriesPanel, t_now, w: int, tau: int, spec: FeatureSpec,
                     lay: Layout | None = None) -> np.ndarray:
    """The feature vector at issue time ``t_now``; no target needed."""
    lay = lay or panel_layout(panel, w, tau, spec)
    i = t_now if isinstance(t_now, (int, np.integer)) else panel.index_of(t_now)
    if i < lay.reach:
        raise FeatureUnavailableError(
            lay.columns[0].name, f"t_now has only {i} slots of history, need {lay.reach}")
    x = _matrix(panel, lay, np.array([i]))[0]
    if not np.isfinite(x).all():
        name = lay.names[int(np.flatnonzero(~np.isfinite(x))[0])]
        raise FeatureUnavailableError(name)
    return x
