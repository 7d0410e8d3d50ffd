"""Synthetic wind farm feed with a fully known error process.

Generating process, per farm w, slot s, issue t and horizon tau:

* latent field ``z_s`` is AR(1) in time with spatial correlation ``R``;
* power ``P_s = cap * logistic(level_mean + level_scale * z_s)``;
* NWP ``F_t^tau = clip(P_{t+tau} - b_t^tau - h_t^tau * u_t^tau, 0, cap)``

where ``b`` is a slow AR(1) bias growing with the horizon, ``h`` is affine in
the realized level ``P_{t+tau} / cap`` and ``u`` has a unit-variance normal or
scaled-t marginal and a Gaussian copula with correlation ``R kron H``
(``H[i, j] = horizon_rho ** |i - j|``).  Hence the NWP error
``y = P_{t+tau} - F_t^tau = clip(b + h u, P - cap, P)`` has a closed-form
conditional quantile.  All values are rounded to 3 decimals.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
from scipy import signal, stats
from scipy.special import ndtr

from .timeseries import FarmRegistry, SeriesPanel, parse_time


@dataclasses.dataclass(frozen=True)
class OracleSpec:
    n_farms: int = 5
    n_tau: int = 36
    capacity: float | tuple[float, ...] = 100.0
    spatial_rho: float | None = None       # equicorrelation; None -> exponential decay
    spatial_length: float = 0.5            # decay length on random positions in [0, 1]
    spatial_corr: tuple[tuple[float, ...], ...] | None = None
    ar_coef: float = 0.995                 # latent AR(1) per 5-minute step
    level_mean: float = 0.0
    level_scale: float = 1.2
    marginal: str = "normal"               # "normal" | "scaled-t"
    t_dof: float = 5.0
    h0: float = 0.02                       # h / cap at zero level, horizon 1
    h1: float = 0.03                       # slope of h / cap in the level
    h_growth: float = 1.0                  # h multiplier grows to 1 + h_growth at n_tau
    horizon_rho: float = 0.9
    bias_std: float = 0.02                 # stationary std of b / cap at horizon 1
    bias_ar: float = 0.98
    n_neighbors: int = 3
    nwp_issue_steps: int = 1               # slots between NWP issues (carried forward)
    start: str = "2020-01-01T00:00:00Z"
    seed: int = 0

    def __post_init__(self):
        if self.n_farms < 1 or self.n_tau < 1:
            raise ValueError("n_farms and n_tau must be >= 1")
        if not -1 < self.ar_coef < 1 or not -1 < self.bias_ar < 1:
            raise ValueError("AR coefficients must lie in (-1, 1)")
        if not -1 < self.horizon_rho < 1:
            raise ValueError("horizon_rho must lie in (-1, 1)")
        if self.marginal not in ("normal", "scaled-t"):
            raise ValueError(f"unknown marginal {self.marginal!r}")
        if self.marginal == "scaled-t" and not self.t_dof > 2:
            raise ValueError("scaled-t needs t_dof > 2")
        if min(self.capacities()) <= 0:
            raise ValueError("capacities must be > 0")
        if self.h0 < 0 or self.h0 + self.h1 < 0 or self.bias_std < 0:
            raise ValueError("noise scales must be non-negative")
        if self.nwp_issue_steps < 1:
            raise ValueError("nwp_issue_steps must be >= 1")
        if isinstance(self.capacity, list):
            object.__setattr__(self, "capacity", tuple(self.capacity))
        if isinstance(self.spatial_corr, list):
            object.__setattr__(self, "spatial_corr", tuple(map(tuple, self.spatial_corr)))

    def capacities(self) -> np.ndarray:
        if isinstance(self.capacity, (int, float)):
            return np.full(self.n_farms, float(self.capacity))
        caps = np.asarray(self.capacity, dtype=float)
        if caps.shape != (self.n_farms,):
            raise ValueError("capacity list must have n_farms entries")
        return caps

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))


def _psd_check(mat: np.ndarray, what: str) -> None:
    if not np.allclose(mat, mat.T) or np.linalg.eigvalsh(mat).min() < -1e-10:
        raise ValueError(f"{what} must be a symmetric PSD matrix")


def spatial_correlation(spec: OracleSpec) -> np.ndarray:
    n = spec.n_farms
    if spec.spatial_corr is not None:
        R = np.asarray(spec.spatial_corr, dtype=float)
        if R.shape != (n, n) or not np.allclose(np.diag(R), 1.0):
            raise ValueError("spatial_corr must be n_farms x n_farms with unit diagonal")
    elif spec.spatial_rho is not None:
        R = np.full((n, n), float(spec.spatial_rho))
        np.fill_diagonal(R, 1.0)
    else:
        pos = np.random.default_rng([spec.seed, 1]).random(n)
        R = np.exp(-np.abs(pos[:, None] - pos[None, :]) / spec.spatial_length)
    _psd_check(R, "spatial correlation")
    return R


def horizon_correlation(spec: OracleSpec) -> np.ndarray:
    k = np.arange(spec.n_tau)
    return spec.horizon_rho ** np.abs(k[:, None] - k[None, :])


def horizon_growth(spec: OracleSpec) -> np.ndarray:
    """Multiplier of h and b per horizon, 1 at tau=1 and 1 + h_growth at n_tau."""
    frac = np.arange(spec.n_tau) / max(spec.n_tau - 1, 1)
    return 1.0 + spec.h_growth * frac


def _psd_factor(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    return vecs * np.sqrt(np.clip(vals, 0, None))


def marginal_quantile(spec: OracleSpec, q):
    """Quantile of the unit-variance marginal of u."""
    if spec.marginal == "normal":
        return stats.norm.ppf(q)
    nu = spec.t_dof
    return stats.t.ppf(q, nu) * np.sqrt((nu - 2) / nu)


def marginal_cdf(spec: OracleSpec, x):
    if spec.marginal == "normal":
        return stats.norm.cdf(x)
    nu = spec.t_dof
    return stats.t.cdf(np.asarray(x) / np.sqrt((nu - 2) / nu), nu)


def copula_noise(spec: OracleSpec, n: int, rng: np.random.Generator,
                 R: np.ndarray | None = None) -> np.ndarray:
    """``n`` draws of u, shape (n, n_farms, n_tau)."""
    R = spatial_correlation(spec) if R is None else R
    LR = _psd_factor(R)
    LH = _psd_factor(horizon_correlation(spec))
    z = rng.standard_normal((n, spec.n_farms, spec.n_tau))
    g = np.einsum("ij,njk,lk->nil", LR, z, LH, optimize=True)
    if spec.marginal == "normal":
        return g
    return marginal_quantile(spec, ndtr(g))


@dataclasses.dataclass(frozen=True, eq=False)
class OracleContext:
    """Conditioning information of one (issue, farm, horizon) error."""

    level_mw: float   # realized power P_{t+tau}
    bias_mw: float    # b_t^tau
    capacity: float


@dataclasses.dataclass(frozen=True, eq=False)
class GroundTruth:
    spec: OracleSpec
    spatial_corr: np.ndarray
    horizon_corr: np.ndarray
    power_ext: np.ndarray   # (T + n_tau, n_w) power including slots past the panel end
    bias: np.ndarray        # (T, n_w) horizon-1 bias in MW

    def context(self, w: int, tau: int, t: int) -> OracleContext:
        cap = float(self.spec.capacities()[w])
        grow = horizon_growth(self.spec)[tau - 1]
        return OracleContext(float(self.power_ext[t + tau, w]),
                             float(self.bias[t, w] * grow), cap)

    def h(self, w: int, tau: int, level_mw) -> np.ndarray:
        cap = float(self.spec.capacities()[w])
        grow = horizon_growth(self.spec)[tau - 1]
        return cap * (self.spec.h0 + self.spec.h1 * np.asarray(level_mw) / cap) * grow

    def true_copula(self) -> np.ndarray:
        return np.kron(self.spatial_corr, self.horizon_corr)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "spatial_corr": self.spatial_corr.tolist(),
            "horizon_corr_rho": self.spec.horizon_rho,
            "horizon_growth": horizon_growth(self.spec).tolist(),
            "h_law": "h = cap * (h0 + h1 * P_{t+tau} / cap) * growth[tau]",
            "bias_law": "b_t^tau = growth[tau] * AR1(bias_ar) with stationary std bias_std * cap",
            "error_law": "y = clip(b + h * u, P - cap, P)",
        }


def true_quantile(record: GroundTruth, w: int, tau: int, x: OracleContext, q) -> np.ndarray:
    """Closed-form conditional quantile of the NWP error y_t^tau."""
    h = record.h(w, tau, x.level_mw)
    raw = x.bias_mw + h * marginal_quantile(record.spec, q)
    return np.clip(raw, x.level_mw - x.capacity, x.level_mw)


def neighbors_by_correlation(R: np.ndarray, k: int) -> list[list[int]]:
    out = []
    for w in range(R.shape[0]):
        order = [v for v in np.argsort(-R[w], kind="stable") if v != w]
        out.append([int(v) for v in order[:k]])
    return out


def _ar1(rng: np.random.Generator, phi: float, shape: tuple[int, ...], L=None) -> np.ndarray:
    """Stationary unit-variance AR(1) along axis 0; innovations mixed by ``L``."""
    e = rng.standard_normal(shape)
    if L is not None:
        e = e @ L.T
    e[1:] *= np.sqrt(1 - phi * phi)
    return signal.lfilter([1.0], [1.0, -phi], e, axis=0)


def generate_feed(spec: OracleSpec, n_times: int, chunk: int = 2048) -> tuple[SeriesPanel, GroundTruth]:
    """A panel of ``n_times`` 5-minute slots plus its ground-truth record."""
    if n_times < 1:
        raise ValueError("n_times must be >= 1")
    n_w, n_tau = spec.n_farms, spec.n_tau
    caps = spec.capacities()
    R = spatial_correlation(spec)
    LR = _psd_factor(R)
    rng = np.random.default_rng(spec.seed)
    rng_latent, rng_bias, rng_noise = rng.spawn(3)

    z = _ar1(rng_latent, spec.ar_coef, (n_times + n_tau, n_w), LR)
    p_frac = 1.0 / (1.0 + np.exp(-(spec.level_mean + spec.level_scale * z)))
    power_ext = np.round(p_frac * caps, 3)
    np.clip(power_ext, 0.0, caps, out=power_ext)

    bias = _ar1(rng_bias, spec.bias_ar, (n_times, n_w)) * (spec.bias_std * caps)
    grow = horizon_growth(spec)

    store = np.empty((n_w, n_tau, n_times))
    issue = np.arange(0, n_times, spec.nwp_issue_steps)
    LH = _psd_factor(horizon_correlation(spec))
    tau_idx = np.arange(1, n_tau + 1)
    for lo in range(0, issue.size, chunk):
        t = issue[lo:lo + chunk]
        zz = rng_noise.standard_normal((t.size, n_w, n_tau))
        g = np.einsum("ij,njk,lk->nil", LR, zz, LH, optimize=True)
        u = g if spec.marginal == "normal" else marginal_quantile(spec, ndtr(g))
        level = power_ext[t[:, None] + tau_idx[None, :]]          # (n, n_tau, n_w)
        level = level.transpose(0, 2, 1)                           # (n, n_w, n_tau)
        h = caps[None, :, None] * (spec.h0 + spec.h1 * level / caps[None, :, None])
        h *= grow[None, None, :]
        b = bias[t][:, :, None] * grow[None, None, :]
        f = np.clip(level - b - h * u, 0.0, caps[None, :, None])
        store[:, :, t] = np.round(f, 3).transpose(1, 2, 0)
    if spec.nwp_issue_steps > 1:
        src = (np.arange(n_times) // spec.nwp_issue_steps) * spec.nwp_issue_steps
        store = store[:, :, src]

    nbrs = neighbors_by_correlation(R, min(spec.n_neighbors, n_w - 1))
    ids = [f"WF{w + 1:03d}" for w in range(n_w)]
    registry = FarmRegistry.build(ids, caps, [[ids[v] for v in n] for n in nbrs])
    start = parse_time(spec.start)
    stamps = start + np.timedelta64(300, "s") * np.arange(n_times)
    panel = SeriesPanel(registry, stamps, power_ext[:n_times].copy(),
                        store.transpose(2, 0, 1))
    truth = GroundTruth(spec, R, horizon_correlation(spec), power_ext, bias)
    return panel, truth


def days(n: float) -> int:
    """Number of 5-minute slots in ``n`` days."""
    return int(round(n * 288))


def write_truth(truth: GroundTruth, path, header: dict | None = None) -> None:
    payload = dict(header or {})
    payload.update(truth.to_dict())
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
