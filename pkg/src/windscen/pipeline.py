"""Offline training and online scenario assembly.

Offline: fit f1/f2 per (farm, horizon) on the regression window, standardize
residuals over the longer CDF window, build the error CDFs, map residuals to
Gaussian scores, estimate the copula correlation, draw ``s_max`` correlated
Gaussian rows and push every column back through its error CDF.  The result
is a block of standardized scenario errors that does not depend on the
current system state.

Online: compute (y_hat, h_hat) once per model from the latest measurements
and form ``clip(F + y_hat + u_hat * h_hat, 0, cap)`` for the first S rows.
"""
from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import logging
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .copula import CopulaModel, IndexMap, draw_block, estimate_correlation, from_gaussian, to_gaussian
from .errors import (BundleFormatError, ChecksumError, FeatureUnavailableError,
                     InsufficientDataError)
from .features import (Dataset, FeatureSpec, Layout, build_dataset, build_online_row,
                       panel_layout)
from .hetero import (EcdfTable, HeteroModel, climatological_model, fit_model, fit_point,
                     fit_scale, h_floor_for)
from .timeseries import STEP, FarmRegistry, HorizonGrid, SeriesPanel, format_time, parse_time, slice_window

log = logging.getLogger(__name__)

MAGIC = b"WSCNBNDL"
FORMAT_VERSION = 1
DAY = np.timedelta64(86400, "s")


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    n_tau: int = 36
    step_minutes: int = 5
    issue_cadence_minutes: int = 15
    regression_days: float = 28.0
    ecdf_days: float = 90.0
    train_end: str | None = None      # ISO instant, exclusive; default: panel end
    copula_stride: int = 6            # slots between copula samples (~4000 rows per 90 days)
    copula_min_rows: int = 100
    s_max: int = 10000
    seed: int = 0
    h_floor_abs_mw: float = 1e-3
    h_floor_rel: float = 1e-4
    min_rows_per_feature: int = 10
    min_ecdf_samples: int = 500
    fallback_widen: float = 1.5
    workers: int = 1
    features: FeatureSpec = dataclasses.field(default_factory=FeatureSpec)

    def __post_init__(self):
        if isinstance(self.features, dict):
            object.__setattr__(self, "features", FeatureSpec.from_dict(self.features))
        if self.step_minutes != 5:
            raise ValueError("only the 5-minute grid is supported")
        if self.regression_days <= 0 or self.ecdf_days <= 0:
            raise ValueError("training windows must be positive")
        if self.s_max < 1 or self.copula_stride < 1:
            raise ValueError("s_max and copula_stride must be >= 1")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["features"] = self.features.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(**d)

    @property
    def horizon(self) -> HorizonGrid:
        return HorizonGrid(self.n_tau, self.step_minutes)


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclasses.dataclass(frozen=True, eq=False)
class TrainedBundle:
    registry: FarmRegistry
    horizon: HorizonGrid
    models: tuple[HeteroModel, ...]   # flat index order
    copula: CopulaModel
    u_block: np.ndarray               # (s_max, dim) standardized scenario errors
    config: PipelineConfig
    metadata: dict
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        imap = self.index_map
        if len(self.models) != imap.dim:
            raise ValueError(f"bundle has {len(self.models)} models, grid needs {imap.dim}")
        if self.u_block.ndim != 2 or self.u_block.shape[1] != imap.dim:
            raise ValueError("u_block columns must match the model grid")
        self.u_block.setflags(write=False)

    @property
    def index_map(self) -> IndexMap:
        return IndexMap(len(self.registry), self.horizon.n_tau)

    @property
    def s_max(self) -> int:
        return self.u_block.shape[0]

    def model(self, w: int, tau: int) -> HeteroModel:
        return self.models[self.index_map.flat(w, tau)]


@dataclasses.dataclass(frozen=True, eq=False)
class ScenarioSet:
    scenarios: np.ndarray        # (S, n_w, n_tau) MW
    point_forecast: np.ndarray   # (n_w, n_tau) MW
    issue_time: np.datetime64
    farm_ids: tuple[str, ...]
    flags: tuple[str, ...] = ()
    clamp_rate: float = 0.0

    @property
    def n_scenarios(self) -> int:
        return self.scenarios.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_scenarios, 1.0 / self.n_scenarios)

    def aggregate(self) -> np.ndarray:
        """Per-scenario trajectories summed over farms, (S, n_tau)."""
        return self.scenarios.sum(axis=1)

    def aggregate_point(self) -> np.ndarray:
        return self.point_forecast.sum(axis=0)


# ------------------------------------------------------------------- training

@dataclasses.dataclass(frozen=True)
class Windows:
    fit_start: np.datetime64
    cdf_start: np.datetime64
    end: np.datetime64

    def to_dict(self) -> dict:
        f = lambda t: str(format_time(t))
        return {"regression": [f(self.fit_start), f(self.end)],
                "ecdf_copula": [f(self.cdf_start), f(self.end)]}


def training_windows(panel: SeriesPanel, cfg: PipelineConfig) -> Windows:
    end = parse_time(cfg.train_end) if cfg.train_end else panel.end
    fit_start = end - np.timedelta64(int(round(cfg.regression_days * 86400)), "s")
    cdf_start = end - np.timedelta64(int(round(cfg.ecdf_days * 86400)), "s")
    return Windows(fit_start, min(fit_start, cdf_start), end)


def _training_slice(panel: SeriesPanel, cfg: PipelineConfig, win: Windows) -> SeriesPanel:
    margin = STEP * (cfg.n_tau + cfg.features.power_lags + 1)
    if panel.n_tau != cfg.n_tau:
        raise ValueError(f"panel has {panel.n_tau} horizons, config expects {cfg.n_tau}")
    if win.end > panel.end or win.cdf_start - margin < panel.start:
        raise InsufficientDataError(
            f"panel [{panel.start}, {panel.end}) does not cover the training window "
            f"[{win.cdf_start}, {win.end}) plus {cfg.n_tau + cfg.features.power_lags + 1} "
            "slots of history")
    return slice_window(panel, win.cdf_start - margin, win.end)


@dataclasses.dataclass(frozen=True, eq=False)
class Regression:
    w: int
    tau: int
    alpha: np.ndarray | None
    beta: np.ndarray | None
    ridge: bool = False


def _model_dataset(sub: SeriesPanel, w: int, tau: int, cfg: PipelineConfig) -> Dataset | None:
    try:
        return build_dataset(sub, w, tau, cfg.features)
    except InsufficientDataError:
        return None


def fit_regressions(panel: SeriesPanel, cfg: PipelineConfig) -> list[Regression]:
    """Step 1 alone: f1/f2 coefficients on the regression window."""
    win = training_windows(panel, cfg)
    sub = _training_slice(panel, cfg, win)
    out = []
    for w in range(panel.n_farms):
        for tau in range(1, cfg.n_tau + 1):
            ds = _model_dataset(sub, w, tau, cfg)
            if ds is None:
                out.append(Regression(w, tau, None, None))
                continue
            fit = ds.subset(ds.row_times >= win.fit_start)
            if fit.n_rows < cfg.min_rows_per_feature * ds.X.shape[1]:
                out.append(Regression(w, tau, None, None))
                continue
            alpha, ra = fit_point(fit)
            beta, rb = fit_scale(fit, alpha)
            out.append(Regression(w, tau, alpha, beta, ra or rb))
    return out


def _train_one(sub: SeriesPanel, w: int, tau: int, cfg: PipelineConfig, win: Windows,
               reg: Regression | None):
    spec = cfg.features
    cap = sub.registry.farms[w].capacity
    floor = h_floor_for(cap, cfg.h_floor_abs_mw, cfg.h_floor_rel)
    ds = _model_dataset(sub, w, tau, cfg)
    if ds is None:
        n_feat = panel_layout(sub, w, tau, spec).n_features
        m = climatological_model(np.empty(0), spec, n_feat, cap, floor, w, tau,
                                 cfg.min_ecdf_samples, reason="no_rows")
        return m, None, 0
    fit = ds.subset(ds.row_times >= win.fit_start)
    cdf = ds.subset(ds.row_times >= win.cdf_start)
    if reg is not None and reg.alpha is None:
        m = climatological_model(fit.y, spec, ds.X.shape[1], cap, floor, w, tau,
                                 cfg.min_ecdf_samples, reason="fit_rows")
        return m, None, ds.n_dropped
    alpha = reg.alpha if reg is not None else None
    beta = reg.beta if reg is not None else None
    model, u = fit_model(fit, cdf, spec, cap, floor, w, tau, cfg.min_rows_per_feature,
                         cfg.min_ecdf_samples, alpha=alpha, beta=beta)
    if reg is not None and reg.ridge:
        model = dataclasses.replace(model, flags=model.flags + ("ridge",))
    if model.is_fallback:
        return model, None, ds.n_dropped
    return model, (cdf.row_index, to_gaussian(u, model.ecdf)), ds.n_dropped


def train(panel: SeriesPanel, cfg: PipelineConfig,
          regressions: Iterable[Regression] | None = None) -> TrainedBundle:
    """Run the offline steps and return a bundle ready for :func:`generate`.

    ``regressions`` (from :func:`fit_regressions`, possibly modified) replaces
    the step-1 fit; everything downstream is recomputed from them.
    """
    t_start = time.perf_counter()
    win = training_windows(panel, cfg)
    sub = _training_slice(panel, cfg, win)
    imap = IndexMap(panel.n_farms, cfg.n_tau)
    dim = imap.dim
    regs = None
    if regressions is not None:
        regs = {(r.w, r.tau): r for r in regressions}

    first = int(np.searchsorted(sub.timestamps, win.cdf_start))
    n_samples = (sub.n_times - first + cfg.copula_stride - 1) // cfg.copula_stride
    G = np.full((n_samples, dim), np.nan)

    keys = [imap.unflat(k) for k in range(dim)]

    def work(key):
        w, tau = key
        return _train_one(sub, w, tau, cfg, win, None if regs is None else regs.get(key))

    # residual series are written into G as each model finishes, so only one
    # model's rows are alive at a time (per worker)
    models = []
    dropped = []
    active = np.zeros(dim, dtype=bool)
    if cfg.workers > 1:
        pool = ThreadPoolExecutor(cfg.workers)
        batch = 4 * cfg.workers
        results = (r for lo in range(0, dim, batch)
                   for r in pool.map(work, keys[lo:lo + batch]))
    else:
        pool = None
        results = map(work, keys)
    try:
        for k, (model, gauss, n_dropped) in enumerate(results):
            models.append(model)
            dropped.append(n_dropped)
            if gauss is None:
                continue
            rows, g = gauss
            rel = rows - first
            on_grid = rel % cfg.copula_stride == 0
            G[rel[on_grid] // cfg.copula_stride, k] = g[on_grid]
            active[k] = True
    finally:
        if pool is not None:
            pool.shutdown()
    t_models = time.perf_counter()

    cols = np.flatnonzero(active)
    sub_model = None
    if cols.size:
        try:
            sub_model = estimate_correlation(G[:, cols], IndexMap(1, cols.size),
                                             cfg.copula_min_rows)
        except InsufficientDataError as exc:
            log.warning("copula falls back to independence: %s", exc)
    del G
    if sub_model is None:
        # no usable dependence information: independent columns, flagged
        reason = "no_active_columns" if cols.size == 0 else "insufficient_rows"
        copula = CopulaModel(np.eye(dim), np.eye(dim), imap, 0, (f"identity:{reason}",),
                             (1.0, 1.0))
    else:
        if cols.size == dim:
            sigma, chol = sub_model.sigma_n, sub_model.chol
        else:
            sigma = np.eye(dim)
            chol = np.eye(dim)
            sigma[np.ix_(cols, cols)] = sub_model.sigma_n
            chol[np.ix_(cols, cols)] = sub_model.chol
        copula = CopulaModel(sigma, chol, imap, sub_model.n_rows, sub_model.flags,
                             sub_model.diag_range)
    t_copula = time.perf_counter()

    block = draw_block(copula, cfg.s_max, cfg.seed).samples
    for k in range(dim):
        block[:, k] = from_gaussian(block[:, k], models[k].ecdf)
    t_block = time.perf_counter()

    d_lo, d_hi = copula.diag_range
    fallbacks = [[m.w, m.tau, "/".join(m.flags)] for m in models if m.is_fallback]
    ridge = [[m.w, m.tau] for m in models if "ridge" in m.flags]
    meta = {
        "package_version": __version__,
        "windows": win.to_dict(),
        "config_hash": config_hash(cfg.to_dict()),
        "seed": cfg.seed,
        "rows_dropped": dropped,
        "rows_dropped_total": int(sum(dropped)),
        "panel_missing_power": int(np.isnan(sub.power).sum()),
        "panel_flagged_on_load": int(panel.n_flagged),
        "fallbacks": fallbacks,
        "ridge": ridge,
        "copula": {
            "rows": copula.n_rows,
            "active_columns": int(cols.size),
            "flags": list(copula.flags),
            "chol_diag_min": d_lo,
            "chol_diag_max": d_hi,
            "condition_estimate": (d_hi / d_lo) ** 2,
        },
    }
    log.info("trained %d models in %.1fs, copula %.1fs, block %.1fs", dim,
             t_models - t_start, t_copula - t_models, t_block - t_copula)
    return TrainedBundle(panel.registry, cfg.horizon, tuple(models), copula, block, cfg, meta)


# --------------------------------------------------------------------- online

ASSEMBLE_CHUNK_BYTES = 1 << 20


@dataclasses.dataclass(frozen=True, eq=False)
class OnlineState:
    y_hat: np.ndarray   # (dim,)
    h_hat: np.ndarray   # (dim,)
    base: np.ndarray    # (dim,) NWP, or persistence where NWP is missing
    flags: tuple[str, ...]


def _layouts(bundle: TrainedBundle, panel: SeriesPanel) -> list[Layout]:
    cache = bundle.__dict__.get("_layout_cache")
    if cache is None or cache[0] is not panel.registry:
        lays = [panel_layout(panel, m.w, m.tau, m.spec) for m in bundle.models]
        cache = (panel.registry, lays)
        object.__setattr__(bundle, "_layout_cache", cache)
    return cache[1]


def online_point_and_scale(bundle: TrainedBundle, panel: SeriesPanel, t_now) -> OnlineState:
    """Step 8: point forecast and scale of every model at ``t_now``."""
    if panel.registry.ids != bundle.registry.ids:
        raise ValueError("panel farms do not match the bundle")
    if panel.n_tau != bundle.horizon.n_tau:
        raise ValueError("panel horizons do not match the bundle")
    i = panel.index_of(t_now)
    dim = bundle.index_map.dim
    y_hat = np.empty(dim)
    h_hat = np.empty(dim)
    nwp_now = panel.nwp[i]
    base = np.ascontiguousarray(nwp_now).reshape(dim).copy()
    flags = []
    lays = _layouts(bundle, panel)
    for k, model in enumerate(bundle.models):
        try:
            x = build_online_row(panel, i, model.w, model.tau, model.spec, lays[k])
        except FeatureUnavailableError as exc:
            y_hat[k] = 0.0
            h_hat[k] = max(bundle.config.fallback_widen * model.clim_scale, model.h_floor)
            flags.append(f"w={model.w},tau={model.tau}:stale:{exc.feature}")
            if not np.isfinite(base[k]):
                p = panel.power[i, model.w]
                base[k] = p if np.isfinite(p) else 0.0
                flags.append(f"w={model.w},tau={model.tau}:nwp_missing")
            continue
        y_hat[k] = x @ model.alpha
        h = x @ model.beta
        h_hat[k] = h if h > model.h_floor else model.h_floor
    return OnlineState(y_hat, h_hat, base, tuple(flags))


def assemble(bundle: TrainedBundle, state: OnlineState, S: int, issue_time,
             farm_ids: tuple[str, ...]) -> ScenarioSet:
    """Step 9: shift and scale the first S standardized rows, clip to capacity."""
    n_w, n_tau = bundle.index_map.n_w, bundle.index_map.n_tau
    caps = np.repeat(bundle.registry.capacities, n_tau)
    shift = state.base + state.y_hat
    out = np.empty((S, caps.size))
    clipped = 0
    # small row chunks keep the multiply, count and clip passes in cache
    step = max(1, ASSEMBLE_CHUNK_BYTES // (8 * caps.size))
    for lo in range(0, S, step):
        hi = min(S, lo + step)
        blk = out[lo:hi]
        np.multiply(bundle.u_block[lo:hi], state.h_hat, out=blk)
        blk += shift
        clipped += int(np.count_nonzero(blk < 0) + np.count_nonzero(blk > caps))
        # maximum/minimum are much faster than np.clip with array bounds
        np.maximum(blk, 0.0, out=blk)
        np.minimum(blk, caps, out=blk)
    point = np.clip(shift, 0.0, caps)
    return ScenarioSet(out.reshape(S, n_w, n_tau), point.reshape(n_w, n_tau),
                       np.datetime64(issue_time, "s"), farm_ids, state.flags,
                       clipped / out.size)


def generate(bundle: TrainedBundle, panel: SeriesPanel, t_now, S: int) -> ScenarioSet:
    if not 1 <= S <= bundle.s_max:
        raise ValueError(f"S must lie in 1..{bundle.s_max}, got {S}")
    state = online_point_and_scale(bundle, panel, t_now)
    return assemble(bundle, state, S, t_now, tuple(panel.registry.ids))


def bench(bundle: TrainedBundle, panel: SeriesPanel, S: int, repetitions: int = 3,
          t_now=None) -> list[dict]:
    """Wall time of the online path, split into step 8 and step 9."""
    t_now = panel.timestamps[-1] if t_now is None else t_now
    if not 1 <= S <= bundle.s_max:
        raise ValueError(f"S must lie in 1..{bundle.s_max}, got {S}")
    ids = tuple(panel.registry.ids)
    rows = []
    for rep in range(repetitions):
        t0 = time.perf_counter()
        state = online_point_and_scale(bundle, panel, t_now)
        t1 = time.perf_counter()
        assemble(bundle, state, S, t_now, ids)
        t2 = time.perf_counter()
        rows.append({"repetition": rep, "farms": bundle.index_map.n_w,
                     "horizons": bundle.index_map.n_tau, "scenarios": S,
                     "step8_s": t1 - t0, "step9_s": t2 - t1, "refill_s": 0.0,
                     "online_s": t2 - t0})
    return rows


# ---------------------------------------------------------------- persistence

def _pack_array(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    nb = name.encode()
    head = struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head


def save_bundle(bundle: TrainedBundle, path) -> None:
    """Write the versioned binary container; atomic via a ``.partial`` file."""
    models = bundle.models
    meta = {
        "metadata": bundle.metadata,
        "config": bundle.config.to_dict(),
        "registry": bundle.registry.to_dict(),
        "horizon": dataclasses.asdict(bundle.horizon),
        "models": [{"w": m.w, "tau": m.tau, "flags": list(m.flags)} for m in models],
        "copula": {"n_rows": bundle.copula.n_rows, "flags": list(bundle.copula.flags)},
    }
    arrays = {
        "feature_counts": np.array([m.n_features for m in models], dtype=float),
        "alpha": np.concatenate([m.alpha for m in models]),
        "beta": np.concatenate([m.beta for m in models]),
        "h_floor": np.array([m.h_floor for m in models]),
        "clim_scale": np.array([m.clim_scale for m in models]),
        "ecdf_counts": np.array([m.ecdf.n for m in models], dtype=float),
        "ecdf": np.concatenate([m.ecdf.sorted_u for m in models]),
        "sigma_n": bundle.copula.sigma_n,
        "chol": bundle.copula.chol,
        "u_block": bundle.u_block,
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    digest = hashlib.sha256()
    try:
        with open(tmp, "wb") as fh:
            def put(b):
                digest.update(b)
                fh.write(b)
            mb = json.dumps(meta, sort_keys=True).encode()
            put(MAGIC + struct.pack("<I", bundle.format_version))
            put(struct.pack("<Q", len(mb)) + mb)
            put(struct.pack("<I", len(arrays)))
            for name, arr in arrays.items():
                arr = np.ascontiguousarray(arr, dtype="<f8")
                put(_pack_array(name, arr))
                put(struct.pack("<Q", arr.nbytes))
                put(memoryview(arr).cast("B"))
            fh.write(digest.digest())
        tmp.replace(path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def load_bundle(path) -> TrainedBundle:
    """Read and verify a bundle; nothing is returned unless the checksum matches."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 + 32:
        raise BundleFormatError("bundle file is truncated")
    if raw[:len(MAGIC)] != MAGIC:
        raise BundleFormatError("not a bundle file (bad magic)")
    body = memoryview(raw)[:-32]
    if hashlib.sha256(body).digest() != raw[-32:]:
        raise ChecksumError("bundle checksum mismatch (corrupt or truncated file)")
    buf = io.BytesIO(body)
    buf.seek(len(MAGIC))
    (version,) = struct.unpack("<I", buf.read(4))
    if version != FORMAT_VERSION:
        raise BundleFormatError(f"bundle format version {version}, expected {FORMAT_VERSION}")
    try:
        (mlen,) = struct.unpack("<Q", buf.read(8))
        meta = json.loads(buf.read(mlen).decode())
        (count,) = struct.unpack("<I", buf.read(4))
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", buf.read(2))
            name = buf.read(nlen).decode()
            (ndim,) = struct.unpack("<B", buf.read(1))
            shape = struct.unpack(f"<{ndim}Q", buf.read(8 * ndim))
            (nbytes,) = struct.unpack("<Q", buf.read(8))
            start = buf.tell()
            arrays[name] = np.frombuffer(body[start:start + nbytes], dtype="<f8").reshape(shape)
            buf.seek(start + nbytes)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise BundleFormatError(f"malformed bundle: {exc}") from None

    cfg = PipelineConfig.from_dict(meta["config"])
    registry = FarmRegistry.from_dict(meta["registry"])
    horizon = HorizonGrid(**meta["horizon"])
    counts = arrays["feature_counts"].astype(int)
    ecounts = arrays["ecdf_counts"].astype(int)
    offs = np.concatenate([[0], np.cumsum(counts)])
    eoffs = np.concatenate([[0], np.cumsum(ecounts)])
    models = []
    for k, info in enumerate(meta["models"]):
        models.append(HeteroModel(
            arrays["alpha"][offs[k]:offs[k + 1]].copy(),
            arrays["beta"][offs[k]:offs[k + 1]].copy(),
            EcdfTable(arrays["ecdf"][eoffs[k]:eoffs[k + 1]]),
            cfg.features, float(arrays["h_floor"][k]), info["w"], info["tau"],
            float(arrays["clim_scale"][k]), tuple(info["flags"])))
    imap = IndexMap(len(registry), horizon.n_tau)
    copula = CopulaModel(arrays["sigma_n"], arrays["chol"], imap,
                         meta["copula"]["n_rows"], tuple(meta["copula"]["flags"]))
    return TrainedBundle(registry, horizon, tuple(models), copula, arrays["u_block"],
                         cfg, meta["metadata"], version)


# -------------------------------------------------------------------- writers

def _comment_line(fh, comment):
    if comment:
        fh.write(f"# {comment}\n")


def write_scenarios_csv(sset: ScenarioSet, path, comment: str | None = None) -> None:
    S, n_w, n_tau = sset.scenarios.shape
    stamp = str(format_time(sset.issue_time))
    ids = np.array(sset.farm_ids, dtype=object)
    vals = np.char.mod("%.3f", sset.scenarios.reshape(-1))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _comment_line(fh, comment)
        fh.write("issue_time,scenario,farm_id,horizon_steps,power_mw\n")
        scen = np.repeat(np.arange(1, S + 1), n_w * n_tau).astype(str)
        farm = np.tile(np.repeat(ids, n_tau), S).astype(str)
        hz = np.tile(np.arange(1, n_tau + 1), S * n_w).astype(str)
        lines = np.char.add(np.char.add(np.char.add(np.char.add(stamp + ",", scen), ","),
                                        np.char.add(farm, ",")),
                            np.char.add(np.char.add(hz, ","), vals))
        fh.write("\n".join(lines.tolist()))
        fh.write("\n")


def write_aggregate_csv(sset: ScenarioSet, path, comment: str | None = None) -> None:
    # sum of the rounded per-farm values, so the file equals the column sum of scenarios.csv
    agg = np.round(sset.scenarios, 3).sum(axis=1)
    stamp = str(format_time(sset.issue_time))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _comment_line(fh, comment)
        fh.write("issue_time,scenario,horizon_steps,power_mw\n")
        for s in range(agg.shape[0]):
            for j in range(agg.shape[1]):
                fh.write(f"{stamp},{s + 1},{j + 1},{agg[s, j]:.3f}\n")


def write_point_csv(sset: ScenarioSet, path, comment: str | None = None) -> None:
    stamp = str(format_time(sset.issue_time))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _comment_line(fh, comment)
        fh.write("issue_time,farm_id,horizon_steps,power_mw\n")
        for w, fid in enumerate(sset.farm_ids):
            for j in range(sset.point_forecast.shape[1]):
                fh.write(f"{stamp},{fid},{j + 1},{sset.point_forecast[w, j]:.3f}\n")
