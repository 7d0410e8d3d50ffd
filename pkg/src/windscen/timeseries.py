"""Farm registry, the aligned 5-minute series panel, and CSV ingestion.

Timestamps are held as ``datetime64[s]`` in UTC.  Missing values are NaN.
The NWP tensor is indexed ``nwp[t, w, tau - 1]`` where ``t`` is the slot at
which the forecast is considered available (most recent issue carried
forward), ``w`` the farm index and ``tau`` the 1-based horizon.
"""
from __future__ import annotations

import dataclasses
import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import PanelFormatError

log = logging.getLogger(__name__)

STEP = np.timedelta64(300, "s")
_STEP_S = 300

POWER_HEADER = ["timestamp", "farm_id", "power_mw"]
FORECAST_HEADER = ["issue_time", "farm_id", "horizon_steps", "forecast_mw"]
REGISTRY_HEADER = ["farm_id", "capacity_mw", "neighbors"]


@dataclasses.dataclass(frozen=True)
class Farm:
    farm_id: str
    capacity: float
    neighbors: tuple[str, ...] = ()


@dataclasses.dataclass(frozen=True)
class FarmRegistry:
    """Ordered farm list; the order defines the canonical farm index."""

    farms: tuple[Farm, ...]

    def __post_init__(self):
        ids = [f.farm_id for f in self.farms]
        if len(set(ids)) != len(ids):
            raise ValueError("farm ids must be unique")
        known = set(ids)
        for f in self.farms:
            if not f.capacity > 0:
                raise ValueError(f"farm {f.farm_id!r}: capacity must be > 0")
            if f.farm_id in f.neighbors:
                raise ValueError(f"farm {f.farm_id!r} lists itself as neighbor")
            unknown = [n for n in f.neighbors if n not in known]
            if unknown:
                raise ValueError(f"farm {f.farm_id!r}: unknown neighbors {unknown}")
        object.__setattr__(self, "_index", {fid: i for i, fid in enumerate(ids)})

    @classmethod
    def build(cls, ids: Sequence[str], capacities: Sequence[float], neighbors=None):
        neighbors = neighbors or [()] * len(ids)
        return cls(tuple(Farm(str(i), float(c), tuple(n))
                         for i, c, n in zip(ids, capacities, neighbors)))

    def __len__(self) -> int:
        return len(self.farms)

    @property
    def ids(self) -> list[str]:
        return [f.farm_id for f in self.farms]

    @property
    def capacities(self) -> np.ndarray:
        return np.array([f.capacity for f in self.farms], dtype=float)

    def index(self, farm_id: str) -> int:
        return self._index[farm_id]

    def neighbor_indices(self, w: int) -> list[int]:
        return [self._index[n] for n in self.farms[w].neighbors]

    def to_dict(self) -> list[dict]:
        return [{"farm_id": f.farm_id, "capacity": f.capacity,
                 "neighbors": list(f.neighbors)} for f in self.farms]

    @classmethod
    def from_dict(cls, rows: list[dict]) -> "FarmRegistry":
        return cls(tuple(Farm(r["farm_id"], float(r["capacity"]), tuple(r["neighbors"]))
                         for r in rows))


@dataclasses.dataclass(frozen=True)
class HorizonGrid:
    n_tau: int = 36
    step_minutes: int = 5

    def __post_init__(self):
        if self.n_tau < 1:
            raise ValueError("n_tau must be >= 1")

    @property
    def span_minutes(self) -> int:
        return self.n_tau * self.step_minutes


@dataclasses.dataclass(frozen=True, eq=False)
class SeriesPanel:
    """Power measurements and carried-forward NWP forecasts on one 5-minute grid."""

    registry: FarmRegistry
    timestamps: np.ndarray  # datetime64[s], shape (T,)
    power: np.ndarray       # (T, n_w) MW
    nwp: np.ndarray         # (T, n_w, n_tau) MW
    n_flagged: int = 0      # out-of-range cells turned into missing at load

    def __post_init__(self):
        T = self.timestamps.shape[0]
        if T == 0:
            raise ValueError("panel has no timestamps")
        if self.power.shape != (T, len(self.registry)):
            raise ValueError(f"power shape {self.power.shape} does not match grid")
        if self.nwp.ndim != 3 or self.nwp.shape[:2] != (T, len(self.registry)):
            raise ValueError(f"nwp shape {self.nwp.shape} does not match grid")
        if T > 1 and np.any(np.diff(self.timestamps) != STEP):
            raise ValueError("timestamps must be strictly increasing at 5-minute spacing")
        for arr in (self.timestamps, self.power, self.nwp):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, registry, start, power, nwp, n_flagged=0) -> "SeriesPanel":
        """Build a panel; ``nwp`` is copied into a time-contiguous layout."""
        power = np.asarray(power, dtype=float)
        nwp = np.asarray(nwp, dtype=float)
        start = np.datetime64(start, "s")
        stamps = start + STEP * np.arange(power.shape[0])
        store = np.ascontiguousarray(np.transpose(nwp, (1, 2, 0)))
        return cls(registry, stamps, power.copy(), store.transpose(2, 0, 1), n_flagged)

    @property
    def n_times(self) -> int:
        return self.timestamps.shape[0]

    @property
    def n_farms(self) -> int:
        return len(self.registry)

    @property
    def n_tau(self) -> int:
        return self.nwp.shape[2]

    @property
    def start(self) -> np.datetime64:
        return self.timestamps[0]

    @property
    def end(self) -> np.datetime64:
        """Exclusive end of the grid."""
        return self.timestamps[-1] + STEP

    @property
    def capacities(self) -> np.ndarray:
        return self.registry.capacities

    def index_of(self, t) -> int:
        t = np.datetime64(t, "s")
        offset = (t - self.timestamps[0]).astype(np.int64)
        if offset % _STEP_S or not 0 <= offset // _STEP_S < self.n_times:
            raise KeyError(f"{t} is not on the panel grid")
        return int(offset // _STEP_S)

    def missing_power_cells(self) -> int:
        return int(np.isnan(self.power).sum())


def slice_window(panel: SeriesPanel, start, end) -> SeriesPanel:
    """Timestamps in the half-open window ``[start, end)``."""
    start = np.datetime64(start, "s")
    end = np.datetime64(end, "s")
    if not start < end:
        raise ValueError("slice_window needs start < end")
    if start < panel.start or end > panel.end:
        raise ValueError(f"window [{start}, {end}) outside panel range "
                         f"[{panel.start}, {panel.end})")
    lo = int(np.searchsorted(panel.timestamps, start, side="left"))
    hi = int(np.searchsorted(panel.timestamps, end, side="left"))
    if hi <= lo:
        raise ValueError(f"window [{start}, {end}) contains no timestamps")
    return SeriesPanel(panel.registry, panel.timestamps[lo:hi], panel.power[lo:hi],
                       panel.nwp[lo:hi], panel.n_flagged)


# --------------------------------------------------------------------------- I/O

def format_time(ts) -> np.ndarray:
    return np.char.add(np.datetime_as_string(np.asarray(ts, dtype="datetime64[s]"),
                                             unit="s"), "Z")


def parse_time(value: str) -> np.datetime64:
    stamp = pd.Timestamp(value)
    if stamp.tzinfo is not None:
        stamp = stamp.tz_convert("UTC").tz_localize(None)
    return np.datetime64(stamp.to_datetime64(), "s")


def _read_table(path, header: list[str]) -> tuple[pd.DataFrame, int]:
    """Read a CSV as strings; returns the frame and the 1-based header line."""
    path = Path(path)
    skip = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                skip += 1
            else:
                break
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skiprows=skip)
    except pd.errors.EmptyDataError:
        raise PanelFormatError("file is empty", path) from None
    except pd.errors.ParserError as exc:
        raise PanelFormatError(f"malformed row: {exc}", path) from None
    if list(df.columns) != header:
        raise PanelFormatError(f"expected header {','.join(header)}, "
                               f"got {','.join(map(str, df.columns))}", path, skip + 1)
    return df, skip + 1


def _parse_floats(values: np.ndarray, path, first_line: int, what: str) -> np.ndarray:
    """Parse decimal strings; empty means missing."""
    values = np.asarray(values, dtype=object)
    out = np.full(values.shape[0], np.nan)
    present = values != ""
    try:
        out[present] = values[present].astype(float)
    except ValueError:
        for i in np.flatnonzero(present):
            try:
                float(values[i])
            except ValueError:
                raise PanelFormatError(f"bad {what} {values[i]!r}", path,
                                       first_line + int(i)) from None
    bad = present & ~np.isfinite(out)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise PanelFormatError(f"non-finite {what} {values[i]!r}", path, first_line + i)
    return out


def _parse_times(values: pd.Series, path, first_line: int, what: str) -> np.ndarray:
    parsed = pd.to_datetime(values, utc=True, format="ISO8601", errors="coerce")
    bad = parsed.isna().to_numpy()
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise PanelFormatError(f"bad {what} {values.iloc[i]!r}", path, first_line + i)
    secs = parsed.dt.tz_localize(None).to_numpy().astype("datetime64[s]")
    steps = np.diff(secs.astype(np.int64))
    if (steps < 0).any():
        i = int(np.flatnonzero(steps < 0)[0]) + 1
        raise PanelFormatError(f"non-monotone {what}", path, first_line + i)
    return secs


def _farm_indices(ids: pd.Series, registry: FarmRegistry, path, first_line: int):
    lookup = {fid: i for i, fid in enumerate(registry.ids)}
    idx = ids.map(lookup)
    bad = idx.isna().to_numpy()
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise PanelFormatError(f"unknown farm_id {ids.iloc[i]!r}", path, first_line + i)
    return idx.to_numpy().astype(np.int64)


def load_registry(path) -> FarmRegistry:
    df, header_line = _read_table(path, REGISTRY_HEADER)
    first = header_line + 1
    caps = _parse_floats(df["capacity_mw"].to_numpy(), path, first, "capacity_mw")
    farms = []
    for i, row in enumerate(df.itertuples(index=False)):
        if not caps[i] > 0:
            raise PanelFormatError(f"capacity must be > 0, got {row.capacity_mw!r}",
                                   path, first + i)
        nbrs = tuple(n for n in row.neighbors.split(";") if n)
        farms.append(Farm(row.farm_id, float(caps[i]), nbrs))
    try:
        return FarmRegistry(tuple(farms))
    except ValueError as exc:
        raise PanelFormatError(str(exc), path) from None


def write_registry(registry: FarmRegistry, path, comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(",".join(REGISTRY_HEADER) + "\n")
        for f in registry.farms:
            fh.write(f"{f.farm_id},{f.capacity:.3f},{';'.join(f.neighbors)}\n")


def load_panel(power_file, forecast_file, registry: FarmRegistry,
               n_tau: int | None = None) -> SeriesPanel:
    """Load power and forecast CSVs onto one 5-minute grid.

    The grid spans the first to the last power timestamp.  Values outside
    ``[0, capacity]`` become missing and are counted in ``n_flagged``.  NWP
    issues are mapped to the first grid slot at or after the issue time; each
    farm's most recent issue is carried forward to slots without one.
    """
    n_w = len(registry)
    caps = registry.capacities

    pdf, hl = _read_table(power_file, POWER_HEADER)
    if len(pdf) == 0:
        raise PanelFormatError("no power rows", power_file)
    first = hl + 1
    ptimes = _parse_times(pdf["timestamp"], power_file, first, "timestamp")
    secs = ptimes.astype(np.int64)
    off_grid = secs % _STEP_S != 0
    if off_grid.any():
        i = int(np.flatnonzero(off_grid)[0])
        raise PanelFormatError("timestamp not on the 5-minute grid", power_file, first + i)
    pw = _farm_indices(pdf["farm_id"], registry, power_file, first)
    pval = _parse_floats(pdf["power_mw"].to_numpy(), power_file, first, "power_mw")

    t0 = ptimes[0]
    T = int((secs[-1] - secs[0]) // _STEP_S) + 1
    slot = (secs - secs[0]) // _STEP_S
    cell = slot * n_w + pw
    uniq, counts = np.unique(cell, return_counts=True)
    if (counts > 1).any():
        dup = uniq[counts > 1][0]
        i = int(np.flatnonzero(cell == dup)[1])
        raise PanelFormatError("duplicate (timestamp, farm_id) row", power_file, first + i)
    power = np.full((T, n_w), np.nan)
    power[slot, pw] = pval
    flagged = (power < 0) | (power > caps[None, :])
    n_flagged = int(flagged.sum())
    power[flagged] = np.nan

    fdf, hl = _read_table(forecast_file, FORECAST_HEADER)
    first = hl + 1
    ftimes = _parse_times(fdf["issue_time"], forecast_file, first, "issue_time")
    fw = _farm_indices(fdf["farm_id"], registry, forecast_file, first)
    hz = _parse_floats(fdf["horizon_steps"].to_numpy(), forecast_file, first, "horizon_steps")
    if np.isnan(hz).any() or (hz != np.round(hz)).any() or (hz < 1).any():
        i = int(np.flatnonzero(np.isnan(hz) | (hz != np.round(hz)) | (hz < 1))[0])
        raise PanelFormatError("horizon_steps must be an integer >= 1", forecast_file, first + i)
    hz = hz.astype(np.int64)
    if n_tau is None:
        n_tau = int(hz.max()) if hz.size else 1
    over = hz > n_tau
    if over.any():
        i = int(np.flatnonzero(over)[0])
        raise PanelFormatError(f"horizon_steps > n_tau={n_tau}", forecast_file, first + i)
    fval = _parse_floats(fdf["forecast_mw"].to_numpy(), forecast_file, first, "forecast_mw")

    fsecs = ftimes.astype(np.int64) - secs[0]
    fslot = np.maximum(-(-fsecs // _STEP_S), 0)
    keep = fslot < T
    # later issues mapped to the same slot override earlier ones
    issue_key = ftimes.astype(np.int64)
    rows = np.flatnonzero(keep)
    fcell = (fslot[rows] * n_w + fw[rows]) * n_tau + (hz[rows] - 1)
    order = np.lexsort((issue_key[rows], fcell))
    fcell_sorted = fcell[order]
    same_issue = (np.diff(fcell_sorted) == 0) & (np.diff(issue_key[rows][order]) == 0)
    if same_issue.any():
        i = int(rows[order][np.flatnonzero(same_issue)[0] + 1])
        raise PanelFormatError("duplicate (issue_time, farm_id, horizon_steps) row",
                               forecast_file, first + i)
    last = np.ones(fcell_sorted.size, dtype=bool)
    last[:-1] = fcell_sorted[1:] != fcell_sorted[:-1]
    chosen = rows[order][last]

    raw = np.full((n_w, n_tau, T), np.nan)
    issued = np.zeros((n_w, T), dtype=bool)
    raw[fw[chosen], hz[chosen] - 1, fslot[chosen]] = fval[chosen]
    issued[fw[chosen], fslot[chosen]] = True
    fcap = caps[fw[chosen]]
    bad = (fval[chosen] < 0) | (fval[chosen] > fcap)
    n_flagged += int(bad.sum())
    raw[fw[chosen][bad], hz[chosen][bad] - 1, fslot[chosen][bad]] = np.nan

    src = np.where(issued, np.arange(T)[None, :], -1)
    src = np.maximum.accumulate(src, axis=1)
    store = np.full((n_w, n_tau, T), np.nan)
    for w in range(n_w):
        ok = src[w] >= 0
        store[w][:, ok] = raw[w][:, src[w, ok]]

    if n_flagged:
        log.warning("%d out-of-range values marked missing", n_flagged)
    stamps = t0 + STEP * np.arange(T)
    return SeriesPanel(registry, stamps, power, store.transpose(2, 0, 1), n_flagged)


def _fmt(values: np.ndarray) -> np.ndarray:
    out = np.char.mod("%.3f", np.nan_to_num(values, nan=0.0))
    return np.where(np.isnan(values), "", out)


def write_power_csv(panel: SeriesPanel, path, comment: str | None = None) -> None:
    T, n_w = panel.power.shape
    frame = pd.DataFrame({
        "timestamp": np.repeat(format_time(panel.timestamps), n_w),
        "farm_id": np.tile(np.array(panel.registry.ids, dtype=object), T),
        "power_mw": _fmt(panel.power.reshape(-1)),
    })
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        frame.to_csv(fh, index=False, lineterminator="\n")


def write_forecast_csv(panel: SeriesPanel, path, comment: str | None = None,
                       issue_every: int = 1) -> None:
    """Write one issue every ``issue_every`` slots (all horizons, all farms)."""
    T, n_w, n_tau = panel.nwp.shape
    slots = np.arange(0, T, issue_every)
    vals = panel.nwp[slots]  # (n_slots, n_w, n_tau)
    n = slots.size
    frame = pd.DataFrame({
        "issue_time": np.repeat(format_time(panel.timestamps[slots]), n_w * n_tau),
        "farm_id": np.tile(np.repeat(np.array(panel.registry.ids, dtype=object), n_tau), n),
        "horizon_steps": np.tile(np.arange(1, n_tau + 1), n * n_w),
        "forecast_mw": _fmt(np.ascontiguousarray(vals).reshape(-1)),
    })
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        frame.to_csv(fh, index=False, lineterminator="\n")


def write_panel(panel: SeriesPanel, power_path, forecast_path,
                comment: str | None = None, issue_every: int = 1) -> None:
    write_power_csv(panel, power_path, comment)
    write_forecast_csv(panel, forecast_path, comment, issue_every)
