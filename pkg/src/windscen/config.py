"""Run configuration: one YAML file, environment overrides, CLI flags.

Environment variables ``WINDSCEN__<SECTION>__<KEY>`` (nested keys joined by
``__``) override file values; values are parsed as YAML scalars.
"""
from __future__ import annotations

import dataclasses
import os
from pathlib import Path
from typing import Any

import yaml

from .features import FeatureSpec
from .pipeline import PipelineConfig, config_hash
from .synth import OracleSpec

ENV_PREFIX = "WINDSCEN__"


@dataclasses.dataclass
class Paths:
    out_dir: str = "out"
    registry: str | None = None
    power: str | None = None
    forecast: str | None = None
    bundle: str | None = None
    truth: str | None = None

    def resolved(self) -> dict[str, Path]:
        out = Path(self.out_dir)
        defaults = {"registry": "registry.csv", "power": "power.csv",
                    "forecast": "forecast.csv", "bundle": "bundle.wsb", "truth": "truth.json"}
        res = {"out_dir": out}
        for key, name in defaults.items():
            val = getattr(self, key)
            res[key] = Path(val) if val else out / name
        files = [res[k] for k in defaults]
        if len({p.resolve() for p in files}) != len(files):
            raise ValueError("configured paths must be distinct")
        return res


@dataclasses.dataclass
class EvaluateConfig:
    start: str | None = None        # default: end of the training window
    end: str | None = None          # default: last issue with a full horizon
    levels: list[float] = dataclasses.field(
        default_factory=lambda: [round(0.05 * i, 2) for i in range(1, 20)])
    scenarios: int = 200
    cadence_minutes: int = 15
    variogram_p: float = 0.5
    reliability_models: list[list[int]] = dataclasses.field(default_factory=lambda: [[0, 12]])
    # pairs of (w, tau) models; defaults: spatial, temporal and spatio-temporal (35 min)
    rank_pairs: list[list[list[int]]] = dataclasses.field(default_factory=lambda: [
        [[0, 24], [1, 24]], [[0, 12], [0, 13]], [[0, 12], [1, 19]]])
    compare: bool = True


@dataclasses.dataclass
class SynthConfig:
    days: float = 120.0
    oracle: OracleSpec = dataclasses.field(default_factory=OracleSpec)


@dataclasses.dataclass
class BenchConfig:
    farms: list[int] = dataclasses.field(default_factory=lambda: [5, 20])
    horizons: list[int] = dataclasses.field(default_factory=lambda: [12, 36])
    scenarios: list[int] = dataclasses.field(default_factory=lambda: [100, 1000])
    repetitions: int = 3
    days: float = 8.0
    regression_days: float = 4.0
    ecdf_days: float = 6.0


@dataclasses.dataclass
class RunConfig:
    seed: int = 0
    paths: Paths = dataclasses.field(default_factory=Paths)
    pipeline: PipelineConfig = dataclasses.field(default_factory=PipelineConfig)
    evaluate: EvaluateConfig = dataclasses.field(default_factory=EvaluateConfig)
    synth: SynthConfig = dataclasses.field(default_factory=SynthConfig)
    bench: BenchConfig = dataclasses.field(default_factory=BenchConfig)

    def with_seed(self, seed: int) -> "RunConfig":
        """Propagate the run seed into every seeded component."""
        return dataclasses.replace(
            self, seed=seed,
            pipeline=dataclasses.replace(self.pipeline, seed=seed),
            synth=dataclasses.replace(
                self.synth, oracle=dataclasses.replace(self.synth.oracle, seed=seed)))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["pipeline"] = self.pipeline.to_dict()
        out["synth"]["oracle"] = self.synth.oracle.to_dict()
        return out

    def hash(self) -> str:
        payload = self.to_dict()
        payload.pop("paths")
        return config_hash(payload)


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _env_overrides(environ) -> dict:
    tree: dict[str, Any] = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in key[len(ENV_PREFIX):].split("__") if p]
        if not parts:
            continue
        node = tree
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(raw) if raw != "" else None
    return tree


def _build(cls, data: dict | None):
    data = data or {}
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def from_dict(data: dict) -> RunConfig:
    data = dict(data or {})
    known = {"seed", "paths", "pipeline", "evaluate", "synth", "bench"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    pipe = dict(data.get("pipeline") or {})
    if "features" in pipe:
        pipe["features"] = _build(FeatureSpec, pipe["features"])
    synth = dict(data.get("synth") or {})
    if "oracle" in synth:
        synth["oracle"] = _build(OracleSpec, synth["oracle"])
    cfg = RunConfig(
        seed=int(data.get("seed", 0)),
        paths=_build(Paths, data.get("paths")),
        pipeline=_build(PipelineConfig, pipe),
        evaluate=_build(EvaluateConfig, data.get("evaluate")),
        synth=_build(SynthConfig, synth),
        bench=_build(BenchConfig, data.get("bench")),
    )
    return cfg.with_seed(cfg.seed)


def load_config(path=None, environ=None, seed: int | None = None,
                out_dir: str | None = None) -> RunConfig:
    data: dict = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        if loaded is not None and not isinstance(loaded, dict):
            raise ValueError("config file must contain a mapping")
        data = loaded or {}
    data = _merge(data, _env_overrides(os.environ if environ is None else environ))
    if seed is not None:
        data["seed"] = seed
    if out_dir is not None:
        data = _merge(data, {"paths": {"out_dir": out_dir}})
    return from_dict(data)
