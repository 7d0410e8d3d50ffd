"""Command-line entry point: ``windscen {synth,train,generate,evaluate,bench}``."""
from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path


from . import metrics, pipeline, synth
from .config import RunConfig, load_config
from .errors import WindscenError
from .timeseries import (STEP, format_time, load_panel, load_registry, parse_time,
                         write_panel, write_registry)

log = logging.getLogger("windscen")


class UsageError(WindscenError):
    pass


class Outputs:
    """Files written by one command; removed again if the command fails."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.done: list[Path] = []

    @property
    def stamp(self) -> str:
        return f"windscen {self.command} seed={self.cfg.seed} config={self.cfg.hash()}"

    @contextlib.contextmanager
    def path(self, target):
        target = Path(target)
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(target.name + ".partial")
        try:
            yield tmp
        except BaseException:
            tmp.unlink(missing_ok=True)
            raise
        tmp.replace(target)
        self.done.append(target)

    def csv(self, target, header, rows):
        with self.path(target) as tmp, open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# {self.stamp}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            wr.writerows(rows)

    def json(self, target, payload):
        payload = {"seed": self.cfg.seed, "config_hash": self.cfg.hash(), **payload}
        with self.path(target) as tmp:
            tmp.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")

    def rollback(self):
        for p in self.done:
            p.unlink(missing_ok=True)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _load_panel(cfg: RunConfig):
    p = cfg.paths.resolved()
    registry = load_registry(p["registry"])
    panel = load_panel(p["power"], p["forecast"], registry, cfg.pipeline.n_tau)
    if panel.n_flagged:
        log.warning("%d input values outside [0, capacity] were marked missing", panel.n_flagged)
    return panel


def cmd_synth(cfg: RunConfig, out: Outputs, args) -> None:
    p = cfg.paths.resolved()
    spec = dataclasses.replace(cfg.synth.oracle, n_tau=cfg.pipeline.n_tau)
    panel, truth = synth.generate_feed(spec, synth.days(cfg.synth.days))
    with out.path(p["registry"]) as tmp:
        write_registry(panel.registry, tmp, out.stamp)
    with out.path(p["power"]) as tp, out.path(p["forecast"]) as tf:
        write_panel(panel, tp, tf, out.stamp, issue_every=spec.nwp_issue_steps)
    with out.path(p["truth"]) as tmp:
        synth.write_truth(truth, tmp, {"seed": cfg.seed, "config_hash": cfg.hash()})
    print(f"wrote {panel.n_times} slots x {panel.n_farms} farms to {p['out_dir']}")


def cmd_train(cfg: RunConfig, out: Outputs, args) -> None:
    p = cfg.paths.resolved()
    panel = _load_panel(cfg)
    t0 = time.perf_counter()
    bundle = pipeline.train(panel, cfg.pipeline)
    elapsed = time.perf_counter() - t0
    with out.path(p["bundle"]) as tmp:
        pipeline.save_bundle(bundle, tmp)
    meta = bundle.metadata
    out.json(p["out_dir"] / "train_report.json", {
        "windows": meta["windows"],
        "models": len(bundle.models),
        "rows_dropped_total": meta["rows_dropped_total"],
        "panel_missing_power": meta["panel_missing_power"],
        "panel_flagged_on_load": meta["panel_flagged_on_load"],
        "fallbacks": meta["fallbacks"],
        "ridge": meta["ridge"],
        "copula": meta["copula"],
    })
    print(f"trained {len(bundle.models)} models in {elapsed:.1f}s -> {p['bundle']}")


def cmd_generate(cfg: RunConfig, out: Outputs, args) -> None:
    if args.scenarios is None or args.scenarios < 1:
        raise UsageError("--scenarios must be a positive integer")
    p = cfg.paths.resolved()
    bundle = pipeline.load_bundle(p["bundle"])
    panel = _load_panel(cfg)
    t_now = parse_time(args.at) if args.at else panel.timestamps[-1]
    t0 = time.perf_counter()
    sset = pipeline.generate(bundle, panel, t_now, args.scenarios)
    elapsed = time.perf_counter() - t0
    d = p["out_dir"]
    with out.path(d / "scenarios.csv") as tmp:
        pipeline.write_scenarios_csv(sset, tmp, out.stamp)
    with out.path(d / "scenarios_aggregate.csv") as tmp:
        pipeline.write_aggregate_csv(sset, tmp, out.stamp)
    with out.path(d / "point_forecast.csv") as tmp:
        pipeline.write_point_csv(sset, tmp, out.stamp)
    for flag in sset.flags:
        log.warning("fallback: %s", flag)
    print(f"generated {sset.n_scenarios} scenarios at {format_time(t_now)} "
          f"in {elapsed:.3f}s (clamp rate {sset.clamp_rate:.4f})")


def _eval_window(cfg: RunConfig, bundle, panel):
    ev = cfg.evaluate
    start = parse_time(ev.start) if ev.start else metrics.training_end(bundle)
    end = parse_time(ev.end) if ev.end else panel.end - STEP * cfg.pipeline.n_tau
    if not start < end:
        raise UsageError(f"empty evaluation window [{start}, {end})")
    return start, end


def cmd_evaluate(cfg: RunConfig, out: Outputs, args) -> None:
    p = cfg.paths.resolved()
    ev = cfg.evaluate
    bundle = pipeline.load_bundle(p["bundle"])
    panel = _load_panel(cfg)
    window = _eval_window(cfg, bundle, panel)
    d = p["out_dir"]
    slots = metrics.issue_slots(panel, window, ev.cadence_minutes, cfg.pipeline.n_tau)
    if slots.size == 0:
        raise UsageError("no complete issues inside the evaluation window")

    used, scores = metrics.score_issues(bundle, panel, slots, ev.scenarios, ev.variogram_p)
    out.csv(d / "scores.csv", ["issue_time", "energy", "integrated_distance", "variogram"],
            [[str(format_time(panel.timestamps[i])), _fmt(s.energy),
              _fmt(s.integrated_distance), _fmt(s.variogram)] for i, s in zip(used, scores)])

    table = metrics.point_rmse_by_horizon(bundle, panel, slots)
    out.csv(d / "rmse.csv", ["horizon_steps", "model_rmse", "nwp_rmse"],
            [[j + 1, _fmt(table[j, 0]), _fmt(table[j, 1])] for j in range(table.shape[0])])

    stride = ev.cadence_minutes // 5
    n_tau = cfg.pipeline.n_tau
    for w, tau in ev.reliability_models:
        tau = min(tau, n_tau)
        curve = metrics.reliability(bundle, panel, w, tau, window, ev.levels, stride)
        out.csv(d / f"reliability_w{w}_tau{tau}.csv", ["level", "observed", "gaussian_observed"],
                [[_fmt(l), _fmt(o), _fmt(g)] for l, o, g in
                 zip(curve.levels, curve.observed, curve.gaussian_observed)])

    n_w = bundle.index_map.n_w
    for k, ((w1, t1), (w2, t2)) in enumerate(ev.rank_pairs):
        w1, w2 = min(w1, n_w - 1), min(w2, n_w - 1)
        t1, t2 = min(t1, n_tau), min(t2, n_tau)
        sc = metrics.rank_scatter(bundle, panel, ((w1, t1), (w2, t2)), window, seed=cfg.seed)
        out.csv(d / f"rank_scatter_{k}.csv", ["source", "r1", "r2"],
                [[s, _fmt(a), _fmt(b)] for s, a, b in sc.rows()])
        log.info("rank pair %d: rho=%.3f", k, sc.rho)

    if ev.compare:
        res = metrics.compare_representations(panel, cfg.pipeline, window, ev.scenarios,
                                              ev.cadence_minutes, ev.variogram_p)
        mf, ma = res.means()
        out.csv(d / "compare.csv",
                ["mode", "energy", "integrated_distance", "variogram", "energy_mean",
                 "integrated_distance_mean", "variogram_mean", "issues"],
                [["per_farm", *map(_fmt, res.per_farm.as_tuple()), *map(_fmt, mf.as_tuple()),
                  res.n_issues],
                 ["aggregate_only", *map(_fmt, res.aggregate_only.as_tuple()),
                  *map(_fmt, ma.as_tuple()), res.n_issues]])
        better = res.per_farm_better()
        print("per-farm <= aggregate-only (energy, integrated distance, variogram): "
              + ", ".join(str(b) for b in better))
    print(f"evaluated {len(used)} issues in [{format_time(window[0])}, {format_time(window[1])})")


def cmd_bench(cfg: RunConfig, out: Outputs, args) -> None:
    b = cfg.bench
    rows = []
    sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else b.scenarios
    for n_w in b.farms:
        for n_tau in b.horizons:
            spec = dataclasses.replace(cfg.synth.oracle, n_farms=n_w, n_tau=n_tau)
            panel, _ = synth.generate_feed(spec, synth.days(b.days))
            pcfg = dataclasses.replace(cfg.pipeline, n_tau=n_tau, regression_days=b.regression_days,
                                       ecdf_days=b.ecdf_days, s_max=max(sizes),
                                       copula_stride=1, train_end=None)
            t0 = time.perf_counter()
            bundle = pipeline.train(panel, pcfg)
            train_s = time.perf_counter() - t0
            for S in sizes:
                for r in pipeline.bench(bundle, panel, S, b.repetitions):
                    rows.append([n_w, n_tau, S, r["repetition"], _fmt(train_s),
                                 _fmt(r["step8_s"]), _fmt(r["step9_s"]), _fmt(r["online_s"])])
                    print(f"farms={n_w} horizons={n_tau} S={S} rep={r['repetition']} "
                          f"online={r['online_s']:.3f}s")
    out.csv(cfg.paths.resolved()["out_dir"] / "bench.csv",
            ["farms", "horizons", "scenarios", "repetition", "train_s", "step8_s", "step9_s",
             "online_s"], rows)


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "generate": cmd_generate,
            "evaluate": cmd_evaluate, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="windscen", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory (overrides paths.out_dir)")
        if name == "generate":
            sp.add_argument("--at", help="issue time, ISO-8601 UTC (default: last slot)")
            sp.add_argument("--scenarios", type=int, required=True)
        if name == "bench":
            sp.add_argument("--sizes", help="comma-separated scenario counts")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = None
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
        out = Outputs(cfg, args.command)
        COMMANDS[args.command](cfg, out, args)
    except (WindscenError, ValueError, KeyError, OSError) as exc:
        if out is not None:
            out.rollback()
        print(f"windscen {args.command}: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
