"""Train on a 152-farm, 36-horizon, 4-month oracle feed and time online generation.

Usage: python3 scripts/bench_full_scale.py [--farms 152] [--days 120] [--reps 5]
"""
import argparse
import resource
import time

import numpy as np

from windscen import pipeline, synth


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--farms", type=int, default=152)
    ap.add_argument("--horizons", type=int, default=36)
    ap.add_argument("--days", type=float, default=120)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = synth.OracleSpec(n_farms=args.farms, n_tau=args.horizons, seed=args.seed)
    t0 = time.perf_counter()
    panel, _ = synth.generate_feed(spec, synth.days(args.days))
    print(f"feed: {panel.n_times} slots x {panel.n_farms} farms in {time.perf_counter() - t0:.1f}s")

    cfg = pipeline.PipelineConfig(n_tau=args.horizons, seed=args.seed)
    t0 = time.perf_counter()
    bundle = pipeline.train(panel, cfg)
    print(f"train: {time.perf_counter() - t0:.1f}s")

    med = {}
    for S in (1000, 10000):
        rows = pipeline.bench(bundle, panel, S, args.reps)
        med[S] = float(np.median([r["online_s"] for r in rows]))
        s8 = np.median([r["step8_s"] for r in rows])
        s9 = np.median([r["step9_s"] for r in rows])
        print(f"S={S}: online {med[S]:.3f}s (step 8 {s8:.3f}s, step 9 {s9:.3f}s)")
    print(f"ratio S=10000 / S=1000: {med[10000] / med[1000]:.2f}")
    print(f"peak rss: {resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1e6:.2f} GB")


if __name__ == "__main__":
    main()
