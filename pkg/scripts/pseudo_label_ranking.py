"""Rank the observed positives of each class by their pseudo label and
compare where true and false positives land."""
import argparse

import numpy as np

from noisydistill.benchmark import BenchmarkConfig, benchmark_spec, mean_ranks, rank_by_pseudo, run_benchmark
from noisydistill.datagen import generate
from noisydistill.kgraph import build_relation_matrix


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--beta", type=float, default=0.4)
    args = ap.parse_args()

    ds, graph = generate(benchmark_spec(args.seed))
    rep = run_benchmark(ds, graph, ["Baseline-Clean", "Baseline-Noisy"], BenchmarkConfig(seed=args.seed))
    aux, lam = rep.models["Baseline-Clean"], rep.metadata["lambda_auto"]
    rel = build_relation_matrix(graph, ds.label_names, args.beta)
    print(f"lambda {lam:.4f}")
    print(f"{'class':6s} {'n':>4s}  {'distill TP/FP':>15s}  {'guided TP/FP':>15s}")
    for c, name in enumerate(ds.label_names):
        ranking = rank_by_pseudo(ds, c, lam, aux, 1.0, rel, splits=("noisy-train",))
        cols = []
        for key in ("distill", "guided"):
            tp, fp = mean_ranks(ranking[key])
            cols.append(f"{tp:6.1f} / {fp:6.1f}" if np.isfinite(fp) else f"{tp:6.1f} /    n/a")
        print(f"{name:6s} {len(ranking['distill']):4d}  {cols[0]:>15s}  {cols[1]:>15s}")


if __name__ == "__main__":
    main()
