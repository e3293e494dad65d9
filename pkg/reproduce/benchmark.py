"""
End-to-end run on the planted-topic benchmark over several seeds.

Prints, per seed, the Quality of the condensed set and of the size-matched
Random and Majority samples, the adjusted-Rand agreement between clusters and
planted groups, and the size ratios; then the medians. With ``--sweeps`` it
also reports the alpha and K sweeps.

    python reproduce/benchmark.py --seeds 0 1 2 3 4 --output-dir bench/
"""

import argparse
import os
import sys
import time

import pandas as pd

from condenserec.base import CondenseConfig, TrainConfig
from condenserec.datamodel import size_report, split_dataset
from condenserec.evaluate import adjusted_rand_index, evaluate, quality, sweep_alpha, sweep_k
from condenserec.pipeline import CondensePipeline
from condenserec.synthetic import SyntheticBenchmarkSpec, generate_synthetic
from condenserec.utils import always_get_an_event_loop, setup_logger


def run_seed(seed: int, args: argparse.Namespace) -> tuple[dict, list[dict]]:
    spec = SyntheticBenchmarkSpec(groups=args.groups, users_per_group=args.users_per_group, seed=seed)
    dataset, planted = generate_synthetic(spec)
    train, _, test = split_dataset(dataset, (0.8, 0.1, 0.1), seed=seed)

    pipeline = CondensePipeline(
        train_config=TrainConfig(epochs=args.epochs, seed=seed),
        condense_config=CondenseConfig(K=args.K, m=args.m, alpha=args.alpha, seed=seed),
    )
    start = time.perf_counter()
    params = pipeline.train_model(train)
    original = evaluate(params, test, pipeline.k_list)
    condensed, report = pipeline.condense(train, params)

    labels = report.cluster_labels()
    ari = adjusted_rand_index([planted[u] for u in labels], list(labels.values()))
    row = {
        "seed": seed,
        "ari": ari,
        "condensed": quality(evaluate(pipeline.train_model(condensed), test, pipeline.k_list), original),
    }
    for kind, baseline in pipeline.matched_baselines(condensed, train).items():
        row[kind] = quality(evaluate(pipeline.train_model(baseline), test, pipeline.k_list), original)
    sizes = size_report(condensed, train)
    row.update(
        item_ratio=sizes.item_ratio,
        user_ratio=sizes.user_ratio,
        overall_ratio=sizes.overall_ratio,
        seconds=time.perf_counter() - start,
    )

    sweeps = []
    if args.sweeps:
        loop = always_get_an_event_loop()
        for name, sweep, values in (
            ("alpha", sweep_alpha, args.alpha_values),
            ("K", sweep_k, args.k_values),
        ):
            for r in loop.run_until_complete(sweep(pipeline, train, test, values)):
                sweeps.append({"seed": seed, "param": name, "value": r.value, "quality_pct": r.quality_pct})
    return row, sweeps


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--groups", type=int, default=8)
    parser.add_argument("--users-per-group", type=int, default=50)
    parser.add_argument("-K", type=int, default=8)
    parser.add_argument("-m", type=int, default=5)
    parser.add_argument("--alpha", type=float, default=0.2)
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--sweeps", action="store_true")
    parser.add_argument("--alpha-values", type=float, nargs="+", default=[0.0, 0.2, 0.5, 1.0, 2.0])
    parser.add_argument("--k-values", type=int, nargs="+", default=[4, 8, 16])
    parser.add_argument("-o", "--output-dir", type=str, default=None)
    args = parser.parse_args()

    setup_logger("condenserec", "WARNING", enable_file_logging=False)
    rows, sweeps = [], []
    for seed in args.seeds:
        row, seed_sweeps = run_seed(seed, args)
        rows.append(row)
        sweeps.extend(seed_sweeps)
        print(
            f"seed {seed}: quality {row['condensed']:.2f}% "
            f"(random {row['random']:.2f}%, majority {row['majority']:.2f}%), "
            f"ARI {row['ari']:.3f}, overall ratio {row['overall_ratio']:.4f}"
        )

    table = pd.DataFrame(rows)
    print()
    print(table.to_string(index=False, float_format="%.4f"))
    medians = table.drop(columns="seed").median()
    print()
    print("median over seeds:")
    print(medians.to_string(float_format="%.4f"))
    beats = (medians["condensed"] > medians["random"]) and (medians["condensed"] > medians["majority"])
    print(f"condensed beats both size-matched baselines: {beats}")
    keeps = medians["condensed"] >= 90.0
    print(f"condensed keeps at least 90% of full-data quality: {keeps}")

    sweep_table = pd.DataFrame(sweeps)
    if not sweep_table.empty:
        print()
        print(sweep_table.pivot_table(index=["param", "value"], values="quality_pct", aggfunc="mean").to_string())

    if args.output_dir:
        os.makedirs(args.output_dir, exist_ok=True)
        table.to_csv(os.path.join(args.output_dir, "benchmark.tsv"), sep="\t", index=False)
        if not sweep_table.empty:
            sweep_table.to_csv(os.path.join(args.output_dir, "sweeps.tsv"), sep="\t", index=False)
        print(f"Tables written to {args.output_dir}")

    if not (beats and keeps):
        sys.exit(1)


if __name__ == "__main__":
    main()
