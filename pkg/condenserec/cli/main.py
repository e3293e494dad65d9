"""
condenserec command line.

    condenserec ingest --items items.tsv --behaviors behaviors.tsv
    condenserec gen-synthetic --output-dir data/
    condenserec condense --config run.ini --set condense.alpha=0.5
    condenserec compare --items data/items.tsv --behaviors data/behaviors.tsv

Exit status is 0 on success, 2 when inputs or configuration are invalid and
1 on any other failure.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from dataclasses import asdict
from typing import Any

import numpy as np
import pandas as pd
from ascii_colors import ASCIIColors
from pydantic import ValidationError

from condenserec import __version__
from condenserec.base import Dataset
from condenserec.cli.config import PipelineConfig, load_pipeline_config
from condenserec.datamodel import (
    dataset_stats,
    load_dataset,
    save_dataset,
    size_report,
    split_dataset,
)
from condenserec.evaluate import (
    evaluate,
    matched_baseline_ratios,
    quality,
    sweep_alpha,
    sweep_k,
)
from condenserec.exceptions import (
    CondenseRecError,
    ConfigError,
    DatasetError,
    InvalidArgumentError,
)
from condenserec.pipeline import CondensePipeline
from condenserec.prompt import load_template, save_template
from condenserec.recmodel import RecModelParams, save_params
from condenserec.synthetic import SyntheticBenchmarkSpec, generate_synthetic
from condenserec.types import CompareRow, MetricsReport, RunManifest
from condenserec.utils import (
    always_get_an_event_loop,
    compute_file_digest,
    logger,
    setup_logger,
    write_json,
)

VARIANTS = ("original", "condensed", "random", "majority")


class RunOutputs:
    """Writes artifacts under the output directory and records their names."""

    def __init__(self, output_dir: str) -> None:
        self.output_dir = output_dir
        self.files: list[str] = []
        os.makedirs(output_dir, exist_ok=True)

    def path(self, name: str) -> str:
        full = os.path.join(self.output_dir, name)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        if name not in self.files:
            self.files.append(name)
        return full

    def table(self, name: str, frame: pd.DataFrame) -> str:
        path = self.path(name)
        frame.to_csv(path, sep="\t", index=False, lineterminator="\n")
        return path

    def json(self, name: str, obj: Any) -> str:
        path = self.path(name)
        write_json(obj, path)
        return path

    def dataset(self, prefix: str, dataset: Dataset) -> tuple[str, str]:
        items_path = self.path(f"{prefix}items.tsv")
        behaviors_path = self.path(f"{prefix}behaviors.tsv")
        save_dataset(dataset, items_path, behaviors_path)
        return items_path, behaviors_path

    def manifest(self, command: str, config: PipelineConfig, inputs: list[str]) -> str:
        manifest = RunManifest(
            command=command,
            config_hash=config.config_hash(),
            seed=config.seed,
            package_version=__version__,
            numpy_version=np.__version__,
            python_version=platform.python_version(),
            inputs={p: compute_file_digest(p) for p in inputs},
            outputs=sorted(self.files),
        )
        path = os.path.join(self.output_dir, "manifest.json")
        write_json(manifest.model_dump(), path)
        return path


def _metrics_frame(reports: dict[str, MetricsReport]) -> pd.DataFrame:
    rows = []
    for variant, report in reports.items():
        row = {"variant": variant, **report.as_row()}
        row["quality_pct"] = report.quality_pct
        row["n_groups"] = report.n_groups
        row["skipped_groups"] = report.skipped_groups
        rows.append(row)
    return pd.DataFrame(rows)


def _emit(args: argparse.Namespace, frame: pd.DataFrame, payload: Any) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    else:
        print(frame.to_csv(sep="\t", index=False, lineterminator="\n"), end="")


def _input_paths(config: PipelineConfig) -> tuple[str, str]:
    items, behaviors = config.dataset.items, config.dataset.behaviors
    if not items or not behaviors:
        raise ConfigError("dataset.items and dataset.behaviors must be set (--items/--behaviors)")
    return items, behaviors


def _make_pipeline(config: PipelineConfig) -> CondensePipeline:
    prompt = load_template(config.llm.prompt_file) if config.llm.prompt_file else None
    return CondensePipeline(
        train_config=config.train_config(),
        condense_config=config.condense_config(),
        evo_config=config.evo_config(),
        llm_config=config.llm_config(),
        k_list=tuple(config.eval.k_list),
        prompt=prompt,
    )


def _load_split(config: PipelineConfig) -> tuple[list[str], Dataset, Dataset]:
    items_path, behaviors_path = _input_paths(config)
    dataset = load_dataset(items_path, behaviors_path)
    train, _, test = split_dataset(dataset, config.dataset.split, config.seed)
    return [items_path, behaviors_path], train, test


# commands


def cmd_ingest(args: argparse.Namespace, config: PipelineConfig) -> int:
    dataset = load_dataset(*_input_paths(config))
    stats = asdict(dataset_stats(dataset))
    frame = pd.DataFrame([stats])
    frame["density_pct"] = frame["density"] * 100.0
    _emit(args, frame, stats)
    return 0


def cmd_gen_synthetic(args: argparse.Namespace, config: PipelineConfig) -> int:
    spec = SyntheticBenchmarkSpec(
        groups=args.groups,
        users_per_group=args.users_per_group,
        items_per_topic=args.items_per_topic,
        noise_rate=args.noise_rate,
        seed=config.seed,
    )
    dataset, groups = generate_synthetic(spec)
    outputs = RunOutputs(config.output_dir)
    outputs.dataset("", dataset)
    outputs.table(
        "groups.tsv",
        pd.DataFrame({"user_id": list(groups), "group": list(groups.values())}),
    )
    outputs.json("spec.json", asdict(spec))
    outputs.manifest("gen-synthetic", config, [])
    ASCIIColors.green(
        f"Wrote {dataset.n_users} users and {dataset.n_items} items to {config.output_dir}"
    )
    return 0


def cmd_train(args: argparse.Namespace, config: PipelineConfig) -> int:
    pipeline = _make_pipeline(config)
    inputs, train, test = _load_split(config)
    params = pipeline.train_model(train)
    report = pipeline.evaluate(params, test)

    outputs = RunOutputs(config.output_dir)
    save_params(params, outputs.path("model.bin"), pipeline.train_config)
    outputs.path("model.bin.json")
    frame = _metrics_frame({"original": report})
    outputs.table("metrics_original.tsv", frame)
    outputs.json("loss_history.json", params.loss_history)
    write_json({"train": params.train_seconds}, os.path.join(config.output_dir, "timings.json"))
    outputs.manifest("train", config, inputs)
    _emit(args, frame, report.model_dump())
    return 0


def cmd_evolve(args: argparse.Namespace, config: PipelineConfig) -> int:
    pipeline = _make_pipeline(config)
    inputs, train, _ = _load_split(config)
    winners, trace = pipeline.evolve(train)

    outputs = RunOutputs(config.output_dir)
    for generation, prompt in enumerate(winners, start=1):
        save_template(prompt, outputs.path(f"prompts/gen{generation}.prompt"))
    if winners:
        save_template(winners[-1], outputs.path("prompts/final.prompt"))
    trace.write(outputs.path("evolution_trace.tsv"))
    outputs.manifest("evolve", config, inputs)

    frame = trace.to_frame()
    _emit(args, frame, {"trace": frame.to_dict(orient="records"), "aborted": trace.aborted})
    if trace.aborted:
        logger.error(f"Prompt evolution aborted: {trace.aborted}")
        return 1
    return 0


def _write_condensed(
    outputs: RunOutputs, condensed: Dataset, report, train: Dataset, prefix: str = "condensed/"
) -> pd.DataFrame:
    outputs.dataset(prefix, condensed)
    report.write_provenance(outputs.path("provenance.tsv"))
    if report.cluster_model is not None:
        outputs.table(
            "clusters.tsv",
            pd.DataFrame(
                {
                    "user_id": list(report.cluster_model.assignments),
                    "cluster": list(report.cluster_model.assignments.values()),
                }
            ),
        )
    sizes = pd.DataFrame([asdict(size_report(condensed, train))])
    outputs.table("size_report.tsv", sizes)
    outputs.json(
        "condense_report.json",
        {
            "n_users": condensed.n_users,
            "n_items": condensed.n_items,
            "n_impressions": len(condensed.impressions),
            "failed_items": report.failed_items,
            "failed_interest_users": report.failed_interest_users,
            "skipped_users": report.skipped_users,
            "inertia": report.cluster_model.inertia if report.cluster_model else None,
        },
    )
    return sizes


def cmd_condense(args: argparse.Namespace, config: PipelineConfig) -> int:
    pipeline = _make_pipeline(config)
    inputs, train, _ = _load_split(config)
    params = pipeline.train_model(train)
    condensed, report = pipeline.condense(train, params)

    outputs = RunOutputs(config.output_dir)
    sizes = _write_condensed(outputs, condensed, report, train)
    write_json(
        {"train": params.train_seconds, **report.stage_seconds},
        os.path.join(config.output_dir, "timings.json"),
    )
    outputs.manifest("condense", config, inputs)
    ASCIIColors.green(
        f"Condensed to {condensed.n_users} users and {condensed.n_items} items "
        f"(overall size ratio {sizes['overall_ratio'].iloc[0]:.4f})"
    )
    _emit(args, sizes, sizes.to_dict(orient="records")[0])
    return 0


def _variant_datasets(
    pipeline: CondensePipeline,
    config: PipelineConfig,
    train: Dataset,
    params: RecModelParams,
    which: list[str],
) -> dict[str, Dataset]:
    variants: dict[str, Dataset] = {}
    if "original" in which:
        variants["original"] = train
    needs_condensed = "condensed" in which or (
        any(v in which for v in ("random", "majority"))
        and config.eval.baseline_user_ratio is None
    )
    condensed = None
    if needs_condensed:
        condensed, _ = pipeline.condense(train, params)
        if "condensed" in which:
            variants["condensed"] = condensed
    baselines = [v for v in ("random", "majority") if v in which]
    if baselines:
        if config.eval.baseline_user_ratio is not None:
            user_ratio = config.eval.baseline_user_ratio
            token_ratio = config.eval.baseline_token_ratio or 1.0
        else:
            user_ratio, token_ratio = matched_baseline_ratios(condensed, train)
            token_ratio = config.eval.baseline_token_ratio or token_ratio
        for kind in baselines:
            variants[kind] = pipeline.baseline(kind, train, user_ratio, token_ratio)
    return variants


def _evaluate_variants(
    args: argparse.Namespace, config: PipelineConfig, which: list[str]
) -> tuple[list[str], Dataset, dict[str, Dataset], dict[str, MetricsReport]]:
    pipeline = _make_pipeline(config)
    inputs, train, test = _load_split(config)
    params = pipeline.train_model(train)
    original = pipeline.evaluate(params, test)
    variants = _variant_datasets(pipeline, config, train, params, which)
    reports: dict[str, MetricsReport] = {}
    for name, dataset in variants.items():
        if name == "original":
            report = original
            report.quality_pct = 100.0
        else:
            report = evaluate(pipeline.train_model(dataset), test, pipeline.k_list)
            report.quality_pct = quality(report, original)
        reports[name] = report
    return inputs, train, variants, reports


def cmd_eval(args: argparse.Namespace, config: PipelineConfig) -> int:
    inputs, _, _, reports = _evaluate_variants(args, config, [args.which])
    outputs = RunOutputs(config.output_dir)
    frame = _metrics_frame(reports)
    outputs.table(f"metrics_{args.which}.tsv", frame)
    outputs.manifest("eval", config, inputs)
    _emit(args, frame, reports[args.which].model_dump())
    return 0


def cmd_compare(args: argparse.Namespace, config: PipelineConfig) -> int:
    inputs, train, variants, reports = _evaluate_variants(args, config, list(VARIANTS))
    rows = [
        CompareRow(
            variant=name,
            metrics=report.as_row(),
            quality_pct=report.quality_pct,
            overall_ratio=size_report(variants[name], train).overall_ratio,
        )
        for name, report in reports.items()
    ]
    frame = pd.DataFrame(
        [
            {"variant": r.variant, **r.metrics, "quality_pct": r.quality_pct, "overall_ratio": r.overall_ratio}
            for r in rows
        ]
    )
    outputs = RunOutputs(config.output_dir)
    outputs.table("compare.tsv", frame)
    outputs.manifest("compare", config, inputs)
    _emit(args, frame, [r.model_dump() for r in rows])
    return 0


def _parse_values(raw: str, cast) -> list:
    try:
        values = [cast(v) for v in raw.split(",") if v.strip()]
    except ValueError as e:
        raise InvalidArgumentError(f"invalid sweep values {raw!r}: {e}") from e
    if not values:
        raise InvalidArgumentError("no sweep values given")
    return values


def _cmd_sweep(args: argparse.Namespace, config: PipelineConfig, name: str, sweep, cast) -> int:
    values = _parse_values(args.values, cast)
    pipeline = _make_pipeline(config)
    inputs, train, test = _load_split(config)
    loop = always_get_an_event_loop()
    rows = loop.run_until_complete(sweep(pipeline, train, test, values))
    frame = pd.DataFrame(
        [
            {
                name: r.value,
                "quality_pct": r.quality_pct,
                "n_users": r.n_users,
                "n_items": r.n_items,
                "overall_ratio": r.overall_ratio,
                **r.metrics,
            }
            for r in rows
        ]
    )
    outputs = RunOutputs(config.output_dir)
    outputs.table(f"sweep_{name}.tsv", frame)
    outputs.manifest(f"sweep-{name}", config, inputs)
    _emit(args, frame, [r.model_dump() for r in rows])
    return 0


def cmd_sweep_alpha(args: argparse.Namespace, config: PipelineConfig) -> int:
    return _cmd_sweep(args, config, "alpha", sweep_alpha, float)


def cmd_sweep_k(args: argparse.Namespace, config: PipelineConfig) -> int:
    return _cmd_sweep(args, config, "K", sweep_k, int)


COMMANDS = {
    "ingest": cmd_ingest,
    "gen-synthetic": cmd_gen_synthetic,
    "train": cmd_train,
    "evolve": cmd_evolve,
    "condense": cmd_condense,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "sweep-alpha": cmd_sweep_alpha,
    "sweep-k": cmd_sweep_k,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file with a [condenserec] section")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config key, e.g. condense.alpha=0.5 (repeatable)",
    )
    common.add_argument("--items", help="Items file (dataset.items)")
    common.add_argument("--behaviors", help="Behaviors file (dataset.behaviors)")
    common.add_argument("--output-dir", help="Directory for all outputs (output_dir)")
    common.add_argument("--seed", type=int, help="Global seed (seed)")
    common.add_argument("--backend", choices=["mock", "openai"], help="LLM backend (llm.kind)")
    common.add_argument("--prompt", help="Condensation prompt file (llm.prompt_file)")
    common.add_argument("--json", action="store_true", help="Print results as JSON")
    common.add_argument(
        "--log-level",
        default=os.getenv("LOG_LEVEL", "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
    )
    common.add_argument(
        "--no-log-file", action="store_true", help="Log to the console only"
    )

    parser = argparse.ArgumentParser(
        prog="condenserec",
        description="Training-free dataset condensation for content-based recommendation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", parents=[common], help="Validate a dataset and print its statistics")

    gen = sub.add_parser("gen-synthetic", parents=[common], help="Generate the planted-topic benchmark")
    gen.add_argument("--groups", type=int, default=8)
    gen.add_argument("--users-per-group", type=int, default=50)
    gen.add_argument("--items-per-topic", type=int, default=40)
    gen.add_argument("--noise-rate", type=float, default=0.1)

    sub.add_parser("train", parents=[common], help="Train the recommender on the train split")
    sub.add_parser("evolve", parents=[common], help="Evolve the condensation prompt")
    sub.add_parser("condense", parents=[common], help="Condense the train split")

    ev = sub.add_parser("eval", parents=[common], help="Evaluate one dataset variant")
    ev.add_argument("--which", choices=VARIANTS, default="condensed")

    sub.add_parser("compare", parents=[common], help="Evaluate every variant with Quality")

    sa = sub.add_parser("sweep-alpha", parents=[common], help="Quality for several alpha values")
    sa.add_argument("--values", default="0,0.2,0.5,1,2")
    sk = sub.add_parser("sweep-k", parents=[common], help="Quality for several cluster counts")
    sk.add_argument("--values", default="4,8,16")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logger("condenserec", args.log_level, enable_file_logging=not args.no_log_file)
    try:
        config = load_pipeline_config(
            args.config,
            args.overrides,
            **{
                "dataset.items": args.items,
                "dataset.behaviors": args.behaviors,
                "output_dir": args.output_dir,
                "seed": args.seed,
                "llm.kind": args.backend,
                "llm.prompt_file": args.prompt,
            },
        )
        return COMMANDS[args.command](args, config)
    except (DatasetError, ConfigError, InvalidArgumentError, ValidationError) as e:
        logger.error(str(e))
        return 2
    except CondenseRecError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
