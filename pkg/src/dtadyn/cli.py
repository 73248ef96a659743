"""Command-line interface.

Commands: prepare, summarize, train, cv, predict, ablate, sweep,
export-attention.  Every command writes a manifest.json into its output
directory recording the command, seed, config hash, and input-file hashes;
data outputs are byte-identical across reruns with the same inputs and
seed (the manifest's timestamp is informational and never hashed).

Exit codes: 0 success; 1 data or I/O error; 2 usage error (argparse);
3 duplicate pdb_id in a descriptor table; 4 invalid configuration value.
Warnings (e.g. skipped candidate rows) never change the exit code; they
are counted in the manifest.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, data, train as train_mod
from .model import (
    ConfigError,
    ModelConfig,
    UnknownVariant,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from .protein import (
    DuplicatePdbId,
    DynamicDescriptor,
    ProteinInput,
    encode_sequence,
    normalize,
    read_descriptor_table,
)
from .smiles import SmilesError, smiles_to_graph
from .train import (
    AblationSpec,
    InvalidValue,
    TrainConfig,
    component_ablations,
    fusion_ablations,
)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, args, inputs: list,
                    outputs: list[str], configs: dict, warnings: int = 0):
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": getattr(args, "seed", None),
        "config_path": str(args.config) if getattr(args, "config", None) else None,
        "config_sha256": _sha256(args.config) if getattr(args, "config", None) else None,
        "configs": configs,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
        "warnings": warnings,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_configs(args) -> tuple[ModelConfig, TrainConfig]:
    """Config file (JSON: {"model": {...}, "train": {...}}) with flags winning."""
    model_kwargs: dict = {}
    train_kwargs: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            raw = json.load(fh)
        model_kwargs.update(raw.get("model", {}))
        train_kwargs.update(raw.get("train", {}))
    for flag, target, key in (
        ("seed", train_kwargs, "seed"),
        ("epochs", train_kwargs, "epochs"),
        ("batch_size", train_kwargs, "batch_size"),
        ("lr", train_kwargs, "learning_rate"),
        ("fusion", model_kwargs, "fusion_variant"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            target[key] = value
    try:
        return ModelConfig.from_dict(model_kwargs), TrainConfig(**train_kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_summary(out: Path, summary: data.DatasetSummary, report) -> list[str]:
    rows = [
        ("targets", summary.targets),
        ("ligands", summary.ligands),
        ("entries", summary.entries),
    ]
    if report is not None:
        for reason, count in sorted(report.dropped.items()):
            rows.append((f"dropped_{reason}", count))
        for reason, count in sorted(report.warnings.items()):
            rows.append((f"warning_{reason}", count))
    _write_csv(out / "summary.csv", ("key", "value"), rows)
    _write_csv(
        out / "histogram.csv",
        ("bin_lo", "bin_hi", "count"),
        [(f"{lo:g}", f"{hi:g}", n) for lo, hi, n in summary.histogram],
    )
    return ["summary.csv", "histogram.csv"]


def _results_row(name, report) -> tuple:
    return (
        name,
        f"{report.rmse_mean:.6f}",
        f"{report.rmse_std:.6f}",
        f"{report.r_mean:.6f}",
        f"{report.r_std:.6f}",
    )


RESULTS_HEADER = ("configuration", "rmse_mean", "rmse_std", "r_mean", "r_std")


def cmd_prepare(args) -> int:
    out = _out_dir(args)
    records, report = data.read_affinity_file(args.affinities)
    if not records and report.total_dropped == 0:
        print("error: no records in affinity file", file=sys.stderr)
        return 1
    table = read_descriptor_table(args.descriptors)
    prepared, report = data.prepare(records, table, report)
    data.save_cache(out / "dataset.cache", prepared)
    outputs = ["dataset.cache"]
    outputs += _write_summary(out, data.summarize(prepared, args.bin_width), report)
    _write_manifest(out, "prepare", args, [args.affinities, args.descriptors],
                    outputs, {}, warnings=sum(report.warnings.values()))
    print(f"prepared {len(prepared)} records "
          f"({report.total_dropped} dropped) -> {out / 'dataset.cache'}")
    return 0


def cmd_summarize(args) -> int:
    out = _out_dir(args)
    records = data.load_cache(args.cache)
    outputs = _write_summary(out, data.summarize(records, args.bin_width), None)
    _write_manifest(out, "summarize", args, [args.cache], outputs, {})
    return 0


def _write_loss_curve(path, curve, val_curve=()):
    if val_curve:
        rows = [(i + 1, f"{l:.10g}", f"{v:.10g}")
                for i, (l, v) in enumerate(zip(curve, val_curve))]
        _write_csv(path, ("epoch", "train_mse", "val_rmse"), rows)
    else:
        rows = [(i + 1, f"{l:.10g}") for i, l in enumerate(curve)]
        _write_csv(path, ("epoch", "train_mse"), rows)


def cmd_train(args) -> int:
    out = _out_dir(args)
    model_config, train_config = _load_configs(args)
    records = data.load_cache(args.cache)
    result = train_mod.train(records, model_config, train_config)
    save_checkpoint(out / "checkpoint.bin", model_config, result.params,
                    result.stats)
    _write_loss_curve(out / "loss_curve.csv", result.loss_curve, result.val_curve)
    _write_manifest(out, "train", args, [args.cache],
                    ["checkpoint.bin", "loss_curve.csv"],
                    {"model": model_config.as_dict(),
                     "train": train_config.__dict__})
    print(f"trained {train_config.epochs} epochs on {len(records)} records; "
          f"final MSE {result.loss_curve[-1]:.6f}")
    return 0


def cmd_cv(args) -> int:
    out = _out_dir(args)
    model_config, train_config = _load_configs(args)
    records = data.load_cache(args.cache)
    outputs = []

    def on_fold(fold_result, params):
        name = f"checkpoint_fold{fold_result.fold}.bin"
        save_checkpoint(out / name, model_config, params, fold_result.stats)
        outputs.append(name)

    report = train_mod.cross_validate(
        records, model_config, train_config, k=args.folds,
        workers=args.workers, on_fold=on_fold,
    )
    _write_csv(out / "results.csv", RESULTS_HEADER, [_results_row("cv", report)])
    _write_csv(
        out / "folds.csv",
        ("fold", "rmse", "pearson_r"),
        [(f.fold, f"{f.rmse:.6f}", f"{f.pearson:.6f}") for f in report.folds],
    )
    pred_rows = []
    for f in report.folds:
        pred_rows += [(f.fold, f"{y:.6f}", f"{p:.6f}")
                      for y, p in zip(f.y, f.y_hat)]
    _write_csv(out / "predictions.csv", ("fold", "y", "y_hat"), pred_rows)
    outputs += ["results.csv", "folds.csv", "predictions.csv"]
    _write_manifest(out, "cv", args, [args.cache], outputs,
                    {"model": model_config.as_dict(),
                     "train": train_config.__dict__})
    print(f"cv: rmse {report.rmse_mean:.4f}({report.rmse_std:.4f}) "
          f"r {report.r_mean:.4f}({report.r_std:.4f})")
    return 0


def cmd_predict(args) -> int:
    out = _out_dir(args)
    config, params, stats = load_checkpoint(args.checkpoint)
    if stats is None:
        print("error: checkpoint has no normalization stats", file=sys.stderr)
        return 1
    table = read_descriptor_table(args.descriptors)
    warnings = 0
    scored = []
    with open(args.candidates, newline="") as fh:
        sample = fh.readline()
        delim = "\t" if "\t" in sample else ","
        fh.seek(0)
        reader = csv.DictReader(fh, delimiter=delim)
        required = ("smiles", "protein_sequence", "pdb_id")
        missing = [c for c in required if c not in (reader.fieldnames or ())]
        if missing:
            raise ValueError(
                f"candidates file missing column(s): {', '.join(missing)}"
            )
        for line_no, row in enumerate(reader, start=2):
            pdb = row["pdb_id"].strip().upper()
            if pdb not in table:
                print(f"warning: line {line_no}: no descriptors for {pdb}",
                      file=sys.stderr)
                warnings += 1
                continue
            try:
                graph = smiles_to_graph(row["smiles"].strip())
            except SmilesError as exc:
                print(f"warning: line {line_no}: bad SMILES: {exc}",
                      file=sys.stderr)
                warnings += 1
                continue
            pin = ProteinInput(
                sequence_ids=encode_sequence(row["protein_sequence"].strip(),
                                             max_len=config.max_seq_len),
                raw_length=len(row["protein_sequence"].strip()),
                descriptors=normalize(table[pdb], stats),
            )
            preds, _ = forward([(graph, pin)], params, config, mode="eval")
            scored.append((row["smiles"].strip(), pdb, float(preds.array[0])))
    scored.sort(key=lambda item: -item[2])  # stable: input order breaks ties
    rows = [(rank + 1, smi, pdb, f"{score:.6f}")
            for rank, (smi, pdb, score) in enumerate(scored)]
    _write_csv(out / "ranked.csv", ("rank", "smiles", "pdb_id", "prediction"), rows)
    _write_manifest(out, "predict", args,
                    [args.checkpoint, args.candidates, args.descriptors],
                    ["ranked.csv"], {"model": config.as_dict()},
                    warnings=warnings)
    print(f"ranked {len(rows)} candidates ({warnings} skipped)")
    return 0


def cmd_ablate(args) -> int:
    out = _out_dir(args)
    model_config, train_config = _load_configs(args)
    records = data.load_cache(args.cache)
    specs: list[AblationSpec] = []
    if args.which in ("components", "all"):
        specs += component_ablations()
    if args.which in ("fusion", "all"):
        specs += fusion_ablations()
    rows = train_mod.ablate(records, model_config, train_config, specs,
                            k=args.folds, workers=args.workers)
    _write_csv(out / "ablation.csv", RESULTS_HEADER,
               [_results_row(name, report) for name, report in rows])
    _write_manifest(out, "ablate", args, [args.cache], ["ablation.csv"],
                    {"model": model_config.as_dict(),
                     "train": train_config.__dict__})
    for name, report in rows:
        print(f"{name}: rmse {report.rmse_mean:.4f}({report.rmse_std:.4f}) "
              f"r {report.r_mean:.4f}({report.r_std:.4f})")
    return 0


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    model_config, train_config = _load_configs(args)
    records = data.load_cache(args.cache)
    values = None
    if args.values:
        values = [float(v) if args.parameter == "P" else int(v)
                  for v in args.values.split(",")]
    rows = train_mod.sweep(records, args.parameter, values, model_config,
                           train_config, k=args.folds, workers=args.workers)
    _write_csv(
        out / f"sweep_{args.parameter}.csv",
        ("value",) + RESULTS_HEADER[1:],
        [(f"{value:g}",) + _results_row("", report)[1:] for value, report in rows],
    )
    _write_manifest(out, "sweep", args, [args.cache],
                    [f"sweep_{args.parameter}.csv"],
                    {"model": model_config.as_dict(),
                     "train": train_config.__dict__})
    return 0


def cmd_export_attention(args) -> int:
    out = _out_dir(args)
    config, params, stats = load_checkpoint(args.checkpoint)
    inputs = [args.checkpoint]
    if args.descriptor_values:
        values = [float(v) for v in args.descriptor_values.split(",")]
        if len(values) != 4:
            raise ValueError("--descriptor-values needs 4 comma-separated numbers")
        descriptor = DynamicDescriptor(*values)
    else:
        if not (args.descriptors and args.pdb_id):
            raise ValueError(
                "give either --descriptor-values or --descriptors with --pdb-id"
            )
        table = read_descriptor_table(args.descriptors)
        key = args.pdb_id.strip().upper()
        if key not in table:
            raise ValueError(f"pdb_id {key!r} not in descriptor file")
        descriptor = table[key]
        inputs.append(args.descriptors)
    if stats is None:
        print("error: checkpoint has no normalization stats", file=sys.stderr)
        return 1
    graph = smiles_to_graph(args.smiles)
    pin = ProteinInput(
        sequence_ids=encode_sequence(args.sequence, max_len=config.max_seq_len),
        raw_length=len(args.sequence),
        descriptors=normalize(descriptor, stats),
    )
    _, attention = forward([(graph, pin)], params, config, mode="eval",
                           collect_attention=True)
    weights = attention[0]
    rows = []
    if args.top is None:
        for direction, matrix in weights.items():
            for head in range(matrix.shape[0]):
                for pos in range(matrix.shape[1]):
                    rows.append((direction, head, pos,
                                 f"{matrix[head, pos]:.12g}"))
    else:
        # top-N residue positions by head-mean weight, one row per position
        matrix = weights["dynamic_to_target"]
        mean_w = matrix.mean(axis=0)
        order = sorted(range(len(mean_w)), key=lambda i: (-mean_w[i], i))
        for pos in order[: args.top]:
            rows.append(("dynamic_to_target", "mean", pos,
                         f"{mean_w[pos]:.12g}"))
    _write_csv(out / "attention.csv", ("direction", "head", "position_index",
                                       "weight"), rows)
    _write_manifest(out, "export-attention", args, inputs, ["attention.csv"],
                    {"model": config.as_dict()})
    print(f"wrote {len(rows)} attention rows")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtadyn",
        description="Drug-target binding affinity pipeline with protein "
                    "dynamics descriptors",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common_run_flags(p):
        p.add_argument("--config", help="JSON config file: "
                       '{"model": {...}, "train": {...}}')
        p.add_argument("--seed", type=int, help="root seed (overrides config)")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--lr", type=float)
        p.add_argument("--fusion", choices=("concat", "sum", "average",
                                            "hadamard", "tfn"))
        p.add_argument("--workers", type=int, default=1,
                       help="parallel fold training processes")
        p.add_argument("--out", required=True)

    p = sub.add_parser("prepare", help="ingest, transform, join, cache")
    p.add_argument("--affinities", required=True)
    p.add_argument("--descriptors", required=True)
    p.add_argument("--bin-width", type=float, default=0.5, dest="bin_width")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("summarize", help="summary and histogram from a cache")
    p.add_argument("--cache", required=True)
    p.add_argument("--bin-width", type=float, default=0.5, dest="bin_width")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("train", help="train one model on the whole cache")
    p.add_argument("--cache", required=True)
    common_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    p.add_argument("--cache", required=True)
    p.add_argument("--folds", type=int, default=5)
    common_run_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", help="rank candidate pairs by predicted affinity")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--candidates", required=True,
                   help="CSV with smiles, protein_sequence, pdb_id")
    p.add_argument("--descriptors", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ablate", help="component and fusion ablation tables")
    p.add_argument("--cache", required=True)
    p.add_argument("--which", choices=("components", "fusion", "all"),
                   default="all")
    p.add_argument("--folds", type=int, default=5)
    common_run_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="hyperparameter sensitivity table")
    p.add_argument("--cache", required=True)
    p.add_argument("--parameter", choices=("P", "D", "H", "L"), required=True)
    p.add_argument("--values", help="comma-separated grid (default: standard)")
    p.add_argument("--folds", type=int, default=5)
    common_run_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-attention",
                       help="per-position attention weights for one pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--smiles", required=True)
    p.add_argument("--sequence", required=True)
    p.add_argument("--pdb-id", dest="pdb_id")
    p.add_argument("--descriptors")
    p.add_argument("--descriptor-values", dest="descriptor_values",
                   help="avg_rmsf,avg_gyr,div_se,div_mm (raw, pre-normalization)")
    p.add_argument("--top", type=int,
                   help="keep only the N positions with the highest "
                        "head-mean weight")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_attention)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DuplicatePdbId as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, InvalidValue, UnknownVariant) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
