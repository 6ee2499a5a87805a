"""Command-line interface.

Every subcommand prints a JSON result to stdout (the `report` command
prints text) and exits 0 on success. Library failures exit 1 with a
machine-readable JSON error object on stderr; anything unexpected exits
2 the same way.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, metrics, reference, runner, stats
from .errors import HarnessError


def _emit(doc, out_path: str | None) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2)
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
    print(text)


def _load_config(args) -> runner.ExperimentConfig:
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.set:
        doc = runner.apply_overrides(doc, args.set)
    return runner.ExperimentConfig.from_dict(doc)


def _cmd_ingest(args) -> int:
    summary = runner.ingest(args.manifest, args.labels)
    _emit(summary, args.out)
    return 0


def _cmd_cv(args) -> int:
    config = _load_config(args)
    artifact = runner.run_cv(config)
    _emit(
        {
            "config_fingerprint": artifact.config_fingerprint,
            "output_dir": str(artifact.output_dir),
            "mean_per_dimension_r2": artifact.aggregate_report.mean_per_dimension_r2,
            "pooled_r2": artifact.aggregate_report.pooled_r2,
            "per_fold_mean_r2": [r.mean_per_dimension_r2 for r in artifact.per_fold_reports],
            "predictions": str(artifact.predictions_path),
            "checkpoints": [str(p) for p in artifact.checkpoints],
        },
        args.out,
    )
    return 0


def _cmd_ablate(args) -> int:
    config = _load_config(args)
    try:
        values = json.loads(args.values)
    except json.JSONDecodeError as exc:
        raise HarnessError(f"--values must be a JSON list: {exc}") from exc
    if not isinstance(values, list):
        raise HarnessError("--values must be a JSON list")
    rows = runner.run_ablation(config, args.axis, values)
    _emit(
        {
            "axis": args.axis,
            "rows": [
                {"value": v, "mean_per_dimension_r2": r.mean_per_dimension_r2}
                for v, r in rows
            ],
        },
        args.out,
    )
    return 0


def _cmd_fuse(args) -> int:
    a = analysis.load_predictions(args.preds_a)
    b = analysis.load_predictions(args.preds_b)
    ids = analysis.aligned_ids(a, b)
    targets = runner.targets_for_ids(args.labels, ids)
    result: dict = {"mode": args.mode, "n_segments": len(ids)}
    if args.mode == "weighted":
        alpha = (
            args.alpha
            if args.alpha is not None
            else analysis.select_fusion_weight(a, b, targets, ids, args.grid_step)
        )
        fused = analysis.weighted_fusion(a, b, alpha)
        result["alpha"] = alpha
    else:
        gate = analysis.fit_gate(a, b, targets, ids)
        fused = analysis.gated_fusion(a, b, gate)
        result["gate_logits"] = gate.logits.tolist()
    t_rows = np.stack([targets[i] for i in ids])
    names = (
        metrics.DIMENSION_NAMES
        if fused.dim == len(metrics.DIMENSION_NAMES)
        else [f"d{i}" for i in range(fused.dim)]
    )
    report = metrics.make_report(fused.matrix(ids), t_rows, ids, dimension_names=names)
    result["report"] = report.to_dict()
    if args.fused_out:
        analysis.write_predictions(args.fused_out, fused)
        result["fused_predictions"] = args.fused_out
    _emit(result, args.out)
    return 0


def _cmd_compare(args) -> int:
    report = runner.run_compare(args.preds_a, args.preds_b, args.labels)
    _emit(report, args.out)
    return 0


def _cmd_consistency(args) -> int:
    preds = analysis.load_predictions(args.preds)
    performer_map = analysis.load_performer_map(args.performers)
    per_dim, overall = analysis.intra_piece_consistency(preds, performer_map)
    names = (
        metrics.DIMENSION_NAMES
        if per_dim.shape[0] == len(metrics.DIMENSION_NAMES)
        else [f"d{i}" for i in range(per_dim.shape[0])]
    )
    _emit(
        {
            "per_dimension_mean_std": {n: float(v) for n, v in zip(names, per_dim)},
            "overall_mean_std": overall,
            "reference_overall_mean_std": reference.INTRA_PIECE_STD,
        },
        args.out,
    )
    return 0


def _load_piece_map(path) -> dict[str, str]:
    """segment -> piece map from any CSV with segment_id/piece_id columns.

    Rows that also carry a rendition column get a composite
    "segment__rendition" key as well, matching cv prediction ids.
    """
    import csv

    mapping: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "segment_id" not in reader.fieldnames or "piece_id" not in reader.fieldnames:
            raise HarnessError(f"{path}: need columns segment_id and piece_id")
        for row in reader:
            mapping[row["segment_id"]] = row["piece_id"]
            if "rendition" in row and row["rendition"]:
                mapping[f"{row['segment_id']}__{row['rendition']}"] = row["piece_id"]
    return mapping


def _cmd_difficulty(args) -> int:
    preds = analysis.load_predictions(args.preds)
    table = analysis.load_difficulty(args.table)
    piece_of = _load_piece_map(args.pieces)
    overall, per_dim, p_values = analysis.difficulty_correlation(
        preds, table, piece_of, aggregate=args.aggregate
    )
    names = (
        metrics.DIMENSION_NAMES
        if per_dim.shape[0] == len(metrics.DIMENSION_NAMES)
        else [f"d{i}" for i in range(per_dim.shape[0])]
    )
    _emit(
        {
            "aggregate": args.aggregate,
            "overall_rho": overall,
            "overall_p": stats.format_p(p_values["overall"]) if p_values["overall"] is not None else None,
            "per_dimension_rho": {n: float(v) for n, v in zip(names, per_dim)},
            "per_dimension_p": {
                n: stats.format_p(v) for n, v in zip(names, p_values["per_dimension"])
            },
            "reference_overall_rho": reference.DIFFICULTY_SPEARMAN,
        },
        args.out,
    )
    return 0


def _cmd_report(args) -> int:
    if args.reference:
        print(json.dumps(reference.summary(), sort_keys=True, indent=2))
        return 0
    doc = json.loads(Path(args.report_path).read_text(encoding="utf-8"))
    lines = []
    lines.append(f"config fingerprint : {doc.get('config_fingerprint', '?')}")
    lines.append(f"segments           : {doc.get('n_segments', '?')}")
    lines.append(
        f"mean per-dim R^2   : {doc['mean_per_dimension_r2']:.4f}"
        f"   (reference best audio: {reference.AUDIO_BEST_R2})"
    )
    lines.append(f"pooled R^2         : {doc['pooled_r2']:.4f}")
    boot = doc.get("bootstrap") or {}
    if "mean_per_dim_r2" in boot:
        b = boot["mean_per_dim_r2"]
        lines.append(
            f"95% bootstrap CI   : [{b['lo']:.4f}, {b['hi']:.4f}]"
            f"   (reference: {list(reference.AUDIO_BEST_R2_CI)})"
        )
    per_dim = doc.get("per_dimension_r2") or {}
    if per_dim:
        lines.append("per-dimension R^2:")
        for name in sorted(per_dim, key=lambda n: -per_dim[n]):
            lines.append(f"  {name:<22s} {per_dim[name]: .4f}")
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pianoprobe",
        description="Regression harness over frozen-encoder piano performance embeddings.",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="validate a manifest and its embedding files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("cv", help="run piece-split cross-validation")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                   help="override a config leaf, e.g. --set train.lr=0.01")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_cv)

    p = sub.add_parser("ablate", help="sweep one config axis with run_cv per value")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=runner.ABLATION_AXES)
    p.add_argument("--values", required=True, help="JSON list of axis values")
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_ablate)

    p = sub.add_parser("fuse", help="late-fuse two prediction files")
    p.add_argument("--preds-a", required=True)
    p.add_argument("--preds-b", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--mode", choices=("weighted", "gated"), default="weighted")
    p.add_argument("--alpha", type=float, default=None,
                   help="fixed fusion weight; omitted selects by grid search")
    p.add_argument("--grid-step", type=float, default=0.05)
    p.add_argument("--fused-out", default=None, help="write fused predictions CSV here")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_fuse)

    p = sub.add_parser("compare", help="significance tests between two prediction files")
    p.add_argument("--preds-a", required=True)
    p.add_argument("--preds-b", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_compare)

    p = sub.add_parser("consistency", help="intra-piece prediction spread across performers")
    p.add_argument("--preds", required=True)
    p.add_argument("--performers", required=True,
                   help="CSV segment_id,piece_id,performer_id")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_consistency)

    p = sub.add_parser("difficulty", help="rank-correlate predictions with difficulty ratings")
    p.add_argument("--preds", required=True)
    p.add_argument("--table", required=True, help="CSV piece_id,rating")
    p.add_argument("--pieces", required=True,
                   help="CSV with segment_id,piece_id columns (labels file works)")
    p.add_argument("--aggregate", choices=analysis.AGGREGATE_MODES,
                   default="mean_of_dimensions")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_difficulty)

    p = sub.add_parser("report", help="pretty-print a report JSON next to reference values")
    p.add_argument("report_path", nargs="?", default=None)
    p.add_argument("--reference", action="store_true",
                   help="print the reference benchmark values and exit")
    p.set_defaults(handler=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = getattr(args, "handler", None)
    if handler is None:
        parser.print_help()
        return 1
    if handler is _cmd_report and not args.reference and not args.report_path:
        parser.error("report needs a report JSON path or --reference")
    try:
        return handler(args)
    except HarnessError as exc:
        print(
            json.dumps({"error": exc.__class__.__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort CLI boundary
        print(
            json.dumps(
                {"error": "UnexpectedError", "message": f"{exc.__class__.__name__}: {exc}"}
            ),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
