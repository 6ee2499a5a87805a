"""Experiment orchestration: configs, cross-validation, ablations, reports.

A run is described by one JSON config document. The config's canonical
serialization (excluding output_dir) is hashed into a fingerprint that
every emitted report and checkpoint embeds, together with the literal
seeds used, so any artifact can be traced back to an exact rerun recipe.
Reports deliberately contain no timestamps: two runs of the same config
must produce byte-identical files.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import analysis, metrics, nnet, pooling, stats
from .dataset import (
    DIMENSION_NAMES,
    PairKey,
    assign_folds,
    load_labels,
    load_manifest,
    make_split,
    unique_pieces,
)
from .embedding_store import read_embedding_file, select_layers
from .errors import AlignmentError, ContractError, DegenerateError, HarnessError
from .rng import derive_seed

OUTPUT_ROOT_ENV = "PIANOPROBE_OUTPUT_ROOT"

POOLING_MODES = ("mean", "max", "attention")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    manifest_path: str = ""
    labels_path: str = ""
    layer_range: list[int] | None = None
    pooling: str = "mean"
    folds: int = 4
    seed: int = 42
    renditions_mode: str = "all"
    val_fraction: float = 0.15
    bootstrap_resamples: int = 10_000
    bootstrap_confidence: float = 0.95
    train: nnet.TrainConfig = field(default_factory=nnet.TrainConfig)
    output_dir: str = "runs/default"

    def validate(self) -> None:
        if not self.manifest_path:
            raise ContractError("config requires manifest_path")
        if not self.labels_path:
            raise ContractError("config requires labels_path")
        if self.pooling not in POOLING_MODES:
            raise ContractError(
                f"unknown pooling {self.pooling!r}, expected one of {POOLING_MODES}"
            )
        if self.folds < 2:
            raise ContractError(f"folds must be >= 2, got {self.folds}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ContractError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.layer_range is not None:
            if not self.layer_range:
                raise ContractError("layer_range must be null or non-empty")
            if len(set(self.layer_range)) != len(self.layer_range):
                raise ContractError(f"layer_range has duplicates: {self.layer_range}")
        self.train.validate()

    def to_dict(self) -> dict:
        return {
            "manifest_path": self.manifest_path,
            "labels_path": self.labels_path,
            "layer_range": list(self.layer_range) if self.layer_range else None,
            "pooling": self.pooling,
            "folds": self.folds,
            "seed": self.seed,
            "renditions_mode": self.renditions_mode,
            "val_fraction": self.val_fraction,
            "bootstrap_resamples": self.bootstrap_resamples,
            "bootstrap_confidence": self.bootstrap_confidence,
            "train": self.train.to_dict(),
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ExperimentConfig":
        data = dict(raw)
        train_raw = data.pop("train", {})
        unknown = set(data) - {
            "manifest_path", "labels_path", "layer_range", "pooling", "folds",
            "seed", "renditions_mode", "val_fraction", "bootstrap_resamples",
            "bootstrap_confidence", "output_dir",
        }
        if unknown:
            raise ContractError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data, train=nnet.TrainConfig.from_dict(train_raw))
        cfg.validate()
        return cfg

    def fingerprint(self) -> str:
        """Stable hash of the normalized config, excluding output_dir."""
        doc = self.to_dict()
        doc.pop("output_dir")
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]

    def resolved_output_dir(self) -> Path:
        """output_dir, re-rooted under $PIANOPROBE_OUTPUT_ROOT when set."""
        out = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            return Path(root) / out
        return out


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContractError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


def apply_overrides(doc: dict, overrides: Sequence[str]) -> dict:
    """Apply `dotted.path=value` overrides to a config dictionary.

    Values are parsed as JSON when possible (numbers, booleans, lists,
    null) and fall back to plain strings.
    """
    doc = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ContractError(f"override {item!r} is not of the form path=value")
        dotted, raw_value = item.split("=", 1)
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        node = doc
        parts = dotted.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return doc


# ---------------------------------------------------------------------------
# feature loading


def ingest(manifest_path, labels_path=None) -> dict:
    """Validate a manifest and every embedding file it references.

    Checks that each file parses, that its metadata matches the manifest
    entry, and that all entries agree on dimensionality and layer set.
    With a labels path, also reports coverage both ways. Returns a JSON-
    ready summary.
    """
    manifest_path = Path(manifest_path)
    entries = load_manifest(manifest_path)
    base = manifest_path.parent
    dim = None
    layer_set = None
    total_frames = 0
    renditions = set()
    segments = set()
    for entry in entries:
        path = Path(entry.embedding_path)
        if not path.is_absolute():
            path = base / path
        seq = read_embedding_file(path)
        if (seq.segment_id, seq.rendition) != entry.pair:
            raise AlignmentError(
                f"{path}: file metadata {(seq.segment_id, seq.rendition)} "
                f"does not match manifest entry {entry.pair}"
            )
        if dim is None:
            dim, layer_set = seq.dim, seq.layer_set
        else:
            if seq.dim != dim:
                raise AlignmentError(f"{path}: dim {seq.dim} != {dim} of earlier entries")
            if seq.layer_set != layer_set:
                raise AlignmentError(
                    f"{path}: layer set {seq.layer_set} != {layer_set} of earlier entries"
                )
        total_frames += seq.frames
        renditions.add(entry.rendition)
        segments.add(entry.segment_id)
    summary = {
        "entries": len(entries),
        "segments": len(segments),
        "renditions": sorted(renditions),
        "dim": dim,
        "layer_set": list(layer_set) if layer_set else None,
        "total_frames": total_frames,
    }
    if labels_path is not None:
        labeled = load_labels(labels_path)
        manifest_pairs = {e.pair for e in entries}
        label_pairs = {seg.pair for seg in labeled}
        summary["labels"] = {
            "rows": len(labeled),
            "missing_embeddings": sorted(map(list, label_pairs - manifest_pairs))[:10],
            "unlabeled_embeddings": sorted(map(list, manifest_pairs - label_pairs))[:10],
        }
    return summary


def load_sequences(config: ExperimentConfig) -> dict[PairKey, np.ndarray]:
    """Read every embedding in the manifest, slicing layer_range if set."""
    manifest_path = Path(config.manifest_path)
    base = manifest_path.parent
    sequences: dict[PairKey, np.ndarray] = {}
    for entry in load_manifest(manifest_path):
        path = Path(entry.embedding_path)
        if not path.is_absolute():
            path = base / path
        seq = read_embedding_file(path)
        if config.layer_range is not None:
            seq = select_layers(seq, list(config.layer_range))
        sequences[entry.pair] = np.asarray(seq.data, dtype=np.float64)
    return sequences


def pool_sequences(
    sequences: Mapping[PairKey, np.ndarray], mode: str
) -> dict[PairKey, np.ndarray]:
    if mode == "mean":
        return {k: pooling.mean_pool(v).values for k, v in sequences.items()}
    if mode == "max":
        return {k: pooling.max_pool(v).values for k, v in sequences.items()}
    raise ContractError(f"pool_sequences got non-fixed pooling mode {mode!r}")


def composite_id(pair: PairKey) -> str:
    return f"{pair[0]}__{pair[1]}"


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class RunArtifact:
    config_fingerprint: str
    per_fold_reports: list[metrics.EvalReport]
    aggregate_report: metrics.EvalReport
    checkpoints: list[Path]
    predictions_path: Path
    log_path: Path
    output_dir: Path


def _fold_error(fold: int, exc: HarnessError) -> HarnessError:
    return exc.__class__(f"[fold {fold}] {exc}")


def _attach_bootstrap(
    report: metrics.EvalReport,
    preds: np.ndarray,
    targets: np.ndarray,
    config: ExperimentConfig,
    seed: int,
) -> None:
    bcfg = stats.BootstrapConfig(
        resamples=config.bootstrap_resamples,
        confidence=config.bootstrap_confidence,
        seed=seed,
    )
    out = {}
    for statistic in stats.STATISTIC_NAMES:
        point, lo, hi = stats.bootstrap_ci(preds, targets, statistic, bcfg)
        out[statistic] = {
            "point": point,
            "lo": lo,
            "hi": hi,
            "resamples": bcfg.resamples,
            "confidence": bcfg.confidence,
            "seed": seed,
        }
    report.bootstrap = out


def run_cv(config: ExperimentConfig) -> RunArtifact:
    """Piece-split k-fold cross-validation.

    Per fold: build the split, train on pooled features (joint attention
    training when pooling == "attention"), predict the test pairs, emit a
    fold report and checkpoint. Test predictions are then concatenated
    across folds and the aggregate metrics computed once over them.
    """
    config.validate()
    fingerprint = config.fingerprint()
    out_dir = config.resolved_output_dir()
    (out_dir / "reports").mkdir(parents=True, exist_ok=True)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)

    segments = load_labels(config.labels_path)
    labels = {seg.pair: seg.targets for seg in segments}
    pieces = unique_pieces(segments)
    folds = assign_folds(pieces, config.folds, config.seed)
    sequences = load_sequences(config)
    fixed_features = (
        pool_sequences(sequences, config.pooling)
        if config.pooling != "attention"
        else None
    )

    seeds_used: dict = {"master": config.seed, "fold_train": {}, "bootstrap": None}
    per_fold_reports: list[metrics.EvalReport] = []
    checkpoints: list[Path] = []
    all_pred_rows: list[np.ndarray] = []
    all_target_rows: list[np.ndarray] = []
    all_ids: list[str] = []
    log_lines: list[str] = []

    for f in range(config.folds):
        try:
            split = make_split(
                folds,
                test_fold=f,
                val_fraction=config.val_fraction,
                segments=segments,
                renditions_mode=config.renditions_mode,
                seed=config.seed,
            )
            train_seed = derive_seed(config.seed, f"fold{f}")
            seeds_used["fold_train"][str(f)] = train_seed
            fold_train_cfg = nnet.TrainConfig.from_dict(
                {**config.train.to_dict(), "seed": train_seed}
            )
            if config.pooling == "attention":
                params, attn, log = nnet.train_attention(
                    split, sequences, labels, fold_train_cfg
                )
                test_X = np.stack(
                    [
                        pooling.attention_pool(sequences[p], attn)[0].values
                        for p in split.test
                    ]
                )
            else:
                attn = None
                params, log = nnet.train(split, fixed_features, labels, fold_train_cfg)
                test_X = np.stack([fixed_features[p] for p in split.test])
            test_pred, _ = nnet.forward(params, test_X)
            test_Y = np.stack([labels[p] for p in split.test])
            ids = [composite_id(p) for p in split.test]

            report = metrics.make_report(test_pred, test_Y, ids, fingerprint)
            _attach_bootstrap(
                report, test_pred, test_Y, config, derive_seed(config.seed, f"bootstrap-fold{f}")
            )
            report_doc = report.to_dict()
            report_doc["fold"] = f
            report_doc["seeds"] = {"master": config.seed, "train": train_seed}
            report_doc["train_log"] = log.to_dict()
            (out_dir / "reports" / f"fold{f}.json").write_text(
                json.dumps(report_doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
            )
            ckpt = out_dir / "checkpoints" / f"fold{f}.ckpt"
            nnet.save_checkpoint(ckpt, params, fingerprint, attention=attn)
            checkpoints.append(ckpt)
            per_fold_reports.append(report)
            all_pred_rows.append(test_pred)
            all_target_rows.append(test_Y)
            all_ids.extend(ids)
            log_lines.append(
                f"fold {f}: train={len(split.train)} val={len(split.validation)} "
                f"test={len(split.test)} best_epoch={log.best_epoch} "
                f"val_r2={log.best_validation_r2:.6f} "
                f"test_mean_r2={report.mean_per_dimension_r2:.6f}"
            )
        except HarnessError as exc:
            raise _fold_error(f, exc) from exc

    agg_pred = np.concatenate(all_pred_rows)
    agg_target = np.concatenate(all_target_rows)
    aggregate = metrics.make_report(agg_pred, agg_target, all_ids, fingerprint)
    seeds_used["bootstrap"] = derive_seed(config.seed, "bootstrap")
    _attach_bootstrap(aggregate, agg_pred, agg_target, config, seeds_used["bootstrap"])

    agg_doc = aggregate.to_dict()
    agg_doc["config"] = config.to_dict()
    agg_doc["config"].pop("output_dir")
    agg_doc["seeds"] = seeds_used
    agg_doc["per_fold_mean_r2"] = [r.mean_per_dimension_r2 for r in per_fold_reports]
    (out_dir / "reports" / "aggregate.json").write_text(
        json.dumps(agg_doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    predictions = analysis.PredictionSet(
        "cv", {i: row for i, row in zip(all_ids, agg_pred)}
    )
    predictions_path = out_dir / "predictions.csv"
    analysis.write_predictions(predictions_path, predictions)

    log_lines.append(f"aggregate mean_per_dimension_r2={aggregate.mean_per_dimension_r2:.6f}")
    log_lines.append(f"config_fingerprint={fingerprint}")
    log_path = out_dir / "run.log"
    log_path.write_text("\n".join(log_lines) + "\n", encoding="utf-8")

    return RunArtifact(
        config_fingerprint=fingerprint,
        per_fold_reports=per_fold_reports,
        aggregate_report=aggregate,
        checkpoints=checkpoints,
        predictions_path=predictions_path,
        log_path=log_path,
        output_dir=out_dir,
    )


# ---------------------------------------------------------------------------
# ablations


ABLATION_AXES = ("layer_range", "pooling", "loss")


def run_ablation(
    base_config: ExperimentConfig, axis: str, values: Sequence
) -> list[tuple[object, metrics.EvalReport]]:
    """One run_cv per value of the chosen axis, everything else fixed.

    Rows come back sorted by descending aggregate mean per-dimension R²
    and the comparison table is written under the base output_dir.
    """
    if axis not in ABLATION_AXES:
        raise ContractError(f"unknown ablation axis {axis!r}, expected one of {ABLATION_AXES}")
    if not values:
        raise ContractError("ablation needs a non-empty value list")
    rows: list[tuple[object, metrics.EvalReport]] = []
    base_doc = base_config.to_dict()
    for value in values:
        doc = copy.deepcopy(base_doc)
        if axis == "layer_range":
            doc["layer_range"] = value
            cell = "-".join(map(str, value)) if value else "all"
        elif axis == "pooling":
            doc["pooling"] = value
            cell = str(value)
        else:
            doc["train"]["loss"] = value
            cell = str(value)
        doc["output_dir"] = str(Path(base_doc["output_dir"]) / f"ablate_{axis}" / cell)
        artifact = run_cv(ExperimentConfig.from_dict(doc))
        rows.append((value, artifact.aggregate_report))
    rows.sort(key=lambda item: -item[1].mean_per_dimension_r2)
    table = {
        "axis": axis,
        "rows": [
            {
                "value": value,
                "mean_per_dimension_r2": rep.mean_per_dimension_r2,
                "pooled_r2": rep.pooled_r2,
                "config_fingerprint": rep.config_fingerprint,
            }
            for value, rep in rows
        ],
    }
    out_dir = base_config.resolved_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"ablation_{axis}.json").write_text(
        json.dumps(table, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return rows


# ---------------------------------------------------------------------------
# model comparison


def targets_for_ids(labels_path, ids: Sequence[str]) -> dict[str, np.ndarray]:
    """Targets keyed the way prediction files key their rows.

    Composite "segment__rendition" keys always work; a bare segment_id
    key works when that segment has exactly one labeled row.
    """
    segments = load_labels(labels_path)
    by_composite = {composite_id(seg.pair): seg.targets for seg in segments}
    seg_counts: dict[str, int] = {}
    for seg in segments:
        seg_counts[seg.segment_id] = seg_counts.get(seg.segment_id, 0) + 1
    by_plain = {
        seg.segment_id: seg.targets
        for seg in segments
        if seg_counts[seg.segment_id] == 1
    }
    out: dict[str, np.ndarray] = {}
    missing = []
    for i in ids:
        if i in by_composite:
            out[i] = by_composite[i]
        elif i in by_plain:
            out[i] = by_plain[i]
        else:
            missing.append(i)
    if missing:
        raise AlignmentError(
            f"labels missing for {len(missing)} prediction ids, first {missing[0]!r}"
        )
    return out


def run_compare(preds_a_path, preds_b_path, labels_path) -> dict:
    """Significance report for two aligned prediction files.

    Paired t, Wilcoxon, and Cohen's d on the per-segment MSE series, plus
    per-dimension R² deltas and the error correlation. Identical models
    come back with verdict "models indistinguishable" instead of an error.
    """
    a = analysis.load_predictions(preds_a_path)
    b = analysis.load_predictions(preds_b_path)
    ids = analysis.aligned_ids(a, b)
    targets = targets_for_ids(labels_path, ids)

    names = DIMENSION_NAMES if a.dim == len(DIMENSION_NAMES) else [f"d{i}" for i in range(a.dim)]
    t_rows = np.stack([targets[i] for i in ids])
    report_a = metrics.make_report(a.matrix(ids), t_rows, ids, dimension_names=names)
    report_b = metrics.make_report(b.matrix(ids), t_rows, ids, dimension_names=names)
    deltas = metrics.dimension_deltas(report_a, report_b)

    series = analysis.paired_error_series(a, b, targets)
    significance: dict = {"n": len(ids), "pairing": "per-segment MSE"}
    try:
        t, p_t, d = stats.paired_t(series)
        significance["paired_t"] = {"t": t, "p": stats.format_p(p_t), "cohens_d": d}
        try:
            w, p_w = stats.wilcoxon_signed_rank(series)
            significance["wilcoxon"] = {"statistic": w, "p": stats.format_p(p_w)}
        except HarnessError as exc:
            significance["wilcoxon"] = {"error": exc.__class__.__name__, "message": str(exc)}
        significance["verdict"] = (
            f"{a.model_label} better" if t < 0 else f"{b.model_label} better"
        )
    except DegenerateError:
        significance["verdict"] = "models indistinguishable"

    try:
        err_corr = analysis.error_correlation(a, b, targets)
    except DegenerateError:
        err_corr = None

    return {
        "model_a": a.model_label,
        "model_b": b.model_label,
        "n_segments": len(ids),
        "r2_a": report_a.to_dict(),
        "r2_b": report_b.to_dict(),
        "dimension_deltas": [{"dimension": n, "delta": v} for n, v in deltas],
        "error_correlation": err_corr,
        "significance": significance,
    }
