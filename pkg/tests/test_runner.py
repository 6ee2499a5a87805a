"""Experiment orchestration: configs, ingest, cross-validation, compare."""

import json

import numpy as np
import pytest

from pianoprobe import analysis, embedding_store, nnet, runner
from pianoprobe.errors import (
    AlignmentError,
    ContractError,
    InfeasibleSplitError,
)
from pianoprobe.runner import ExperimentConfig, apply_overrides, load_config

from corpora import learnable_train_config, make_linear_corpus


def corpus_config(manifest_path, labels_path, out_dir, **overrides) -> ExperimentConfig:
    doc = {
        "manifest_path": str(manifest_path),
        "labels_path": str(labels_path),
        "pooling": "mean",
        "folds": 4,
        "seed": 42,
        "bootstrap_resamples": 200,
        "train": learnable_train_config(),
        "output_dir": str(out_dir),
    }
    doc.update(overrides)
    return ExperimentConfig.from_dict(doc)


def cheap_train() -> dict:
    return {**learnable_train_config(), "max_epochs": 60, "patience": 60}


# ---------------------------------------------------------------------------
# configuration


def test_config_roundtrip():
    cfg = ExperimentConfig(
        manifest_path="m.json",
        labels_path="l.csv",
        layer_range=[2, 3],
        pooling="max",
        folds=5,
        seed=7,
    )
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize(
    "patch",
    [
        {"manifest_path": ""},
        {"labels_path": ""},
        {"pooling": "median"},
        {"folds": 1},
        {"val_fraction": 0.0},
        {"val_fraction": 1.0},
        {"layer_range": []},
        {"layer_range": [1, 1]},
    ],
)
def test_config_validation(patch):
    doc = ExperimentConfig(manifest_path="m", labels_path="l").to_dict()
    doc.update(patch)
    with pytest.raises(ContractError):
        ExperimentConfig.from_dict(doc)


def test_config_rejects_unknown_fields():
    doc = ExperimentConfig(manifest_path="m", labels_path="l").to_dict()
    doc["pooilng"] = "mean"
    with pytest.raises(ContractError) as exc:
        ExperimentConfig.from_dict(doc)
    assert "pooilng" in str(exc.value)


def test_fingerprint_ignores_output_dir_only():
    base = ExperimentConfig(manifest_path="m", labels_path="l", output_dir="runs/a")
    moved = ExperimentConfig(manifest_path="m", labels_path="l", output_dir="runs/b")
    assert base.fingerprint() == moved.fingerprint()
    assert len(base.fingerprint()) == 16
    reseeded = ExperimentConfig(manifest_path="m", labels_path="l", seed=43)
    assert reseeded.fingerprint() != base.fingerprint()
    retrained = ExperimentConfig(
        manifest_path="m", labels_path="l", train=nnet.TrainConfig(lr=0.5)
    )
    assert retrained.fingerprint() != base.fingerprint()


def test_resolved_output_dir_reroots_relative_paths(monkeypatch, tmp_path):
    cfg = ExperimentConfig(manifest_path="m", labels_path="l", output_dir="runs/x")
    monkeypatch.delenv(runner.OUTPUT_ROOT_ENV, raising=False)
    assert str(cfg.resolved_output_dir()) == "runs/x"
    monkeypatch.setenv(runner.OUTPUT_ROOT_ENV, str(tmp_path))
    assert cfg.resolved_output_dir() == tmp_path / "runs/x"
    absolute = ExperimentConfig(
        manifest_path="m", labels_path="l", output_dir=str(tmp_path / "abs")
    )
    assert absolute.resolved_output_dir() == tmp_path / "abs"


def test_load_config(tmp_path):
    path = tmp_path / "config.json"
    doc = ExperimentConfig(manifest_path="m", labels_path="l").to_dict()
    path.write_text(json.dumps(doc))
    assert load_config(path).to_dict() == doc
    path.write_text("{not json")
    with pytest.raises(ContractError):
        load_config(path)


def test_apply_overrides():
    doc = {"seed": 1, "train": {"lr": 0.01}}
    out = apply_overrides(
        doc,
        [
            "seed=9",
            "train.lr=0.5",
            "train.loss=ccc",
            "layer_range=[2,3]",
            "pooling=max",
            "train.extra.deep=true",
        ],
    )
    assert out["seed"] == 9
    assert out["train"]["lr"] == 0.5
    assert out["train"]["loss"] == "ccc"
    assert out["layer_range"] == [2, 3]
    assert out["pooling"] == "max"
    assert out["train"]["extra"] == {"deep": True}
    # the input document is never mutated
    assert doc == {"seed": 1, "train": {"lr": 0.01}}
    with pytest.raises(ContractError):
        apply_overrides(doc, ["no_equals_sign"])


# ---------------------------------------------------------------------------
# ingest


def test_ingest_summary(linear_corpus):
    manifest_path, labels_path, info = linear_corpus
    summary = runner.ingest(manifest_path, labels_path)
    assert summary["entries"] == 120
    assert summary["segments"] == 40
    assert summary["renditions"] == ["kawai_k2", "steinway_d", "yamaha_c5"]
    assert summary["dim"] == info["dim"]
    assert summary["layer_set"] == [1]
    assert summary["total_frames"] > 0
    assert summary["labels"]["rows"] == 120
    assert summary["labels"]["missing_embeddings"] == []
    assert summary["labels"]["unlabeled_embeddings"] == []


def test_ingest_without_labels(linear_corpus):
    manifest_path, _, _ = linear_corpus
    summary = runner.ingest(manifest_path)
    assert "labels" not in summary


def test_ingest_rejects_metadata_mismatch(tmp_path):
    from pianoprobe import dataset

    seq = embedding_store.EmbeddingSequence(
        "real", "steinway_d", (1,), np.zeros((2, 3), dtype=np.float32)
    )
    embedding_store.write_embedding_file(seq, tmp_path / "x.pemb")
    manifest = tmp_path / "manifest.json"
    dataset.write_manifest(
        [dataset.ManifestEntry("claimed", "steinway_d", "x.pemb")], manifest
    )
    with pytest.raises(AlignmentError):
        runner.ingest(manifest)


def test_ingest_rejects_dim_drift(tmp_path):
    from pianoprobe import dataset

    entries = []
    for sid, dim in [("a", 3), ("b", 4)]:
        seq = embedding_store.EmbeddingSequence(
            sid, "steinway_d", (1,), np.zeros((2, dim), dtype=np.float32)
        )
        name = embedding_store.embedding_filename(sid, "steinway_d")
        embedding_store.write_embedding_file(seq, tmp_path / name)
        entries.append(dataset.ManifestEntry(sid, "steinway_d", name))
    manifest = tmp_path / "manifest.json"
    dataset.write_manifest(entries, manifest)
    with pytest.raises(AlignmentError):
        runner.ingest(manifest)


def test_pool_sequences_modes(linear_corpus):
    manifest_path, labels_path, _ = linear_corpus
    cfg = corpus_config(manifest_path, labels_path, "unused")
    sequences = runner.load_sequences(cfg)
    assert len(sequences) == 120
    means = runner.pool_sequences(sequences, "mean")
    maxes = runner.pool_sequences(sequences, "max")
    key = next(iter(sequences))
    assert np.array_equal(means[key], sequences[key].mean(axis=0))
    assert np.array_equal(maxes[key], sequences[key].max(axis=0))
    with pytest.raises(ContractError):
        runner.pool_sequences(sequences, "attention")


# ---------------------------------------------------------------------------
# cross-validation


def test_run_cv_learns_and_writes_artifacts(linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    cfg = corpus_config(manifest_path, labels_path, tmp_path / "run")
    artifact = runner.run_cv(cfg)

    assert artifact.aggregate_report.mean_per_dimension_r2 > 0.9
    assert artifact.config_fingerprint == cfg.fingerprint()
    assert len(artifact.per_fold_reports) == 4
    assert len(artifact.checkpoints) == 4
    for f in range(4):
        assert (artifact.output_dir / "reports" / f"fold{f}.json").exists()
        assert artifact.checkpoints[f].exists()
    assert artifact.predictions_path.exists()
    assert artifact.log_path.exists()
    assert (artifact.output_dir / "reports" / "aggregate.json").exists()

    # every labeled pair is tested exactly once across the folds
    preds = analysis.load_predictions(artifact.predictions_path)
    from pianoprobe.dataset import load_labels

    labeled = {runner.composite_id(seg.pair) for seg in load_labels(labels_path)}
    assert set(preds.ids()) == labeled

    agg = json.loads(
        (artifact.output_dir / "reports" / "aggregate.json").read_text()
    )
    assert agg["config_fingerprint"] == cfg.fingerprint()
    assert "output_dir" not in agg["config"]
    assert agg["seeds"]["master"] == 42
    assert len(agg["per_fold_mean_r2"]) == 4
    for statistic in ("mean_per_dim_r2", "pooled_r2"):
        block = agg["bootstrap"][statistic]
        assert block["lo"] <= block["point"] <= block["hi"]


def test_run_cv_is_deterministic_across_output_dirs(linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    train = cheap_train()
    a = runner.run_cv(
        corpus_config(manifest_path, labels_path, tmp_path / "a", train=train)
    )
    b = runner.run_cv(
        corpus_config(manifest_path, labels_path, tmp_path / "b", train=train)
    )
    agg_a = (a.output_dir / "reports" / "aggregate.json").read_bytes()
    agg_b = (b.output_dir / "reports" / "aggregate.json").read_bytes()
    assert agg_a == agg_b
    for ca, cb in zip(a.checkpoints, b.checkpoints):
        assert ca.read_bytes() == cb.read_bytes()
    assert a.predictions_path.read_bytes() == b.predictions_path.read_bytes()


def test_run_cv_seed_changes_results(linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    train = cheap_train()
    a = runner.run_cv(
        corpus_config(manifest_path, labels_path, tmp_path / "a", train=train, seed=1)
    )
    b = runner.run_cv(
        corpus_config(manifest_path, labels_path, tmp_path / "b", train=train, seed=2)
    )
    assert (
        a.aggregate_report.mean_per_dimension_r2
        != b.aggregate_report.mean_per_dimension_r2
    )


def test_run_cv_attention_pooling(linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    cfg = corpus_config(
        manifest_path,
        labels_path,
        tmp_path / "attn",
        pooling="attention",
        train={**cheap_train(), "hidden": 16},
    )
    artifact = runner.run_cv(cfg)
    assert np.isfinite(artifact.aggregate_report.mean_per_dimension_r2)
    # checkpoints must carry the attention block alongside the MLP
    params, attn, fp = nnet.load_checkpoint(artifact.checkpoints[0])
    assert attn is not None
    assert fp == cfg.fingerprint()


def test_run_cv_infeasible_folds(linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    cfg = corpus_config(
        manifest_path, labels_path, tmp_path / "x", folds=11, train=cheap_train()
    )
    with pytest.raises(InfeasibleSplitError):
        runner.run_cv(cfg)


def test_run_cv_output_root_env(linear_corpus, tmp_path, monkeypatch):
    manifest_path, labels_path, _ = linear_corpus
    monkeypatch.setenv(runner.OUTPUT_ROOT_ENV, str(tmp_path))
    cfg = corpus_config(manifest_path, labels_path, "rooted/run", train=cheap_train())
    artifact = runner.run_cv(cfg)
    assert artifact.output_dir == tmp_path / "rooted/run"
    assert (tmp_path / "rooted/run/reports/aggregate.json").exists()


# ---------------------------------------------------------------------------
# ablations


def test_run_ablation_pooling(linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    base = corpus_config(
        manifest_path, labels_path, tmp_path / "ablate", train=cheap_train()
    )
    rows = runner.run_ablation(base, "pooling", ["mean", "max"])
    assert len(rows) == 2
    scores = [rep.mean_per_dimension_r2 for _, rep in rows]
    assert scores == sorted(scores, reverse=True)
    fingerprints = {rep.config_fingerprint for _, rep in rows}
    assert len(fingerprints) == 2
    table = json.loads((tmp_path / "ablate" / "ablation_pooling.json").read_text())
    assert table["axis"] == "pooling"
    assert {row["value"] for row in table["rows"]} == {"mean", "max"}
    for value, _ in rows:
        assert (tmp_path / "ablate" / "ablate_pooling" / value).is_dir()


def test_run_ablation_layer_range_cells(linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    base = corpus_config(
        manifest_path, labels_path, tmp_path / "layers", train=cheap_train(), folds=2
    )
    rows = runner.run_ablation(base, "layer_range", [[1], None])
    assert len(rows) == 2
    assert (tmp_path / "layers" / "ablate_layer_range" / "1").is_dir()
    assert (tmp_path / "layers" / "ablate_layer_range" / "all").is_dir()


def test_run_ablation_guards(linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    base = corpus_config(manifest_path, labels_path, tmp_path / "x")
    with pytest.raises(ContractError):
        runner.run_ablation(base, "optimizer", ["adam"])
    with pytest.raises(ContractError):
        runner.run_ablation(base, "pooling", [])


# ---------------------------------------------------------------------------
# comparison


def test_targets_for_ids_composite_and_plain(linear_corpus, tmp_path):
    _, labels_path, _ = linear_corpus
    out = runner.targets_for_ids(labels_path, ["p00s0__steinway_d"])
    assert set(out) == {"p00s0__steinway_d"}
    assert out["p00s0__steinway_d"].shape == (19,)
    # bare segment ids are ambiguous here: three labeled renditions each
    with pytest.raises(AlignmentError):
        runner.targets_for_ids(labels_path, ["p00s0"])
    with pytest.raises(AlignmentError):
        runner.targets_for_ids(labels_path, ["ghost__steinway_d"])


def write_prediction_file(path, label, entries):
    analysis.write_predictions(path, analysis.PredictionSet(label, entries))


def test_run_compare_detects_better_model(linear_corpus, tmp_path):
    _, labels_path, _ = linear_corpus
    from pianoprobe.dataset import load_labels

    segments = load_labels(labels_path)[:40]
    ids = [runner.composite_id(seg.pair) for seg in segments]
    targets = {runner.composite_id(seg.pair): seg.targets for seg in segments}
    g = np.random.default_rng(5)
    good = {i: np.clip(targets[i] + g.normal(0, 0.01, 19), 0, 1) for i in ids}
    bad = {i: np.clip(targets[i] + g.normal(0, 0.2, 19), 0, 1) for i in ids}
    write_prediction_file(tmp_path / "good.csv", "good", good)
    write_prediction_file(tmp_path / "bad.csv", "bad", bad)

    doc = runner.run_compare(tmp_path / "good.csv", tmp_path / "bad.csv", labels_path)
    assert doc["model_a"] == "good"
    assert doc["model_b"] == "bad"
    assert doc["n_segments"] == 40
    assert doc["significance"]["verdict"] == "good better"
    assert doc["significance"]["paired_t"]["t"] < 0
    assert doc["significance"]["paired_t"]["p"] < 0.05
    assert "wilcoxon" in doc["significance"]
    assert doc["r2_a"]["mean_per_dimension_r2"] > doc["r2_b"]["mean_per_dimension_r2"]
    deltas = doc["dimension_deltas"]
    assert len(deltas) == 19
    assert all(row["delta"] > 0 for row in deltas)
    assert abs(doc["error_correlation"]) < 0.5

    flipped = runner.run_compare(tmp_path / "bad.csv", tmp_path / "good.csv", labels_path)
    assert flipped["significance"]["verdict"] == "good better"


def test_run_compare_identical_models(linear_corpus, tmp_path):
    _, labels_path, _ = linear_corpus
    from pianoprobe.dataset import load_labels

    segments = load_labels(labels_path)[:20]
    ids = [runner.composite_id(seg.pair) for seg in segments]
    g = np.random.default_rng(6)
    entries = {i: g.uniform(0.2, 0.8, 19) for i in ids}
    write_prediction_file(tmp_path / "a.csv", "a", entries)
    write_prediction_file(tmp_path / "b.csv", "b", dict(entries))
    doc = runner.run_compare(tmp_path / "a.csv", tmp_path / "b.csv", labels_path)
    assert doc["significance"]["verdict"] == "models indistinguishable"
    assert "paired_t" not in doc["significance"]
    # identical error series still correlate perfectly
    assert doc["error_correlation"] == 1.0


def test_run_compare_misaligned_files(linear_corpus, tmp_path):
    _, labels_path, _ = linear_corpus
    write_prediction_file(
        tmp_path / "a.csv", "a", {"p00s0__steinway_d": np.full(19, 0.5)}
    )
    write_prediction_file(
        tmp_path / "b.csv", "b", {"p00s1__steinway_d": np.full(19, 0.5)}
    )
    with pytest.raises(AlignmentError):
        runner.run_compare(tmp_path / "a.csv", tmp_path / "b.csv", labels_path)
