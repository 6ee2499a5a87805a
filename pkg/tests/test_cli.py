"""End-to-end CLI behavior through pianoprobe.cli.main."""

import json
import subprocess

import numpy as np
import pytest

from pianoprobe import analysis, runner
from pianoprobe.cli import main
from pianoprobe.dataset import load_labels

from corpora import learnable_train_config


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_config(tmp_path, manifest_path, labels_path, **overrides):
    doc = {
        "manifest_path": str(manifest_path),
        "labels_path": str(labels_path),
        "pooling": "mean",
        "folds": 4,
        "seed": 42,
        "bootstrap_resamples": 100,
        "train": {**learnable_train_config(), "max_epochs": 60, "patience": 60},
        "output_dir": str(tmp_path / "run"),
    }
    doc.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def prediction_files(linear_corpus, tmp_path_factory):
    """Two prediction CSVs over the first 40 labeled pairs, one clearly better."""
    _, labels_path, _ = linear_corpus
    root = tmp_path_factory.mktemp("preds")
    segments = load_labels(labels_path)[:40]
    targets = {runner.composite_id(seg.pair): seg.targets for seg in segments}
    ids = sorted(targets)
    g = np.random.default_rng(11)
    good = {i: np.clip(targets[i] + g.normal(0, 0.02, 19), 0, 1) for i in ids}
    bad = {i: np.clip(targets[i] + g.normal(0, 0.25, 19), 0, 1) for i in ids}
    a_path = root / "good.csv"
    b_path = root / "bad.csv"
    analysis.write_predictions(a_path, analysis.PredictionSet("good", good))
    analysis.write_predictions(b_path, analysis.PredictionSet("bad", bad))
    return a_path, b_path, labels_path


# ---------------------------------------------------------------------------
# parsing and error envelope


def test_no_command_prints_help(capsys):
    code, out, _ = run_cli(capsys, *[])
    assert code == 1
    assert "usage: pianoprobe" in out


def test_unknown_flag_exits_via_argparse(capsys):
    with pytest.raises(SystemExit):
        main(["ingest", "--bogus"])


def test_harness_error_envelope(capsys, tmp_path):
    bad = tmp_path / "manifest.json"
    bad.write_text("{\"not\": \"a list\"}")
    code, out, err = run_cli(capsys, "ingest", "--manifest", str(bad))
    assert code == 1
    assert out == ""
    doc = json.loads(err)
    assert doc["error"].endswith("Error")
    assert doc["message"]


def test_unexpected_error_envelope(capsys, tmp_path):
    code, _, err = run_cli(
        capsys, "ingest", "--manifest", str(tmp_path / "missing.json")
    )
    assert code == 2
    doc = json.loads(err)
    assert doc["error"] == "UnexpectedError"
    assert "FileNotFoundError" in doc["message"]


# ---------------------------------------------------------------------------
# ingest


def test_ingest_command(capsys, linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    out_file = tmp_path / "summary.json"
    code, out, err = run_cli(
        capsys,
        "ingest",
        "--manifest", str(manifest_path),
        "--labels", str(labels_path),
        "--out", str(out_file),
    )
    assert code == 0, err
    doc = json.loads(out)
    assert doc["entries"] == 120
    assert doc["labels"]["rows"] == 120
    assert json.loads(out_file.read_text()) == doc


# ---------------------------------------------------------------------------
# cv and ablate


def test_cv_command_with_overrides(capsys, linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    config = write_config(tmp_path, manifest_path, labels_path)
    out_file = tmp_path / "cv.json"
    code, out, err = run_cli(
        capsys,
        "cv",
        "--config", str(config),
        "--set", "train.max_epochs=40",
        "--set", f"output_dir={tmp_path / 'cvrun'}",
        "--out", str(out_file),
    )
    assert code == 0, err
    doc = json.loads(out)
    assert len(doc["config_fingerprint"]) == 16
    assert len(doc["per_fold_mean_r2"]) == 4
    assert len(doc["checkpoints"]) == 4
    assert (tmp_path / "cvrun" / "reports" / "aggregate.json").exists()
    assert json.loads(out_file.read_text()) == doc


def test_cv_command_rejects_bad_override(capsys, linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    config = write_config(tmp_path, manifest_path, labels_path)
    code, _, err = run_cli(
        capsys, "cv", "--config", str(config), "--set", "pooling=median"
    )
    assert code == 1
    assert json.loads(err)["error"] == "ContractError"


def test_ablate_command(capsys, linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    config = write_config(
        tmp_path, manifest_path, labels_path, folds=2,
        output_dir=str(tmp_path / "ablate"),
    )
    code, out, err = run_cli(
        capsys,
        "ablate",
        "--config", str(config),
        "--axis", "pooling",
        "--values", '["mean", "max"]',
    )
    assert code == 0, err
    doc = json.loads(out)
    assert doc["axis"] == "pooling"
    assert {row["value"] for row in doc["rows"]} == {"mean", "max"}


def test_ablate_rejects_non_list_values(capsys, linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    config = write_config(tmp_path, manifest_path, labels_path)
    for bad in ('"mean"', "{broken"):
        code, _, err = run_cli(
            capsys,
            "ablate",
            "--config", str(config),
            "--axis", "pooling",
            "--values", bad,
        )
        assert code == 1
        assert json.loads(err)["error"] == "HarnessError"


# ---------------------------------------------------------------------------
# fuse / compare


def test_fuse_weighted_fixed_alpha(capsys, prediction_files, tmp_path):
    a_path, b_path, labels_path = prediction_files
    fused_out = tmp_path / "fused.csv"
    code, out, err = run_cli(
        capsys,
        "fuse",
        "--preds-a", str(a_path),
        "--preds-b", str(b_path),
        "--labels", str(labels_path),
        "--alpha", "1.0",
        "--fused-out", str(fused_out),
    )
    assert code == 0, err
    doc = json.loads(out)
    assert doc["mode"] == "weighted"
    assert doc["alpha"] == 1.0
    assert doc["n_segments"] == 40
    assert doc["report"]["mean_per_dimension_r2"] > 0.9
    # alpha=1 fusion reproduces model a exactly
    back = analysis.load_predictions(fused_out)
    orig = analysis.load_predictions(a_path)
    for seg in orig.ids():
        assert np.array_equal(back.entries[seg], orig.entries[seg])


def test_fuse_weighted_grid_search(capsys, prediction_files):
    a_path, b_path, labels_path = prediction_files
    code, out, err = run_cli(
        capsys,
        "fuse",
        "--preds-a", str(a_path),
        "--preds-b", str(b_path),
        "--labels", str(labels_path),
        "--grid-step", "0.25",
    )
    assert code == 0, err
    doc = json.loads(out)
    # model a is far better, so the grid picks a heavy a-weight
    assert doc["alpha"] in (0.75, 1.0)


def test_fuse_gated(capsys, prediction_files):
    a_path, b_path, labels_path = prediction_files
    code, out, err = run_cli(
        capsys,
        "fuse",
        "--preds-a", str(a_path),
        "--preds-b", str(b_path),
        "--labels", str(labels_path),
        "--mode", "gated",
    )
    assert code == 0, err
    doc = json.loads(out)
    assert doc["mode"] == "gated"
    assert len(doc["gate_logits"]) == 19
    assert "mean_per_dimension_r2" in doc["report"]


def test_compare_command(capsys, prediction_files):
    a_path, b_path, labels_path = prediction_files
    code, out, err = run_cli(
        capsys,
        "compare",
        "--preds-a", str(a_path),
        "--preds-b", str(b_path),
        "--labels", str(labels_path),
    )
    assert code == 0, err
    doc = json.loads(out)
    assert doc["significance"]["verdict"] == "good better"
    assert doc["significance"]["paired_t"]["p"] < 0.05


# ---------------------------------------------------------------------------
# consistency / difficulty


def test_consistency_command(capsys, tmp_path):
    v1 = np.full(19, 0.3)
    v2 = np.full(19, 0.5)
    preds = analysis.PredictionSet("m", {"s1": v1, "s2": v2, "s3": np.full(19, 0.4)})
    preds_path = tmp_path / "preds.csv"
    analysis.write_predictions(preds_path, preds)
    perf_path = tmp_path / "performers.csv"
    perf_path.write_text(
        "segment_id,piece_id,performer_id\ns1,p,x\ns2,p,y\ns3,q,z\n"
    )
    code, out, err = run_cli(
        capsys, "consistency", "--preds", str(preds_path), "--performers", str(perf_path)
    )
    assert code == 0, err
    doc = json.loads(out)
    want = 0.2 / np.sqrt(2.0)
    assert doc["overall_mean_std"] == pytest.approx(want, rel=1e-9)
    assert doc["per_dimension_mean_std"]["timing"] == pytest.approx(want, rel=1e-9)
    assert "reference_overall_mean_std" in doc


def test_difficulty_command(capsys, linear_corpus, tmp_path):
    _, labels_path, _ = linear_corpus
    segments = load_labels(labels_path)
    # piece-level difficulty that tracks each piece's mean label
    by_piece = {}
    for seg in segments:
        by_piece.setdefault(seg.piece_id, []).append(seg.targets.mean())
    order = sorted(by_piece, key=lambda p: np.mean(by_piece[p]))
    table_path = tmp_path / "difficulty.csv"
    with open(table_path, "w") as fh:
        fh.write("piece_id,rating\n")
        for rank, piece in enumerate(order):
            fh.write(f"{piece},{rank}\n")
    preds = analysis.PredictionSet(
        "m", {runner.composite_id(seg.pair): seg.targets for seg in segments}
    )
    preds_path = tmp_path / "preds.csv"
    analysis.write_predictions(preds_path, preds)
    code, out, err = run_cli(
        capsys,
        "difficulty",
        "--preds", str(preds_path),
        "--table", str(table_path),
        "--pieces", str(labels_path),
    )
    assert code == 0, err
    doc = json.loads(out)
    assert doc["aggregate"] == "mean_of_dimensions"
    assert doc["overall_rho"] == 1.0
    assert len(doc["per_dimension_rho"]) == 19
    assert "reference_overall_rho" in doc


# ---------------------------------------------------------------------------
# report


def test_report_reference_mode(capsys):
    code, out, _ = run_cli(capsys, "report", "--reference")
    assert code == 0
    doc = json.loads(out)
    assert doc


def test_report_pretty_prints_run_output(capsys, linear_corpus, tmp_path):
    manifest_path, labels_path, _ = linear_corpus
    config = write_config(
        tmp_path, manifest_path, labels_path, folds=2,
        output_dir=str(tmp_path / "rep"),
    )
    code, _, err = run_cli(capsys, "cv", "--config", str(config))
    assert code == 0, err
    report_path = tmp_path / "rep" / "reports" / "aggregate.json"
    code, out, err = run_cli(capsys, "report", str(report_path))
    assert code == 0, err
    assert "config fingerprint" in out
    assert "mean per-dim R^2" in out
    assert "per-dimension R^2:" in out
    assert "timing" in out


def test_report_requires_path_or_reference():
    with pytest.raises(SystemExit):
        main(["report"])


def test_console_script_entry_point():
    proc = subprocess.run(
        ["pianoprobe", "report", "--reference"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)
    help_proc = subprocess.run(
        ["pianoprobe", "--help"], capture_output=True, text=True
    )
    assert help_proc.returncode == 0
    assert "usage: pianoprobe" in help_proc.stdout
