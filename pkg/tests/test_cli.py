"""
Tests for the command-line interface.
"""

import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from topolog.cli import SEED_ENV, main
from topolog.complex_builder import EdgePolicy, build_complex
from topolog.experiment import ClassifyReport, ExperimentReport, classify_table
from topolog.features import compute_features
from topolog.log_model import CONSTRUCTION_1, filter_events
from topolog.ml import ForestConfig
from topolog.spectral import eigenpairs, graph_laplacian
from topolog.storage import DatasetStore


# ============================================================================
# Fixtures
# ============================================================================

@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """
    Generate a 20-run dataset through the CLI.

    Returns:
        Path: Dataset directory
    """
    out = tmp_path_factory.mktemp("cli") / "dataset"
    assert main(["gen", "--seed", "7", "--runs", "20", "--duration", "60", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def features_csv(dataset):
    """
    Feature CSV with every family at resolution 4.

    Returns:
        Path: CSV file
    """
    out = dataset.parent / "features.csv"
    code = main([
        "features", "--dataset", str(dataset), "--features", "counts,ph,gl,hl",
        "--resolution", "4", "--out", str(out),
    ])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def classified(features_csv):
    """
    Classify the feature CSV with small forests.

    Returns:
        Path: Output directory holding report.json and table.txt
    """
    out = features_csv.parent / "classify"
    code = main([
        "classify", "--features", str(features_csv), "--trees", "5", "--folds", "5",
        "--seed", "0", "--out-dir", str(out),
    ])
    assert code == 0
    return out


# ============================================================================
# Tests for gen
# ============================================================================

def test_gen_writes_runs_and_manifest(dataset):
    """
    Test that gen writes one JSONL file per run plus the manifest.
    """
    assert len(list(dataset.glob("*.jsonl"))) == 20
    manifest = json.loads((dataset / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["config"]["seed"] == 7
    assert sorted(set(manifest["runs"].values())) == ["anomalous", "benign"]


def test_gen_is_byte_identical(tmp_path):
    """
    Test that two runs of gen with one seed write identical files.
    """
    for name in ("a", "b"):
        assert main(["gen", "--seed", "3", "--runs", "6", "--out", str(tmp_path / name)]) == 0
    files_a = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files_a == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files_a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_gen_degenerate_config(tmp_path):
    """
    Test that a single-run dataset is rejected with exit code 2.
    """
    assert main(["gen", "--runs", "1", "--out", str(tmp_path / "d")]) == 2


def test_missing_required_argument():
    """
    Test that argparse usage errors return exit code 2.
    """
    assert main(["gen"]) == 2
    assert main([]) == 2


def test_bad_seed_environment(monkeypatch, tmp_path):
    """
    Test that a non-integer TOPOLOG_SEED is a usage error.
    """
    monkeypatch.setenv(SEED_ENV, "seven")
    assert main(["gen", "--out", str(tmp_path / "d")]) == 2


# ============================================================================
# Tests for features and classify
# ============================================================================

def test_features_csv_header(features_csv):
    """
    Test the id columns and family blocks of the feature CSV.
    """
    frame = pd.read_csv(features_csv)
    assert list(frame.columns[:3]) == ["run_id", "label", "cnt_process_create_events"]
    assert sum(c.startswith("pi0_") for c in frame.columns) == 16
    assert len(frame) == 20
    assert features_csv.read_bytes().count(b"\r") == 0


def test_features_unknown_family(dataset, tmp_path):
    """
    Test that an unknown feature family exits with code 2.
    """
    code = main(["features", "--dataset", str(dataset), "--features", "pixels", "--out", str(tmp_path / "f.csv")])
    assert code == 2


def test_features_missing_dataset(tmp_path):
    """
    Test that an empty dataset directory exits with code 2.
    """
    code = main(["features", "--dataset", str(tmp_path / "none"), "--out", str(tmp_path / "f.csv")])
    assert code == 2


def test_classify_outputs(classified):
    """
    Test report.json and table.txt of classify.
    """
    report = ClassifyReport.model_validate_json((classified / "report.json").read_text(encoding="utf-8"))
    assert list(report.reports) == ["counts", "ph", "gl", "hl", "counts_gl"]
    assert report.reports["ph"].n_folds == 5
    table = (classified / "table.txt").read_text(encoding="utf-8")
    assert table.splitlines()[0] == "Construction 1"
    assert table.splitlines()[1].split() == ["Metric", "Counts", "PH", "Graph", "Lap.", "Hyper.", "Lap.", "Counts+GL"]


def test_classify_is_deterministic(features_csv, classified, tmp_path):
    """
    Test that rerunning classify with the same seed writes an identical report.
    """
    out = tmp_path / "again"
    code = main([
        "classify", "--features", str(features_csv), "--trees", "5", "--folds", "5",
        "--seed", "0", "--out-dir", str(out),
    ])
    assert code == 0
    assert (out / "report.json").read_bytes() == (classified / "report.json").read_bytes()


def test_classify_matches_in_process_run(dataset, classified):
    """
    Test that features then classify through files equals an in-process run.
    """
    runs = DatasetStore(dataset).load_runs()
    table = compute_features(runs, CONSTRUCTION_1, ["counts", "ph", "gl", "hl"], resolution=4)
    reports = classify_table(table, config=ForestConfig(n_trees=5, seed=0), k=5)
    expected = ClassifyReport(construction="1", reports=reports).model_dump_json(indent=2) + "\n"
    assert (classified / "report.json").read_text(encoding="utf-8") == expected


def test_classify_seed_from_environment(monkeypatch, features_csv, tmp_path):
    """
    Test that TOPOLOG_SEED sets the default seed.
    """
    monkeypatch.setenv(SEED_ENV, "5")
    out = tmp_path / "seeded"
    code = main([
        "classify", "--features", str(features_csv), "--families", "counts",
        "--trees", "3", "--folds", "5", "--out-dir", str(out),
    ])
    assert code == 0
    report = ClassifyReport.model_validate_json((out / "report.json").read_text(encoding="utf-8"))
    assert report.reports["counts"].seed == 5


def test_classify_counts_gl_without_gl(dataset, tmp_path):
    """
    Test that counts_gl on a table without gl columns exits with code 2.
    """
    csv = tmp_path / "counts.csv"
    assert main(["features", "--dataset", str(dataset), "--features", "counts", "--out", str(csv)]) == 0
    code = main([
        "classify", "--features", str(csv), "--families", "counts_gl",
        "--trees", "3", "--folds", "5", "--out-dir", str(tmp_path / "out"),
    ])
    assert code == 2


def test_classify_too_few_samples(features_csv, tmp_path):
    """
    Test that more folds than runs per class exits with code 2.
    """
    code = main([
        "classify", "--features", str(features_csv), "--families", "counts",
        "--trees", "3", "--out-dir", str(tmp_path / "out"),
        "--folds", "11",
    ])
    assert code == 2


# ============================================================================
# Tests for importance and diagram
# ============================================================================

def test_importance_exports(dataset, features_csv, classified, tmp_path):
    """
    Test pixel matrices, eigen-index tables and the node eigenvector file.
    """
    out = tmp_path / "importance"
    code = main([
        "importance", "--report", str(classified / "report.json"), "--features", str(features_csv),
        "--dataset", str(dataset), "--run-id", "run-0000", "--out-dir", str(out),
    ])
    assert code == 0

    pixels = [pd.read_csv(out / f"pi{dim}_importance.csv", header=None).to_numpy() for dim in (0, 1)]
    assert all(p.shape == (4, 4) for p in pixels)
    assert sum(p.sum() for p in pixels) == pytest.approx(1.0, abs=1e-9)

    gl = pd.read_csv(out / "gl_importance.csv")
    assert list(gl.columns) == ["eigen_index", "mdi"]
    assert gl["eigen_index"].tolist() == list(range(len(gl)))
    assert gl["mdi"].sum() == pytest.approx(1.0, abs=1e-9)
    assert (out / "hl_importance.csv").exists()

    nodes = pd.read_csv(out / "node_eigenvector.csv")
    assert list(nodes.columns) == ["node_id", "value"]
    assert np.linalg.norm(nodes["value"]) == pytest.approx(1.0, abs=1e-9)


def test_importance_node_eigenvector_edge_policy(dataset, features_csv, classified, tmp_path):
    """
    Test that the node eigenvector is taken from the complex built with --edge-policy.
    """
    out = tmp_path / "clique"
    code = main([
        "importance", "--report", str(classified / "report.json"), "--features", str(features_csv),
        "--dataset", str(dataset), "--run-id", "run-0000", "--edge-policy", "clique_per_event",
        "--out-dir", str(out),
    ])
    assert code == 0

    store = DatasetStore(dataset)
    run = filter_events(store.load_run(store.run_path("run-0000")), CONSTRUCTION_1)
    built = build_complex(run, EdgePolicy.CLIQUE_PER_EVENT)
    _, vectors = eigenpairs(graph_laplacian(built))

    nodes = pd.read_csv(out / "node_eigenvector.csv", dtype={"node_id": str})
    assert nodes["node_id"].tolist() == [str(node) for node in built.nodes]
    np.testing.assert_allclose(nodes["value"].to_numpy(), vectors[:, 0], atol=1e-9)


def test_importance_eigen_index_out_of_range(dataset, features_csv, classified, tmp_path):
    """
    Test that an eigenvector index beyond the node count exits with code 2.
    """
    code = main([
        "importance", "--report", str(classified / "report.json"), "--features", str(features_csv),
        "--dataset", str(dataset), "--run-id", "run-0000", "--eigen-index", "100000",
        "--out-dir", str(tmp_path / "out"),
    ])
    assert code == 2


def test_importance_unreadable_report(features_csv, tmp_path):
    """
    Test that a malformed report exits with code 2.
    """
    report = tmp_path / "report.json"
    report.write_text("{not json", encoding="utf-8")
    code = main(["importance", "--report", str(report), "--features", str(features_csv), "--out-dir", str(tmp_path)])
    assert code == 2


def test_diagram_to_stdout(dataset, capsys):
    """
    Test the diagram JSON of one run, with the complex.
    """
    capsys.readouterr()
    code =main(["diagram", "--dataset", str(dataset), "--run", "run-0000", "--emit-complex"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["run_id"] == "run-0000"
    assert payload["construction"] == "1"
    assert [d["dim"] for d in payload["diagrams"]] == [0, 1]
    for diagram in payload["diagrams"]:
        assert all(death >= birth for birth, death in diagram["points"])
        assert all(np.isfinite(death) for _, death in diagram["points"])
    assert "complex" in payload


def test_diagram_unknown_run(dataset, tmp_path):
    """
    Test that a missing run file exits with code 2.
    """
    assert main(["diagram", "--dataset", str(dataset), "--run", "run-9999", "--out", str(tmp_path / "d.json")]) == 2


# ============================================================================
# Tests for experiment
# ============================================================================

def test_experiment_outputs(dataset, tmp_path):
    """
    Test the tables and report of a small experiment with the induced sweep.
    """
    out = tmp_path / "experiment"
    code = main([
        "experiment", "--dataset", str(dataset), "--constructions", "1,2", "--features", "counts,hl",
        "--resolution", "3", "--trees", "3", "--folds", "5", "--sweep-induced", "--out-dir", str(out),
    ])
    assert code == 0
    table = (out / "table.txt").read_text(encoding="utf-8")
    assert "Construction 1" in table and "Construction 2" in table
    assert (out / "induced_sweep.txt").read_text(encoding="utf-8").startswith("PH with induced 2-simplices")
    assert not (out / "resolution_sweep.txt").exists()
    report = ExperimentReport.model_validate_json((out / "report.json").read_text(encoding="utf-8"))
    assert list(report.constructions) == ["1", "2"]
    assert list(report.induced_sweep) == ["without", "with"]
    assert report.resolution_sweep is None


def test_experiment_unknown_construction(dataset, tmp_path):
    """
    Test that an unknown construction exits with code 2.
    """
    code = main(["experiment", "--dataset", str(dataset), "--constructions", "3", "--out-dir", str(tmp_path)])
    assert code == 2
