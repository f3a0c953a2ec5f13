"""
Tests for the experiment matrix, sweeps and report tables.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from topolog.errors import DegenerateConfig, MissingFeatureFamily
from topolog.experiment import (
    ALL_COLUMNS,
    ExperimentConfig,
    classify_table,
    format_metrics_table,
    format_sweep_table,
    induced_sweep,
    parse_columns,
    resolution_sweep,
    run_experiment_matrix,
    table_families,
)
from topolog.features import FeatureFamily, compute_features
from topolog.log_model import CONSTRUCTION_1
from topolog.ml import CvReport, ForestConfig, MetricSummary
from topolog.pers_image import RESOLUTION_SWEEP
from topolog.synth_gen import GenConfig, generate


# ============================================================================
# Fixtures
# ============================================================================

def _report(mean: float, std: float) -> CvReport:
    summary = MetricSummary(mean=mean, std=std, folds=[mean, mean])
    return CvReport(
        n_samples=20, n_folds=2, seed=0,
        accuracy=summary, precision=summary, recall=summary, f1=summary,
        column_names=["a"], mdi=[1.0], fold_assignments=[0, 1] * 10,
    )


@pytest.fixture(scope="module")
def runs():
    """
    Twenty generated runs, ten of each label.

    Returns:
        list[Run]: Corpus large enough for 5-fold CV
    """
    return generate(GenConfig(seed=7, n_runs=20, run_duration=60.0))


@pytest.fixture
def quick_forest():
    """Five-tree forest."""
    return ForestConfig(n_trees=5, seed=0)


# ============================================================================
# Tests for columns and config
# ============================================================================

def test_parse_columns_order():
    """
    Test that report columns come back in table order.
    """
    assert parse_columns("counts_gl, hl,counts") == ["counts", "hl", "counts_gl"]


@pytest.mark.parametrize("text", ["", "counts,nope"])
def test_parse_columns_rejects(text):
    """
    Test that empty and unknown column lists raise ValueError.
    """
    with pytest.raises(ValueError):
        parse_columns(text)


def test_table_families():
    """
    Test that counts_gl needs both the counts and gl families.
    """
    assert table_families(["counts_gl"]) == [FeatureFamily.COUNTS, FeatureFamily.GL]
    assert table_families(["hl", "ph"]) == [FeatureFamily.PH, FeatureFamily.HL]


@pytest.mark.parametrize("update", [
    {"construction": "3"},
    {"features": ["pixels"]},
    {"features": []},
    {"resolution": 0},
])
def test_experiment_config_check(tmp_path, update):
    """
    Test that invalid experiment settings raise DegenerateConfig.
    """
    config = ExperimentConfig(dataset_dir=tmp_path, **update)
    with pytest.raises(DegenerateConfig):
        config.check()


# ============================================================================
# Tests for tables
# ============================================================================

def test_format_metrics_table_layout():
    """
    Test block title, header order and "mean ± std" cells.
    """
    text = format_metrics_table({"1": {"ph": _report(97.5, 3.54), "counts": _report(100.0, 0.0)}})
    lines = text.splitlines()
    assert lines[0] == "Construction 1"
    assert lines[1].split() == ["Metric", "Counts", "PH"]
    assert lines[2] == "Accuracy   100.00 ± 0.00  97.50 ± 3.54"
    assert [line.split()[0] for line in lines[2:]] == ["Accuracy", "Precision", "Recall", "F1"]
    assert len({len(line) for line in lines[1:]}) == 1
    assert text.endswith("\n")


def test_format_metrics_table_blocks():
    """
    Test one block per construction separated by a blank line.
    """
    text = format_metrics_table({
        "1": {"counts": _report(90.0, 1.0)},
        "2": {"counts": _report(80.0, 2.0), "counts_gl": _report(85.0, 2.5)},
    })
    first, second = text.rstrip("\n").split("\n\n")
    assert first.startswith("Construction 1")
    assert second.startswith("Construction 2")
    assert second.splitlines()[1].split() == ["Metric", "Counts", "Counts+GL"]


def test_format_sweep_table():
    """
    Test one column per swept value.
    """
    text = format_sweep_table("PH by resolution", "resolution", {"5": _report(70.0, 1.0), "10": _report(71.0, 1.5)})
    lines = text.splitlines()
    assert lines[0] == "PH by resolution"
    assert lines[1].split() == ["Metric", "\\", "resolution", "5", "10"]
    assert "71.00 ± 1.50" in lines[2]


# ============================================================================
# Tests for classification
# ============================================================================

def test_classify_table_adds_counts_gl(runs, quick_forest):
    """
    Test that counts_gl is reported when counts and gl are both present.
    """
    table = compute_features(runs, CONSTRUCTION_1, ["counts", "gl"])
    reports = classify_table(table, config=quick_forest, k=5)
    assert list(reports) == ["counts", "gl", "counts_gl"]
    joined = reports["counts_gl"]
    assert joined.column_names == reports["counts"].column_names + reports["gl"].column_names
    assert sum(joined.mdi) == pytest.approx(1.0, abs=1e-9)
    assert joined.run_ids == list(table.run_ids)


def test_classify_table_missing_family(runs, quick_forest):
    """
    Test that counts_gl on a counts-only table raises MissingFeatureFamily.
    """
    table = compute_features(runs, CONSTRUCTION_1, ["counts"])
    with pytest.raises(MissingFeatureFamily):
        classify_table(table, ["counts_gl"], quick_forest, k=5)


def test_run_experiment_matrix(runs, quick_forest):
    """
    Test that every construction gets every requested column.
    """
    results = run_experiment_matrix(runs, ("1", "2"), ["hl", "counts"], config=quick_forest, k=5)
    assert list(results) == ["1", "2"]
    for reports in results.values():
        assert list(reports) == ["counts", "hl"]
        assert all(0.0 <= r.accuracy.mean <= 100.0 for r in reports.values())


def test_sweeps_keys(runs, quick_forest):
    """
    Test the keys of the resolution and induced-triangle sweeps.
    """
    by_resolution = resolution_sweep(runs, "1", (3, 5), quick_forest, k=5)
    assert list(by_resolution) == ["3", "5"]
    assert len(by_resolution["5"].column_names) == 2 * 25
    by_induced = induced_sweep(runs, "1", 4, quick_forest, k=5)
    assert list(by_induced) == ["without", "with"]


# ============================================================================
# End-to-end synthetic experiments
# ============================================================================

@pytest.fixture(scope="module")
def full_runs():
    """The 200-run synthetic dataset of the acceptance experiments."""
    return generate(GenConfig(seed=7, n_runs=200))


@pytest.mark.slow
def test_every_family_beats_65_percent(full_runs):
    """
    Test that every feature family reaches 65% mean accuracy on both constructions,
    and that Counts+GL stays within 2 points of the better of Counts and GL.
    """
    results = run_experiment_matrix(full_runs)
    for reports in results.values():
        for column, report in reports.items():
            assert report.accuracy.mean >= 65.0, column
        best = max(reports["counts"].accuracy.mean, reports["gl"].accuracy.mean)
        assert reports["counts_gl"].accuracy.mean >= best - 2.0
    assert "Construction 2" in format_metrics_table(results)


@pytest.mark.slow
def test_induced_triangles_barely_matter(full_runs):
    """
    Test that induced 2-simplices move PH accuracy by at most 3 points.
    """
    reports = induced_sweep(full_runs, "1")
    assert abs(reports["with"].accuracy.mean - reports["without"].accuracy.mean) <= 3.0


@pytest.mark.slow
def test_resolution_profile_is_flat(full_runs):
    """
    Test that PH accuracy varies by at most 5 points across resolutions.
    """
    reports = resolution_sweep(full_runs, "1", RESOLUTION_SWEEP)
    accuracies = [r.accuracy.mean for r in reports.values()]
    assert max(accuracies) - min(accuracies) <= 5.0


@pytest.mark.slow
def test_label_independent_generator_is_chance():
    """
    Test that identical benign and anomalous profiles give 50 ± 5 mean accuracy
    for every report column, averaged over ten generator and forest seeds.
    """
    accuracies = {column: [] for column in ALL_COLUMNS}
    for repetition in range(10):
        config = GenConfig(seed=100 + repetition, n_runs=200)
        config.anomalous_profile = config.benign_profile.model_copy()
        reports = run_experiment_matrix(
            generate(config), ("1",), config=ForestConfig(n_trees=30, seed=repetition), k=5,
        )
        for column, report in reports["1"].items():
            accuracies[column].append(report.accuracy.mean)

    for column, values in accuracies.items():
        assert len(values) == 10
        assert 45.0 <= np.mean(values) <= 55.0, column
