"""
Experiment matrix: cross-validated classification of every feature family on
every construction, the resolution and induced-triangle sweeps, and the text
tables that report them.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

from pydantic import BaseModel

from topolog.complex_builder import EdgePolicy
from topolog.errors import DegenerateConfig, MissingFeatureFamily
from topolog.features import FeatureFamily, FeatureTable, compute_features
from topolog.log_model import Construction, Run, get_construction
from topolog.ml import DEFAULT_FOLDS, METRICS, CvReport, ForestConfig, concat, cross_validate
from topolog.pers_image import DEFAULT_RESOLUTION, RESOLUTION_SWEEP

logger = logging.getLogger(__name__)

COUNTS_GL = "counts_gl"

# Report column order and titles
COLUMN_TITLES = {
    FeatureFamily.COUNTS.value: "Counts",
    FeatureFamily.PH.value: "PH",
    FeatureFamily.GL.value: "Graph Lap.",
    FeatureFamily.HL.value: "Hyper. Lap.",
    COUNTS_GL: "Counts+GL",
}
ALL_COLUMNS = tuple(COLUMN_TITLES)

METRIC_TITLES = {
    "accuracy": "Accuracy",
    "precision": "Precision",
    "recall": "Recall",
    "f1": "F1",
}


class ExperimentConfig(BaseModel):
    """Settings of one features/classify experiment."""
    dataset_dir: Path
    construction: str = "1"
    features: list[str] = list(ALL_COLUMNS)
    resolution: int = DEFAULT_RESOLUTION
    induced_2simplices: bool = False
    edge_policy: EdgePolicy = EdgePolicy.SEMANTIC_PAIRS
    seed: int = 0
    output_dir: Optional[Path] = None

    def check(self) -> None:
        """
        Raises:
            DegenerateConfig: On an unknown construction or family, no
                families, or a non-positive resolution
        """
        try:
            get_construction(self.construction)
            parse_columns(self.features)
        except ValueError as e:
            raise DegenerateConfig(str(e)) from e
        if self.resolution < 1:
            raise DegenerateConfig(f"resolution must be a positive integer, got {self.resolution}")


class ClassifyReport(BaseModel):
    """report.json of the classify command."""
    construction: str
    reports: dict[str, CvReport]


class ExperimentReport(BaseModel):
    """report.json of the experiment command."""
    constructions: dict[str, dict[str, CvReport]]
    resolution_sweep: Optional[dict[str, CvReport]] = None
    induced_sweep: Optional[dict[str, CvReport]] = None


def parse_columns(text: Union[str, Sequence[str]]) -> list[str]:
    """Parse "counts,ph,counts_gl" into report columns in table order."""
    names = text.split(",") if isinstance(text, str) else list(text)
    wanted = {n.strip().lower() for n in names if n.strip()}
    unknown = wanted - set(ALL_COLUMNS)
    if unknown:
        raise ValueError(f"unknown feature families: {', '.join(sorted(unknown))}")
    if not wanted:
        raise ValueError("at least one feature family is required")
    return [c for c in ALL_COLUMNS if c in wanted]


def table_families(columns: Sequence[str]) -> list[FeatureFamily]:
    """Feature families a feature table must hold to report the given columns."""
    needed = set()
    for column in columns:
        if column == COUNTS_GL:
            needed.update({FeatureFamily.COUNTS, FeatureFamily.GL})
        else:
            needed.add(FeatureFamily(column))
    return [f for f in FeatureFamily if f in needed]


def classify_table(
    table: FeatureTable,
    columns: Optional[Sequence[str]] = None,
    config: Optional[ForestConfig] = None,
    k: int = DEFAULT_FOLDS,
) -> dict[str, CvReport]:
    """
    Cross-validate a random forest on each requested family of a feature table.

    Args:
        table: Feature table of one construction
        columns: Report columns (families plus "counts_gl"); all families
            present in the table when None, with counts_gl added when both
            counts and gl are present
        config: Forest parameters
        k: Number of folds

    Returns:
        Mapping of column name to CvReport, in table order

    Raises:
        MissingFeatureFamily: If a requested family is absent from the table
        TooFewSamples: If a class has fewer than k runs
    """
    if columns is None:
        columns = [f.value for f in table.families]
        if FeatureFamily.COUNTS.value in columns and FeatureFamily.GL.value in columns:
            columns.append(COUNTS_GL)
    columns = parse_columns(columns)

    reports = {}
    for column in columns:
        if column == COUNTS_GL:
            try:
                matrix = concat(
                    table.family_matrix(FeatureFamily.COUNTS),
                    table.family_matrix(FeatureFamily.GL),
                )
            except MissingFeatureFamily as e:
                raise MissingFeatureFamily(f"counts_gl needs counts and gl columns: {e}") from e
        else:
            matrix = table.family_matrix(column)
        logger.info("Cross-validating %s (%d rows, %d columns)", column, matrix.n_rows, matrix.n_features)
        reports[column] = cross_validate(matrix, config, k)
    return reports


def _cell(report: CvReport, metric: str) -> str:
    summary = report.metric(metric)
    return f"{summary.mean:.2f} ± {summary.std:.2f}"


def _render(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    lines = []
    for row in [header] + rows:
        cells = [row[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return lines


def format_metrics_table(reports_by_construction: dict[str, dict[str, CvReport]]) -> str:
    """
    Render metrics as an aligned text table, one block per construction.

    Rows are Accuracy, Precision, Recall and F1; columns are the report
    columns present, in the order Counts, PH, Graph Lap., Hyper. Lap.,
    Counts+GL; cells read "mean ± std".

    Example:
        Construction 1
        Metric        Counts              PH
        Accuracy  100.00 ± 0.00   97.50 ± 3.54
    """
    blocks = []
    for construction, reports in reports_by_construction.items():
        columns = [c for c in ALL_COLUMNS if c in reports]
        header = ["Metric"] + [COLUMN_TITLES[c] for c in columns]
        rows = [[METRIC_TITLES[m]] + [_cell(reports[c], m) for c in columns] for m in METRICS]
        blocks.append("\n".join([f"Construction {construction}"] + _render(header, rows)))
    return "\n\n".join(blocks) + "\n"


def format_sweep_table(title: str, key_title: str, reports: dict[str, CvReport]) -> str:
    """Render a sweep: one column per swept value, one row per metric."""
    keys = list(reports)
    header = [f"Metric \\ {key_title}"] + keys
    rows = [[METRIC_TITLES[m]] + [_cell(reports[key], m) for key in keys] for m in METRICS]
    return "\n".join([title] + _render(header, rows)) + "\n"


def run_experiment_matrix(
    runs: Sequence[Run],
    constructions: Sequence[Union[Construction, str]] = ("1", "2"),
    columns: Sequence[str] = ALL_COLUMNS,
    resolution: int = DEFAULT_RESOLUTION,
    induced_2simplices: bool = False,
    edge_policy: EdgePolicy = EdgePolicy.SEMANTIC_PAIRS,
    config: Optional[ForestConfig] = None,
    k: int = DEFAULT_FOLDS,
    n_jobs: int = 1,
) -> dict[str, dict[str, CvReport]]:
    """
    Classify every requested column on every construction.

    Feature tables are computed per construction, so grid ranges and
    spectrum lengths never leak between constructions.

    Returns:
        {construction name: {column: CvReport}}
    """
    columns = parse_columns(columns)
    results = {}
    for construction in constructions:
        if not isinstance(construction, Construction):
            construction = get_construction(construction)
        table = compute_features(
            runs, construction, table_families(columns),
            resolution, induced_2simplices, edge_policy, n_jobs,
        )
        results[construction.name] = classify_table(table, columns, config, k)
    return results


def resolution_sweep(
    runs: Sequence[Run],
    construction: Union[Construction, str],
    resolutions: Sequence[int] = RESOLUTION_SWEEP,
    config: Optional[ForestConfig] = None,
    k: int = DEFAULT_FOLDS,
    n_jobs: int = 1,
) -> dict[str, CvReport]:
    """PH classification at each persistence image resolution, keyed by resolution."""
    if not isinstance(construction, Construction):
        construction = get_construction(construction)
    reports = {}
    for resolution in resolutions:
        table = compute_features(runs, construction, [FeatureFamily.PH], resolution, n_jobs=n_jobs)
        reports[str(resolution)] = cross_validate(table.family_matrix(FeatureFamily.PH), config, k)
        logger.info("Resolution %d: PH accuracy %.2f", resolution, reports[str(resolution)].accuracy.mean)
    return reports


def induced_sweep(
    runs: Sequence[Run],
    construction: Union[Construction, str],
    resolution: int = DEFAULT_RESOLUTION,
    config: Optional[ForestConfig] = None,
    k: int = DEFAULT_FOLDS,
    n_jobs: int = 1,
) -> dict[str, CvReport]:
    """PH classification without and with induced 2-simplices."""
    if not isinstance(construction, Construction):
        construction = get_construction(construction)
    reports = {}
    for key, induced in (("without", False), ("with", True)):
        table = compute_features(runs, construction, [FeatureFamily.PH], resolution, induced, n_jobs=n_jobs)
        reports[key] = cross_validate(table.family_matrix(FeatureFamily.PH), config, k)
    return reports
