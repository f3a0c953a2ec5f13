"""
Command-line interface: gen, features, classify, importance, diagram and
experiment subcommands.

Exit codes: 0 on success, 2 on usage or data errors, 1 on internal errors.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from topolog.complex_builder import (
    EdgePolicy,
    build_complex,
    build_hypergraph,
    complex_to_dict,
)
from topolog.errors import DatasetError, DegenerateConfig, MissingFeatureFamily, TopologError
from topolog.experiment import (
    ClassifyReport,
    ExperimentConfig,
    ExperimentReport,
    classify_table,
    format_metrics_table,
    format_sweep_table,
    induced_sweep,
    parse_columns,
    resolution_sweep,
    run_experiment_matrix,
    table_families,
)
from topolog.features import CSV_FLOAT_FORMAT, FeatureFamily, compute_features, read_feature_csv
from topolog.log_model import filter_events, get_construction
from topolog.ml import ForestConfig
from topolog.pers_image import DEFAULT_RESOLUTION, RESOLUTION_SWEEP
from topolog.persistence import compute_persistence, diagram_to_dict, finitize
from topolog.spectral import eigenpairs, graph_laplacian, hypergraph_laplacian
from topolog.storage import DatasetStore, atomic_write_text
from topolog.synth_gen import GenConfig, write_dataset

logger = logging.getLogger(__name__)

SEED_ENV = "TOPOLOG_SEED"
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def default_seed() -> int:
    """Default seed of every subcommand, overridable through TOPOLOG_SEED."""
    value = os.environ.get(SEED_ENV)
    if value is None:
        return 0
    try:
        return int(value)
    except ValueError:
        raise DegenerateConfig(f"{SEED_ENV} must be an integer, got '{value}'") from None


def _frame_csv(frame: pd.DataFrame, path: Path, header: bool = True) -> Path:
    text = frame.to_csv(index=False, header=header, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return atomic_write_text(path, text)


# ============================================================================
# Subcommands
# ============================================================================

def cmd_gen(args: argparse.Namespace) -> int:
    """Generate a synthetic labelled dataset."""
    config = GenConfig(
        seed=args.seed,
        n_runs=args.runs,
        anomaly_fraction=args.anomaly_frac,
        run_duration=args.duration,
    )
    manifest = write_dataset(config, args.out, n_jobs=args.jobs)
    print(f"Wrote {len(manifest.runs)} runs to {args.out}")
    return 0


def cmd_features(args: argparse.Namespace) -> int:
    """Compute the feature table of a dataset for one construction."""
    config = ExperimentConfig(
        dataset_dir=args.dataset,
        construction=args.construction,
        features=args.features.split(","),
        resolution=args.resolution,
        induced_2simplices=args.induced_2simplices,
        edge_policy=EdgePolicy(args.edge_policy),
        output_dir=Path(args.out).parent,
    )
    config.check()

    runs = DatasetStore(config.dataset_dir).load_runs()
    table = compute_features(
        runs,
        get_construction(config.construction),
        table_families(parse_columns(config.features)),
        config.resolution,
        config.induced_2simplices,
        config.edge_policy,
        n_jobs=args.jobs,
    )
    table.to_csv(args.out)
    print(f"Wrote {len(table.run_ids)} rows x {len(table.column_names)} features to {args.out}")
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    """Cross-validate every feature family of a feature table."""
    table = read_feature_csv(args.features)
    columns = parse_columns(args.families) if args.families else None
    forest = ForestConfig(seed=args.seed, n_trees=args.trees, n_jobs=args.jobs)
    reports = classify_table(table, columns, forest, k=args.folds)

    report = ClassifyReport(construction=args.construction, reports=reports)
    out_dir = Path(args.out_dir)
    atomic_write_text(out_dir / "report.json", report.model_dump_json(indent=2) + "\n")
    table_text = format_metrics_table({args.construction: reports})
    atomic_write_text(out_dir / "table.txt", table_text)
    print(table_text, end="")
    return 0


def _write_pixel_importance(report_columns, mdi, resolution: int, out_dir: Path) -> list[Path]:
    written = []
    for dim in (0, 1):
        image = np.zeros((resolution, resolution))
        for name, value in zip(report_columns, mdi):
            if name.startswith(f"pi{dim}_"):
                _, row, col = name.split("_")
                image[int(row), int(col)] = value
        written.append(_frame_csv(pd.DataFrame(image), out_dir / f"pi{dim}_importance.csv", header=False))
    return written


def _write_node_eigenvector(args: argparse.Namespace, construction_name: str, family: str, out_dir: Path) -> Path:
    store = DatasetStore(args.dataset)
    run = filter_events(store.load_run(store.run_path(args.run_id)), get_construction(construction_name))
    if family == FeatureFamily.HL.value:
        hypergraph = build_hypergraph(run)
        nodes, laplacian = hypergraph.nodes, hypergraph_laplacian(hypergraph)
    else:
        built = build_complex(run, EdgePolicy(args.edge_policy))
        nodes, laplacian = built.nodes, graph_laplacian(built)

    _, vectors = eigenpairs(laplacian)
    if not 0 <= args.eigen_index < vectors.shape[1]:
        raise DegenerateConfig(
            f"eigen index {args.eigen_index} out of range for run {args.run_id} ({vectors.shape[1]} nodes)"
        )
    frame = pd.DataFrame({
        "node_id": [str(node) for node in nodes],
        "value": vectors[:, args.eigen_index],
    })
    return _frame_csv(frame, out_dir / "node_eigenvector.csv")


def cmd_importance(args: argparse.Namespace) -> int:
    """Export MDI importances as pixel matrices and eigen-index tables."""
    try:
        report = ClassifyReport.model_validate_json(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise DatasetError(Path(args.report), e) from e
    table = read_feature_csv(args.features)
    out_dir = Path(args.out_dir)

    written = []
    if FeatureFamily.PH.value in report.reports:
        ph = report.reports[FeatureFamily.PH.value]
        if table.resolution is None:
            raise MissingFeatureFamily(f"{args.features} has no persistence image columns")
        written += _write_pixel_importance(ph.column_names, ph.mdi, table.resolution, out_dir)

    for family in (FeatureFamily.GL.value, FeatureFamily.HL.value):
        if family in report.reports:
            cv = report.reports[family]
            frame = pd.DataFrame({
                "eigen_index": [int(name.rsplit("_", 1)[1]) for name in cv.column_names],
                "mdi": cv.mdi,
            })
            written.append(_frame_csv(frame, out_dir / f"{family}_importance.csv"))

    if args.run_id is not None:
        if args.dataset is None:
            raise DegenerateConfig("--run-id needs --dataset")
        written.append(_write_node_eigenvector(args, report.construction, args.eigen_family, out_dir))

    if not written:
        raise MissingFeatureFamily("report holds no ph, gl or hl results")
    for path in written:
        print(f"Wrote {path}")
    return 0


def cmd_diagram(args: argparse.Namespace) -> int:
    """Dump the persistence diagrams (and optionally the complex) of one run."""
    store = DatasetStore(args.dataset)
    construction = get_construction(args.construction)
    run = filter_events(store.load_run(store.run_path(args.run)), construction)
    built = build_complex(run, EdgePolicy(args.edge_policy), args.induced_2simplices)
    h0, h1 = compute_persistence(built)

    payload = {
        "run_id": run.run_id,
        "construction": construction.name,
        "diagrams": [diagram_to_dict(finitize(d, built.max_filtration_value)) for d in (h0, h1)],
    }
    if args.emit_complex:
        payload["complex"] = complex_to_dict(built)

    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    """Run the full experiment matrix and optional sweeps."""
    runs = DatasetStore(args.dataset).load_runs()
    constructions = [c.strip() for c in args.constructions.split(",") if c.strip()]
    for name in constructions:
        get_construction(name)
    forest = ForestConfig(seed=args.seed, n_trees=args.trees, n_jobs=args.jobs)
    out_dir = Path(args.out_dir)

    matrix = run_experiment_matrix(
        runs, constructions, parse_columns(args.features), args.resolution,
        args.induced_2simplices, EdgePolicy(args.edge_policy), forest, args.folds, args.jobs,
    )
    report = ExperimentReport(constructions=matrix)
    table_text = format_metrics_table(matrix)
    atomic_write_text(out_dir / "table.txt", table_text)
    print(table_text, end="")

    if args.sweep_resolution:
        report.resolution_sweep = resolution_sweep(
            runs, constructions[0], RESOLUTION_SWEEP, forest, args.folds, args.jobs,
        )
        sweep_text = format_sweep_table(
            f"PH by resolution, construction {constructions[0]}", "resolution", report.resolution_sweep,
        )
        atomic_write_text(out_dir / "resolution_sweep.txt", sweep_text)
        print(sweep_text, end="")

    if args.sweep_induced:
        report.induced_sweep = induced_sweep(
            runs, constructions[0], args.resolution, forest, args.folds, args.jobs,
        )
        sweep_text = format_sweep_table(
            f"PH with induced 2-simplices, construction {constructions[0]}", "induced", report.induced_sweep,
        )
        atomic_write_text(out_dir / "induced_sweep.txt", sweep_text)
        print(sweep_text, end="")

    atomic_write_text(out_dir / "report.json", report.model_dump_json(indent=2) + "\n")
    return 0


# ============================================================================
# Parser
# ============================================================================

def _add_edge_policy_option(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--edge-policy",
        choices=[p.value for p in EdgePolicy],
        default=EdgePolicy.SEMANTIC_PAIRS.value,
        help="Which node pairs of an event become edges",
    )


def _add_complex_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--construction", choices=("1", "2"), default="1", help="Event-type construction")
    parser.add_argument("--induced-2simplices", action="store_true", help="Add induced 2-simplices")
    _add_edge_policy_option(parser)


def _add_forest_options(parser: argparse.ArgumentParser, seed: int) -> None:
    parser.add_argument("--seed", type=int, default=seed, help=f"Forest and fold seed (env {SEED_ENV})")
    parser.add_argument("--trees", type=int, default=100, help="Trees per forest")
    parser.add_argument("--folds", type=int, default=10, help="Cross-validation folds")


def build_parser() -> argparse.ArgumentParser:
    seed = default_seed()
    parser = argparse.ArgumentParser(
        prog="topolog",
        description="Topological and spectral features of host logs for anomaly detection",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="Logging threshold",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate a synthetic dataset")
    gen.add_argument("--seed", type=int, default=seed, help=f"Generator seed (env {SEED_ENV})")
    gen.add_argument("--runs", type=int, default=200, help="Number of runs")
    gen.add_argument("--anomaly-frac", type=float, default=0.5, help="Fraction of anomalous runs")
    gen.add_argument("--duration", type=float, default=180.0, help="Run duration in seconds")
    gen.add_argument("--out", required=True, help="Dataset directory")
    gen.add_argument("--jobs", type=int, default=1, help="Worker processes")
    gen.set_defaults(handler=cmd_gen)

    features = sub.add_parser("features", help="Compute a feature CSV for a dataset")
    features.add_argument("--dataset", required=True, help="Dataset directory")
    features.add_argument("--features", default="counts,ph,gl,hl", help="Comma-separated families")
    features.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION, help="Persistence image resolution")
    _add_complex_options(features)
    features.add_argument("--jobs", type=int, default=1, help="Worker processes")
    features.add_argument("--out", required=True, help="Output CSV")
    features.set_defaults(handler=cmd_features)

    classify = sub.add_parser("classify", help="Cross-validate random forests on a feature CSV")
    classify.add_argument("--features", required=True, help="Feature CSV")
    classify.add_argument("--families", default=None, help="Columns to report, e.g. counts,gl,counts_gl")
    classify.add_argument("--construction", default="1", help="Construction label for the report")
    _add_forest_options(classify, seed)
    classify.add_argument("--jobs", type=int, default=1, help="Worker processes per forest")
    classify.add_argument("--out-dir", required=True, help="Directory for report.json and table.txt")
    classify.set_defaults(handler=cmd_classify)

    importance = sub.add_parser("importance", help="Export MDI feature importances")
    importance.add_argument("--report", required=True, help="report.json from classify")
    importance.add_argument("--features", required=True, help="Feature CSV the report was computed on")
    importance.add_argument("--dataset", default=None, help="Dataset directory (for --run-id)")
    importance.add_argument("--run-id", default=None, help="Run whose Laplacian eigenvector is exported")
    importance.add_argument("--eigen-index", type=int, default=0, help="Eigenvector index, 0 = largest eigenvalue")
    importance.add_argument("--eigen-family", choices=("gl", "hl"), default="gl", help="Laplacian to decompose")
    _add_edge_policy_option(importance)
    importance.add_argument("--out-dir", required=True, help="Output directory")
    importance.set_defaults(handler=cmd_importance)

    diagram = sub.add_parser("diagram", help="Dump persistence diagrams of one run")
    diagram.add_argument("--dataset", required=True, help="Dataset directory")
    diagram.add_argument("--run", required=True, help="Run id")
    _add_complex_options(diagram)
    diagram.add_argument("--emit-complex", action="store_true", help="Include the filtered complex")
    diagram.add_argument("--out", default=None, help="Output JSON (stdout when omitted)")
    diagram.set_defaults(handler=cmd_diagram)

    experiment = sub.add_parser("experiment", help="Run every family on every construction")
    experiment.add_argument("--dataset", required=True, help="Dataset directory")
    experiment.add_argument("--constructions", default="1,2", help="Comma-separated constructions")
    experiment.add_argument("--features", default="counts,ph,gl,hl,counts_gl", help="Columns to report")
    experiment.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION, help="Persistence image resolution")
    experiment.add_argument("--induced-2simplices", action="store_true", help="Add induced 2-simplices")
    _add_edge_policy_option(experiment)
    _add_forest_options(experiment, seed)
    experiment.add_argument("--sweep-resolution", action="store_true", help="Also sweep PH resolutions")
    experiment.add_argument("--sweep-induced", action="store_true", help="Also compare induced 2-simplices")
    experiment.add_argument("--jobs", type=int, default=1, help="Worker processes")
    experiment.add_argument("--out-dir", required=True, help="Output directory")
    experiment.set_defaults(handler=cmd_experiment)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments and run a subcommand.

    Returns:
        Process exit code
    """
    try:
        parser = build_parser()
    except TopologError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr)
    try:
        return args.handler(args)
    except TopologError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        # Bad flag values that argparse cannot check (family lists, constructions)
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception:
        logger.exception("Internal error running '%s'", args.command)
        return 1
