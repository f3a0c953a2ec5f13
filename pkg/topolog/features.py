"""
Corpus feature pipeline: per-run embeddings, corpus-level fitting and the
feature table shared by the features, classify and experiment commands.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from topolog.complex_builder import EdgePolicy, build_complex, build_hypergraph
from topolog.counts import count_schema, count_vector
from topolog.errors import EmptyAfterFilter, InvalidFeatureMatrix, MissingFeatureFamily
from topolog.log_model import Construction, Label, Run, filter_runs
from topolog.ml import FeatureMatrix
from topolog.pers_image import DEFAULT_RESOLUTION, PersistenceImager
from topolog.persistence import FinitizedDiagram, compute_persistence, finitize
from topolog.spectral import (
    choose_target_len,
    eig_symmetric,
    graph_laplacian,
    hypergraph_laplacian,
    to_spectrum_vector,
)
from topolog.storage import atomic_write_text

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.12g"
ID_COLUMNS = ("run_id", "label")


class FeatureFamily(str, Enum):
    COUNTS = "counts"
    PH = "ph"
    GL = "gl"
    HL = "hl"


# Column order of a feature table
FAMILY_ORDER = (FeatureFamily.COUNTS, FeatureFamily.PH, FeatureFamily.GL, FeatureFamily.HL)

_PREFIXES = {
    FeatureFamily.COUNTS: ("cnt_",),
    FeatureFamily.PH: ("pi0_", "pi1_"),
    FeatureFamily.GL: ("gl_",),
    FeatureFamily.HL: ("hl_",),
}


def column_family(name: str) -> Optional[FeatureFamily]:
    for family, prefixes in _PREFIXES.items():
        if name.startswith(prefixes):
            return family
    return None


def quantize(values: np.ndarray) -> np.ndarray:
    """Round every value to the 12 significant digits written to CSV (-0.0 becomes 0.0)."""
    values = np.asarray(values, dtype=np.float64)
    flat = [float(f"{v:.12g}") + 0.0 for v in values.reshape(-1).tolist()]
    return np.asarray(flat, dtype=np.float64).reshape(values.shape)


def parse_families(text: Union[str, Iterable[str]]) -> list[FeatureFamily]:
    """Parse "counts,ph" (or an iterable of names) into families in table order."""
    names = text.split(",") if isinstance(text, str) else list(text)
    wanted = {FeatureFamily(n.strip().lower()) for n in names if n.strip()}
    if not wanted:
        raise ValueError("at least one feature family is required")
    return [f for f in FAMILY_ORDER if f in wanted]


# ============================================================================
# Feature table
# ============================================================================

@dataclass(frozen=True, eq=False)
class FeatureTable:
    """One row per run: id, label and the feature columns in family order."""
    run_ids: tuple[str, ...]
    labels: tuple[Label, ...]
    column_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(len(self.run_ids), len(self.column_names))
        object.__setattr__(self, "values", values)
        if len(self.labels) != len(self.run_ids):
            raise InvalidFeatureMatrix("labels do not match run ids")

    @property
    def families(self) -> list[FeatureFamily]:
        present = {column_family(name) for name in self.column_names}
        return [f for f in FAMILY_ORDER if f in present]

    @property
    def resolution(self) -> Optional[int]:
        """Persistence image resolution, or None without PH columns."""
        n_pixels = sum(1 for name in self.column_names if name.startswith("pi0_"))
        return math.isqrt(n_pixels) if n_pixels else None

    def family_columns(self, family: FeatureFamily) -> list[int]:
        return [i for i, name in enumerate(self.column_names) if column_family(name) is family]

    def family_matrix(self, family: Union[FeatureFamily, str]) -> FeatureMatrix:
        """
        Slice one feature family into a classifier matrix.

        Raises:
            MissingFeatureFamily: If the table has no columns of that family
        """
        family = FeatureFamily(family)
        columns = self.family_columns(family)
        if not columns:
            raise MissingFeatureFamily(f"feature table has no '{family.value}' columns")
        return FeatureMatrix(
            self.values[:, columns],
            np.array([1 if label == Label.ANOMALOUS else 0 for label in self.labels]),
            tuple(self.column_names[i] for i in columns),
            self.run_ids,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=list(self.column_names))
        frame.insert(0, "label", [label.value for label in self.labels])
        frame.insert(0, "run_id", list(self.run_ids))
        return frame

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write the table as CSV (header row, 12 significant digits, \\n endings)."""
        text = self.to_frame().to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        return atomic_write_text(path, text)


def read_feature_csv(path: Union[str, Path]) -> FeatureTable:
    """
    Load a feature table written by ``FeatureTable.to_csv``.

    Raises:
        InvalidFeatureMatrix: If the id columns are missing or a label is unknown
    """
    frame = pd.read_csv(path, float_precision="round_trip", dtype={"run_id": str, "label": str})
    if list(frame.columns[:2]) != list(ID_COLUMNS):
        raise InvalidFeatureMatrix(f"{path}: first columns must be run_id,label")
    try:
        labels = tuple(Label(value) for value in frame["label"])
    except ValueError as e:
        raise InvalidFeatureMatrix(f"{path}: {e}") from e
    feature_names = tuple(frame.columns[2:])
    return FeatureTable(
        tuple(frame["run_id"]),
        labels,
        feature_names,
        frame[list(feature_names)].to_numpy(dtype=np.float64),
    )


# ============================================================================
# Per-run embeddings
# ============================================================================

@dataclass
class RunEmbedding:
    """Everything computed from one run before the corpus passes."""
    run_id: str
    label: Label
    counts: Optional[np.ndarray] = None
    h0: Optional[FinitizedDiagram] = None
    h1: Optional[FinitizedDiagram] = None
    gl_eigs: Optional[np.ndarray] = None
    hl_eigs: Optional[np.ndarray] = None


def embed_run(
    run: Run,
    construction: Construction,
    families: Sequence[FeatureFamily],
    induced_2simplices: bool = False,
    edge_policy: EdgePolicy = EdgePolicy.SEMANTIC_PAIRS,
) -> RunEmbedding:
    """Compute the per-run intermediates of the requested families."""
    embedding = RunEmbedding(run.run_id, run.label)
    if FeatureFamily.COUNTS in families:
        embedding.counts = np.asarray(count_vector(run, construction).values, dtype=np.float64)
    if FeatureFamily.PH in families or FeatureFamily.GL in families:
        built = build_complex(run, edge_policy, induced_2simplices)
        if FeatureFamily.PH in families:
            h0, h1 = compute_persistence(built)
            embedding.h0 = finitize(h0, built.max_filtration_value)
            embedding.h1 = finitize(h1, built.max_filtration_value)
        if FeatureFamily.GL in families:
            embedding.gl_eigs = eig_symmetric(graph_laplacian(built))
    if FeatureFamily.HL in families:
        embedding.hl_eigs = eig_symmetric(hypergraph_laplacian(build_hypergraph(run)))
    logger.debug("Embedded run %s (construction %s)", run.run_id, construction.name)
    return embedding


def compute_features(
    runs: Sequence[Run],
    construction: Construction,
    families: Sequence[Union[FeatureFamily, str]],
    resolution: int = DEFAULT_RESOLUTION,
    induced_2simplices: bool = False,
    edge_policy: EdgePolicy = EdgePolicy.SEMANTIC_PAIRS,
    n_jobs: int = 1,
) -> FeatureTable:
    """
    Compute the feature table of a corpus for one construction.

    Per-run embeddings are computed in parallel; image grids (one per
    homology dimension) and spectrum lengths are then fitted over the whole
    corpus, so every row shares one layout.

    Args:
        runs: Corpus (unfiltered)
        construction: Event types to keep
        families: Feature families to compute
        resolution: Persistence image pixels per axis
        induced_2simplices: Add induced triangles to the complexes
        edge_policy: Edge policy of the complexes
        n_jobs: joblib worker count

    Returns:
        FeatureTable with rows sorted by run_id

    Raises:
        EmptyAfterFilter: If the construction leaves no run of some label
    """
    families = [FeatureFamily(f) for f in families]
    families = [f for f in FAMILY_ORDER if f in families]
    kept = sorted(filter_runs(runs, construction), key=lambda r: r.run_id)
    for label in Label:
        if not any(run.label == label for run in kept):
            raise EmptyAfterFilter(f"construction {construction.name} leaves no {label.value} runs")

    logger.info(
        "Computing %s features for %d runs (construction %s)",
        ",".join(f.value for f in families), len(kept), construction.name,
    )
    embeddings = Parallel(n_jobs=n_jobs)(
        delayed(embed_run)(run, construction, families, induced_2simplices, edge_policy)
        for run in kept
    )

    blocks: list[np.ndarray] = []
    names: list[str] = []

    if FeatureFamily.COUNTS in families:
        blocks.append(np.vstack([e.counts for e in embeddings]))
        names.extend(f"cnt_{name}" for name in count_schema(construction))

    if FeatureFamily.PH in families:
        for dim in (0, 1):
            diagrams = [getattr(e, f"h{dim}") for e in embeddings]
            imager = PersistenceImager(resolution).fit(diagrams)
            blocks.append(np.vstack([imager.transform(d) for d in diagrams]))
            names.extend(f"pi{dim}_{r}_{c}" for r in range(resolution) for c in range(resolution))

    for family, attr in ((FeatureFamily.GL, "gl_eigs"), (FeatureFamily.HL, "hl_eigs")):
        if family in families:
            spectra = [getattr(e, attr) for e in embeddings]
            target_len = choose_target_len([len(s) for s in spectra])
            logger.info("%s spectrum length %d", family.value, target_len)
            blocks.append(np.vstack([to_spectrum_vector(s, target_len) for s in spectra]))
            names.extend(f"{family.value}_{i}" for i in range(target_len))

    values = np.hstack(blocks) if blocks else np.zeros((len(kept), 0))
    return FeatureTable(
        tuple(e.run_id for e in embeddings),
        tuple(e.label for e in embeddings),
        tuple(names),
        quantize(values),
    )
