"""
Persistent homology of filtered complexes by boundary-matrix reduction over Z/2.
Also provides point finitization and a Vietoris-Rips builder for testing.
"""

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.spatial.distance import pdist, squareform

from topolog.complex_builder import FilteredComplex, Simplex, induced_triangles
from topolog.errors import InvalidFiltration

logger = logging.getLogger(__name__)

# Infinite deaths become FINITIZATION_FACTOR x the largest filtration value
FINITIZATION_FACTOR = 2.5

HOMOLOGY_DIMENSIONS = (0, 1)


def _as_points(pairs) -> np.ndarray:
    points = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    if len(points):
        points = points[np.lexsort((points[:, 1], points[:, 0]))]
    return points


@dataclass(frozen=True, eq=False)
class PersistenceDiagram:
    """(birth, death) points of one homology dimension; death may be +inf."""
    dimension: int
    points: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    @property
    def trivial_mask(self) -> np.ndarray:
        """True for zero-persistence points (birth == death)."""
        return self.points[:, 0] == self.points[:, 1]

    @property
    def infinite_mask(self) -> np.ndarray:
        return np.isinf(self.points[:, 1])

    def without_trivial(self) -> "PersistenceDiagram":
        return PersistenceDiagram(self.dimension, self.points[~self.trivial_mask])

    def as_tuples(self) -> list[tuple[float, float]]:
        return [(float(b), float(d)) for b, d in self.points]


@dataclass(frozen=True, eq=False)
class FinitizedDiagram:
    """A diagram whose infinite deaths were replaced by a finite value."""
    dimension: int
    points: np.ndarray
    finitization_value: float

    def __len__(self) -> int:
        return len(self.points)

    @property
    def persistence(self) -> np.ndarray:
        return self.points[:, 1] - self.points[:, 0]


def _face_positions(by_dim: dict[int, list[Simplex]]) -> dict[tuple, int]:
    positions = {}
    for simplices in by_dim.values():
        for i, simplex in enumerate(simplices):
            positions[simplex.vertices] = i
    return positions


def _check_faces(by_dim: dict[int, list[Simplex]], positions: dict[tuple, int]) -> dict[tuple, float]:
    times = {s.vertices: s.filtration_time for simplices in by_dim.values() for s in simplices}
    for dim, simplices in by_dim.items():
        if dim == 0:
            continue
        for simplex in simplices:
            for face in combinations(simplex.vertices, dim):
                if face not in positions:
                    raise InvalidFiltration(f"face {face} of {simplex.vertices} is missing")
                if times[face] > simplex.filtration_time:
                    raise InvalidFiltration(
                        f"face {face} enters at {times[face]} after its coface "
                        f"{simplex.vertices} at {simplex.filtration_time}"
                    )
    return times


def _reduce_dimension(columns: list[Simplex], positions: dict[tuple, int], n_positive_rows: int):
    """
    Reduce the boundary columns of one dimension.

    Columns are integer bit sets over the positions of the faces; the lowest
    one of a column is its highest set bit.

    Returns:
        (pairs, zero_columns): pairs as (row position, column position) and the
        set of column positions that reduced to zero
    """
    pivots: dict[int, int] = {}
    pairs: list[tuple[int, int]] = []
    zero_columns: set[int] = set()
    dim = columns[0].dim if columns else 0

    for j, simplex in enumerate(columns):
        # Lows of reduced columns are unpaired positive rows; once every such
        # row is paired, the remaining columns all reduce to zero
        if len(pivots) == n_positive_rows:
            zero_columns.update(range(j, len(columns)))
            break

        column = 0
        for face in combinations(simplex.vertices, dim):
            column ^= 1 << positions[face]

        while column:
            low = column.bit_length() - 1
            other = pivots.get(low)
            if other is None:
                pivots[low] = column
                pairs.append((low, j))
                break
            column ^= other
        else:
            zero_columns.add(j)

    return pairs, zero_columns


def compute_persistence(built: FilteredComplex) -> tuple[PersistenceDiagram, PersistenceDiagram]:
    """
    Compute the H0 and H1 persistence diagrams of a filtered complex.

    Runs the standard column reduction over Z/2 with simplices in filtration
    order (time, dimension, vertex tuple). Zero-persistence points are kept;
    see ``PersistenceDiagram.trivial_mask``.

    Args:
        built: Complex satisfying face closure and face monotonicity

    Returns:
        (H0 diagram, H1 diagram), points sorted by (birth, death)

    Raises:
        InvalidFiltration: If a face is missing or enters after a coface

    Example:
        >>> h0, h1 = compute_persistence(build_complex(run))
        >>> int(h0.infinite_mask.sum())  # connected components at the end
        1
    """
    by_dim: dict[int, list[Simplex]] = {}
    for simplex in sorted(built.simplices, key=Simplex.sort_key):
        by_dim.setdefault(simplex.dim, []).append(simplex)

    positions = _face_positions(by_dim)
    _check_faces(by_dim, positions)

    top = max(by_dim, default=0)
    # positive[d]: positions of d-simplices whose column reduced to zero
    positive: dict[int, set[int]] = {0: set(range(len(by_dim.get(0, []))))}
    killed_by: dict[int, dict[int, int]] = {}

    for dim in range(1, top + 1):
        columns = by_dim.get(dim, [])
        pairs, zero_columns = _reduce_dimension(columns, positions, len(positive[dim - 1]))
        positive[dim] = zero_columns
        killed_by[dim - 1] = dict(pairs)

    diagrams = []
    for dim in HOMOLOGY_DIMENSIONS:
        simplices = by_dim.get(dim, [])
        deaths = killed_by.get(dim, {})
        cofaces = by_dim.get(dim + 1, [])
        points = []
        for i in sorted(positive.get(dim, ())):
            birth = simplices[i].filtration_time
            if i in deaths:
                points.append((birth, cofaces[deaths[i]].filtration_time))
            else:
                points.append((birth, np.inf))
        diagrams.append(PersistenceDiagram(dim, _as_points(points)))

    logger.debug(
        "Reduced %d simplices: %d H0 points, %d H1 points",
        len(built.simplices), len(diagrams[0]), len(diagrams[1]),
    )
    return diagrams[0], diagrams[1]


def finitize(diagram: PersistenceDiagram, complex_max: float) -> FinitizedDiagram:
    """
    Replace infinite deaths by a value well beyond the filtration.

    Args:
        diagram: Diagram possibly containing infinite deaths
        complex_max: Largest finite filtration value of the source complex

    Returns:
        FinitizedDiagram with every +inf death replaced by 2.5 x complex_max
        (1.0 when complex_max is 0); finite points unchanged

    Example:
        >>> finitize(PersistenceDiagram(0, np.array([[0.0, np.inf]])), 200.0).points
        array([[  0., 500.]])
    """
    value = FINITIZATION_FACTOR * complex_max if complex_max > 0 else 1.0
    points = diagram.points.copy()
    if len(points):
        points[:, 1] = np.where(np.isinf(points[:, 1]), value, points[:, 1])
    return FinitizedDiagram(diagram.dimension, points, float(value))


def diagram_to_dict(diagram: FinitizedDiagram) -> dict:
    """JSON-ready form: {dim, points: [[b, d], ...], infinite_replaced_with}."""
    return {
        "dim": diagram.dimension,
        "points": [[float(b), float(d)] for b, d in diagram.points],
        "infinite_replaced_with": diagram.finitization_value,
    }


def vietoris_rips(points, max_eps: float, max_dim: int = 2) -> FilteredComplex:
    """
    Vietoris-Rips filtration of a point cloud.

    Vertices enter at 0, an edge at the distance between its endpoints when
    that is at most ``max_eps``, a triangle at the largest of its edge times.

    Args:
        points: Sequence of coordinates (one row per point)
        max_eps: Largest edge length admitted
        max_dim: Highest simplex dimension (0, 1 or 2)

    Returns:
        FilteredComplex labelled by point index
    """
    coords = np.asarray(points, dtype=np.float64)
    if coords.ndim == 1:
        coords = coords.reshape(-1, 1)
    if len(coords) == 0:
        raise ValueError("vietoris_rips needs at least one point")
    if max_eps <= 0:
        raise ValueError("max_eps must be positive")
    if not 0 <= max_dim <= 2:
        raise ValueError("max_dim must be 0, 1 or 2")

    n = len(coords)
    times: dict[tuple, float] = {(i,): 0.0 for i in range(n)}

    if max_dim >= 1 and n > 1:
        distances = squareform(pdist(coords))
        edge_times = {}
        rows, cols = np.triu_indices(n, k=1)
        for i, j in zip(rows.tolist(), cols.tolist()):
            d = float(distances[i, j])
            if d <= max_eps:
                edge_times[(i, j)] = d
        times.update(edge_times)
        if max_dim >= 2:
            times.update(induced_triangles(edge_times))

    return FilteredComplex.from_times(range(n), times)
