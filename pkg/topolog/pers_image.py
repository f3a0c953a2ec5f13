"""
Persistence image vectorization of finitized persistence diagrams.
Points are moved to birth-persistence coordinates, weighted linearly by
persistence, smoothed by a Gaussian and integrated exactly over each pixel.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from topolog.errors import InvalidGrid, UnfittedGrid
from topolog.persistence import FinitizedDiagram

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 20
RESOLUTION_SWEEP = (5, 10, 15, 20, 50, 100)


@dataclass(frozen=True)
class ImageGrid:
    """Pixel grid over [0, birth_max] x [0, persistence_max]."""
    resolution: int
    birth_max: float
    persistence_max: float
    sigma: float

    def __post_init__(self):
        if self.resolution < 1:
            raise InvalidGrid(f"resolution must be >= 1, got {self.resolution}")
        for name in ("birth_max", "persistence_max", "sigma"):
            value = getattr(self, name)
            if not value > 0 or not np.isfinite(value):
                raise InvalidGrid(f"{name} must be positive and finite, got {value}")

    @property
    def birth_edges(self) -> np.ndarray:
        return np.linspace(0.0, self.birth_max, self.resolution + 1)

    @property
    def persistence_edges(self) -> np.ndarray:
        return np.linspace(0.0, self.persistence_max, self.resolution + 1)


@dataclass(frozen=True, eq=False)
class PersistenceImage:
    """resolution x resolution pixel values; rows index persistence, columns birth."""
    values: np.ndarray

    def flatten(self) -> np.ndarray:
        """Row-major feature vector."""
        return self.values.reshape(-1)


def fit_grid(diagrams: Sequence[FinitizedDiagram], resolution: int = DEFAULT_RESOLUTION) -> ImageGrid:
    """
    Fit grid ranges over a corpus of diagrams.

    Args:
        diagrams: Finitized diagrams of one homology dimension across a corpus
        resolution: Pixels per axis

    Returns:
        ImageGrid with birth_max = largest birth, persistence_max = largest
        persistence (each falling back to 1.0 when zero) and sigma equal to
        one pixel height

    Example:
        >>> grid = fit_grid([d0, d1], resolution=20)
        >>> grid.sigma == grid.persistence_max / 20
        True
    """
    if not diagrams:
        raise ValueError("fit_grid needs at least one diagram")

    birth_max = 0.0
    persistence_max = 0.0
    for diagram in diagrams:
        if len(diagram):
            birth_max = max(birth_max, float(diagram.points[:, 0].max()))
            persistence_max = max(persistence_max, float(diagram.persistence.max()))

    birth_max = birth_max if birth_max > 0 else 1.0
    persistence_max = persistence_max if persistence_max > 0 else 1.0
    return ImageGrid(resolution, birth_max, persistence_max, persistence_max / resolution)


def _axis_mass(edges: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    # Gaussian mass of each point inside each pixel interval: (n_points, resolution)
    cdf = ndtr((edges[np.newaxis, :] - centers[:, np.newaxis]) / sigma)
    return np.diff(cdf, axis=1)


def rasterize(diagram: FinitizedDiagram, grid: Optional[ImageGrid]) -> PersistenceImage:
    """
    Turn a finitized diagram into a persistence image.

    Each point (b, p = d - b) with p > 0 contributes w(p) times a Gaussian
    centred at (b, p) with variance sigma^2 in each axis, w(p) = min(p /
    persistence_max, 1). Pixel values are the integral of the summed surface
    over the pixel, taken from Gaussian CDF differences; mass outside the
    grid is dropped.

    Args:
        diagram: Finitized diagram
        grid: Fitted grid

    Returns:
        PersistenceImage of shape (resolution, resolution)

    Raises:
        UnfittedGrid: If no grid is given
    """
    if grid is None:
        raise UnfittedGrid("rasterize called without a fitted grid")

    values = np.zeros((grid.resolution, grid.resolution), dtype=np.float64)
    if not len(diagram):
        return PersistenceImage(values)

    births = diagram.points[:, 0]
    persistence = diagram.persistence
    keep = persistence > 0
    births, persistence = births[keep], persistence[keep]
    if not len(births):
        return PersistenceImage(values)

    # Fixed summation order makes the image independent of input point order
    order = np.lexsort((persistence, births))
    births, persistence = births[order], persistence[order]

    weights = np.minimum(persistence / grid.persistence_max, 1.0)
    along_birth = _axis_mass(grid.birth_edges, births, grid.sigma)
    along_persistence = _axis_mass(grid.persistence_edges, persistence, grid.sigma)

    for w, row_mass, col_mass in zip(weights, along_persistence, along_birth):
        values += w * np.outer(row_mass, col_mass)
    return PersistenceImage(values)


class PersistenceImager:
    """
    Corpus-level persistence imager with fit/transform.

    ``fit`` chooses grid ranges from every diagram of the corpus so that all
    images share one pixel grid.
    """

    def __init__(self, resolution: int = DEFAULT_RESOLUTION):
        self.resolution = resolution
        self.grid: Optional[ImageGrid] = None

    def fit(self, diagrams: Sequence[FinitizedDiagram]) -> "PersistenceImager":
        self.grid = fit_grid(diagrams, self.resolution)
        logger.debug("Fitted image grid %s", self.grid)
        return self

    def transform(self, diagram: FinitizedDiagram) -> np.ndarray:
        """
        Rasterize a diagram on the fitted grid.

        Returns:
            Flattened image of length resolution^2

        Raises:
            UnfittedGrid: If called before fit
        """
        if self.grid is None:
            raise UnfittedGrid("PersistenceImager.transform called before fit")
        return rasterize(diagram, self.grid).flatten()
