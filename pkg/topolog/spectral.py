"""
Graph and hypergraph Laplacian spectra as fixed-length feature vectors.
"""

import logging
import math
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.linalg

from topolog.complex_builder import FilteredComplex, Hypergraph
from topolog.errors import NotSymmetric

logger = logging.getLogger(__name__)

# Spectrum vectors are this factor times the corpus-average eigenvalue count
TARGET_LEN_FACTOR = 1.1


def graph_laplacian(built: FilteredComplex) -> np.ndarray:
    """
    Combinatorial Laplacian L = D - A of the final 1-skeleton.

    Filtration times are discarded; the graph is simple and unweighted.

    Args:
        built: Filtered complex

    Returns:
        Dense symmetric (n_nodes, n_nodes) matrix

    Example:
        >>> graph_laplacian(path_a_b_c)
        array([[ 1., -1.,  0.],
               [-1.,  2., -1.],
               [ 0., -1.,  1.]])
    """
    n = len(built.nodes)
    adjacency = np.zeros((n, n), dtype=np.float64)
    for simplex in built.simplices:
        if simplex.dim == 1:
            u, v = simplex.vertices
            adjacency[u, v] = adjacency[v, u] = 1.0
    return np.diag(adjacency.sum(axis=1)) - adjacency


def incidence_matrix(h: Hypergraph) -> np.ndarray:
    """Node x hyperedge incidence matrix H."""
    incidence = np.zeros((len(h.nodes), len(h.hyperedges)), dtype=np.float64)
    for j, edge in enumerate(h.hyperedges):
        incidence[sorted(edge), j] = 1.0
    return incidence


def hypergraph_laplacian(h: Hypergraph) -> np.ndarray:
    """
    Normalized hypergraph Laplacian with unit edge weights.

    Delta = I - Dv^-1/2 H De^-1 H^T Dv^-1/2, where H is the incidence matrix,
    Dv the vertex degrees and De the hyperedge sizes. Rows and columns of
    zero-degree vertices are zero.

    Args:
        h: Hypergraph

    Returns:
        Dense symmetric (n_nodes, n_nodes) matrix with spectrum in [0, 2]
    """
    incidence = incidence_matrix(h)
    n = incidence.shape[0]
    if n == 0:
        return np.zeros((0, 0))

    vertex_degree = incidence.sum(axis=1)
    edge_size = incidence.sum(axis=0)

    inv_sqrt_dv = np.zeros(n)
    connected = vertex_degree > 0
    inv_sqrt_dv[connected] = vertex_degree[connected] ** -0.5
    inv_de = np.zeros_like(edge_size)
    inv_de[edge_size > 0] = 1.0 / edge_size[edge_size > 0]

    scaled = inv_sqrt_dv[:, np.newaxis] * incidence
    theta = (scaled * inv_de[np.newaxis, :]) @ scaled.T
    # Averaging with the transpose makes the result exactly symmetric
    theta = 0.5 * (theta + theta.T)

    laplacian = np.diag(connected.astype(np.float64)) - theta
    return laplacian


def _check_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {m.shape}")
    if not np.array_equal(m, m.T):
        raise NotSymmetric("matrix is not symmetric")
    return m


def eigenpairs(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Eigen-decomposition of a real symmetric matrix.

    Args:
        m: Square symmetric matrix

    Returns:
        (eigenvalues sorted descending, eigenvectors as matching columns)

    Raises:
        NotSymmetric: If m is not square and exactly symmetric
    """
    m = _check_symmetric(m)
    if m.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    values, vectors = scipy.linalg.eigh(m)
    return values[::-1].copy(), vectors[:, ::-1].copy()


def eig_symmetric(m: np.ndarray) -> np.ndarray:
    """
    All eigenvalues of a real symmetric matrix, largest first.

    Raises:
        NotSymmetric: If m is not square and exactly symmetric

    Example:
        >>> eig_symmetric(np.diag([1.0, 2.0, 3.0]))
        array([3., 2., 1.])
    """
    m = _check_symmetric(m)
    if m.shape[0] == 0:
        return np.zeros(0)
    return scipy.linalg.eigh(m, eigvals_only=True)[::-1].copy()


def to_spectrum_vector(eigs: Sequence[float], target_len: int) -> np.ndarray:
    """
    Fix a spectrum to a constant length.

    Args:
        eigs: Eigenvalues in any order
        target_len: Output length

    Returns:
        Eigenvalues sorted descending, truncated or zero-padded to target_len
    """
    if target_len < 1:
        raise ValueError("target_len must be >= 1")
    values = np.sort(np.asarray(eigs, dtype=np.float64))[::-1][:target_len]
    vector = np.zeros(target_len, dtype=np.float64)
    vector[:len(values)] = values
    return vector


def choose_target_len(eig_counts: Sequence[int], factor: float = TARGET_LEN_FACTOR) -> int:
    """
    Spectrum vector length slightly above the corpus-average eigenvalue count.

    Computed exactly as ceil(factor x mean), with the factor taken as the
    decimal it is written as, so 1.1 x 10 gives 11.

    Args:
        eig_counts: Eigenvalue count of every run in the experiment
        factor: Multiplier on the mean

    Returns:
        Target length (at least 1)

    Example:
        >>> choose_target_len([10, 10, 10])
        11
    """
    if not eig_counts:
        raise ValueError("choose_target_len needs at least one count")
    mean = Fraction(sum(int(c) for c in eig_counts), len(eig_counts))
    return max(1, math.ceil(Fraction(str(factor)) * mean))
