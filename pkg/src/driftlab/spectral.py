"""Graph Laplacians of kernel matrices and their leading eigenvectors.

The detection pipeline works on the symmetric normalized Laplacian
L = I - D^{-1/2} K D^{-1/2} of a window's kernel matrix and the eigenvectors
belonging to its smallest eigenvalues. For abrupt drift the kernel matrix is
(up to sampling noise) block-constant in time, and the spectrum of such a
block matrix coincides with the spectrum of a small size-weighted reduced
matrix whose eigenvectors expand to blockwise-constant functions of time;
`block_auto_correlation` and the helpers below make that statement testable
on finite grids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .kernels import KernelConfig, KernelMatrix, RbfKernel, pool_kernel_function

LAPLACIAN_KINDS = ("symmetric", "random_walk", "unnormalized")


@dataclass(frozen=True)
class EigenBasis:
    """The k eigenvectors of a Laplacian with the smallest eigenvalues.

    Columns of `vectors` are orthonormal; `eigenvalues` is ascending.
    """

    vectors: np.ndarray
    eigenvalues: np.ndarray
    window_times: np.ndarray


def laplacian(k: KernelMatrix | np.ndarray, kind: str = "symmetric") -> np.ndarray:
    """Graph Laplacian of a non-negative kernel matrix.

    "symmetric": I - D^{-1/2} K D^{-1/2} (the pipeline default),
    "random_walk": I - D^{-1} K, "unnormalized": D - K.
    """
    values = k.values if isinstance(k, KernelMatrix) else np.asarray(k, dtype=float)
    if kind not in LAPLACIAN_KINDS:
        raise ValueError(f"kind must be one of {LAPLACIAN_KINDS}, got {kind!r}")
    d = values.sum(axis=1)
    if np.any(d <= 0):
        raise ValueError("kernel matrix has a non-positive row sum")
    n = values.shape[0]
    if kind == "unnormalized":
        lap = np.diag(d) - values
    elif kind == "random_walk":
        lap = np.eye(n) - values / d[:, None]
    else:
        inv_sqrt = 1.0 / np.sqrt(d)
        lap = np.eye(n) - values * inv_sqrt[:, None] * inv_sqrt[None, :]
    if kind != "random_walk":
        lap = (lap + lap.T) / 2.0
    return lap


def normalized_laplacian(k: KernelMatrix | np.ndarray) -> np.ndarray:
    """Symmetric normalized Laplacian I - D^{-1/2} K D^{-1/2}."""
    return laplacian(k, kind="symmetric")


def smallest_eigenvectors(lap: np.ndarray, k: int,
                          window_times: np.ndarray | None = None) -> EigenBasis:
    """Eigenpairs of a symmetric matrix with the k smallest eigenvalues.

    Deterministic sign convention: the first entry of each eigenvector whose
    magnitude exceeds a relative tolerance is made positive.
    """
    lap = np.asarray(lap, dtype=float)
    n = lap.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if not np.allclose(lap, lap.T, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    if window_times is None:
        window_times = np.arange(n)
    eigenvalues, vectors = scipy.linalg.eigh(lap, subset_by_index=[0, k - 1])
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12 * max(np.abs(col).max(), 1e-300))[0]
        if nz.size and col[nz[0]] < 0:
            vectors[:, j] = -col
    return EigenBasis(vectors=vectors, eigenvalues=eigenvalues,
                      window_times=np.asarray(window_times))


def expand_block_matrix(reduced: np.ndarray, block_sizes: Sequence[int]) -> np.ndarray:
    """Blow a reduced matrix up to a grid matrix, constant on each block pair."""
    reduced = np.asarray(reduced, dtype=float)
    sizes = np.asarray(block_sizes, dtype=int)
    if reduced.shape != (sizes.size, sizes.size):
        raise ValueError("reduced matrix and block sizes disagree")
    if np.any(sizes < 1):
        raise ValueError("block sizes must be positive")
    owner = np.repeat(np.arange(sizes.size), sizes)
    return reduced[np.ix_(owner, owner)]


def size_weighted_reduced(reduced: np.ndarray, block_sizes: Sequence[int]) -> np.ndarray:
    """diag(sqrt(sizes)) @ reduced @ diag(sqrt(sizes)).

    The nonzero spectrum of the expanded block matrix equals the spectrum of
    this weighted matrix, and its eigenvectors, rescaled by 1/sqrt(size),
    give the blockwise-constant eigenvectors of the expansion.
    """
    sizes = np.sqrt(np.asarray(block_sizes, dtype=float))
    return np.asarray(reduced, dtype=float) * sizes[:, None] * sizes[None, :]


@dataclass(frozen=True)
class BlockKernel:
    """Reduced concept-level kernel matrix and its grid expansion."""

    reduced: np.ndarray
    block_sizes: np.ndarray
    expanded: np.ndarray


def block_auto_correlation(change_points: Sequence[int],
                           pools: Sequence[np.ndarray],
                           config: KernelConfig = RbfKernel(),
                           grid_length: int | None = None) -> BlockKernel:
    """Estimate the concept-level kernel matrix and expand it onto a time grid.

    Entry (i, j) of the reduced matrix is the mean kernel value between pools
    i and j. The expansion places block i on grid rows [t_i, t_{i+1}) where
    the t's are the change points augmented with 0 and grid_length.
    """
    pools = [np.atleast_2d(np.asarray(p, dtype=float)) for p in pools]
    if not pools:
        raise ValueError("need at least one concept pool")
    for p in pools:
        if p.shape[0] == 0:
            raise ValueError("concept pools must be non-empty")
    m = len(pools)
    cps = sorted(int(c) for c in change_points)
    if len(cps) != m - 1:
        raise ValueError(f"{m} pools need {m - 1} change points, got {len(cps)}")
    if grid_length is None:
        # Default: the trailing block is as long as the leading one.
        grid_length = cps[-1] + cps[0] if cps else 100
    bounds = [0, *cps, int(grid_length)]
    sizes = np.diff(bounds)
    if np.any(sizes <= 0):
        raise ValueError(f"change points {cps} do not partition [0, {grid_length})")

    kernel = pool_kernel_function(pools, config)
    reduced = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            reduced[i, j] = reduced[j, i] = kernel(pools[i], pools[j]).mean()
    return BlockKernel(reduced=reduced, block_sizes=sizes,
                       expanded=expand_block_matrix(reduced, sizes))
