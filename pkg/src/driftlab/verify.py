"""Numerical verification of the spectral and shape identities.

Three check batches, shared by the CLI and the acceptance suite: the
quadratic-form identity w'Kw = sum_i lambda_i (v_i'w)^2 on random PSD
matrices, the coincidence of the nonzero spectrum of a block-constant
matrix with its size-weighted reduced matrix (plus blockwise-constant
eigenvectors), and the triangular-bump shape of the sqrt-magnitude profile
on a two-Gaussian abrupt-drift stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import RbfKernel
from .magnitude import ShapeCheck, check_weighted_identity, verify_shape
from .spectral import expand_block_matrix, size_weighted_reduced
from .streams import Stream


@dataclass(frozen=True)
class CheckResult:
    """Worst observed deviation of one check batch against its tolerance."""

    name: str
    deviation: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance


def identity_batch_check(n_matrices: int = 100, max_n: int = 200, seed: int = 0,
                         tolerance_factor: float = 1e-10) -> CheckResult:
    """Quadratic form vs eigen-expansion on random PSD matrices.

    The gap is normalized by ||K||_F * ||w||^2 per matrix; the worst
    normalized gap over the batch is compared against `tolerance_factor`.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_matrices):
        n = int(rng.integers(2, max_n + 1))
        rank = int(rng.integers(1, n + 1))
        a = rng.normal(size=(n, rank))
        k = a @ a.T
        w = rng.normal(size=n)
        _, _, gap = check_weighted_identity(k, w)
        worst = max(worst, gap / (np.linalg.norm(k, "fro") * float(w @ w)))
    return CheckResult(name="weighted-identity", deviation=worst,
                       tolerance=tolerance_factor,
                       detail=f"{n_matrices} random PSD matrices, n <= {max_n}")


def eigen_coincidence_batch_check(n_matrices: int = 25, max_blocks: int = 4,
                                  size_range: tuple[int, int] = (3, 50),
                                  seed: int = 0, tolerance: float = 1e-8
                                  ) -> tuple[CheckResult, CheckResult]:
    """Spectrum and eigenvector structure of exact block-constant matrices.

    For random symmetric reduced matrices, the nonzero eigenvalues of the
    block expansion must match the spectrum of the size-weighted reduced
    matrix, and every eigenvector for a nonzero eigenvalue must be constant
    within each block.
    """
    rng = np.random.default_rng(seed)
    worst_eig = 0.0
    worst_vec = 0.0
    for _ in range(n_matrices):
        m = int(rng.integers(1, max_blocks + 1))
        sizes = rng.integers(size_range[0], size_range[1] + 1, size=m)
        a = rng.normal(size=(m, m))
        reduced = (a + a.T) / 2.0
        expanded = expand_block_matrix(reduced, sizes)
        weighted = size_weighted_reduced(reduced, sizes)

        eig_small = np.sort(np.linalg.eigvalsh(weighted))
        eig_big, vec_big = np.linalg.eigh(expanded)
        order = np.argsort(-np.abs(eig_big))
        top = eig_big[order[:m]]
        scale = max(np.abs(eig_small).max(), 1.0)
        worst_eig = max(worst_eig, float(np.max(np.abs(np.sort(top) - eig_small))) / scale)

        owner = np.repeat(np.arange(m), sizes)
        for idx in order[:m]:
            if abs(eig_big[idx]) <= tolerance * scale:
                continue
            v = vec_big[:, idx]
            spread = sum(
                float(np.max(v[owner == b]) - np.min(v[owner == b])) for b in range(m)
            )
            worst_vec = max(worst_vec, spread / max(float(np.abs(v).max()), 1e-300))
    eig_check = CheckResult(name="block-spectrum-coincidence", deviation=worst_eig,
                            tolerance=tolerance,
                            detail=f"{n_matrices} block matrices, up to {max_blocks} blocks")
    vec_check = CheckResult(name="blockwise-constant-eigenvectors", deviation=worst_vec,
                            tolerance=tolerance,
                            detail="relative within-block spread of eigenvector entries")
    return eig_check, vec_check


def two_gaussian_stream(samples_per_concept: int = 2000, dim: int = 2,
                        shift: float = 3.0, seed: int = 0) -> tuple[Stream, int]:
    """N(0, I) switching abruptly to N(shift * 1, I); returns the change point."""
    rng = np.random.default_rng((int(seed), 0x6A55))
    a = rng.normal(size=(samples_per_concept, dim))
    b = rng.normal(size=(samples_per_concept, dim)) + shift
    x = np.vstack([a, b])
    return Stream(x, np.arange(x.shape[0])), samples_per_concept


def two_gaussian_shape_check(l: int = 200, samples_per_concept: int = 2000,
                             seed: int = 0, tolerance: float = 0.15
                             ) -> tuple[CheckResult, ShapeCheck]:
    """Shape reproduction on one seeded two-Gaussian stream.

    Compares the noise-floor-corrected empirical sqrt-magnitude profile
    against the predicted triangle; the deviation is the sup gap relative to
    the measured amplitude.
    """
    stream, cp = two_gaussian_stream(samples_per_concept, seed=seed)
    check = verify_shape(stream, [cp], RbfKernel(), l=l, seed=seed)
    result = CheckResult(
        name="two-gaussian-shape", deviation=check.relative_deviation,
        tolerance=tolerance,
        detail=(f"peak at {check.peak_position} (predicted {check.predicted_peak_position}), "
                f"amplitude {check.amplitudes.max():.4f}"),
    )
    return result, check
