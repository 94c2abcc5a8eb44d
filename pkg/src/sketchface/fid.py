"""Fréchet distance between Gaussian fits of two embedding sets.

The matrix square root of the covariance product is computed symmetrically:
sqrt(A B) is similar to sqrt(A^1/2 B A^1/2), which is symmetric PSD up to
rounding, so an eigendecomposition with small negative eigenvalues clipped
to zero is stable and deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

EIG_CLIP_TOL = -1e-8


@dataclass(frozen=True)
class FeatureSet:
    """N x d embedding matrix tagged with the extractor that produced it."""

    features: np.ndarray
    extractor_id: str

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError(f"features must be N x d, got shape {features.shape}")
        if not np.isfinite(features).all():
            raise ValueError("features contain non-finite values")
        object.__setattr__(self, "features", features)
        if features.shape[0] < features.shape[1] + 1:
            log.warning(
                "feature set has N=%d rows for d=%d dims; covariance estimate is rank-deficient",
                features.shape[0], features.shape[1],
            )


def gaussian_fit(fs: FeatureSet) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance matrix (rows as observations)."""
    mu = fs.features.mean(axis=0)
    centered = fs.features - mu
    cov = centered.T @ centered / (fs.features.shape[0] - 1)
    return mu, cov


def _sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root by eigendecomposition with negative clipping."""
    eigvals, eigvecs = np.linalg.eigh(matrix)
    if eigvals.min(initial=0.0) < EIG_CLIP_TOL:
        log.warning(
            "matrix eigenvalue %.3e below clip tolerance %.1e; clipping to zero",
            eigvals.min(), EIG_CLIP_TOL,
        )
    clipped = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(clipped)) @ eigvecs.T


def product_sqrt(cov_a: np.ndarray, cov_b: np.ndarray) -> np.ndarray:
    """Square root S of cov_a @ cov_b with S @ S == cov_a @ cov_b.

    Uses the similarity transform through sqrt(cov_a): with
    M = sqrt(A) B sqrt(A), the product root is sqrt(A)^-1 sqrt(M)... inverted
    back, S = A^1/2 sqrt(M) A^-1/2.  The pseudo-inverse handles singular A.
    """
    root_a = _sqrt_psd(cov_a)
    inner = _sqrt_psd(root_a @ cov_b @ root_a)
    return root_a @ inner @ np.linalg.pinv(root_a)


def trace_product_sqrt(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    """Trace of sqrt(cov_a cov_b); similarity makes the symmetric trace exact."""
    root_a = _sqrt_psd(cov_a)
    inner = _sqrt_psd(root_a @ cov_b @ root_a)
    return float(np.trace(inner))


def fid(a: FeatureSet, b: FeatureSet) -> float:
    """Fréchet distance between the Gaussian fits of two feature sets."""
    if a.extractor_id != b.extractor_id:
        raise ValueError(
            f"feature sets come from different extractors: {a.extractor_id!r} vs {b.extractor_id!r}"
        )
    if a.features.shape[1] != b.features.shape[1]:
        raise ValueError(
            f"feature dimensions differ: {a.features.shape[1]} vs {b.features.shape[1]}"
        )
    mu_a, cov_a = gaussian_fit(a)
    mu_b, cov_b = gaussian_fit(b)
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b)
                  - 2.0 * trace_product_sqrt(cov_a, cov_b))
    return max(value, 0.0)
