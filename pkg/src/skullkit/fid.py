"""Frechet distance between Gaussian fits of two feature populations.

Feature extraction is out of scope; features arrive as NPY matrices (one row
per image). Two scoring modes are exposed:

* ``standard`` - trace term uses the matrix square root of the covariance
  product; computed through the symmetric form sqrt(M) with
  M = sqrt(Sr) @ Ss @ sqrt(Sr) for numerical stability.
* ``paper_literal`` - trace term uses an element-wise square root of the
  element-wise covariance product. Only the diagonal of that matrix enters
  the trace, so the term reduces to sum_i (sqrt(Sr_ii) - sqrt(Ss_ii))^2.

The two modes agree for diagonal covariances and differ in general.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FidMode(str, enum.Enum):
    STANDARD = "standard"
    ELEMENTWISE = "paper_literal"


@dataclass(frozen=True)
class FeatureMatrix:
    """N x K feature matrix with a provenance tag."""

    features: np.ndarray
    source: str = ""

    def __post_init__(self) -> None:
        arr = np.array(self.features, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ValueError(f"expected an (N >= 2) x K matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature matrix contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "features", arr)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def k(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class FeatureStats:
    """Gaussian fit (mean vector, covariance matrix) of a feature population."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self) -> None:
        mu = np.array(self.mu, dtype=np.float64)
        sigma = np.array(self.sigma, dtype=np.float64)
        if mu.ndim != 1 or sigma.shape != (mu.size, mu.size):
            raise ValueError(f"inconsistent stats shapes {mu.shape} / {sigma.shape}")
        if np.max(np.abs(sigma - sigma.T)) > 1e-9 * max(1.0, np.max(np.abs(sigma))):
            raise ValueError("covariance must be symmetric")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


def feature_stats(features: FeatureMatrix) -> FeatureStats:
    """Column means and unbiased (N-1) sample covariance."""
    arr = features.features
    mu = arr.mean(axis=0)
    centered = arr - mu
    sigma = centered.T @ centered / (arr.shape[0] - 1)
    sigma = (sigma + sigma.T) / 2.0
    return FeatureStats(mu=mu, sigma=sigma, n=arr.shape[0])


def matrix_sqrt_psd(a: np.ndarray, sym_tol: float = 1e-8) -> np.ndarray:
    """Symmetric square root of a symmetric PSD matrix via eigendecomposition.

    Negative eigenvalues (round-off) are clamped to zero.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > sym_tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    eigvals, eigvecs = np.linalg.eigh((a + a.T) / 2.0)
    root = eigvecs @ np.diag(np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T
    return (root + root.T) / 2.0


@dataclass(frozen=True)
class FidScore:
    total: float
    mean_term: float
    trace_term: float
    mode: FidMode


def fid_breakdown(r: FeatureStats, s: FeatureStats,
                  mode: FidMode | str = FidMode.STANDARD) -> FidScore:
    """Frechet distance with its squared-mean-difference / trace components."""
    mode = FidMode(mode)
    if r.mu.size != s.mu.size:
        raise ValueError(f"feature dimensions differ: {r.mu.size} vs {s.mu.size}")
    diff = r.mu - s.mu
    mean_term = float(diff @ diff)
    if mode is FidMode.STANDARD:
        sqrt_r = matrix_sqrt_psd(r.sigma)
        cross = matrix_sqrt_psd(sqrt_r @ s.sigma @ sqrt_r)
        trace_term = float(np.trace(r.sigma) + np.trace(s.sigma) - 2.0 * np.trace(cross))
    else:
        dr = np.diag(r.sigma)
        ds = np.diag(s.sigma)
        trace_term = float(np.sum(dr + ds - 2.0 * np.sqrt(np.clip(dr * ds, 0.0, None))))
    total = mean_term + trace_term
    if not np.isfinite(total):
        raise ValueError("Frechet distance is non-finite")
    return FidScore(total=total, mean_term=mean_term, trace_term=trace_term, mode=mode)


def fid(r: FeatureStats, s: FeatureStats, mode: FidMode | str = FidMode.STANDARD) -> float:
    return fid_breakdown(r, s, mode).total


def load_features(path: str | Path) -> FeatureMatrix:
    """Read an N x K f32 NPY feature file."""
    path = Path(path)
    try:
        arr = np.load(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"cannot parse {path} as NPY: {exc}") from exc
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected a 2-D feature matrix, got shape {arr.shape}")
    return FeatureMatrix(features=arr, source=str(path))


def save_features(features: FeatureMatrix | np.ndarray, path: str | Path) -> None:
    arr = features.features if isinstance(features, FeatureMatrix) else np.asarray(features)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, np.ascontiguousarray(arr, dtype=np.float32))


def random_projection_features(slices, k: int = 64, seed: int = 0) -> FeatureMatrix:
    """Deterministic random-projection featurizer for tests and pipelines.

    Unrolls each slice to 16,384 pixels and projects through a fixed Gaussian
    matrix scaled by 1/sqrt(D). Stands in for any external deep featurizer.
    """
    rng = np.random.default_rng(seed)
    pixels = np.stack([np.asarray(s.pixels, dtype=np.float64).ravel() for s in slices])
    projection = rng.standard_normal((pixels.shape[1], k)) / np.sqrt(pixels.shape[1])
    return FeatureMatrix(features=pixels @ projection, source=f"random_projection(k={k}, seed={seed})")
