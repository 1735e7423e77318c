"""Exact t-distributed stochastic neighbor embedding with separability scores.

The O(N^2) formulation: per-row Gaussian bandwidths are calibrated by binary
search so every conditional distribution hits the target perplexity, the
low-dimensional map uses a Student-t kernel with one degree of freedom, and
optimization is plain gradient descent on the KL divergence with early
exaggeration, a two-phase momentum schedule, and per-coordinate gain
adaptation.

Everything is deterministic given the seed. Inputs are embedded on raw
squared Euclidean distances; no PCA or normalization is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_EPS = 1e-12


class DegenerateNeighborhoodError(ValueError):
    """Raised when bandwidth search cannot bracket the target perplexity.

    Typically means duplicate rows: a neighborhood of coincident points has a
    hard lower bound on achievable perplexity. Callers may jitter the input.
    """

    def __init__(self, rows: list[int], message: str):
        super().__init__(message)
        self.rows = rows


@dataclass(frozen=True)
class DataMatrix:
    """N rows of D features with per-row provenance labels."""

    rows: np.ndarray
    labels: tuple[str, ...]
    ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        arr = np.array(self.rows, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 4:
            raise ValueError(f"expected an (N >= 4) x D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("data matrix contains non-finite values")
        labels = tuple(str(l) for l in self.labels)
        if len(labels) != arr.shape[0]:
            raise ValueError("one label per row required")
        ids = tuple(str(i) for i in self.ids) if self.ids else tuple(
            f"row_{i:04d}" for i in range(arr.shape[0]))
        if len(ids) != arr.shape[0]:
            raise ValueError("one id per row required")
        arr.setflags(write=False)
        object.__setattr__(self, "rows", arr)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    early_exaggeration_factor: float = 12.0
    early_exaggeration_iters: int = 250
    learning_rate: float = 200.0
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch_iter: int = 250
    output_dim: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.perplexity <= 1:
            raise ValueError("perplexity must exceed 1")
        if self.iterations < self.early_exaggeration_iters:
            raise ValueError("iterations must cover the early exaggeration phase")
        if self.output_dim < 1:
            raise ValueError("output_dim must be >= 1")


@dataclass(frozen=True)
class Embedding:
    """Low-dimensional points with the KL descent record."""

    points: np.ndarray
    labels: tuple[str, ...]
    ids: tuple[str, ...]
    final_kl: float
    initial_kl: float
    kl_trace: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.float64)
        if not np.all(np.isfinite(pts)):
            raise ValueError("embedding contains non-finite coordinates")
        if self.final_kl < 0:
            raise ValueError("KL divergence cannot be negative")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        trace = np.array(self.kl_trace, dtype=np.float64)
        trace.setflags(write=False)
        object.__setattr__(self, "kl_trace", trace)

    @property
    def n(self) -> int:
        return self.points.shape[0]


def squared_distances(rows: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances with an exact zero diagonal."""
    sq = np.sum(rows * rows, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (rows @ rows.T)
    np.clip(d2, 0.0, None, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def _row_conditional(dist_row: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Conditional distribution and its perplexity for one row at precision beta.

    dist_row excludes the self distance. The exponent is shifted by the
    minimum distance so large betas cannot underflow every term.
    """
    shifted = dist_row - dist_row.min()
    p = np.exp(-beta * shifted)
    total = p.sum()
    p /= total
    # H = log(sum) + beta * E[shifted distance], in nats.
    entropy = np.log(total) + beta * float(shifted @ p)
    return p, float(np.exp(entropy))


def gaussian_conditionals(rows: np.ndarray, perplexity: float,
                          tol: float = 1e-4,
                          max_steps: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Per-row conditional affinities calibrated to the target perplexity.

    Returns (P_cond, betas) where P_cond[i, j] is p(j | i) with a zero
    diagonal and betas are the fitted precisions 1 / (2 sigma_i^2).
    """
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[0]
    d2 = squared_distances(rows)
    mask = ~np.eye(n, dtype=bool)
    p_cond = np.zeros((n, n), dtype=np.float64)
    betas = np.empty(n)
    failed: list[int] = []

    for i in range(n):
        drow = d2[i][mask[i]]
        beta = 1.0
        lo, hi = 0.0, np.inf
        p, perp = _row_conditional(drow, beta)
        steps = 0
        while abs(perp - perplexity) > tol and steps < max_steps:
            if perp > perplexity:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == 0.0 else (beta + lo) / 2.0
            if beta == lo or beta == hi:
                break  # bracket exhausted at float resolution
            p, perp = _row_conditional(drow, beta)
            steps += 1
        if abs(perp - perplexity) > tol:
            failed.append(i)
        p_cond[i][mask[i]] = p
        betas[i] = beta

    if failed:
        raise DegenerateNeighborhoodError(
            failed,
            f"bandwidth search failed for rows {failed[:8]}"
            f"{'...' if len(failed) > 8 else ''}; duplicate rows are the usual "
            "cause, jitter the input to proceed")
    return p_cond, betas


def pairwise_affinities(x: DataMatrix | np.ndarray, perplexity: float,
                        tol: float = 1e-4) -> np.ndarray:
    """Symmetrized joint affinities: (p(j|i) + p(i|j)) / (2N), summing to 1.

    Perplexity is capped at N-1, the value of a uniform conditional.
    """
    rows = x.rows if isinstance(x, DataMatrix) else np.asarray(x, dtype=np.float64)
    n = rows.shape[0]
    if perplexity > n - 1:
        raise ValueError(f"perplexity {perplexity} unreachable for N={n}; "
                         "a uniform conditional caps it at N-1")
    p_cond, _ = gaussian_conditionals(rows, perplexity, tol)
    return (p_cond + p_cond.T) / (2.0 * n)


def _kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    nonzero = p > 0
    return float(np.sum(p[nonzero] * np.log(p[nonzero] / q[nonzero])))


def run_tsne(x: DataMatrix, cfg: TsneConfig = TsneConfig(),
             init: np.ndarray | None = None) -> Embedding:
    """Gradient descent on KL(P || Q) with a Student-t low-dimensional kernel.

    The initial map is Gaussian with sd 1e-4 (or the explicit ``init``); early
    exaggeration scales P for the first phase; momentum switches from the
    early to the late value at the configured iteration.
    """
    n = x.n
    if not cfg.perplexity < (n - 1) / 3:
        raise ValueError(f"perplexity {cfg.perplexity} too large for N={n}; "
                         "need perplexity < (N-1)/3")
    p = pairwise_affinities(x, cfg.perplexity)

    rng = np.random.default_rng(cfg.seed)
    if init is not None:
        y = np.array(init, dtype=np.float64)
        if y.shape != (n, cfg.output_dim):
            raise ValueError(f"init must have shape {(n, cfg.output_dim)}")
    else:
        y = 1e-4 * rng.standard_normal((n, cfg.output_dim))

    update = np.zeros_like(y)
    gains = np.ones_like(y)
    kl_trace = np.empty(cfg.iterations)

    for it in range(cfg.iterations):
        exaggeration = cfg.early_exaggeration_factor if it < cfg.early_exaggeration_iters else 1.0
        momentum = cfg.momentum_early if it < cfg.momentum_switch_iter else cfg.momentum_late

        num = 1.0 / (1.0 + squared_distances(y))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), _EPS)
        kl_trace[it] = _kl_divergence(p, q)

        pq = (exaggeration * p - q) * num
        grad = 4.0 * ((np.diag(pq.sum(axis=1)) - pq) @ y)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(
                f"non-finite gradient at iteration {it}; "
                f"|y|_max={np.abs(y).max():.3e}, kl={kl_trace[it]:.3e}")

        # Gain adaptation: grow gains where the gradient keeps direction
        # against the running update, shrink where it flips.
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.clip(gains, 0.01, None, out=gains)
        update = momentum * update - cfg.learning_rate * (gains * grad)
        y = y + update
        y = y - y.mean(axis=0)

    num = 1.0 / (1.0 + squared_distances(y))
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), _EPS)
    final_kl = _kl_divergence(p, q)

    return Embedding(points=y, labels=x.labels, ids=x.ids, final_kl=final_kl,
                     initial_kl=float(kl_trace[0]), kl_trace=kl_trace)


# ---------------------------------------------------------------------------
# Separability scores
# ---------------------------------------------------------------------------

def knn_purity(emb: Embedding, k: int = 5) -> float:
    """Fraction of points whose own label wins a strict majority of the k
    nearest embedded neighbors."""
    n = emb.n
    if n <= k:
        raise ValueError(f"need more points than k={k}")
    d2 = squared_distances(emb.points)
    np.fill_diagonal(d2, np.inf)
    labels = np.asarray(emb.labels)
    pure = 0
    for i in range(n):
        neighbor_labels = labels[np.argsort(d2[i], kind="stable")[:k]]
        values, counts = np.unique(neighbor_labels, return_counts=True)
        own = counts[values == labels[i]]
        own_count = int(own[0]) if own.size else 0
        others = counts[values != labels[i]]
        if own_count > (int(others.max()) if others.size else 0):
            pure += 1
    return pure / n


def silhouette(emb: Embedding) -> float:
    """Mean silhouette coefficient over points (Euclidean, in the embedding)."""
    labels = np.asarray(emb.labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("silhouette requires at least two label classes")
    counts = {c: int(np.sum(labels == c)) for c in classes}
    singletons = [c for c, cnt in counts.items() if cnt < 2]
    if singletons:
        raise ValueError(f"label classes with a single point: {singletons}")

    dist = np.sqrt(squared_distances(emb.points))
    scores = np.empty(emb.n)
    for i in range(emb.n):
        same = labels == labels[i]
        a = dist[i][same].sum() / (counts[labels[i]] - 1)
        b = min(dist[i][labels == c].mean() for c in classes if c != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())
