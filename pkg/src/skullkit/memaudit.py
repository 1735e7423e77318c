"""Memorization audit: nearest real counterparts of synthetic slices.

Two search routes are provided - pixel-wise MSE on the raw 16,384-pixel
grids and cosine similarity on external feature vectors - plus a merged
report that flags exact and near duplicates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fid import FeatureMatrix
from .slicecore import CtSlice


class IdMismatchError(ValueError):
    """Raised when MSE and cosine record sets cover different synthetic ids."""


@dataclass(frozen=True)
class Neighbor:
    real_id: str
    value: float
    method: str


@dataclass(frozen=True)
class MatchRecord:
    """Best-first neighbor list for one synthetic slice."""

    synthetic_id: str
    neighbors: tuple[Neighbor, ...]
    exact_duplicate: bool = False
    near_duplicate: bool = False


def nearest_by_mse(synth: Sequence[CtSlice], reals: Sequence[CtSlice],
                   k: int = 3) -> list[MatchRecord]:
    """For each synthetic slice, the k reals with minimal pixel-wise MSE.

    Ties break on (distance, real id) so results are order-stable.
    """
    if not synth or not reals:
        raise ValueError("both slice sets must be nonempty")
    x = np.stack([np.asarray(s.pixels, dtype=np.float64).ravel() for s in synth])
    y = np.stack([np.asarray(r.pixels, dtype=np.float64).ravel() for r in reals])
    if x.shape[1] != y.shape[1]:
        raise ValueError("synthetic and real slices have different dimensions")
    real_ids = [r.id for r in reals]
    real_order = np.argsort(real_ids, kind="stable")
    k = min(k, len(reals))

    # ||a-b||^2 expansion finds candidates quickly; exact MSE is recomputed
    # for the selected k so planted duplicates report 0.0 with no cancellation.
    d = x.shape[1]
    mse = (np.sum(x * x, axis=1)[:, None] + np.sum(y * y, axis=1)[None, :]
           - 2.0 * (x @ y.T)) / d
    records = []
    for i, s in enumerate(synth):
        rank = np.lexsort((_rank_of(real_order, len(reals)), mse[i]))[:k]
        neighbors = []
        for j in rank:
            exact = float(np.mean((x[i] - y[j]) ** 2))
            neighbors.append(Neighbor(real_id=real_ids[j], value=exact, method="mse"))
        neighbors.sort(key=lambda nb: (nb.value, nb.real_id))
        records.append(MatchRecord(
            synthetic_id=s.id,
            neighbors=tuple(neighbors),
            exact_duplicate=bool(neighbors and neighbors[0].value == 0.0),
        ))
    return records


def _rank_of(order: np.ndarray, n: int) -> np.ndarray:
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    return rank


def nearest_by_cosine(synth_feats: FeatureMatrix, real_feats: FeatureMatrix,
                      k: int = 3,
                      synth_ids: Sequence[str] | None = None,
                      real_ids: Sequence[str] | None = None) -> list[MatchRecord]:
    """For each synthetic feature row, the k reals with maximal cosine similarity."""
    xs = synth_feats.features
    ys = real_feats.features
    if xs.shape[1] != ys.shape[1]:
        raise ValueError("feature dimensions differ")
    synth_ids = list(synth_ids) if synth_ids is not None else [
        f"synth_{i:04d}" for i in range(xs.shape[0])]
    real_ids = list(real_ids) if real_ids is not None else [
        f"real_{i:04d}" for i in range(ys.shape[0])]
    xn = np.linalg.norm(xs, axis=1)
    yn = np.linalg.norm(ys, axis=1)
    if np.any(xn == 0) or np.any(yn == 0):
        raise ValueError("zero-norm feature vector")
    sim = (xs / xn[:, None]) @ (ys / yn[:, None]).T
    real_order = np.argsort(real_ids, kind="stable")
    k = min(k, ys.shape[0])
    records = []
    for i in range(xs.shape[0]):
        rank = np.lexsort((_rank_of(real_order, len(real_ids)), -sim[i]))[:k]
        neighbors = tuple(Neighbor(real_id=real_ids[j], value=float(sim[i, j]),
                                   method="cosine") for j in rank)
        records.append(MatchRecord(synthetic_id=synth_ids[i], neighbors=neighbors))
    return records


@dataclass(frozen=True)
class AuditReport:
    verdict: str
    mse_near_threshold: float
    flagged: tuple[str, ...]
    records: tuple[dict, ...]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "mse_near_threshold": self.mse_near_threshold,
            "flagged": list(self.flagged),
            "records": list(self.records),
        }


def audit_report(mse_records: Sequence[MatchRecord],
                 cosine_records: Sequence[MatchRecord],
                 mse_near_threshold: float) -> AuditReport:
    """Merge both search routes; verdict is suspicious iff any synthetic slice
    has an exact (MSE = 0) or near (best MSE <= threshold) duplicate."""
    mse_by_id = {r.synthetic_id: r for r in mse_records}
    cos_by_id = {r.synthetic_id: r for r in cosine_records}
    if set(mse_by_id) != set(cos_by_id):
        raise IdMismatchError("MSE and cosine records cover different synthetic ids")

    flagged = []
    merged = []
    for sid in sorted(mse_by_id):
        m = mse_by_id[sid]
        c = cos_by_id[sid]
        best_mse = m.neighbors[0].value if m.neighbors else float("inf")
        exact = m.exact_duplicate
        near = best_mse <= mse_near_threshold
        if exact or near:
            flagged.append(sid)
        merged.append({
            "synthetic_id": sid,
            "exact_duplicate": exact,
            "near_duplicate": near,
            "mse_neighbors": [{"real_id": nb.real_id, "mse": nb.value}
                              for nb in m.neighbors],
            "cosine_neighbors": [{"real_id": nb.real_id, "similarity": nb.value}
                                 for nb in c.neighbors],
        })
    verdict = "memorization suspected" if flagged else "clean"
    return AuditReport(verdict=verdict, mse_near_threshold=mse_near_threshold,
                       flagged=tuple(flagged), records=tuple(merged))
