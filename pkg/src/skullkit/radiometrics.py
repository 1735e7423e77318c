"""Ray-based radiological metrics for skull segments.

Three per-slice metrics are computed from vertical rays cast down the image:

* density ratio: mean over rays of min/max intensity inside each ray's bone
  span (porosity proxy, dimensionless in [0, 1]),
* mean thickness: mean over rays of the outer-to-inner bone span length,
  converted to millimetres (interior pores count as bone),
* mean intensity: mean HU over all pixels above the background floor.

Rays whose bone span is empty are excluded from the ray averages; the number
of rays actually used is reported alongside the metrics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .slicecore import BACKGROUND_FLOOR_HU, CtSlice


class NoBoneError(ValueError):
    """Raised when a slice (or every ray) has no pixel above the floor."""


class EmptyDatasetError(ValueError):
    """Raised when an operation receives an empty dataset or sample vector."""


@dataclass(frozen=True)
class ResolutionSpec:
    """Ray-casting geometry: 32 rays, 4 px apart, at 0.45 mm/px by default.

    The defaults place rays 4 * 0.45 = 1.8 mm apart across a 128 px segment.
    """

    mm_per_px: float = 0.45
    ray_count: int = 32
    ray_spacing_px: int = 4

    def __post_init__(self) -> None:
        if self.mm_per_px <= 0:
            raise ValueError("mm_per_px must be positive")
        if self.ray_count < 1 or self.ray_spacing_px < 1:
            raise ValueError("ray_count and ray_spacing_px must be >= 1")
        if self.ray_count * self.ray_spacing_px > 128:
            raise ValueError("rays must fit inside the 128-column grid")

    def ray_columns(self, width: int = 128) -> list[int]:
        """Centered uniform column placement; defaults give 2 + 4k."""
        span = (self.ray_count - 1) * self.ray_spacing_px
        offset = (width - span) // 2
        return [offset + k * self.ray_spacing_px for k in range(self.ray_count)]


@dataclass(frozen=True)
class RayProfile:
    """Intensity samples along one vertical ray, top to bottom."""

    column_index: int
    values: np.ndarray
    bone_span: tuple[int, int] | None

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.bone_span is not None:
            first, last = self.bone_span
            if first > last:
                raise ValueError(f"invalid bone span ({first}, {last})")


@dataclass(frozen=True)
class MetricSummary:
    """Per-slice metric triple plus the number of rays that carried bone."""

    sdr: float
    thickness_mm: float
    intensity_hu: float
    rays_used: int


@dataclass(frozen=True)
class MetricDistribution:
    """Per-dataset sample vectors for the three metrics."""

    sdr: np.ndarray
    thickness_mm: np.ndarray
    intensity_hu: np.ndarray
    skipped: int = 0

    def __post_init__(self) -> None:
        for name in ("sdr", "thickness_mm", "intensity_hu"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.sdr) == len(self.thickness_mm) == len(self.intensity_hu)):
            raise ValueError("sample vectors must have equal length")

    def __len__(self) -> int:
        return len(self.sdr)

    def stats(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for name in ("sdr", "thickness_mm", "intensity_hu"):
            v = getattr(self, name)
            qs = np.quantile(v, [0.05, 0.25, 0.5, 0.75, 0.95]) if len(v) else [math.nan] * 5
            out[name] = {
                "mean": float(np.mean(v)) if len(v) else math.nan,
                "sd": float(np.std(v, ddof=1)) if len(v) > 1 else 0.0,
                "q05": float(qs[0]), "q25": float(qs[1]), "q50": float(qs[2]),
                "q75": float(qs[3]), "q95": float(qs[4]),
            }
        return out

    def to_json(self, path: str | Path | None = None) -> str:
        payload = {
            "sdr": self.sdr.tolist(),
            "thickness_mm": self.thickness_mm.tolist(),
            "intensity_hu": self.intensity_hu.tolist(),
            "skipped": self.skipped,
            "stats": self.stats(),
        }
        text = json.dumps(payload, indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, payload: dict) -> "MetricDistribution":
        return cls(sdr=payload["sdr"], thickness_mm=payload["thickness_mm"],
                   intensity_hu=payload["intensity_hu"],
                   skipped=payload.get("skipped", 0))

    @classmethod
    def from_json(cls, path: str | Path) -> "MetricDistribution":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Ray casting and per-slice metrics
# ---------------------------------------------------------------------------

def cast_rays(slice: CtSlice, spec: ResolutionSpec = ResolutionSpec(),
              floor: float = BACKGROUND_FLOOR_HU) -> list[RayProfile]:
    """Cast vertical rays and locate each ray's bone span (strict > floor)."""
    pixels = np.asarray(slice.pixels, dtype=np.float64)
    profiles = []
    for col in spec.ray_columns(pixels.shape[1]):
        values = pixels[:, col]
        above = np.flatnonzero(values > floor)
        span = (int(above[0]), int(above[-1])) if above.size else None
        profiles.append(RayProfile(column_index=col, values=values, bone_span=span))
    return profiles


def sdr(slice: CtSlice, spec: ResolutionSpec = ResolutionSpec(),
        floor: float = BACKGROUND_FLOOR_HU) -> float:
    """Mean over rays-with-bone of min/max intensity inside the bone span.

    Per-ray ratios are clamped into [0, 1]; a negative-HU pore inside a span
    would otherwise drive the ratio below zero.
    """
    ratios = _span_ratios(cast_rays(slice, spec, floor))
    if not ratios:
        raise NoBoneError(f"slice {slice.id}: no ray has a bone span")
    return float(np.mean(ratios))


def _span_ratios(profiles: Sequence[RayProfile]) -> list[float]:
    ratios = []
    for ray in profiles:
        if ray.bone_span is None:
            continue
        first, last = ray.bone_span
        seg = ray.values[first:last + 1]
        ratios.append(min(max(float(seg.min() / seg.max()), 0.0), 1.0))
    return ratios


def mean_thickness(slice: CtSlice, spec: ResolutionSpec = ResolutionSpec(),
                   floor: float = BACKGROUND_FLOOR_HU) -> float:
    """Mean over rays-with-bone of the span length in mm (pores included)."""
    spans = [ray.bone_span for ray in cast_rays(slice, spec, floor)
             if ray.bone_span is not None]
    if not spans:
        raise NoBoneError(f"slice {slice.id}: no ray has a bone span")
    lengths = [last - first + 1 for first, last in spans]
    return float(spec.mm_per_px * np.mean(lengths))


def mean_intensity(slice: CtSlice, floor: float = BACKGROUND_FLOOR_HU) -> float:
    """Mean HU over all pixels strictly above the background floor."""
    pixels = np.asarray(slice.pixels, dtype=np.float64)
    bone = pixels[pixels > floor]
    if bone.size == 0:
        raise NoBoneError(f"slice {slice.id}: no pixel above {floor} HU")
    return float(bone.mean())


def metric_summary(slice: CtSlice, spec: ResolutionSpec = ResolutionSpec(),
                   floor: float = BACKGROUND_FLOOR_HU) -> MetricSummary:
    """Compute the full metric triple for one slice."""
    profiles = cast_rays(slice, spec, floor)
    ratios = _span_ratios(profiles)
    if not ratios:
        raise NoBoneError(f"slice {slice.id}: no ray has a bone span")
    lengths = [ray.bone_span[1] - ray.bone_span[0] + 1
               for ray in profiles if ray.bone_span is not None]
    return MetricSummary(
        sdr=float(np.mean(ratios)),
        thickness_mm=float(spec.mm_per_px * np.mean(lengths)),
        intensity_hu=mean_intensity(slice, floor),
        rays_used=len(ratios),
    )


def per_slice_metrics(dataset: Sequence[CtSlice],
                      spec: ResolutionSpec = ResolutionSpec(),
                      floor: float = BACKGROUND_FLOOR_HU,
                      ) -> tuple[list[tuple[str, MetricSummary]], int]:
    """Metric triples for every slice; returns (rows, skipped_count).

    Slices where no ray carries bone are skipped rather than aborting the run.
    """
    if not dataset:
        raise EmptyDatasetError("dataset is empty")
    rows = []
    skipped = 0
    for sl in dataset:
        try:
            rows.append((sl.id, metric_summary(sl, spec, floor)))
        except NoBoneError:
            skipped += 1
    return rows, skipped


def summarize(dataset: Sequence[CtSlice], spec: ResolutionSpec = ResolutionSpec(),
              floor: float = BACKGROUND_FLOOR_HU) -> MetricDistribution:
    """Assemble per-slice metrics into dataset-level sample vectors."""
    rows, skipped = per_slice_metrics(dataset, spec, floor)
    if not rows:
        raise NoBoneError("no slice in the dataset produced metrics")
    return MetricDistribution(
        sdr=[m.sdr for _, m in rows],
        thickness_mm=[m.thickness_mm for _, m in rows],
        intensity_hu=[m.intensity_hu for _, m in rows],
        skipped=skipped,
    )


def ks_distance(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic: sup |ECDF_a - ECDF_b|."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise EmptyDatasetError("ks_distance requires nonempty samples")
    grid = np.concatenate([a, b])
    ecdf_a = np.searchsorted(a, grid, side="right") / a.size
    ecdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(ecdf_a - ecdf_b)))
