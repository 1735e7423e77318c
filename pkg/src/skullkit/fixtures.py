"""Deterministic fixture generators for tests, pipelines, and demos.

Everything here is seeded and reproducible: simple analytic slices (bars,
checkerboards), randomized slices for metric cross-checks, an organic
"real-proxy" set whose mean-intensity distribution is bimodal, Gaussian
feature fixtures, and a writer that lays a full fixture tree on disk.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import radiometrics
from .fid import FeatureMatrix, save_features
from .slicecore import (CtSlice, ManifestEntry, Provenance, SliceFormat,
                        save_slice, write_manifest)

SIZE = 128


def checkerboard_slice(low: float = 0.0, high: float = 1000.0,
                       id: str = "checkerboard") -> CtSlice:
    rows, cols = np.indices((SIZE, SIZE))
    pixels = np.where((rows + cols) % 2 == 0, low, high).astype(np.float32)
    return CtSlice(pixels=pixels, id=id)


def horizontal_bar_slice(top: int = 40, height: int = 20, hu: float = 1500.0,
                         id: str = "bar") -> CtSlice:
    pixels = np.zeros((SIZE, SIZE), dtype=np.float32)
    pixels[top:top + height, :] = hu
    return CtSlice(pixels=pixels, id=id)


def sandwich_bar_slice(top: int = 40, cortical_rows: int = 5,
                       trabecular_rows: int = 10, cortical_hu: float = 2000.0,
                       trabecular_hu: float = 1000.0, id: str = "sandwich") -> CtSlice:
    """Cortical plates above and below a trabecular core, full width."""
    pixels = np.zeros((SIZE, SIZE), dtype=np.float32)
    t0 = top
    t1 = top + cortical_rows
    t2 = t1 + trabecular_rows
    t3 = t2 + cortical_rows
    pixels[t0:t1, :] = cortical_hu
    pixels[t1:t2, :] = trabecular_hu
    pixels[t2:t3, :] = cortical_hu
    return CtSlice(pixels=pixels, id=id)


def slanted_bar_slice(height: int = 14, hu: float = 1800.0,
                      id: str = "slanted") -> CtSlice:
    """Bar whose top row climbs one pixel every eight columns."""
    pixels = np.zeros((SIZE, SIZE), dtype=np.float32)
    for col in range(SIZE):
        top = 30 + col // 8
        pixels[top:top + height, col] = hu
    return CtSlice(pixels=pixels, id=id)


def random_metric_slice(rng: np.random.Generator, id: str) -> CtSlice:
    """Randomized slice for metric cross-checks: per-column bands of varied
    intensity, interior pores, empty columns, and stray speckles."""
    pixels = np.zeros((SIZE, SIZE), dtype=np.float32)
    for col in range(SIZE):
        if rng.uniform() < 0.05:
            continue  # leave the column empty
        top = int(rng.integers(10, 80))
        length = int(rng.integers(1, 45))
        length = min(length, SIZE - top)
        band = rng.uniform(20.0, 3000.0, size=length)
        pores = rng.uniform(size=length) < 0.10
        band[pores] = rng.uniform(0.0, 10.0, size=int(pores.sum()))
        pixels[top:top + length, col] = band
    speckles = rng.uniform(size=(SIZE, SIZE)) < 0.002
    pixels[speckles] = rng.uniform(500.0, 3000.0, size=int(speckles.sum()))
    # guarantee bone on at least one ray column
    pixels[60:66, 62] = rng.uniform(800.0, 2000.0, size=6)
    return CtSlice(pixels=pixels.astype(np.float32), id=id)


def make_random_metric_set(n: int, seed: int = 0) -> list[CtSlice]:
    rng = np.random.default_rng(seed)
    return [random_metric_slice(rng, f"rand_{i:04d}") for i in range(n)]


def real_proxy_slice(rng: np.random.Generator, id: str) -> CtSlice:
    """Organic stand-in for a real segment: a smooth curved band with
    speckled interior. Cortical intensity is drawn from a two-mode mixture,
    which makes the mean-intensity distribution of a proxy set bimodal."""
    mode_high = rng.uniform() < 0.5
    cortical = rng.normal(2300.0, 100.0) if mode_high else rng.normal(1500.0, 80.0)
    cortical = float(np.clip(cortical, 1200.0, 2800.0))
    trabecular = cortical * rng.uniform(0.35, 0.65)

    thickness = int(rng.integers(10, 23))
    amplitude = rng.uniform(4.0, 12.0)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    offset = rng.uniform(-10.0, 10.0)
    cols = np.arange(SIZE)
    centers = SIZE / 2 + offset + amplitude * np.sin(2.0 * math.pi * cols / SIZE + phase)

    pixels = np.zeros((SIZE, SIZE), dtype=np.float32)
    for col in range(SIZE):
        top = int(round(centers[col] - thickness / 2))
        top = max(1, min(top, SIZE - thickness - 1))
        interior = rng.uniform(trabecular, cortical, size=thickness)
        interior[0] = cortical * rng.uniform(0.97, 1.03)
        interior[-1] = cortical * rng.uniform(0.97, 1.03)
        pixels[top:top + thickness, col] = interior
    return CtSlice(pixels=pixels, id=id, provenance=Provenance.REAL)


def make_real_proxy_set(n: int, seed: int = 0) -> list[CtSlice]:
    rng = np.random.default_rng(seed)
    return [real_proxy_slice(rng, f"proxy_{i:04d}") for i in range(n)]


def make_gaussian_features(n: int, k: int, seed: int = 0,
                           mean_shift: float = 0.0, scale: float = 1.0) -> FeatureMatrix:
    """Correlated Gaussian feature fixture with a reproducible mixing matrix."""
    rng = np.random.default_rng(seed)
    mixing = np.random.default_rng(12345).standard_normal((k, k)) / math.sqrt(k)
    feats = scale * rng.standard_normal((n, k)) @ mixing + mean_shift
    return FeatureMatrix(features=feats, source=f"gaussian(n={n}, k={k}, seed={seed})")


def demo_volume(depth: int = 25, seed: int = 0) -> np.ndarray:
    """Small (D, 140, 140) HU stack for exercising ingest crop/pad."""
    rng = np.random.default_rng(seed)
    stack = np.zeros((depth, 140, 140), dtype=np.float32)
    for d in range(depth):
        top = 60 + int(3 * math.sin(d / 3.0))
        stack[d, top:top + 16, :] = rng.uniform(900.0, 2200.0, size=(16, 140))
    return stack


def write_slice_dir(slices: list[CtSlice], out_dir: Path,
                    manifest_name: str = "manifest.json") -> Path:
    """Save slices as NPY files plus a manifest; returns the manifest path."""
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for sl in slices:
        rel = f"{sl.id}.npy"
        save_slice(sl, out_dir / rel, SliceFormat.NPY_F32)
        entries.append(ManifestEntry(id=sl.id, path=rel, provenance=sl.provenance))
    manifest = out_dir / manifest_name
    write_manifest(entries, manifest)
    return manifest


def emit_fixture_tree(out_dir: str | Path, seed: int = 0,
                      n_random: int = 200, n_proxy: int = 300) -> dict[str, str]:
    """Write the full fixture tree used by the pipelines and tests.

    Returns a name -> path map of the produced artifacts.
    """
    out = Path(out_dir)
    produced: dict[str, str] = {}

    simple = out / "slices"
    simple.mkdir(parents=True, exist_ok=True)
    for sl in (checkerboard_slice(), horizontal_bar_slice(), sandwich_bar_slice(),
               slanted_bar_slice()):
        save_slice(sl, simple / f"{sl.id}.npy", SliceFormat.NPY_F32)
        produced[sl.id] = str(simple / f"{sl.id}.npy")

    rand_manifest = write_slice_dir(make_random_metric_set(n_random, seed),
                                    out / "random_metric")
    produced["random_metric_manifest"] = str(rand_manifest)

    proxies = make_real_proxy_set(n_proxy, seed + 1)
    proxy_manifest = write_slice_dir(proxies, out / "real_proxy")
    produced["real_proxy_manifest"] = str(proxy_manifest)

    target = radiometrics.summarize(proxies)
    target_path = out / "target_dist.json"
    target.to_json(target_path)
    produced["target_dist"] = str(target_path)

    features_dir = out / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    save_features(make_gaussian_features(500, 16, seed + 2), features_dir / "real.npy")
    save_features(make_gaussian_features(500, 16, seed + 3, mean_shift=0.25),
                  features_dir / "synthetic.npy")
    produced["features_real"] = str(features_dir / "real.npy")
    produced["features_synthetic"] = str(features_dir / "synthetic.npy")

    volume_path = out / "volume.npy"
    np.save(volume_path, demo_volume(seed=seed))
    produced["volume"] = str(volume_path)
    return produced
