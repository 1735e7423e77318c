"""Slice data model, file I/O, and preprocessing for 128x128 skull-CT segments.

Pixel values are Hounsfield units (HU). All types here are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SLICE_SHAPE = (128, 128)
BACKGROUND_FLOOR_HU = 10.0


class SliceFormatError(ValueError):
    """Raised when a slice or volume file is malformed."""


class Provenance(str, enum.Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"
    ARTIFICIAL_IDEALIZED = "artificial_idealized"
    ARTIFICIAL_UNREALISTIC = "artificial_unrealistic"


class SliceFormat(str, enum.Enum):
    NPY_F32 = "npy_f32"
    PGM16 = "pgm16"


def _frozen_f32(pixels: np.ndarray, shape: tuple[int, int] | None = SLICE_SHAPE) -> np.ndarray:
    arr = np.array(pixels, dtype=np.float32)
    if shape is not None and arr.shape != shape:
        raise SliceFormatError(f"expected {shape} pixel grid, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SliceFormatError("pixel grid contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class IntensityWindow:
    """Half-open display/normalization window [lo, hi] in HU."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"window requires lo < hi, got ({self.lo}, {self.hi})")


DEFAULT_WINDOW = IntensityWindow(0.0, 3000.0)


@dataclass(frozen=True)
class CtSlice:
    """One 128x128 skull segment in HU."""

    pixels: np.ndarray
    id: str
    provenance: Provenance = Provenance.REAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixels", _frozen_f32(self.pixels))
        object.__setattr__(self, "provenance", Provenance(self.provenance))


@dataclass(frozen=True)
class NormalizedSlice:
    """128x128 grid mapped into [-1, 1] under a given window."""

    pixels: np.ndarray
    window: IntensityWindow

    def __post_init__(self) -> None:
        arr = np.array(self.pixels, dtype=np.float64)
        if arr.shape != SLICE_SHAPE:
            raise SliceFormatError(f"expected {SLICE_SHAPE} pixel grid, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise SliceFormatError("pixel grid contains non-finite values")
        if arr.min() < -1.0 or arr.max() > 1.0:
            raise ValueError("normalized pixels must lie in [-1, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)


@dataclass(frozen=True)
class BoneMask:
    """Boolean grid; true where the source pixel strictly exceeds the threshold."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.bits, dtype=bool)
        if arr.shape != SLICE_SHAPE:
            raise SliceFormatError(f"expected {SLICE_SHAPE} mask, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def cardinality(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class Volume:
    """Ordered stack of 2D HU grids with physical spacings."""

    slices: np.ndarray
    slice_spacing_mm: float = 0.625
    in_plane_resolution_mm_per_px: float = 0.45

    def __post_init__(self) -> None:
        arr = np.array(self.slices, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] == 0:
            raise SliceFormatError(f"expected nonempty (D, H, W) stack, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise SliceFormatError("volume contains non-finite values")
        if self.slice_spacing_mm <= 0 or self.in_plane_resolution_mm_per_px <= 0:
            raise ValueError("spacings must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "slices", arr)

    @property
    def n_slices(self) -> int:
        return self.slices.shape[0]


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def load_slice(path: str | Path, format: SliceFormat | str = SliceFormat.NPY_F32,
               id: str | None = None,
               provenance: Provenance = Provenance.REAL) -> CtSlice:
    """Read one slice from disk. NPY files must be little-endian f32 (128, 128)."""
    path = Path(path)
    fmt = SliceFormat(format)
    slice_id = id if id is not None else path.stem
    if fmt is SliceFormat.NPY_F32:
        try:
            arr = np.load(path)
        except FileNotFoundError:
            raise
        except Exception as exc:
            raise SliceFormatError(f"cannot parse {path} as NPY: {exc}") from exc
        if arr.dtype != np.float32:
            raise SliceFormatError(f"{path}: expected float32 data, got {arr.dtype}")
        return CtSlice(pixels=arr, id=slice_id, provenance=provenance)
    return CtSlice(pixels=_read_pgm16(path), id=slice_id, provenance=provenance)


def save_slice(slice: CtSlice, path: str | Path,
               format: SliceFormat | str = SliceFormat.NPY_F32) -> None:
    """Write a slice; NPY is lossless, PGM16 rounds to integers (offset header
    carries negative-HU support)."""
    path = Path(path)
    fmt = SliceFormat(format)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt is SliceFormat.NPY_F32:
        np.save(path, np.ascontiguousarray(slice.pixels, dtype=np.float32))
    else:
        _write_pgm16(slice.pixels, path)


_PGM_OFFSET_RE = re.compile(rb"#\s*hu_offset=(-?\d+)")


def _write_pgm16(pixels: np.ndarray, path: Path) -> None:
    rounded = np.rint(np.asarray(pixels, dtype=np.float64)).astype(np.int64)
    offset = int(max(0, -rounded.min()))
    stored = rounded + offset
    if stored.max() > 65535:
        raise SliceFormatError(
            f"HU range [{rounded.min()}, {rounded.max()}] does not fit 16-bit PGM")
    header = f"P5\n# hu_offset={offset}\n{pixels.shape[1]} {pixels.shape[0]}\n65535\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(stored.astype(">u2").tobytes())


def _read_pgm16(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    offset_match = _PGM_OFFSET_RE.search(data)
    hu_offset = int(offset_match.group(1)) if offset_match else 0

    # Tokenize the header: magic, width, height, maxval; '#' comments run to EOL.
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        ch = data[pos:pos + 1]
        if ch == b"#":
            pos = data.find(b"\n", pos)
            if pos < 0:
                break
            pos += 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace() and data[end:end + 1] != b"#":
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise SliceFormatError(f"{path}: not a binary PGM file")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise SliceFormatError(f"{path}: malformed PGM header") from exc
    if maxval != 65535:
        raise SliceFormatError(f"{path}: expected 16-bit PGM (maxval 65535), got {maxval}")
    raster = data[pos + 1:]
    expected = width * height * 2
    if len(raster) < expected:
        raise SliceFormatError(f"{path}: truncated PGM raster")
    stored = np.frombuffer(raster[:expected], dtype=">u2").reshape(height, width)
    return stored.astype(np.float32) - np.float32(hu_offset)


def load_volume(path: str | Path, slice_spacing_mm: float = 0.625,
                in_plane_resolution_mm_per_px: float = 0.45) -> Volume:
    """Read a (D, H, W) f32 NPY stack as a Volume."""
    try:
        arr = np.load(Path(path))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise SliceFormatError(f"cannot parse {path} as NPY: {exc}") from exc
    if arr.ndim != 3:
        raise SliceFormatError(f"{path}: expected 3-D stack, got shape {arr.shape}")
    return Volume(slices=arr, slice_spacing_mm=slice_spacing_mm,
                  in_plane_resolution_mm_per_px=in_plane_resolution_mm_per_px)


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def normalize(slice: CtSlice, window: IntensityWindow = DEFAULT_WINDOW) -> NormalizedSlice:
    """Map HU into [-1, 1]: p -> 2 * (clamp(p, lo, hi) - lo) / (hi - lo) - 1."""
    p = np.asarray(slice.pixels, dtype=np.float64)
    clamped = np.clip(p, window.lo, window.hi)
    norm = 2.0 * (clamped - window.lo) / (window.hi - window.lo) - 1.0
    return NormalizedSlice(pixels=np.clip(norm, -1.0, 1.0), window=window)


def denormalize(norm: NormalizedSlice, id: str = "denormalized",
                provenance: Provenance = Provenance.REAL) -> CtSlice:
    """Algebraic inverse of normalize over the window."""
    w = norm.window
    hu = w.lo + (np.asarray(norm.pixels, dtype=np.float64) + 1.0) * (w.hi - w.lo) / 2.0
    return CtSlice(pixels=hu, id=id, provenance=provenance)


def threshold_mask(slice: CtSlice, floor: float = BACKGROUND_FLOOR_HU) -> BoneMask:
    """Mask of pixels strictly above the background floor."""
    return BoneMask(bits=np.asarray(slice.pixels) > floor)


def apply_mask(slice: CtSlice, mask: BoneMask) -> CtSlice:
    """Zero out pixels outside the mask; pixels inside are unchanged."""
    if mask.bits.shape != slice.pixels.shape:
        raise ValueError(
            f"mask shape {mask.bits.shape} does not match slice {slice.pixels.shape}")
    return CtSlice(pixels=np.where(mask.bits, slice.pixels, np.float32(0.0)),
                   id=slice.id, provenance=slice.provenance)


def crop_or_pad(grid: np.ndarray, out_shape: tuple[int, int] = SLICE_SHAPE) -> np.ndarray:
    """Center-crop or symmetrically zero-pad a 2D grid to out_shape."""
    out = np.zeros(out_shape, dtype=np.float32)
    in_h, in_w = grid.shape
    out_h, out_w = out_shape
    # Source and destination windows share a common center.
    src_r0 = max(0, (in_h - out_h) // 2)
    src_c0 = max(0, (in_w - out_w) // 2)
    dst_r0 = max(0, (out_h - in_h) // 2)
    dst_c0 = max(0, (out_w - in_w) // 2)
    h = min(in_h, out_h)
    w = min(in_w, out_w)
    out[dst_r0:dst_r0 + h, dst_c0:dst_c0 + w] = grid[src_r0:src_r0 + h, src_c0:src_c0 + w]
    return out


def select_slices(volume: Volume, step: int = 5, id_prefix: str = "slice",
                  provenance: Provenance = Provenance.REAL) -> list[CtSlice]:
    """Take every step-th slice (indices 0, step, 2*step, ...), centered to 128x128.

    With the default 0.625 mm slice spacing, step=5 gives a 3.125 mm sampling
    interval.
    """
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    if volume.n_slices == 0:
        raise ValueError("empty volume")
    out = []
    for idx in range(0, volume.n_slices, step):
        grid = crop_or_pad(np.asarray(volume.slices[idx]))
        out.append(CtSlice(pixels=grid, id=f"{id_prefix}_{idx:04d}", provenance=provenance))
    return out


# ---------------------------------------------------------------------------
# Dataset manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    provenance: Provenance = Provenance.REAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "provenance", Provenance(self.provenance))


def write_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = [{"id": e.id, "path": e.path, "provenance": e.provenance.value}
               for e in entries]
    path.write_text(json.dumps(records, indent=2) + "\n")


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    path = Path(path)
    try:
        records = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SliceFormatError(f"{path}: malformed manifest JSON") from exc
    if not isinstance(records, list):
        raise SliceFormatError(f"{path}: manifest must be a JSON array")
    return [ManifestEntry(id=r["id"], path=r["path"], provenance=r.get("provenance", "real"))
            for r in records]


def load_dataset(manifest_path: str | Path) -> list[CtSlice]:
    """Load every slice listed in a manifest; relative paths resolve against it."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    out = []
    for entry in read_manifest(manifest_path):
        p = Path(entry.path)
        if not p.is_absolute():
            p = base / p
        fmt = SliceFormat.PGM16 if p.suffix == ".pgm" else SliceFormat.NPY_F32
        out.append(load_slice(p, fmt, id=entry.id, provenance=entry.provenance))
    return out
