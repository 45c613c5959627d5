"""Joint intensity / gradient-magnitude histograms of volumes.

Rows index gradient-magnitude bins and columns index intensity bins, both
starting at the lowest value. Raw integer counts are kept alongside the
normalized view so that rebinning sums exact counts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadBins, BadFactor, IoFailure
from .volume_io import Volume, intensity_range

DEFAULT_BINS = 256
DEFAULT_REDUCTION = 3


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def normalize_counts(counts: np.ndarray) -> np.ndarray:
    """Map counts to ``log(1+c) / log(1+c_max)``; an all-zero grid stays zero."""
    counts = np.asarray(counts, dtype=np.float64)
    cmax = counts.max(initial=0.0)
    if cmax <= 0:
        return np.zeros_like(counts)
    return np.log1p(counts) / np.log1p(cmax)


@dataclass(frozen=True)
class Histogram2D:
    counts: np.ndarray = field(repr=False)
    intensity_range: tuple[float, float] = (0.0, 0.0)
    gmag_max: float = 0.0

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64, copy=True, order="C")
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise BadBins(f"histogram must be square, got shape {counts.shape}")
        if not _is_power_of_two(counts.shape[0]):
            raise BadBins(f"bins per axis must be a power of two, got {counts.shape[0]}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def size(self) -> int:
        return self.counts.shape[0]

    @property
    def values(self) -> np.ndarray:
        return normalize_counts(self.counts)


def gradient_magnitude_field(v: Volume) -> np.ndarray:
    """Euclidean norm of the finite-difference gradient, shaped ``(nz, ny, nx)``.

    Interior voxels use central differences over ``2*spacing``; the two faces
    of each axis use one-sided differences over ``spacing``. Axes with a
    single voxel contribute zero.
    """
    f = v.array
    sx, sy, sz = v.meta.spacing
    sq = np.zeros(f.shape, dtype=np.float64)
    # array axes are (z, y, x)
    for axis, h in ((2, sx), (1, sy), (0, sz)):
        d = _axis_difference(f, axis, h)
        sq += d * d
    return np.sqrt(sq)


def _axis_difference(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    n = f.shape[axis]
    out = np.zeros(f.shape, dtype=np.float64)
    if n == 1:
        return out
    g = np.moveaxis(f, axis, 0)
    o = np.moveaxis(out, axis, 0)
    if n > 2:
        o[1:-1] = (g[2:] - g[:-2]) / (2.0 * h)
    o[0] = (g[1] - g[0]) / h
    o[-1] = (g[-1] - g[-2]) / h
    return out


def _bin_index(values: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.int64)
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def compute_histogram(v: Volume, bins: int = DEFAULT_BINS) -> Histogram2D:
    if not isinstance(bins, (int, np.integer)) or not _is_power_of_two(int(bins)) or not 8 <= bins <= 256:
        raise BadBins(f"bins must be a power of two in [8, 256], got {bins!r}")
    bins = int(bins)
    lo, hi = intensity_range(v)
    gmag = gradient_magnitude_field(v).reshape(-1)
    gmax = float(gmag.max())
    col = _bin_index(v.voxels, lo, hi, bins)
    row = _bin_index(gmag, 0.0, gmax, bins)
    counts = np.bincount(row * bins + col, minlength=bins * bins).reshape(bins, bins)
    return Histogram2D(counts, (lo, hi), gmax)


def downscale(h: Histogram2D, factor: int) -> Histogram2D:
    """Sum ``2**factor`` square blocks of counts."""
    if factor < 0:
        raise BadFactor(f"reduction factor must be >= 0, got {factor}")
    step = 1 << factor
    if step > h.size:
        raise BadFactor(f"reduction factor {factor} too large for a {h.size}x{h.size} histogram")
    if step == 1:
        return h
    n = h.size // step
    counts = h.counts.reshape(n, step, n, step).sum(axis=(1, 3))
    return Histogram2D(counts, h.intensity_range, h.gmag_max)


def flatten(h: Histogram2D) -> np.ndarray:
    return h.values.reshape(-1)


def features(v: Volume, reduction_factor: int = DEFAULT_REDUCTION, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Network input vector for a volume: histogram, rebin, flatten."""
    return flatten(downscale(compute_histogram(v, bins), reduction_factor))


def input_size(reduction_factor: int, bins: int = DEFAULT_BINS) -> int:
    side = bins >> reduction_factor
    if side < 1 or (side << reduction_factor) != bins:
        raise BadFactor(f"reduction factor {reduction_factor} invalid for {bins} bins")
    return side * side


def to_image(h: Histogram2D) -> np.ndarray:
    """8-bit image with gradient magnitude increasing upward."""
    img = np.rint(255.0 * h.values).astype(np.uint8)
    return np.ascontiguousarray(img[::-1])


def export_image(h: Histogram2D, path) -> None:
    img = to_image(h)
    header = f"P5 {img.shape[1]} {img.shape[0]} 255\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(img.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_pgm(path) -> np.ndarray:
    """Minimal reader for the binary PGM files written by :func:`export_image`."""
    header, _, pixels = Path(path).read_bytes().partition(b"\n")
    parts = header.split()
    if len(parts) != 4 or parts[0] != b"P5" or parts[3] != b"255":
        raise IoFailure(f"{path} is not an 8-bit binary PGM")
    width, height = int(parts[1]), int(parts[2])
    return np.frombuffer(pixels, dtype=np.uint8)[: width * height].reshape(height, width)


def export_csv(h: Histogram2D, path) -> None:
    """Raw counts as ``row,col,count`` lines, nonzero cells only."""
    rows, cols = np.nonzero(h.counts)
    try:
        with open(path, "w") as fh:
            fh.write("row,col,count\n")
            for r, c in zip(rows, cols):
                fh.write(f"{r},{c},{h.counts[r, c]}\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
