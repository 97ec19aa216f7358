"""Pixel-level primitives for guilloche work.

Loading/saving, grayscale conversion, corner-aligned bilinear resizing,
non-overlapping block partitioning, tamper-safe zone selection, the
copy-move operation itself, and a synthetic guilloche renderer used by
the dataset-free test suite.

Conventions: intensities are float64 in [0, 1]; coordinates are
(x=column, y=row) with origin at the top-left; files are quantized to
8 bits on save, so bit-exactness claims hold post-quantization. All
operations are pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptImageError,
    DegenerateCopyError,
    InvalidBlockSizeError,
    InvalidDimensionsError,
    OutOfBoundsError,
    RegionMismatchError,
    UnsupportedFormatError,
)

# ITU-R 601 luma weights used to collapse RGB to a single channel.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# Heuristic fallback for foreground detection: a block is foreground when
# more than MAX_OUTLIER_FRACTION of its pixels deviate from the block
# median by more than OUTLIER_DEVIATION. Guilloche backgrounds are
# low-contrast; text/photos create heavy-tailed deviations.
OUTLIER_DEVIATION = 0.25
MAX_OUTLIER_FRACTION = 0.05


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle: top-left corner (x, y), size w x h."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise InvalidDimensionsError(f"region size must be positive, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise OutOfBoundsError(f"region origin must be non-negative, got ({self.x},{self.y})")

    def fits(self, width: int, height: int) -> bool:
        return self.x + self.w <= width and self.y + self.h <= height

    def intersects(self, other: "Region") -> bool:
        return not (
            self.x + self.w <= other.x
            or other.x + other.w <= self.x
            or self.y + self.h <= other.y
            or other.y + other.h <= self.y
        )

    def slices(self) -> tuple[slice, slice]:
        """(row, column) slices addressing this region in a pixel array."""
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        return cls(int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"]))


@dataclass
class GrayImage:
    """Single-channel raster; `pixels` has shape (height, width), float64 in [0, 1]."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.shape != (self.height, self.width):
            raise InvalidDimensionsError(
                f"pixel array shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if self.pixels.size and (self.pixels.min() < 0.0 or self.pixels.max() > 1.0):
            raise InvalidDimensionsError("intensities must lie in [0, 1]")

    def copy(self) -> "GrayImage":
        return GrayImage(self.width, self.height, self.pixels.copy())


@dataclass(frozen=True)
class BlockGrid:
    """Row-major grid of disjoint N x N regions; block indices are 1-based."""

    block_size: int
    cols: int
    rows: int
    regions: tuple[Region, ...]

    def region(self, index: int) -> Region:
        """Region of 1-based block `index` (row-major, matching figure numbering)."""
        if not 1 <= index <= len(self.regions):
            raise IndexError(f"block index {index} out of range 1..{len(self.regions)}")
        return self.regions[index - 1]

    def __len__(self) -> int:
        return len(self.regions)


@dataclass(frozen=True)
class GuillocheParams:
    """Parameters of the synthetic interlaced-sine renderer."""

    curve_count: int = 12
    amplitude: float = 100.0
    frequency: float = 3.0
    phase_jitter: float = math.pi
    line_intensity: float = 0.15
    background_intensity: float = 0.92
    seed: int = 0

    def __post_init__(self):
        if self.curve_count < 1:
            raise InvalidDimensionsError("curve_count must be >= 1")
        for name in ("line_intensity", "background_intensity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidDimensionsError(f"{name} must lie in [0, 1], got {v}")


def load_grayscale(path) -> GrayImage:
    """Load a PNG/JPEG/TIFF raster as a normalized grayscale image.

    RGB inputs are collapsed with luma weights 0.299/0.587/0.114; 8-bit
    values are divided by 255.
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("P", "RGBA", "LA"):
                im = im.convert("RGB" if mode in ("P", "RGBA") else "L")
                mode = im.mode
            if mode == "L":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            elif mode == "RGB":
                rgb = np.asarray(im, dtype=np.float64) / 255.0
                arr = (
                    LUMA_WEIGHTS[0] * rgb[:, :, 0]
                    + LUMA_WEIGHTS[1] * rgb[:, :, 1]
                    + LUMA_WEIGHTS[2] * rgb[:, :, 2]
                )
            elif mode == "I;16":
                arr = np.asarray(im, dtype=np.float64) / 65535.0
            else:
                raise UnsupportedFormatError(f"unsupported pixel mode {mode!r} in {path}")
    except FileNotFoundError:
        raise
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"not a readable raster file: {path}") from exc
    except OSError as exc:
        raise CorruptImageError(f"failed to decode {path}: {exc}") from exc
    arr = np.clip(arr, 0.0, 1.0)
    h, w = arr.shape
    return GrayImage(w, h, arr)


def save_png(img: GrayImage, path) -> None:
    """Write as 8-bit grayscale PNG (intensities quantized by round(p*255))."""
    q = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path, format="PNG")


def _sample_positions(n_in: int, n_out: int) -> np.ndarray:
    # Corner-aligned: first/last output samples land on first/last input pixels.
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0])
    return np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)


def resize_bilinear(img: GrayImage, out_w: int, out_h: int) -> GrayImage:
    """Corner-aligned bilinear resample; output clamped to [0, 1]."""
    if out_w < 1 or out_h < 1:
        raise InvalidDimensionsError(f"output size must be >= 1, got {out_w}x{out_h}")
    xs = _sample_positions(img.width, out_w)
    ys = _sample_positions(img.height, out_h)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx = xs - x0
    fy = ys - y0
    rows_a = img.pixels[y0]
    rows_b = img.pixels[y1]
    top = rows_a[:, x0] * (1 - fx) + rows_a[:, x1] * fx
    bot = rows_b[:, x0] * (1 - fx) + rows_b[:, x1] * fx
    out = top * (1 - fy)[:, None] + bot * fy[:, None]
    return GrayImage(out_w, out_h, np.clip(out, 0.0, 1.0))


def partition_blocks(img: GrayImage, n: int) -> BlockGrid:
    """Partition into non-overlapping N x N blocks, row-major, 1-based.

    Trailing strips narrower than N are excluded from the grid (they are
    never tamper candidates).
    """
    if n < 1 or n > min(img.width, img.height):
        raise InvalidBlockSizeError(
            f"block size {n} must lie in [1, {min(img.width, img.height)}]"
        )
    cols = img.width // n
    rows = img.height // n
    regions = tuple(
        Region(c * n, r * n, n, n) for r in range(rows) for c in range(cols)
    )
    return BlockGrid(block_size=n, cols=cols, rows=rows, regions=regions)


def block_is_foreground(img: GrayImage, region: Region) -> bool:
    """Heuristic: heavy-tailed deviation from the block median marks foreground."""
    block = img.pixels[region.slices()]
    median = np.median(block)
    outliers = np.abs(block - median) > OUTLIER_DEVIATION
    return outliers.mean() > MAX_OUTLIER_FRACTION


def select_candidate_zones(
    img: GrayImage,
    grid: BlockGrid,
    foreground: list[Region] | None,
) -> list[int]:
    """1-based indices of blocks safe for copy-move, in ascending order.

    With `foreground` regions given (possibly empty, meaning "nothing to
    avoid"), a block qualifies iff it intersects none of them. With
    `foreground=None` the median-deviation heuristic decides per block.
    """
    if foreground is None:
        return [
            i + 1
            for i, reg in enumerate(grid.regions)
            if not block_is_foreground(img, reg)
        ]
    return [
        i + 1
        for i, reg in enumerate(grid.regions)
        if not any(reg.intersects(fg) for fg in foreground)
    ]


def copy_move(img: GrayImage, src: Region, dst: Region) -> GrayImage:
    """Overwrite `dst` with the pre-operation content of `src`; pure."""
    if (src.w, src.h) != (dst.w, dst.h):
        raise RegionMismatchError(
            f"source {src.w}x{src.h} and destination {dst.w}x{dst.h} differ in shape"
        )
    if not src.fits(img.width, img.height) or not dst.fits(img.width, img.height):
        raise OutOfBoundsError("copy-move regions must fit inside the image")
    if src == dst:
        raise DegenerateCopyError("source and destination regions are identical")
    out = img.pixels.copy()
    out[dst.slices()] = img.pixels[src.slices()]
    return GrayImage(img.width, img.height, out)


def synth_guilloche(params: GuillocheParams, w: int, h: int) -> GrayImage:
    """Render interlaced sinusoidal curves with anti-aliased 1-pixel strokes.

    Curve k follows y(x) = h/2 + amplitude*sin(2*pi*frequency*x/w + phase_k)
    with phase_k = 2*pi*k/curve_count + U(-phase_jitter, phase_jitter) from
    the seeded generator; strokes of line_intensity are composited over
    background_intensity with a 1-pixel tent coverage. Deterministic for a
    fixed seed.
    """
    if w < 16 or h < 16:
        raise InvalidDimensionsError(f"canvas must be at least 16x16, got {w}x{h}")
    rng = np.random.default_rng(params.seed)
    xs = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)[:, None]
    coverage = np.zeros((h, w))
    for k in range(params.curve_count):
        phase = 2.0 * math.pi * k / params.curve_count + rng.uniform(
            -params.phase_jitter, params.phase_jitter
        )
        yc = h / 2.0 + params.amplitude * np.sin(
            2.0 * math.pi * params.frequency * xs / w + phase
        )
        np.maximum(coverage, np.clip(1.0 - np.abs(rows - yc[None, :]), 0.0, 1.0), out=coverage)
    pixels = params.background_intensity + (
        params.line_intensity - params.background_intensity
    ) * coverage
    return GrayImage(w, h, np.clip(pixels, 0.0, 1.0))
