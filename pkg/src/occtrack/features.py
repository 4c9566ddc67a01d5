"""Dense appearance features on a cell grid: oriented gradients + color names."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import colornames
from .errors import NeedsColor, PatchTooSmall, ShapeMismatch
from .imaging import BBox, ImageArray, RealGrid, resize_grid, to_gray

# block-normalization floor, in squared-gradient units of [0,1]-scaled
# intensity: well above sensor-noise block energy (~4e-3 at sigma ~= 2/255),
# well below any real edge, so noise-only cells stay near zero instead of
# being normalized up to full strength
_BLOCK_EPS = 0.05


@dataclass
class FeatureParams:
    """Feature extraction geometry shared by the tracker and the scale filter."""

    cell_size: int = 4
    n_bins: int = 9
    use_colornames: bool = True
    padding_factor: float = 2.5
    label_sigma_scale: float = 0.1

    def __post_init__(self):
        if self.cell_size < 1:
            raise ValueError(f"cell_size must be >= 1, got {self.cell_size}")
        if self.n_bins < 2:
            raise ValueError(f"n_bins must be >= 2, got {self.n_bins}")
        if self.padding_factor < 1.0:
            raise ValueError(f"padding_factor must be >= 1, got {self.padding_factor}")
        if self.label_sigma_scale <= 0:
            raise ValueError("label_sigma_scale must be positive")


@dataclass
class FeatureStack:
    """Multi-channel feature grid extracted from one image patch.

    channels is shaped (n_channels, rows, cols); all channels share the cell
    grid. origin_box remembers which image box produced the stack (optional
    plumbing for callers).
    """

    channels: np.ndarray
    cell_size: int
    origin_box: BBox | None = field(default=None)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.channels.shape[1:]


def extract_hog(patch: ImageArray, cell_size: int = 4, n_bins: int = 9) -> FeatureStack:
    """Per-cell histograms of unsigned gradient orientation.

    Orientations live in [0, pi) split into n_bins equal bins with hard
    assignment weighted by gradient magnitude; each cell histogram is then
    L2-normalized by the energy of its 2x2 cell block (clamped at the grid
    edge). A uniform patch yields the all-zero stack.
    """
    if patch.shape[0] < 2 * cell_size or patch.shape[1] < 2 * cell_size:
        raise PatchTooSmall(
            f"patch {patch.shape[:2]} smaller than two {cell_size}px cells"
        )
    gray = to_gray(patch) / 255.0
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)
    bins = np.minimum((ang / np.pi * n_bins).astype(np.intp), n_bins - 1)

    rows = patch.shape[0] // cell_size
    cols = patch.shape[1] // cell_size
    mag = mag[: rows * cell_size, : cols * cell_size]
    bins = bins[: rows * cell_size, : cols * cell_size]

    hist = np.zeros((n_bins, rows, cols), dtype=np.float64)
    for b in range(n_bins):
        sel = np.where(bins == b, mag, 0.0)
        hist[b] = sel.reshape(rows, cell_size, cols, cell_size).sum(axis=(1, 3))

    energy = (hist * hist).sum(axis=0)
    padded = np.pad(energy, ((0, 1), (0, 1)), mode="edge")
    block = padded[:-1, :-1] + padded[1:, :-1] + padded[:-1, 1:] + padded[1:, 1:]
    hist /= np.sqrt(block + _BLOCK_EPS)[None, :, :]
    return FeatureStack(channels=hist, cell_size=cell_size)


def extract_colornames(patch: ImageArray, cell_size: int = 4) -> FeatureStack:
    """Cell-averaged color-name probabilities (11 channels) from an RGB patch."""
    if patch.ndim != 3:
        raise NeedsColor("color-name features require an RGB patch")
    if patch.shape[0] < cell_size or patch.shape[1] < cell_size:
        raise PatchTooSmall(
            f"patch {patch.shape[:2]} smaller than one {cell_size}px cell"
        )
    table = colornames.color_name_table()
    idx = colornames.bin_index(patch)
    probs = table[idx].astype(np.float64)

    rows = patch.shape[0] // cell_size
    cols = patch.shape[1] // cell_size
    probs = probs[: rows * cell_size, : cols * cell_size]
    cells = probs.reshape(rows, cell_size, cols, cell_size, len(colornames.NAMES))
    mean = cells.mean(axis=(1, 3))
    return FeatureStack(channels=np.moveaxis(mean, 2, 0), cell_size=cell_size)


def assemble(
    hog: FeatureStack,
    cn: FeatureStack | None,
    window: RealGrid,
) -> FeatureStack:
    """Concatenate feature stacks and taper every channel by the window.

    A color-name stack on a different grid is resampled bilinearly onto the
    gradient grid first. Window shape must match the gradient grid.
    """
    rows, cols = hog.grid_shape
    if window.shape != (rows, cols):
        raise ShapeMismatch(
            f"window {window.shape} does not match feature grid {(rows, cols)}"
        )
    parts = [hog.channels]
    if cn is not None:
        ch = cn.channels
        if cn.grid_shape != (rows, cols):
            ch = np.stack(
                [resize_grid(c, rows, cols) for c in ch]
            )
        parts.append(ch)
    stacked = np.concatenate(parts, axis=0) * window[None, :, :]
    return FeatureStack(
        channels=stacked, cell_size=hog.cell_size, origin_box=hog.origin_box
    )
