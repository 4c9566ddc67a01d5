"""Image-plane primitives: boxes, patch extraction, resampling, windows, FFT.

Conventions used throughout the package:

* images are uint8 numpy arrays, row-major, shaped (H, W) for grayscale or
  (H, W, 3) for RGB;
* real grids are float64 arrays shaped (rows, cols), complex grids are
  complex128 of the same shape;
* ``fft2`` is the unnormalized forward transform, ``ifft2`` carries the
  1/(rows*cols) factor (numpy's default split).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image as _PILImage

from .errors import PatchOutOfFrame

RealGrid = np.ndarray
ComplexGrid = np.ndarray
ImageArray = np.ndarray


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel units, center convention."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box size must be positive, got {self.w}x{self.h}")

    @classmethod
    def from_topleft(cls, x: float, y: float, w: float, h: float) -> "BBox":
        return cls(x + w / 2.0, y + h / 2.0, w, h)

    def topleft(self) -> tuple[float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0)

    def as_topleft_tuple(self) -> tuple[float, float, float, float]:
        x, y = self.topleft()
        return (x, y, self.w, self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    def scaled(self, s: float) -> "BBox":
        return BBox(self.cx, self.cy, self.w * s, self.h * s)

    def resized(self, w: float, h: float) -> "BBox":
        return BBox(self.cx, self.cy, w, h)

    def moved(self, dx: float, dy: float) -> "BBox":
        return BBox(self.cx + dx, self.cy + dy, self.w, self.h)


def _check_image(img: ImageArray) -> None:
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")


def extract_patch(img: ImageArray, box: BBox, padding_factor: float = 1.0) -> ImageArray:
    """Cut an integer-aligned patch of size (box * padding_factor) centered on the box.

    Out-of-frame pixels replicate the nearest edge pixel. Raises
    PatchOutOfFrame when the box itself has no overlap with the image.
    """
    _check_image(img)
    if padding_factor < 1.0:
        raise ValueError(f"padding_factor must be >= 1, got {padding_factor}")
    h, w = img.shape[:2]
    x0, y0 = box.topleft()
    if x0 + box.w <= 0 or y0 + box.h <= 0 or x0 >= w or y0 >= h:
        raise PatchOutOfFrame(
            f"box {box.as_topleft_tuple()} lies outside a {w}x{h} frame"
        )
    pw = max(1, int(round(box.w * padding_factor)))
    ph = max(1, int(round(box.h * padding_factor)))
    r0 = int(round(box.cy)) - ph // 2
    c0 = int(round(box.cx)) - pw // 2
    rows = np.clip(np.arange(r0, r0 + ph), 0, h - 1)
    cols = np.clip(np.arange(c0, c0 + pw), 0, w - 1)
    return img[np.ix_(rows, cols)]


def resize_grid(data: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Bilinear resample of a float grid shaped (rows, cols) or (rows, cols, ch)."""
    if out_rows < 1 or out_cols < 1:
        raise ValueError(f"target size must be positive, got {out_rows}x{out_cols}")
    data = np.asarray(data, dtype=np.float64)
    in_rows, in_cols = data.shape[:2]
    if (in_rows, in_cols) == (out_rows, out_cols):
        return data.copy()
    sy = in_rows / out_rows
    sx = in_cols / out_cols
    ys = np.clip((np.arange(out_rows) + 0.5) * sy - 0.5, 0.0, in_rows - 1.0)
    xs = np.clip((np.arange(out_cols) + 0.5) * sx - 0.5, 0.0, in_cols - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_rows - 1)
    x1 = np.minimum(x0 + 1, in_cols - 1)
    wy = (ys - y0).reshape(-1, 1)
    wx = (xs - x0).reshape(1, -1)
    if data.ndim == 3:
        wy = wy[..., None]
        wx = wx[..., None]
    top = data[y0][:, x0] * (1.0 - wx) + data[y0][:, x1] * wx
    bot = data[y1][:, x0] * (1.0 - wx) + data[y1][:, x1] * wx
    return top * (1.0 - wy) + bot * wy


def resize(img: ImageArray, out_w: int, out_h: int) -> ImageArray:
    """Bilinear resize of a uint8 image to (out_w, out_h)."""
    _check_image(img)
    out = resize_grid(img.astype(np.float64), out_h, out_w)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def cosine_window(rows: int, cols: int) -> RealGrid:
    """Outer product of 1-D Hann windows; zero on the border, 1 in the middle."""
    if rows < 1 or cols < 1:
        raise ValueError(f"window size must be positive, got {rows}x{cols}")
    wr = np.hanning(rows) if rows > 1 else np.ones(1)
    wc = np.hanning(cols) if cols > 1 else np.ones(1)
    return np.outer(wr, wc)


def gaussian_label(rows: int, cols: int, sigma: float) -> RealGrid:
    """Gaussian regression target peaking at exactly 1 on the center cell."""
    if rows < 1 or cols < 1:
        raise ValueError(f"label size must be positive, got {rows}x{cols}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    dr = np.arange(rows).reshape(-1, 1) - rows // 2
    dc = np.arange(cols).reshape(1, -1) - cols // 2
    return np.exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma))


def fft2(grid: RealGrid) -> ComplexGrid:
    """Unnormalized 2-D forward FFT over the last two axes."""
    return np.fft.fft2(grid, axes=(-2, -1))


def ifft2(spectrum: ComplexGrid) -> RealGrid:
    """Inverse 2-D FFT (1/(rows*cols) normalized); returns the real part.

    Callers pass conjugate-symmetric spectra, so the imaginary residue is
    rounding noise only.
    """
    return np.fft.ifft2(spectrum, axes=(-2, -1)).real


def load_image(path) -> ImageArray:
    """Load a PNG/JPEG image as uint8 RGB (or grayscale if stored that way)."""
    with _PILImage.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.uint8)


def save_image(path, img: ImageArray) -> None:
    """Write a uint8 image to disk; format chosen by file extension."""
    _check_image(img)
    _PILImage.fromarray(img).save(path)


def to_gray(img: ImageArray) -> RealGrid:
    """Float64 luminance plane (ITU-R BT.601 weights for RGB input)."""
    _check_image(img)
    data = img.astype(np.float64)
    if img.ndim == 2:
        return data
    return 0.299 * data[:, :, 0] + 0.587 * data[:, :, 1] + 0.114 * data[:, :, 2]
