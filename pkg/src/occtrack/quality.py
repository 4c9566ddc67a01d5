"""Response-map quality scoring and the sudden-drop occlusion trigger.

The core measure rewards response maps with a single sharp peak: for every
cell x outside a small exclusion ring around the peak x*, the drop
(r(x*) - r(x)) raised to ``alpha`` is divided by a spatial discount
1 - exp(-beta * ||x - x*||^2) computed on per-axis [0, 1] normalized
coordinates, and the minimum of that ratio is the score. A competing peak
far from x* therefore drags the score toward zero no matter where it sits,
while the discount forgives cells adjacent to the true peak.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateResponse

_NORM_EPS = 1e-300


@dataclass
class QualityParams:
    """Knobs for the quality measure and the occlusion trigger."""

    alpha: float = 2.0
    beta: float = 8.0
    phi: float = 45.0
    n_q: int = 100
    exclusion_radius: int = 1

    def __post_init__(self):
        if self.alpha < 1.0:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.phi <= 1.0:
            raise ValueError(f"phi must be > 1, got {self.phi}")
        if self.n_q < 1:
            raise ValueError(f"n_q must be >= 1, got {self.n_q}")
        if self.exclusion_radius < 0:
            raise ValueError("exclusion_radius must be >= 0")


@dataclass
class ResponseMap:
    """A correlation response grid plus peak bookkeeping.

    peak_val/peak_loc always describe the current grid; raw_peak preserves
    the pre-normalization peak so downstream scores can be rescaled by it.
    Ties resolve to the first maximum in row-major order.
    """

    grid: np.ndarray
    normalized: bool = False
    raw_peak: float | None = None
    peak_loc: tuple[int, int] = field(init=False)
    peak_val: float = field(init=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 2:
            raise ValueError(f"response grid must be 2-D, got shape {grid.shape}")
        self.grid = grid
        flat = int(np.argmax(grid))
        self.peak_loc = (flat // grid.shape[1], flat % grid.shape[1])
        self.peak_val = float(grid[self.peak_loc])


def normalize_response(r: ResponseMap) -> ResponseMap:
    """Scale the grid by its max absolute entry; records the original peak."""
    scale = float(np.max(np.abs(r.grid)))
    if scale <= _NORM_EPS:
        raise DegenerateResponse("all-zero response map cannot be normalized")
    raw_peak = r.raw_peak if r.raw_peak is not None else r.peak_val
    return ResponseMap(grid=r.grid / scale, normalized=True, raw_peak=raw_peak)


def q_measure(r: ResponseMap, params: QualityParams) -> float:
    """Sharp-single-peak score of a normalized response map (see module doc).

    Cells within a Chebyshev distance of ``exclusion_radius`` of the peak are
    ignored, as is the peak itself. Raises DegenerateResponse when the grid
    is too small to leave any scored cell.
    """
    if not r.normalized:
        raise ValueError("q_measure expects a normalized response map")
    grid = r.grid
    rows, cols = grid.shape
    if rows < 3 or cols < 3:
        raise DegenerateResponse(f"{rows}x{cols} grid too small for quality scoring")
    pr, pc = r.peak_loc
    di = np.abs(np.arange(rows).reshape(-1, 1) - pr)
    dj = np.abs(np.arange(cols).reshape(1, -1) - pc)
    keep = np.maximum(di, dj) > params.exclusion_radius
    if not keep.any():
        raise DegenerateResponse("exclusion ring covers the whole grid")
    un = di / max(rows - 1, 1)
    vn = dj / max(cols - 1, 1)
    d2 = un * un + vn * vn
    drop = np.power(r.peak_val - grid[keep], params.alpha)
    discount = 1.0 - np.exp(-params.beta * d2[keep])
    return float(np.min(drop / discount))


def localization_quality(r: ResponseMap, params: QualityParams) -> float:
    """q_measure of the normalized map, rescaled by the raw peak height."""
    norm = normalize_response(r)
    raw_peak = norm.raw_peak if norm.raw_peak is not None else norm.peak_val
    return q_measure(norm, params) * raw_peak


def psr(r: ResponseMap, window: int = 11) -> float:
    """Peak-to-sidelobe ratio with a square exclusion window around the peak."""
    grid = r.grid
    rows, cols = grid.shape
    pr, pc = r.peak_loc
    half = window // 2
    mask = np.ones_like(grid, dtype=bool)
    mask[
        max(0, pr - half) : min(rows, pr + half + 1),
        max(0, pc - half) : min(cols, pc + half + 1),
    ] = False
    side = grid[mask]
    if side.size == 0:
        raise DegenerateResponse("no sidelobe cells outside the exclusion window")
    std = float(side.std())
    if std == 0.0:
        raise DegenerateResponse("sidelobe has zero variance")
    return (r.peak_val - float(side.mean())) / std


def apce(r: ResponseMap) -> float:
    """Average peak-to-correlation energy: (max-min)^2 over mean (r-min)^2."""
    grid = r.grid
    lo = float(grid.min())
    denom = float(np.mean((grid - lo) ** 2))
    if denom == 0.0:
        raise DegenerateResponse("flat response map has no contrast")
    return (r.peak_val - lo) ** 2 / denom


@dataclass
class QualityHistory:
    """Ring buffer of quality scores from confidently tracked frames."""

    n_q: int
    _buf: deque = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_q < 1:
            raise ValueError(f"n_q must be >= 1, got {self.n_q}")
        self._buf = deque(maxlen=self.n_q)

    def push(self, q: float) -> None:
        self._buf.append(float(q))

    def mean(self) -> float:
        if not self._buf:
            raise DegenerateResponse("quality history is empty")
        return float(np.mean(self._buf))

    def clear(self) -> None:
        self._buf.clear()

    def values(self) -> tuple[float, ...]:
        return tuple(self._buf)

    def __len__(self) -> int:
        return len(self._buf)


def occlusion_trigger(hist: QualityHistory, q_t: float, phi: float) -> bool:
    """True when the running-mean quality exceeds phi times the current one.

    An empty history never triggers (the first frames are trusted); a
    non-positive current score always triggers.
    """
    if len(hist) == 0:
        return False
    if q_t <= 0.0:
        return True
    return hist.mean() / q_t > phi
