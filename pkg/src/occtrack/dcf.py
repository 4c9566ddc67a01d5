"""Masked correlation filters: spatial reliability, ADMM learning, response.

The filter bank solves, per feature channel, a ridge regression between the
channel spectrum u and a Gaussian target g, with the constraint that the
spatial filter is supported only on a binary reliability mask m. The
constraint is split ADMM-style into a frequency-domain variable f_c and a
masked spatial variable f_m tied together by a Lagrange multiplier:

    f_c <- (u * conj(g) + mu * f_m - L) / (|u|^2 + mu)        (closed form)
    f_m <- fft2( m . ifft2(L + mu * f_c) / (lambda/(2D) + mu) )
    L   <- L + mu * (f_c - f_m),     mu <- min(mu_scale * mu, mu_max)

where D = rows * cols. Both inner updates are exact block minimizers of the
augmented Lagrangian, so the objective never increases within an iteration.

The label peaks at the grid center, which places the ideal filter's spatial
energy at the array origin (wrapping into the corners): a filter whose
response peaks at center index K must be the template rolled by -K. Masks
are built centered on the patch, so the solver projects onto ifftshift(m),
the same mask re-centered to the origin. The model keeps the masked spectra
f_m, whose spatial support is exactly that re-centered mask.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import NumericalBlowup, ShapeMismatch
from .features import FeatureStack
from .imaging import BBox, ImageArray, RealGrid, fft2, ifft2
from .quality import ResponseMap

_MAGIC = b"OCF1"
_VERSION = 1


@dataclass
class AdmmParams:
    """Constrained-filter solver settings."""

    lambda_reg: float = 0.01
    mu0: float = 5.0
    mu_scale: float = 3.0
    mu_max: float = 20.0
    iterations: int = 2

    def __post_init__(self):
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be >= 0")
        if self.mu0 <= 0 or self.mu_max < self.mu0 or self.mu_scale < 1.0:
            raise ValueError(
                f"bad mu schedule: mu0={self.mu0} scale={self.mu_scale} max={self.mu_max}"
            )
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass
class FilterModel:
    """Per-channel filter spectra plus reliability mask and channel weights.

    Arrays are locked read-only; derive updated models through
    ``dataclasses.replace`` with fresh arrays.
    """

    spectra: np.ndarray
    mask: np.ndarray
    weights: np.ndarray
    cell_size: int = 4
    residual: float = 0.0

    def __post_init__(self):
        spectra = np.asarray(self.spectra, dtype=np.complex128)
        mask = np.asarray(self.mask, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if spectra.ndim != 3:
            raise ShapeMismatch(f"spectra must be (channels, rows, cols), got {spectra.shape}")
        if mask.shape != spectra.shape[1:]:
            raise ShapeMismatch(f"mask {mask.shape} does not match spectra {spectra.shape}")
        if weights.shape != (spectra.shape[0],):
            raise ShapeMismatch(f"need one weight per channel, got {weights.shape}")
        for arr in (spectra, mask, weights):
            arr.setflags(write=False)
        self.spectra = spectra
        self.mask = mask
        self.weights = weights

    @property
    def n_channels(self) -> int:
        return self.spectra.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.spectra.shape[1:]


@dataclass
class AdmmTrace:
    """Per-iteration diagnostics from one learn_filter call."""

    objectives: list = field(default_factory=list)
    residuals: list = field(default_factory=list)


def compute_spatial_mask(
    patch: ImageArray,
    box: BBox,
    cell_size: int = 4,
    n_bins: int = 16,
) -> RealGrid:
    """Binary reliability mask on the feature cell grid of a padded patch.

    Foreground/background color histograms (n_bins per channel) from the box
    interior versus the surrounding ring feed a Bayes posterior with equal
    priors; cells whose majority pixel posterior favors the foreground are
    kept, reduced to the single connected component containing the box
    center, and the one-cell grid border is zeroed. Whenever segmentation
    degenerates (empty, center not covered, implausibly small or large), the
    axis-aligned box interior is used instead, so the result is never
    all-zero.
    """
    ph, pw = patch.shape[:2]
    rows, cols = ph // cell_size, pw // cell_size
    if rows < 3 or cols < 3:
        raise ShapeMismatch(f"patch {patch.shape[:2]} too small for a {cell_size}px cell mask")

    if patch.ndim == 3:
        chans = patch.astype(np.intp) >> 4
        idx = (chans[:, :, 0] * n_bins + chans[:, :, 1]) * n_bins + chans[:, :, 2]
        n_cells_hist = n_bins**3
    else:
        idx = patch.astype(np.intp) >> 4
        n_cells_hist = n_bins

    x0 = int(round(box.cx - box.w / 2.0))
    x1 = int(round(box.cx + box.w / 2.0))
    y0 = int(round(box.cy - box.h / 2.0))
    y1 = int(round(box.cy + box.h / 2.0))
    x0, x1 = max(0, x0), min(pw, x1)
    y0, y1 = max(0, y0), min(ph, y1)
    if x1 <= x0 or y1 <= y0:
        raise ShapeMismatch("target box does not intersect the patch")

    fg_sel = np.zeros((ph, pw), dtype=bool)
    fg_sel[y0:y1, x0:x1] = True

    fg_hist = np.bincount(idx[fg_sel], minlength=n_cells_hist).astype(np.float64)
    bg_hist = np.bincount(idx[~fg_sel], minlength=n_cells_hist).astype(np.float64)
    fg_hist /= max(fg_hist.sum(), 1.0)
    bg_hist /= max(bg_hist.sum(), 1.0)

    p_fg = fg_hist[idx]
    p_bg = bg_hist[idx]
    posterior = p_fg / (p_fg + p_bg + 1e-12)
    px_mask = posterior > 0.5

    cell_frac = px_mask[: rows * cell_size, : cols * cell_size].reshape(
        rows, cell_size, cols, cell_size
    ).mean(axis=(1, 3))
    cells = cell_frac > 0.5

    center = (rows // 2, cols // 2)
    box_cells = max(1.0, (box.w / cell_size) * (box.h / cell_size))
    mask = _clean_mask(cells, center)
    area = mask.sum()
    if (
        mask is None
        or area < 0.05 * box_cells
        or area > 0.6 * rows * cols
    ):
        mask = _box_fallback_mask(rows, cols, box, cell_size)

    mask = mask.astype(np.float64)
    mask[0, :] = 0.0
    mask[-1, :] = 0.0
    mask[:, 0] = 0.0
    mask[:, -1] = 0.0
    if not mask.any():
        # border zeroing can wipe a thin fallback on tiny grids
        mask[center] = 1.0
    return mask


def _clean_mask(cells: np.ndarray, center: tuple[int, int]) -> np.ndarray:
    """Keep the closed connected component containing the center cell."""
    closed = ndimage.binary_closing(cells, structure=np.ones((3, 3), dtype=bool))
    labels, n = ndimage.label(closed, structure=np.ones((3, 3), dtype=bool))
    if n == 0 or labels[center] == 0:
        return np.zeros_like(cells)
    return labels == labels[center]


def _box_fallback_mask(rows: int, cols: int, box: BBox, cell_size: int) -> np.ndarray:
    mask = np.zeros((rows, cols), dtype=bool)
    c0 = int(np.floor((box.cx - box.w / 2.0) / cell_size))
    c1 = int(np.ceil((box.cx + box.w / 2.0) / cell_size))
    r0 = int(np.floor((box.cy - box.h / 2.0) / cell_size))
    r1 = int(np.ceil((box.cy + box.h / 2.0) / cell_size))
    mask[max(0, r0) : min(rows, r1), max(0, c0) : min(cols, c1)] = True
    if not mask.any():
        mask[rows // 2, cols // 2] = True
    return mask


def learn_filter(
    u: FeatureStack,
    m: RealGrid,
    g: RealGrid,
    p: AdmmParams,
    trace: AdmmTrace | None = None,
) -> FilterModel:
    """Fit masked per-channel filters to the label grid (see module doc).

    Channels are solved jointly in one vectorized sweep since they only
    couple through the shared mask and mu schedule. Returns uniform channel
    weights; callers rescale them via channel_weights.
    """
    feats = u.channels
    n, rows, cols = feats.shape
    if m.shape != (rows, cols):
        raise ShapeMismatch(f"mask {m.shape} does not match features {(rows, cols)}")
    if g.shape != (rows, cols):
        raise ShapeMismatch(f"label {g.shape} does not match features {(rows, cols)}")
    if not m.any():
        raise ValueError("reliability mask has no foreground cells")

    d = float(rows * cols)
    reg = p.lambda_reg / (2.0 * d)
    uhat = fft2(feats)
    ghat = fft2(g)
    power = (uhat * np.conj(uhat)).real
    m_origin = np.fft.ifftshift(m)  # filter support lives at the origin

    # zeros start: the first f_c step then divides by (|u|^2 + mu0), so
    # channels with little training energy get small gains instead of the
    # huge ones a bare ridge warm start would hand them
    f_m = np.zeros_like(uhat)
    lag = np.zeros_like(uhat)
    mu = p.mu0

    f_c = f_m
    for it in range(p.iterations):
        f_c = (uhat * np.conj(ghat)[None] + mu * f_m - lag) / (power + mu)
        spatial = m_origin[None] * (ifft2(lag + mu * f_c) / (reg + mu))
        f_m = fft2(spatial)
        lag = lag + mu * (f_c - f_m)
        if not np.isfinite(f_m).all():
            raise NumericalBlowup("filter update produced non-finite values", iteration=it)
        if trace is not None:
            trace.residuals.append(
                float(np.linalg.norm(f_c - f_m) / (np.linalg.norm(f_m) + 1e-12))
            )
            trace.objectives.append(_feasible_objective(uhat, ghat, f_m, reg))
        mu = min(mu * p.mu_scale, p.mu_max)

    residual = float(np.linalg.norm(f_c - f_m) / (np.linalg.norm(f_m) + 1e-12))
    weights = np.full(n, 1.0 / n)
    return FilterModel(
        spectra=f_m,
        mask=np.asarray(m, dtype=np.float64).copy(),
        weights=weights,
        cell_size=u.cell_size,
        residual=residual,
    )


def _feasible_objective(uhat, ghat, f_m, reg) -> float:
    """Least-squares objective at the feasible (masked) iterate.

    Evaluated at f_m rather than f_c so consecutive values are comparable:
    the augmented Lagrangian is not, since mu rescales between iterations
    and the dual ascent inflates it.
    """
    fit = np.abs(uhat * np.conj(f_m) - ghat[None]) ** 2
    return float(fit.sum() + reg * (np.abs(f_m) ** 2).sum())


def channel_weights(u: FeatureStack, f: FilterModel) -> np.ndarray:
    """Per-channel reliability: positive part of each channel's peak response,
    normalized to sum to 1 (uniform when everything is non-positive)."""
    if u.channels.shape != f.spectra.shape:
        raise ShapeMismatch(
            f"features {u.channels.shape} do not match filter {f.spectra.shape}"
        )
    resp = ifft2(fft2(u.channels) * np.conj(f.spectra))
    peaks = resp.reshape(resp.shape[0], -1).max(axis=1)
    w = np.clip(peaks, 0.0, None)
    total = w.sum()
    if total <= 0.0:
        return np.full(u.channels.shape[0], 1.0 / u.channels.shape[0])
    return w / total


def compute_response(f: FilterModel, u: FeatureStack) -> ResponseMap:
    """Weighted sum of per-channel circular correlations, via the FFT."""
    if u.channels.shape != f.spectra.shape:
        raise ShapeMismatch(
            f"features {u.channels.shape} do not match filter {f.spectra.shape}"
        )
    spec = fft2(u.channels) * np.conj(f.spectra)
    combined = np.tensordot(f.weights, spec, axes=(0, 0))
    return ResponseMap(grid=ifft2(combined), normalized=False)


def dump_model(model: FilterModel, path) -> None:
    """Serialize a FilterModel to the versioned little-endian binary layout.

    Header: magic 'OCF1', u32 version, u32 channels, u32 rows, u32 cols,
    u32 cell_size, f64 residual. Body: mask as rows*cols bytes, spectra as
    interleaved (re, im) float64 pairs channel-major, then channel weights
    as float64.
    """
    n, rows, cols = model.spectra.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIIId", _VERSION, n, rows, cols, model.cell_size, model.residual))
        fh.write(model.mask.astype(np.uint8).tobytes())
        inter = np.empty((n, rows, cols, 2), dtype="<f8")
        inter[..., 0] = model.spectra.real
        inter[..., 1] = model.spectra.imag
        fh.write(inter.tobytes())
        fh.write(model.weights.astype("<f8").tobytes())


def load_model(path) -> FilterModel:
    """Inverse of dump_model, with format validation."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a filter model file (magic {magic!r})")
        version, n, rows, cols, cell_size = struct.unpack("<IIIII", fh.read(20))
        if version != _VERSION:
            raise ValueError(f"unsupported filter model version {version}")
        (residual,) = struct.unpack("<d", fh.read(8))
        mask = np.frombuffer(fh.read(rows * cols), dtype=np.uint8)
        mask = mask.reshape(rows, cols).astype(np.float64)
        inter = np.frombuffer(fh.read(n * rows * cols * 16), dtype="<f8")
        inter = inter.reshape(n, rows, cols, 2)
        spectra = inter[..., 0] + 1j * inter[..., 1]
        weights = np.frombuffer(fh.read(n * 8), dtype="<f8").copy()
    return FilterModel(
        spectra=spectra,
        mask=mask,
        weights=weights,
        cell_size=cell_size,
        residual=residual,
    )


def blend_models(a: FilterModel, b: FilterModel, w: float) -> FilterModel:
    """Convex per-coefficient blend (1-w)*a + w*b; mask re-binarized at 0.5."""
    if a.spectra.shape != b.spectra.shape:
        raise ShapeMismatch(f"cannot blend {a.spectra.shape} with {b.spectra.shape}")
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"blend weight must be in [0, 1], got {w}")
    mask = ((1.0 - w) * a.mask + w * b.mask >= 0.5).astype(np.float64)
    return replace(
        b,
        spectra=(1.0 - w) * a.spectra + w * b.spectra,
        mask=mask,
        weights=(1.0 - w) * a.weights + w * b.weights,
        residual=b.residual,
    )
