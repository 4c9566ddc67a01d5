"""Scale estimation: a 1-D scale-pyramid filter fused with log-polar phase
correlation.

The pyramid route samples the target at a geometric ladder of sizes, scores
each sample with a learned 1-D correlation filter across the scale axis, and
reads the relative scale off the response peak. The log-polar route maps a
square patch around the target onto (log-radius, angle) axes, where pure
scaling becomes a pure shift along the log-radius axis that phase
correlation recovers directly. The two estimates are blended by a fixed
weight theta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegenerateResponse, PatchOutOfFrame, ShapeMismatch
from .features import extract_hog
from .imaging import BBox, ImageArray, RealGrid, extract_patch, resize, to_gray

_EPS = 1e-12


@dataclass
class ScaleConfig:
    """Scale-track settings: pyramid ladder, log-polar geometry, fusion."""

    theta: float = 0.2
    scale_step: float = 1.05
    n_scales: int = 17
    logpolar_rows: int = 64
    logpolar_cols: int = 64
    clamp: tuple[float, float] = (0.8, 1.25)
    scale_lr: float = 0.025
    scale_sigma_factor: float = 0.25
    scale_max_area: float = 512.0
    scale_lambda: float = 0.01
    lp_padding: float = 2.0
    lp_conf_threshold: float = 0.15
    lp_upsample: int = 4
    cell_size: int = 4
    n_bins: int = 9

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must be in [0, 1], got {self.theta}")
        if self.scale_step <= 1.0:
            raise ValueError(f"scale_step must be > 1, got {self.scale_step}")
        if self.n_scales < 1 or self.n_scales % 2 == 0:
            raise ValueError(f"n_scales must be odd and >= 1, got {self.n_scales}")
        if self.logpolar_rows < 8 or self.logpolar_cols < 8:
            raise ValueError("log-polar grid must be at least 8x8")
        lo, hi = self.clamp
        if not 0.0 < lo <= 1.0 <= hi:
            raise ValueError(f"clamp must bracket 1.0, got {self.clamp}")
        if self.lp_padding < 1.0:
            raise ValueError("lp_padding must be >= 1")
        if self.lp_upsample < 1:
            raise ValueError("lp_upsample must be >= 1")


@dataclass
class ScaleState:
    """Learned scale filter plus the last confident log-polar signature.

    The signature is sampled at the applied box, so a perfectly tracked
    zoom leaves it unchanged frame to frame and the phase shift against it
    measures only the residual scale error still to be applied.
    """

    template: tuple[int, int]  # (height, width) of the resampled scale sample
    factors: np.ndarray  # geometric ladder, length n_scales
    scale_window: np.ndarray  # 1-D Hann taper across the ladder
    label_spec: np.ndarray  # FFT of the 1-D Gaussian scale label
    num: np.ndarray | None = None  # (feature_dim, n_scales) filter numerator
    den: np.ndarray | None = None  # (n_scales,) filter denominator
    lp_reference: np.ndarray | None = field(default=None, repr=False)
    lp_log_range: float = 0.0  # ln(r_max / r_min) of the reference grid
    lp_recent: list[float] = field(default_factory=list)  # last raw estimates
    lp_anchor: np.ndarray | None = field(default=None, repr=False)
    lp_anchor_log_range: float = 0.0
    lp_init_size: float = 0.0  # max(w, h) of the box the anchor was taken at


def fuse_scale(s_d: float, s_p: float, theta: float) -> float:
    """Convex blend of the pyramid and log-polar estimates."""
    if s_d <= 0 or s_p <= 0:
        raise ValueError(f"scale estimates must be positive, got {s_d}, {s_p}")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must be in [0, 1], got {theta}")
    return theta * s_d + (1.0 - theta) * s_p


def logpolar_transform(
    patch: RealGrid, out_rows: int, out_cols: int, r_min: float = 1.0
) -> RealGrid:
    """Resample a square patch onto (log-radius, angle) axes.

    Row i holds the circle of radius r_min * (r_max/r_min)^(i/out_rows)
    around the patch center (r_max = half the patch side), column j the
    angle 2*pi*j/out_cols, sampled bilinearly with edge clamping. Scaling
    the source by s shifts the output down by
    out_rows * ln(s) / ln(r_max/r_min) rows. Keeping r_min a few pixels
    wide matters: rows near the center magnify any misalignment of the
    patch center into large radial error.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2:
        raise ShapeMismatch(f"log-polar input must be 2-D, got {patch.shape}")
    h, w = patch.shape
    r_max = min(h, w) / 2.0
    if not 0.0 < r_min < r_max:
        raise ShapeMismatch(f"need 0 < r_min < {r_max}, got {r_min}")
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    i = np.arange(out_rows).reshape(-1, 1)
    j = np.arange(out_cols).reshape(1, -1)
    radius = r_min * (r_max / r_min) ** (i / out_rows)
    angle = 2.0 * np.pi * j / out_cols
    ys = np.clip(cy + radius * np.sin(angle), 0.0, h - 1.0)
    xs = np.clip(cx + radius * np.cos(angle), 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = ys - y0
    wx = xs - x0
    top = patch[y0, x0] * (1.0 - wx) + patch[y0, x1] * wx
    bot = patch[y1, x0] * (1.0 - wx) + patch[y1, x1] * wx
    return top * (1.0 - wy) + bot * wy


def phase_correlation(
    a: RealGrid,
    b: RealGrid,
    upsample: int = 1,
    search: tuple[float, float] | None = None,
) -> tuple[tuple[float, float], float]:
    """Recover the circular shift taking a onto b, with sub-cell refinement.

    Returns ((row_shift, col_shift), confidence) where
    b approximates np.roll(a, (row_shift, col_shift)). The normalized
    cross-power spectrum is tapered by a Hann weight so the correlation
    kernel is smooth enough for a honest quadratic peak fit; confidence is
    the kernel-normalized peak height (1.0 for identical inputs).

    upsample > 1 zero-pads the spectrum before inversion, sampling the
    correlation surface on a grid that many times finer. Shifts well under
    one cell land between samples of the raw surface and a quadratic fit
    there systematically drags them toward zero; on the padded surface the
    peak is resolved instead of guessed. search = (max_dr, max_dc) limits
    the peak hunt to shifts within those bounds (in cells of the input).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"phase correlation needs equal shapes, got {a.shape} vs {b.shape}")
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise DegenerateResponse("constant input has no phase structure")
    if upsample < 1:
        raise ValueError(f"upsample must be >= 1, got {upsample}")
    rows, cols = a.shape
    fa = np.fft.fft2(a)
    fb = np.fft.fft2(b)
    cross = np.conj(fa) * fb
    cross /= np.abs(cross) + _EPS
    weight = np.fft.ifftshift(np.outer(np.hanning(rows), np.hanning(cols)))
    spec = cross * weight
    if upsample > 1:
        # the Hann taper is exactly zero at Nyquist, so centered zero
        # padding splits no bin and the inverse stays real-symmetric
        ur, uc = rows * upsample, cols * upsample
        padded = np.zeros((ur, uc), dtype=complex)
        r0, c0 = (ur - rows) // 2, (uc - cols) // 2
        padded[r0 : r0 + rows, c0 : c0 + cols] = np.fft.fftshift(spec)
        spec = np.fft.ifftshift(padded)
    else:
        ur, uc = rows, cols
    surface = np.fft.ifft2(spec).real * upsample * upsample / weight.mean()
    if search is not None:
        shift_r = np.minimum(np.arange(ur), ur - np.arange(ur)) / upsample
        shift_c = np.minimum(np.arange(uc), uc - np.arange(uc)) / upsample
        inside = (shift_r[:, None] <= search[0]) & (shift_c[None, :] <= search[1])
        if not inside.any():
            raise ValueError(f"empty search window {search}")
        flat = int(np.argmax(np.where(inside, surface, -np.inf)))
    else:
        flat = int(np.argmax(surface))
    pr, pc = flat // uc, flat % uc
    confidence = float(surface[pr, pc])

    def refine(axis: int, p: int, n: int) -> float:
        take = lambda k: surface[(k % ur, pc) if axis == 0 else (pr, k % uc)]
        vm, v0, vp = take(p - 1), take(p), take(p + 1)
        denom = vm - 2.0 * v0 + vp
        if denom >= 0.0:
            return 0.0
        return float(np.clip(0.5 * (vm - vp) / denom, -0.5, 0.5))

    dr = ((pr - ur if pr > ur // 2 else pr) + refine(0, pr, ur)) / upsample
    dc = ((pc - uc if pc > uc // 2 else pc) + refine(1, pc, uc)) / upsample
    return (dr, dc), confidence


_LP_RMIN_FRAC = 0.06  # innermost sampled radius as a fraction of r_max


def _lp_signature(frame: ImageArray, box: BBox, cfg: ScaleConfig) -> tuple[RealGrid, float]:
    """Log-polar signature of the square patch around the box.

    Returns the row-windowed signature and the log radial range
    ln(r_max/r_min), the conversion factor between row shift and log scale.
    Only the broad row Hann tapers the radial axis; any sharper radial
    weighting (a spatial disk, a hard row cut) turns into a static envelope
    in row space whose correlation peak sits at zero shift and absorbs most
    of the real drift.
    """
    side = max(8, int(round(max(box.w, box.h) * cfg.lp_padding)))
    patch = extract_patch(frame, BBox(box.cx, box.cy, side, side), 1.0)
    gray = to_gray(patch)
    # gradient magnitude localizes the drift signal on edges and mutes the
    # flat background, which otherwise votes for zero shift; the smoothing
    # fattens the ridges so the outer rows, where one row spans several
    # pixels of radius, resample them without aliasing
    gy, gx = np.gradient(gray)
    mag = ndimage.gaussian_filter(np.hypot(gy, gx), 0.5)
    mag -= mag.mean()
    r_max = min(gray.shape) / 2.0
    r_min = max(2.0, _LP_RMIN_FRAC * r_max)
    lp = logpolar_transform(mag, cfg.logpolar_rows, cfg.logpolar_cols, r_min)
    lp *= np.hanning(cfg.logpolar_rows)[:, None]
    return lp, float(np.log(r_max / r_min))


def _scale_sample(frame: ImageArray, box: BBox, factor: float, st: ScaleState, cfg: ScaleConfig) -> np.ndarray | None:
    """Feature column for one rung of the scale ladder; None when unusable."""
    sw = max(4.0, box.w * factor)
    sh = max(4.0, box.h * factor)
    try:
        patch = extract_patch(frame, BBox(box.cx, box.cy, sw, sh), 1.0)
    except PatchOutOfFrame:
        return None
    th, tw = st.template
    sample = resize(patch, tw, th)
    feats = extract_hog(sample, cfg.cell_size, cfg.n_bins)
    return feats.channels.ravel()


def _sample_stack(frame: ImageArray, box: BBox, st: ScaleState, cfg: ScaleConfig) -> tuple[np.ndarray, np.ndarray]:
    """(feature_dim, n_scales) matrix of windowed samples plus validity mask."""
    n = len(st.factors)
    columns: list[np.ndarray | None] = [
        _scale_sample(frame, box, f, st, cfg) for f in st.factors
    ]
    dim = next((c.size for c in columns if c is not None), 0)
    if dim == 0:
        raise DegenerateResponse("no usable scale sample around the target")
    stack = np.zeros((dim, n), dtype=np.float64)
    valid = np.zeros(n, dtype=bool)
    for k, col in enumerate(columns):
        if col is not None:
            stack[:, k] = col * st.scale_window[k]
            valid[k] = True
    return stack, valid


def init_scale_state(frame: ImageArray, box: BBox, cfg: ScaleConfig) -> ScaleState:
    """Learn the initial scale filter and log-polar reference around the box."""
    shrink = min(1.0, np.sqrt(cfg.scale_max_area / max(box.w * box.h, 1.0)))
    tw = max(2 * cfg.cell_size, int(round(box.w * shrink)))
    th = max(2 * cfg.cell_size, int(round(box.h * shrink)))
    n = cfg.n_scales
    mid = n // 2
    factors = cfg.scale_step ** (np.arange(n) - mid)
    window = np.hanning(n) if n > 1 else np.ones(1)
    sigma = max(np.sqrt(n) * cfg.scale_sigma_factor, 1e-3)
    label = np.exp(-0.5 * ((np.arange(n) - mid) / sigma) ** 2)
    st = ScaleState(
        template=(th, tw),
        factors=factors,
        scale_window=window,
        label_spec=np.fft.fft(label),
    )
    if n > 1:
        stack, _ = _sample_stack(frame, box, st, cfg)
        zhat = np.fft.fft(stack, axis=1)
        st.num = np.conj(st.label_spec)[None, :] * zhat
        st.den = (zhat * np.conj(zhat)).real.sum(axis=0)
    st.lp_reference, st.lp_log_range = _lp_signature(frame, box, cfg)
    st.lp_anchor = st.lp_reference
    st.lp_anchor_log_range = st.lp_log_range
    st.lp_init_size = max(box.w, box.h)
    return st


def pyramid_scale_estimate(frame: ImageArray, box: BBox, st: ScaleState, cfg: ScaleConfig) -> float:
    """Relative scale scored by the 1-D filter over the sample ladder."""
    n = len(st.factors)
    if n == 1 or st.num is None:
        return 1.0
    mid = n // 2
    stack, valid = _sample_stack(frame, box, st, cfg)
    zhat = np.fft.fft(stack, axis=1)
    spec = (np.conj(st.num) * zhat).sum(axis=0) / (st.den + cfg.scale_lambda)
    response = np.fft.ifft(spec).real
    response[~valid] = -np.inf
    k = int(np.argmax(response))
    delta = 0.0
    if 0 < k < n - 1 and np.isfinite(response[k - 1 : k + 2]).all():
        vm, v0, vp = response[k - 1 : k + 2]
        denom = vm - 2.0 * v0 + vp
        if denom < 0.0:
            delta = float(np.clip(0.5 * (vm - vp) / denom, -0.5, 0.5))
    return float(cfg.scale_step ** (k - mid + delta))


def update_scale_filter(frame: ImageArray, box: BBox, st: ScaleState, cfg: ScaleConfig) -> None:
    """Blend fresh samples at the settled box into the scale filter and
    retake the log-polar signature there (confident frames only)."""
    if st.num is not None:
        stack, _ = _sample_stack(frame, box, st, cfg)
        zhat = np.fft.fft(stack, axis=1)
        num_new = np.conj(st.label_spec)[None, :] * zhat
        den_new = (zhat * np.conj(zhat)).real.sum(axis=0)
        lr = cfg.scale_lr
        st.num = (1.0 - lr) * st.num + lr * num_new
        st.den = (1.0 - lr) * st.den + lr * den_new
    st.lp_reference, st.lp_log_range = _lp_signature(frame, box, cfg)


_ANCHOR_GAIN = 0.25  # integral gain on the long-term deficit
_ANCHOR_STEP = 0.01  # max log correction folded into one frame


def _anchor_correction(
    current: RealGrid, log_range: float, box: BBox, st: ScaleState, cfg: ScaleConfig
) -> float:
    """Integral feedback against the init-time signature.

    Frame-to-frame drift estimates are open loop: a texture-dependent bias
    of a few tenths of a percent per frame compounds into a large size
    error over a long zoom. Correlating against the first frame instead
    measures the total remaining deficit, a fraction of which is bled into
    each estimate. Only consulted once the box has grown or shrunk by 10%,
    so the static scene's false peak (sitting at minus the total growth)
    is already outside the search window."""
    if st.lp_anchor is None or st.lp_init_size <= 0:
        return 1.0
    if abs(np.log(max(box.w, box.h) / st.lp_init_size)) < np.log(1.1):
        return 1.0
    if current.shape != st.lp_anchor.shape:
        return 1.0
    if abs(log_range - st.lp_anchor_log_range) > 0.02:
        return 1.0
    max_dr = np.ceil(np.log(cfg.clamp[1]) / log_range * cfg.logpolar_rows)
    try:
        (dr, _), conf = phase_correlation(
            st.lp_anchor,
            current,
            upsample=cfg.lp_upsample,
            search=(float(max_dr), cfg.logpolar_cols / 8.0),
        )
    except DegenerateResponse:
        return 1.0
    if conf < cfg.lp_conf_threshold:
        return 1.0
    corr = _ANCHOR_GAIN * dr * log_range / cfg.logpolar_rows
    return float(np.exp(np.clip(corr, -_ANCHOR_STEP, _ANCHOR_STEP)))


def logpolar_scale_estimate(
    frame: ImageArray, box: BBox, st: ScaleState, cfg: ScaleConfig
) -> tuple[float, float]:
    """Relative scale change read off the log-radius drift since the last
    confident frame.

    Both signatures are sampled at their own box, so the drift measures the
    target's growth relative to the box and the result is the residual
    multiplier still to be applied. The radial drift over one frame sits
    well inside one row, hence the upsampled, search-bounded correlation.
    Falls back to 1.0 below the confidence threshold. The returned value is
    the median of the last three raw estimates (kept on the state): a wrong
    peak pick lands a full row off at healthy confidence, and a lone such
    impulse must not reach the box."""
    if st.lp_reference is None:
        return 1.0, 0.0
    current, _ = _lp_signature(frame, box, cfg)
    if current.shape != st.lp_reference.shape:
        return 1.0, 0.0
    log_range = max(st.lp_log_range, _EPS)
    # per-frame change is clamp-bounded, so the true peak lives within this
    # many rows of zero; wider peaks are background texture, not scale
    max_dr = np.ceil(np.log(cfg.clamp[1]) / log_range * cfg.logpolar_rows)
    try:
        (dr, _), conf = phase_correlation(
            st.lp_reference,
            current,
            upsample=cfg.lp_upsample,
            search=(float(max_dr), cfg.logpolar_cols / 8.0),
        )
    except DegenerateResponse:
        return 1.0, 0.0
    if conf < cfg.lp_conf_threshold:
        return 1.0, conf
    raw = float(np.exp(dr * log_range / cfg.logpolar_rows))
    # trust at most one pyramid rung of change per frame: residual drift is
    # a small correction by construction, anything larger is a bad peak
    raw = float(np.clip(raw, 1.0 / cfg.scale_step, cfg.scale_step))
    raw *= _anchor_correction(current, log_range, box, st, cfg)
    st.lp_recent.append(raw)
    del st.lp_recent[:-3]
    s_p = float(np.median(st.lp_recent))
    lo, hi = cfg.clamp
    return float(np.clip(s_p, lo, hi)), conf
