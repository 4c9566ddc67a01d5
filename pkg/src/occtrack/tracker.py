"""Occlusion-aware tracking loop built on masked correlation filters.

Two filters run side by side. The tracking filter f_t adapts on every
confidently tracked frame. The occlusion filter d_t is a convex blend
between the initial clean filter f_0 and f_t whose mixing weight
xi = exp(-alpha_d * delta_t^2) decays with the number of frames spent
occluded, so short occlusions lean on the recent appearance while long ones
fall back toward the pristine one. A sharp drop of the response quality
below its running mean (ratio > phi) flags occlusion; while flagged, f_t is
frozen, the better-scoring filter localizes, and when both filters distrust
their responses the whole state freezes in place until one recovers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from . import dcf, scale as scale_mod
from .dcf import AdmmParams, FilterModel
from .errors import DegenerateResponse, InitFailed, TrackError
from .features import FeatureParams, FeatureStack, assemble, extract_colornames, extract_hog
from .imaging import BBox, ImageArray, cosine_window, extract_patch, gaussian_label, resize
from .quality import (
    QualityHistory,
    QualityParams,
    ResponseMap,
    normalize_response,
    occlusion_trigger,
    q_measure,
)
from .scale import ScaleConfig, ScaleState


@dataclass
class TrackerConfig:
    """Everything the tracker needs, grouped by subsystem."""

    eta: float = 0.02
    alpha_d: float = 0.05
    occlusion_handling: bool = True
    redetect_after: int = 0  # frozen frames before the search widens; 0 = off
    redetect_zoom: float = 1.5
    template_cap: int = 256  # longest template side in pixels
    features: FeatureParams = field(default_factory=FeatureParams)
    quality: QualityParams = field(default_factory=QualityParams)
    admm: AdmmParams = field(default_factory=AdmmParams)
    admm_init_iterations: int = 4
    scale: ScaleConfig = field(default_factory=ScaleConfig)

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.alpha_d <= 0:
            raise ValueError(f"alpha_d must be positive, got {self.alpha_d}")
        if self.admm_init_iterations < 1:
            raise ValueError("admm_init_iterations must be >= 1")
        if self.redetect_after < 0:
            raise ValueError("redetect_after must be >= 0")
        if self.redetect_zoom < 1.0:
            raise ValueError("redetect_zoom must be >= 1")


@dataclass
class FrameDiagnostics:
    """Per-frame record of what the tracker saw and decided."""

    frame: int
    box: BBox
    active: Literal["f", "d", "frozen"]
    q_f: float | None = None
    big_q_f: float | None = None
    q_d: float | None = None
    big_q_d: float | None = None
    mean_q_f: float | None = None
    mean_q_d: float | None = None
    trigger_f: bool = False
    trigger_d: bool | None = None
    delta_t: int = 0
    xi: float = 1.0
    scale: float = 1.0
    s_d: float | None = None
    s_p: float | None = None
    s_fused: float | None = None
    lp_conf: float | None = None
    degenerate: bool = False
    error: str | None = None

    def to_json(self) -> str:
        x, y, w, h = self.box.as_topleft_tuple()
        rec = {
            "frame": self.frame,
            "box": [x, y, w, h],
            "active": self.active,
            "q_f": self.q_f,
            "Q_f": self.big_q_f,
            "q_d": self.q_d,
            "Q_d": self.big_q_d,
            "Qbar_f": self.mean_q_f,
            "Qbar_d": self.mean_q_d,
            "trigger_f": self.trigger_f,
            "trigger_d": self.trigger_d,
            "delta_t": self.delta_t,
            "xi": self.xi,
            "scale": self.scale,
            "S_d": self.s_d,
            "S_p": self.s_p,
            "S": self.s_fused,
            "lp_conf": self.lp_conf,
            "degenerate": self.degenerate,
            "error": self.error,
        }
        return json.dumps(rec)


@dataclass
class TrackerState:
    """Mutable tracker state threaded through step()."""

    cfg: TrackerConfig
    pos: BBox
    base_size: tuple[float, float]
    scale: float
    template: tuple[int, int]  # (height, width) in pixels
    window: np.ndarray
    label: np.ndarray
    mask_box: BBox  # target box in template coordinates
    f_t: FilterModel
    f_0: FilterModel
    d_t: FilterModel
    scale_state: ScaleState
    hist_f: QualityHistory
    hist_d: QualityHistory
    use_colornames: bool
    delta_t: int = 0
    occluded: bool = False
    frozen_streak: int = 0
    frame_index: int = 0


def mixing_weight(delta_t: int, alpha_d: float) -> float:
    """Occlusion-filter blend weight exp(-alpha_d * delta_t^2)."""
    if delta_t < 0:
        raise ValueError(f"delta_t must be >= 0, got {delta_t}")
    return math.exp(-alpha_d * float(delta_t) ** 2)


def update_tracking_filter(f_prev: FilterModel, f_new: FilterModel, eta: float) -> FilterModel:
    """Running-average filter update (1 - eta) * f_prev + eta * f_new."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    return dcf.blend_models(f_prev, f_new, eta)


def build_occlusion_filter(
    f_0: FilterModel, f_t: FilterModel, delta_t: int, alpha_d: float
) -> FilterModel:
    """Blend toward the pristine filter as the occlusion lasts longer."""
    xi = mixing_weight(delta_t, alpha_d)
    return dcf.blend_models(f_0, f_t, xi)


def select_model(q_f: float, q_d: float) -> Literal["f", "d"]:
    """Pick the filter whose response quality is higher; ties keep 'f'."""
    return "d" if q_d > q_f else "f"


def _extract_stack(
    state: TrackerState, frame: ImageArray, box: BBox, zoom: float = 1.0
) -> tuple[FeatureStack, float, float]:
    """Windowed feature stack at the box, plus patch->template pixel ratios."""
    cfg = state.cfg.features
    patch = extract_patch(frame, box, cfg.padding_factor * zoom)
    th, tw = state.template
    ratio_y = patch.shape[0] / th
    ratio_x = patch.shape[1] / tw
    patch = resize(patch, tw, th)
    if state.use_colornames and patch.ndim == 2:
        patch = np.repeat(patch[:, :, None], 3, axis=2)
    hog = extract_hog(patch, cfg.cell_size, cfg.n_bins)
    cn = extract_colornames(patch, cfg.cell_size) if state.use_colornames else None
    stack = assemble(hog, cn, state.window)
    stack.origin_box = box
    return stack, ratio_y, ratio_x


def _resized_patch(state: TrackerState, frame: ImageArray, box: BBox) -> ImageArray:
    patch = extract_patch(frame, box, state.cfg.features.padding_factor)
    th, tw = state.template
    return resize(patch, tw, th)


def _score(r: ResponseMap, params: QualityParams) -> tuple[float, float, bool]:
    """(q, Q, degenerate) for a raw response map; degenerate maps score 0."""
    try:
        norm = normalize_response(r)
        q = q_measure(norm, params)
        raw_peak = norm.raw_peak if norm.raw_peak is not None else norm.peak_val
        return q, q * raw_peak, False
    except DegenerateResponse:
        return 0.0, 0.0, True


def _peak_displacement(
    r: ResponseMap, cell_size: int, ratio_y: float, ratio_x: float
) -> tuple[float, float]:
    """Pixel displacement of the response peak from the grid center, with
    one-cell parabolic refinement (cyclic neighbors)."""
    grid = r.grid
    rows, cols = grid.shape
    pi, pj = r.peak_loc

    def refine(vm: float, v0: float, vp: float) -> float:
        denom = vm - 2.0 * v0 + vp
        if denom >= 0.0:
            return 0.0
        return float(np.clip(0.5 * (vm - vp) / denom, -0.5, 0.5))

    dr = pi - rows // 2 + refine(grid[(pi - 1) % rows, pj], grid[pi, pj], grid[(pi + 1) % rows, pj])
    dc = pj - cols // 2 + refine(grid[pi, (pj - 1) % cols], grid[pi, pj], grid[pi, (pj + 1) % cols])
    return dr * cell_size * ratio_y, dc * cell_size * ratio_x


def _relearn(state: TrackerState, frame: ImageArray, box: BBox) -> FilterModel:
    """Learn a fresh filter at the settled box (update-strength iterations)."""
    stack, _, _ = _extract_stack(state, frame, box)
    patch = _resized_patch(state, frame, box)
    mask = dcf.compute_spatial_mask(patch, state.mask_box, state.cfg.features.cell_size)
    model = dcf.learn_filter(stack, mask, state.label, state.cfg.admm)
    weights = dcf.channel_weights(stack, model)
    return replace(model, weights=weights)


def _clamp_center(frame: ImageArray, box: BBox) -> BBox:
    h, w = frame.shape[:2]
    cx = float(np.clip(box.cx, 0.0, w - 1.0))
    cy = float(np.clip(box.cy, 0.0, h - 1.0))
    return BBox(cx, cy, box.w, box.h)


def init(frame: ImageArray, box: BBox, cfg: TrackerConfig | None = None) -> TrackerState:
    """Build tracker state from the first frame and its target box."""
    cfg = cfg if cfg is not None else TrackerConfig()
    feats = cfg.features
    h, w = frame.shape[:2]
    if box.w < 2 * feats.cell_size or box.h < 2 * feats.cell_size:
        raise InitFailed(f"target {box.w}x{box.h} smaller than two feature cells")

    raw_w = box.w * feats.padding_factor
    raw_h = box.h * feats.padding_factor
    shrink = min(1.0, cfg.template_cap / max(raw_w, raw_h))
    cell = feats.cell_size
    tw = max(3, int(round(raw_w * shrink / cell))) * cell
    th = max(3, int(round(raw_h * shrink / cell))) * cell
    grid = (th // cell, tw // cell)

    target_cells_w = tw / (feats.padding_factor * cell)
    target_cells_h = th / (feats.padding_factor * cell)
    sigma = math.sqrt(target_cells_w * target_cells_h) * feats.label_sigma_scale
    label = gaussian_label(grid[0], grid[1], sigma)
    window = cosine_window(grid[0], grid[1])
    mask_box = BBox(tw / 2.0, th / 2.0, tw / feats.padding_factor, th / feats.padding_factor)

    use_cn = feats.use_colornames
    state = TrackerState(
        cfg=cfg,
        pos=_clamp_center(frame, box),
        base_size=(box.w, box.h),
        scale=1.0,
        template=(th, tw),
        window=window,
        label=label,
        mask_box=mask_box,
        f_t=None,  # type: ignore[arg-type]  # filled below
        f_0=None,  # type: ignore[arg-type]
        d_t=None,  # type: ignore[arg-type]
        scale_state=None,  # type: ignore[arg-type]
        hist_f=QualityHistory(cfg.quality.n_q),
        hist_d=QualityHistory(cfg.quality.n_q),
        use_colornames=use_cn,
    )

    try:
        stack, _, _ = _extract_stack(state, frame, state.pos)
    except TrackError as exc:
        raise InitFailed(f"feature extraction failed at init: {exc}") from exc
    patch = _resized_patch(state, frame, state.pos)
    # color-name channels are nonzero even on a constant patch, so check the
    # pixels too: zero variation means there is nothing to localize
    if not np.any(stack.channels) or np.ptp(patch) == 0:
        raise InitFailed("featureless target patch")
    mask = dcf.compute_spatial_mask(patch, mask_box, cell)
    admm_init = replace(cfg.admm, iterations=cfg.admm_init_iterations)
    model = dcf.learn_filter(stack, mask, label, admm_init)
    weights = dcf.channel_weights(stack, model)
    model = replace(model, weights=weights)

    state.f_t = model
    state.f_0 = model
    state.d_t = model
    state.scale_state = scale_mod.init_scale_state(frame, state.pos, cfg.scale)
    return state


def step(state: TrackerState, frame: ImageArray) -> tuple[TrackerState, BBox, FrameDiagnostics]:
    """Advance one frame; returns the updated state, box, and diagnostics.

    Any TrackError inside the frame freezes the box for this frame and is
    reported through the diagnostics record instead of raised.
    """
    state.frame_index += 1
    try:
        return _step_inner(state, frame)
    except TrackError as exc:
        diag = FrameDiagnostics(
            frame=state.frame_index,
            box=state.pos,
            active="frozen",
            delta_t=state.delta_t,
            xi=mixing_weight(state.delta_t, state.cfg.alpha_d),
            scale=state.scale,
            error=str(exc),
        )
        return state, state.pos, diag


def _step_inner(state, frame):
    cfg = state.cfg
    qp = cfg.quality
    zoom = 1.0
    if cfg.redetect_after > 0 and state.frozen_streak >= cfg.redetect_after:
        zoom = cfg.redetect_zoom

    stack, ratio_y, ratio_x = _extract_stack(state, frame, state.pos, zoom)
    r_f = dcf.compute_response(state.f_t, stack)
    q_f, big_q_f, degen_f = _score(r_f, qp)
    trigger_f = (big_q_f <= 0.0) or occlusion_trigger(state.hist_f, big_q_f, qp.phi)

    diag = FrameDiagnostics(
        frame=state.frame_index,
        box=state.pos,
        active="f",
        q_f=q_f,
        big_q_f=big_q_f,
        mean_q_f=state.hist_f.mean() if len(state.hist_f) else None,
        trigger_f=trigger_f,
        delta_t=state.delta_t,
        scale=state.scale,
        degenerate=degen_f,
    )

    if not cfg.occlusion_handling:
        _confident_update(state, frame, stack, r_f, big_q_f, ratio_y, ratio_x, diag)
        return state, state.pos, diag

    if not state.occluded:
        if not trigger_f:
            _confident_update(state, frame, stack, r_f, big_q_f, ratio_y, ratio_x, diag)
            return state, state.pos, diag
        # quality collapsed: enter occlusion and hand over to the blend filter
        state.occluded = True
        state.delta_t = 1
        state.d_t = build_occlusion_filter(state.f_0, state.f_t, state.delta_t, cfg.alpha_d)
        # anchor the blend filter's trigger at the healthy quality level;
        # without this its history would hold only occlusion-time values and
        # its trigger could never fire, so the freeze would never engage
        state.hist_d.clear()
        for v in state.hist_f.values():
            state.hist_d.push(v)
        r_d = dcf.compute_response(state.d_t, stack)
        q_d, big_q_d, degen_d = _score(r_d, qp)
        choice = select_model(big_q_f, big_q_d)
        chosen = r_d if choice == "d" else r_f
        dy, dx = _peak_displacement(chosen, cfg.features.cell_size, ratio_y, ratio_x)
        state.pos = _clamp_center(frame, state.pos.moved(dx, dy))
        state.frozen_streak = 0
        diag.active = choice
        diag.q_d, diag.big_q_d, diag.degenerate = q_d, big_q_d, diag.degenerate or degen_d
        diag.trigger_d = False
        diag.delta_t = state.delta_t
        diag.xi = mixing_weight(state.delta_t, cfg.alpha_d)
        diag.box = state.pos
        return state, state.pos, diag

    # occluded on entry: the occlusion filter gets a vote
    r_d = dcf.compute_response(state.d_t, stack)
    q_d, big_q_d, degen_d = _score(r_d, qp)
    trigger_d = (big_q_d <= 0.0) or occlusion_trigger(state.hist_d, big_q_d, qp.phi)
    diag.q_d, diag.big_q_d = q_d, big_q_d
    diag.mean_q_d = state.hist_d.mean() if len(state.hist_d) else None
    diag.trigger_d = trigger_d
    diag.degenerate = diag.degenerate or degen_d

    if trigger_f and trigger_d:
        # neither filter trusts its response: freeze everything
        state.delta_t += 1
        state.frozen_streak += 1
        diag.active = "frozen"
        diag.delta_t = state.delta_t
        diag.xi = mixing_weight(state.delta_t, cfg.alpha_d)
        return state, state.pos, diag

    choice = select_model(big_q_f, big_q_d)
    chosen = r_d if choice == "d" else r_f
    dy, dx = _peak_displacement(chosen, cfg.features.cell_size, ratio_y, ratio_x)
    state.pos = _clamp_center(frame, state.pos.moved(dx, dy))
    state.frozen_streak = 0
    diag.active = choice

    if not trigger_f:
        # tracking filter recovered: leave occlusion and resume adaptation
        _apply_scale(state, frame, diag)
        f_new = _relearn(state, frame, state.pos)
        state.f_t = update_tracking_filter(state.f_t, f_new, cfg.eta)
        state.occluded = False
        state.delta_t = 0
        state.d_t = state.f_t
        state.hist_f.push(big_q_f)
        state.hist_d.clear()
        diag.delta_t = 0
        diag.xi = 1.0
        diag.scale = state.scale
        diag.box = state.pos
        return state, state.pos, diag

    # still occluded: keep following the blend filter while it stays credible
    state.delta_t += 1
    state.d_t = build_occlusion_filter(state.f_0, state.f_t, state.delta_t, cfg.alpha_d)
    if not trigger_d:
        state.hist_d.push(big_q_d)
    diag.delta_t = state.delta_t
    diag.xi = mixing_weight(state.delta_t, cfg.alpha_d)
    diag.box = state.pos
    return state, state.pos, diag


def _confident_update(state, frame, stack, r_f, big_q_f, ratio_y, ratio_x, diag):
    """Shared step-3 body: move, rescale, relearn, push history."""
    cfg = state.cfg
    dy, dx = _peak_displacement(r_f, cfg.features.cell_size, ratio_y, ratio_x)
    state.pos = _clamp_center(frame, state.pos.moved(dx, dy))
    _apply_scale(state, frame, diag)
    f_new = _relearn(state, frame, state.pos)
    state.f_t = update_tracking_filter(state.f_t, f_new, cfg.eta)
    state.occluded = False
    state.delta_t = 0
    state.d_t = state.f_t
    state.hist_f.push(big_q_f)
    state.frozen_streak = 0
    diag.active = "f"
    diag.delta_t = 0
    diag.xi = 1.0
    diag.scale = state.scale
    diag.box = state.pos


def _apply_scale(state, frame, diag):
    """Estimate, fuse, clamp, and apply the per-frame scale change."""
    cfg = state.cfg
    s_d = scale_mod.pyramid_scale_estimate(frame, state.pos, state.scale_state, cfg.scale)
    s_p, lp_conf = scale_mod.logpolar_scale_estimate(frame, state.pos, state.scale_state, cfg.scale)
    s = scale_mod.fuse_scale(s_d, s_p, cfg.scale.theta)
    lo, hi = cfg.scale.clamp
    s = float(np.clip(s, lo, hi))

    w0, h0 = state.base_size
    fh, fw = frame.shape[:2]
    new_scale = state.scale * s
    min_scale = 8.0 / min(w0, h0)
    max_scale = min(fw / w0, fh / h0)
    new_scale = float(np.clip(new_scale, min(min_scale, 1.0), max(max_scale, 1.0)))

    state.scale = new_scale
    state.pos = BBox(state.pos.cx, state.pos.cy, w0 * new_scale, h0 * new_scale)
    scale_mod.update_scale_filter(frame, state.pos, state.scale_state, cfg.scale)
    diag.s_d, diag.s_p, diag.s_fused, diag.lp_conf = s_d, s_p, s, lp_conf
