"""Sequence I/O, synthetic-sequence generation, tracker runs, and metrics.

Sequence directories follow the common layout::

    <dir>/img/0001.png ...          frames, zero-padded, sorted
    <dir>/groundtruth_rect.txt      one "x,y,w,h" line per frame (top-left)
    <dir>/occlusion.txt             optional "frame,overlap" lines

Synthetic sequences are rendered deterministically from a SynthSpec and a
seed: a textured rectangle translating (and optionally zooming) over a
static textured background, optionally swept over by a distinctly textured
occluder whose exact per-frame overlap fraction is recorded.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as _PILImage, ImageDraw as _PILImageDraw

from .errors import BadSpec, ShapeMismatch, TrackError
from .imaging import BBox, ImageArray, load_image, resize, save_image
from .tracker import FrameDiagnostics, TrackerConfig, init, step

_IMG_EXTS = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class Sequence:
    """Frames plus ground truth; frames are held in memory or loaded lazily."""

    name: str
    gt: list  # list[BBox | None], at least gt[0] present
    frames: list | None = None  # list[np.ndarray] when in memory
    paths: list | None = None  # list[Path] when on disk
    occlusion_schedule: list | None = None  # list[(frame, overlap fraction)]

    def __post_init__(self):
        if (self.frames is None) == (self.paths is None):
            raise ValueError("exactly one of frames/paths must be set")
        if len(self.gt) != len(self):
            raise ShapeMismatch(
                f"{len(self.gt)} ground-truth boxes for {len(self)} frames"
            )
        if not self.gt or self.gt[0] is None:
            raise ValueError("sequence needs a ground-truth box for frame 0")

    def __len__(self) -> int:
        return len(self.frames) if self.frames is not None else len(self.paths)

    def frame(self, i: int) -> ImageArray:
        if self.frames is not None:
            return self.frames[i]
        return load_image(self.paths[i])

    def overlap_at(self, i: int) -> float:
        if not self.occlusion_schedule:
            return 0.0
        for f, ov in self.occlusion_schedule:
            if f == i:
                return ov
        return 0.0


def load_sequence(seq_dir) -> Sequence:
    """Read a sequence directory; raises TrackError with file/line context."""
    seq_dir = Path(seq_dir)
    img_dir = seq_dir / "img"
    if not img_dir.is_dir():
        raise TrackError(f"{seq_dir} has no img/ directory")
    paths = sorted(p for p in img_dir.iterdir() if p.suffix.lower() in _IMG_EXTS)
    if not paths:
        raise TrackError(f"{img_dir} contains no image files")

    gt_path = seq_dir / "groundtruth_rect.txt"
    if not gt_path.is_file():
        raise TrackError(f"missing {gt_path}")
    gt: list = []
    for ln, line in enumerate(gt_path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            x, y, w, h = (float(v) for v in line.replace("\t", ",").split(","))
            gt.append(BBox.from_topleft(x, y, w, h))
        except (ValueError, TypeError) as exc:
            raise TrackError(f"{gt_path}:{ln}: cannot parse box from {line!r}") from exc
    if not gt:
        raise TrackError(f"{gt_path} contains no boxes")
    # pad with None when annotation stops early
    gt.extend([None] * (len(paths) - len(gt)))
    if len(gt) > len(paths):
        raise TrackError(
            f"{gt_path} has {len(gt)} boxes for only {len(paths)} frames"
        )

    schedule = None
    occ_path = seq_dir / "occlusion.txt"
    if occ_path.is_file():
        schedule = []
        for ln, line in enumerate(occ_path.read_text().splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                f, ov = line.split(",")
                schedule.append((int(f), float(ov)))
            except (ValueError, TypeError) as exc:
                raise TrackError(f"{occ_path}:{ln}: cannot parse {line!r}") from exc
    return Sequence(name=seq_dir.name, gt=gt, paths=paths, occlusion_schedule=schedule)


def save_sequence(seq: Sequence, out_dir) -> None:
    """Write frames, ground truth, and any occlusion schedule to disk."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "img"
    img_dir.mkdir(parents=True, exist_ok=True)
    for i in range(len(seq)):
        save_image(img_dir / f"{i + 1:04d}.png", seq.frame(i))
    lines = []
    for box in seq.gt:
        if box is None:
            break
        x, y, w, h = box.as_topleft_tuple()
        lines.append(f"{x:.2f},{y:.2f},{w:.2f},{h:.2f}")
    (out_dir / "groundtruth_rect.txt").write_text("\n".join(lines) + "\n")
    if seq.occlusion_schedule:
        occ = "\n".join(f"{f},{ov:.4f}" for f, ov in seq.occlusion_schedule)
        (out_dir / "occlusion.txt").write_text(occ + "\n")


@dataclass
class SynthSpec:
    """Script for one synthetic sequence."""

    width: int = 320
    height: int = 240
    n_frames: int = 100
    target_w: int = 40
    target_h: int = 40
    start_x: float | None = None  # target center; defaults to width/3
    start_y: float | None = None  # defaults to height/2
    vx: float = 0.5
    vy: float = 0.0
    zoom: float = 1.0  # per-frame target growth factor
    occluder: bool = False
    occ_start: int = 40
    occ_end: int = 60
    occluder_scale: float = 1.6
    noise: float = 2.0  # additive pixel noise sigma

    def __post_init__(self):
        if self.width < 128 or self.height < 128:
            raise BadSpec(f"frame {self.width}x{self.height} below the 128px minimum")
        if self.target_w < 24 or self.target_h < 24:
            raise BadSpec(f"target {self.target_w}x{self.target_h} below the 24px minimum")
        if not 10 <= self.n_frames <= 500:
            raise BadSpec(f"n_frames must be in [10, 500], got {self.n_frames}")
        if self.zoom <= 0:
            raise BadSpec("zoom must be positive")
        if self.occluder and not 0 <= self.occ_start < self.occ_end < self.n_frames:
            raise BadSpec(
                f"occlusion window [{self.occ_start}, {self.occ_end}] does not fit "
                f"{self.n_frames} frames"
            )
        max_growth = self.zoom ** (self.n_frames - 1)
        if self.target_w * max_growth > self.width * 0.9 or (
            self.target_h * max_growth > self.height * 0.9
        ):
            raise BadSpec("zoomed target would outgrow the frame")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(d) - known
        if bad:
            raise BadSpec(f"unknown synthetic-spec keys: {sorted(bad)}")
        kwargs = {}
        for k, v in d.items():
            f = cls.__dataclass_fields__[k]
            if f.type in ("int", "int | None"):
                kwargs[k] = int(float(v))
            elif f.type == "bool":
                kwargs[k] = str(v).strip().lower() in ("1", "true", "yes", "on")
            else:
                kwargs[k] = float(v)
        return cls(**kwargs)


def _block_texture(rng, h, w, block, lo, hi) -> np.ndarray:
    """Coarse random blocks upscaled bilinearly; strong gradients, 3 channels."""
    gh = max(2, h // block)
    gw = max(2, w // block)
    coarse = rng.uniform(0, 1, size=(gh, gw, 3))
    tex = resize((coarse * 255).astype(np.uint8), w, h).astype(np.float64) / 255.0
    return lo + tex * (hi - lo)


def _overlap_fraction(a: BBox, b: BBox) -> float:
    ax0, ay0 = a.topleft()
    bx0, by0 = b.topleft()
    ix = max(0.0, min(ax0 + a.w, bx0 + b.w) - max(ax0, bx0))
    iy = max(0.0, min(ay0 + a.h, by0 + b.h) - max(ay0, by0))
    return (ix * iy) / a.area


def synth_sequence(spec: SynthSpec, seed: int) -> Sequence:
    """Render the scripted sequence; identical for identical (spec, seed)."""
    rng = np.random.default_rng(seed)
    w, h = spec.width, spec.height
    # greenish background with only coarse, low-contrast structure so the
    # finely textured warm target is the one thing worth correlating with
    background = _block_texture(rng, h, w, 64, np.array([55, 85, 60]), np.array([80, 110, 85]))
    background = np.clip(background + rng.normal(0, 3, background.shape), 0, 255)

    master_scale = 4
    target_master = _block_texture(
        rng,
        spec.target_h * master_scale,
        spec.target_w * master_scale,
        master_scale * max(4, spec.target_w // 6),
        np.array([150, 40, 25]),
        np.array([255, 130, 80]),
    ).astype(np.uint8)

    ow = int(round(spec.target_w * spec.occluder_scale))
    oh = int(round(spec.target_h * spec.occluder_scale))
    # flat blue slab: featureless interior (only sensor noise) and a color
    # the warm-toned target never shows, so the filter has nothing to latch on
    occ_tex = np.full((oh, ow, 3), (60, 110, 200), dtype=np.uint8)

    x0 = spec.start_x if spec.start_x is not None else w / 3.0
    y0 = spec.start_y if spec.start_y is not None else h / 2.0

    def target_center(t: int) -> tuple[float, float]:
        tw = spec.target_w * spec.zoom**t
        th = spec.target_h * spec.zoom**t
        cx = np.clip(x0 + spec.vx * t, tw / 2 + 2, w - tw / 2 - 2)
        cy = np.clip(y0 + spec.vy * t, th / 2 + 2, h - th / 2 - 2)
        return float(cx), float(cy)

    # occluder path: aligned with the target column, sweeping top to bottom so
    # overlap is positive exactly inside [occ_start, occ_end]
    if spec.occluder:
        sy0 = target_center(spec.occ_start)[1] - spec.target_h / 2 - oh / 2 + 2
        sy1 = target_center(spec.occ_end)[1] + spec.target_h / 2 + oh / 2 - 2

    frames = []
    gt = []
    schedule = []
    for t in range(spec.n_frames):
        canvas = background.copy()
        cx, cy = target_center(t)
        tw = max(8, int(round(spec.target_w * spec.zoom**t)))
        th = max(8, int(round(spec.target_h * spec.zoom**t)))
        sprite = resize(target_master, tw, th)
        tx = int(round(cx - tw / 2.0))
        ty = int(round(cy - th / 2.0))
        canvas[ty : ty + th, tx : tx + tw] = sprite
        tbox = BBox.from_topleft(tx, ty, tw, th)
        gt.append(tbox)

        if spec.occluder:
            span = max(1, spec.occ_end - spec.occ_start)
            oy = sy0 + (sy1 - sy0) * (t - spec.occ_start) / span
            ox = cx
            obox = BBox(float(ox), float(oy), ow, oh)
            ox0 = int(round(obox.cx - ow / 2.0))
            oy0 = int(round(obox.cy - oh / 2.0))
            vx0, vx1 = max(0, ox0), min(w, ox0 + ow)
            vy0, vy1 = max(0, oy0), min(h, oy0 + oh)
            if vx1 > vx0 and vy1 > vy0:
                canvas[vy0:vy1, vx0:vx1] = occ_tex[
                    vy0 - oy0 : vy1 - oy0, vx0 - ox0 : vx1 - ox0
                ]
            drawn = BBox.from_topleft(ox0, oy0, ow, oh)
            ov = _overlap_fraction(tbox, drawn)
            if ov > 0:
                schedule.append((t, float(ov)))

        noisy = np.clip(canvas + rng.normal(0, spec.noise, canvas.shape), 0, 255)
        frames.append(noisy.astype(np.uint8))

    return Sequence(
        name=f"synth-{seed}",
        gt=gt,
        frames=frames,
        occlusion_schedule=schedule or None,
    )


@dataclass
class RunResult:
    """Trajectory plus diagnostics from one tracker run."""

    trajectory: list  # list[BBox], one per frame (frame 0 = ground truth)
    diagnostics: list  # list[FrameDiagnostics], one per stepped frame
    fps: float


def run_tracker(seq: Sequence, cfg: TrackerConfig | None = None) -> RunResult:
    """Initialize on frame 0's ground truth and step through the sequence."""
    state = init(seq.frame(0), seq.gt[0], cfg)
    trajectory = [state.pos]
    diagnostics: list[FrameDiagnostics] = []
    start = time.perf_counter()
    for i in range(1, len(seq)):
        state, box, diag = step(state, seq.frame(i))
        trajectory.append(box)
        diagnostics.append(diag)
    elapsed = time.perf_counter() - start
    stepped = max(len(seq) - 1, 1)
    return RunResult(
        trajectory=trajectory,
        diagnostics=diagnostics,
        fps=stepped / elapsed if elapsed > 0 else float("inf"),
    )


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes."""
    ax0, ay0 = a.topleft()
    bx0, by0 = b.topleft()
    ix = max(0.0, min(ax0 + a.w, bx0 + b.w) - max(ax0, bx0))
    iy = max(0.0, min(ay0 + a.h, by0 + b.h) - max(ay0, by0))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


@dataclass
class EvalReport:
    """Standard tracking metrics for one run."""

    ious: list
    success_curve: np.ndarray  # fraction of frames with IoU > t, 101 thresholds
    auc: float
    precision_20px: float
    occlusion_intervals: list = field(default_factory=list)
    fps: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "mean_iou": float(np.mean(self.ious)) if self.ious else 0.0,
            "auc": self.auc,
            "precision_20px": self.precision_20px,
            "success_curve": [float(v) for v in self.success_curve],
            "occlusion_intervals": self.occlusion_intervals,
            "fps": self.fps,
            "ious": [float(v) for v in self.ious],
        }

    def format_table(self) -> str:
        rows = [
            ("frames", str(len(self.ious))),
            ("mean IoU", f"{np.mean(self.ious):.4f}" if self.ious else "n/a"),
            ("AUC", f"{self.auc:.4f}"),
            ("precision@20px", f"{self.precision_20px:.4f}"),
        ]
        if self.fps is not None:
            rows.append(("fps", f"{self.fps:.1f}"))
        if self.occlusion_intervals:
            spans = ", ".join(f"[{s}..{e}]" for s, e in self.occlusion_intervals)
            rows.append(("occluded spans", spans))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def evaluate(
    trajectory: list,
    gt: list,
    diagnostics: list | None = None,
    fps: float | None = None,
) -> EvalReport:
    """Score a trajectory against ground truth (frames with annotations)."""
    if len(trajectory) != len(gt):
        raise ShapeMismatch(
            f"trajectory has {len(trajectory)} boxes, ground truth {len(gt)}"
        )
    ious = []
    dists = []
    for pred, ref in zip(trajectory, gt):
        if ref is None:
            continue
        ious.append(iou(pred, ref))
        dists.append(float(np.hypot(pred.cx - ref.cx, pred.cy - ref.cy)))
    ious_arr = np.array(ious) if ious else np.zeros(0)
    thresholds = np.linspace(0.0, 1.0, 101)
    curve = (
        (ious_arr[None, :] > thresholds[:, None]).mean(axis=1)
        if ious
        else np.zeros(101)
    )
    precision = float(np.mean(np.array(dists) < 20.0)) if dists else 0.0

    intervals = []
    if diagnostics:
        run_start = None
        for d in diagnostics:
            if d.delta_t > 0 and run_start is None:
                run_start = d.frame
            elif d.delta_t == 0 and run_start is not None:
                intervals.append((run_start, d.frame - 1))
                run_start = None
        if run_start is not None:
            intervals.append((run_start, diagnostics[-1].frame))

    return EvalReport(
        ious=[float(v) for v in ious],
        success_curve=curve,
        auc=float(curve.mean()),
        precision_20px=precision,
        occlusion_intervals=intervals,
        fps=fps,
    )


def recovery_score(seq: Sequence, report: EvalReport) -> float:
    """Mean IoU over the frames after the occlusion ends (whole run if none)."""
    if seq.occlusion_schedule:
        last = max(f for f, _ in seq.occlusion_schedule)
        tail = report.ious[last + 1 :]
        return float(np.mean(tail)) if tail else 0.0
    return float(np.mean(report.ious)) if report.ious else 0.0


def write_trajectory(trajectory: list, path) -> None:
    """One x,y,w,h line per frame, same convention as groundtruth_rect.txt."""
    lines = []
    for box in trajectory:
        x, y, w, h = box.as_topleft_tuple()
        lines.append(f"{x:.2f},{y:.2f},{w:.2f},{h:.2f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory(path) -> list:
    """Inverse of write_trajectory."""
    boxes = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            x, y, w, h = (float(v) for v in line.replace("\t", ",").split(","))
        except (ValueError, TypeError) as exc:
            raise TrackError(f"{path}:{ln}: cannot parse box from {line!r}") from exc
        boxes.append(BBox.from_topleft(x, y, w, h))
    if not boxes:
        raise TrackError(f"{path} contains no boxes")
    return boxes


def write_diagnostics(diagnostics: list, path) -> None:
    """JSON-lines dump of per-frame diagnostics."""
    with open(path, "w") as fh:
        for d in diagnostics:
            fh.write(d.to_json() + "\n")


def _dashed_rect(draw, x0, y0, x1, y1, color, dash=6):
    """Rectangle outline drawn as dashes (PIL has no native dashed stroke)."""
    def seg(xa, ya, xb, yb):
        length = max(abs(xb - xa), abs(yb - ya))
        n = max(1, int(length // dash))
        for k in range(0, n, 2):
            fa = k / n
            fb = min((k + 1) / n, 1.0)
            draw.line(
                [xa + (xb - xa) * fa, ya + (yb - ya) * fa,
                 xa + (xb - xa) * fb, ya + (yb - ya) * fb],
                fill=color,
                width=1,
            )

    seg(x0, y0, x1, y0)
    seg(x1, y0, x1, y1)
    seg(x1, y1, x0, y1)
    seg(x0, y1, x0, y0)


def annotate_frame(
    frame: ImageArray,
    pred: BBox,
    gt: BBox | None = None,
    tag: str | None = None,
) -> ImageArray:
    """Draw the predicted box (solid), ground truth (dashed), and model tag."""
    img = _PILImage.fromarray(frame if frame.ndim == 3 else np.repeat(frame[:, :, None], 3, 2))
    draw = _PILImageDraw.Draw(img)
    px0, py0 = pred.topleft()
    draw.rectangle([px0, py0, px0 + pred.w, py0 + pred.h], outline=(255, 60, 60))
    if gt is not None:
        gx0, gy0 = gt.topleft()
        _dashed_rect(draw, gx0, gy0, gx0 + gt.w, gy0 + gt.h, (60, 255, 60))
    if tag:
        draw.text((max(0, px0), max(0, py0 - 12)), tag, fill=(255, 255, 0))
    return np.asarray(img, dtype=np.uint8)


def dump_annotated_frames(seq: Sequence, result: RunResult, out_dir) -> None:
    """Write one annotated PNG per frame of a finished run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tags = {d.frame: d.active for d in result.diagnostics}
    for i in range(len(seq)):
        img = annotate_frame(
            seq.frame(i),
            result.trajectory[i],
            seq.gt[i] if i < len(seq.gt) else None,
            tags.get(i, "init" if i == 0 else None),
        )
        save_image(out_dir / f"{i + 1:04d}.png", img)


def parse_flat_config(path) -> dict:
    """key=value lines with # comments; values stay strings."""
    out: dict[str, str] = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise TrackError(f"{path}:{ln}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if not key or not value:
            raise TrackError(f"{path}:{ln}: empty key or value in {stripped!r}")
        out[key] = value
    return out


def _as_bool(v: str) -> bool:
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def config_from_dict(d: dict) -> TrackerConfig:
    """Build a TrackerConfig from flat config keys; unknown keys are errors."""
    cfg = TrackerConfig()
    setters = {
        "eta": lambda v: setattr(cfg, "eta", float(v)),
        "alpha_d": lambda v: setattr(cfg, "alpha_d", float(v)),
        "occlusion_handling": lambda v: setattr(cfg, "occlusion_handling", _as_bool(v)),
        "redetect_after": lambda v: setattr(cfg, "redetect_after", int(float(v))),
        "redetect_zoom": lambda v: setattr(cfg, "redetect_zoom", float(v)),
        "template_cap": lambda v: setattr(cfg, "template_cap", int(float(v))),
        "alpha": lambda v: setattr(cfg.quality, "alpha", float(v)),
        "beta": lambda v: setattr(cfg.quality, "beta", float(v)),
        "phi": lambda v: setattr(cfg.quality, "phi", float(v)),
        "n_q": lambda v: setattr(cfg.quality, "n_q", int(float(v))),
        "exclusion_radius": lambda v: setattr(cfg.quality, "exclusion_radius", int(float(v))),
        "hog_cell": lambda v: setattr(cfg.features, "cell_size", int(float(v))),
        "hog_bins": lambda v: setattr(cfg.features, "n_bins", int(float(v))),
        "use_colornames": lambda v: setattr(cfg.features, "use_colornames", _as_bool(v)),
        "padding": lambda v: setattr(cfg.features, "padding_factor", float(v)),
        "label_sigma_scale": lambda v: setattr(cfg.features, "label_sigma_scale", float(v)),
        "lambda": lambda v: setattr(cfg.admm, "lambda_reg", float(v)),
        "mu0": lambda v: setattr(cfg.admm, "mu0", float(v)),
        "mu_scale": lambda v: setattr(cfg.admm, "mu_scale", float(v)),
        "mu_max": lambda v: setattr(cfg.admm, "mu_max", float(v)),
        "admm_iterations": lambda v: setattr(cfg.admm, "iterations", int(float(v))),
        "admm_init_iterations": lambda v: setattr(cfg, "admm_init_iterations", int(float(v))),
        "theta": lambda v: setattr(cfg.scale, "theta", float(v)),
        "scale_step": lambda v: setattr(cfg.scale, "scale_step", float(v)),
        "n_scales": lambda v: setattr(cfg.scale, "n_scales", int(float(v))),
        "scale_lr": lambda v: setattr(cfg.scale, "scale_lr", float(v)),
        "lp_conf_threshold": lambda v: setattr(cfg.scale, "lp_conf_threshold", float(v)),
        "lp_padding": lambda v: setattr(cfg.scale, "lp_padding", float(v)),
        "lp_upsample": lambda v: setattr(cfg.scale, "lp_upsample", int(float(v))),
        "clamp_min": lambda v: setattr(cfg.scale, "clamp", (float(v), cfg.scale.clamp[1])),
        "clamp_max": lambda v: setattr(cfg.scale, "clamp", (cfg.scale.clamp[0], float(v))),
        "logpolar_rows": lambda v: setattr(cfg.scale, "logpolar_rows", int(float(v))),
        "logpolar_cols": lambda v: setattr(cfg.scale, "logpolar_cols", int(float(v))),
    }
    for key, value in d.items():
        if key not in setters:
            raise TrackError(f"unknown config key {key!r}")
        setters[key](value)
    # re-validate ranges after the piecewise mutation
    cfg.quality.__post_init__()
    cfg.features.__post_init__()
    cfg.admm.__post_init__()
    cfg.scale.__post_init__()
    cfg.__post_init__()
    return cfg


def load_config(path) -> TrackerConfig:
    return config_from_dict(parse_flat_config(path))
