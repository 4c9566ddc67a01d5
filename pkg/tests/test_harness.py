"""Sequence IO, synthetic generation, metrics, and config plumbing."""

import json

import numpy as np
import pytest

from occtrack.errors import BadSpec, ShapeMismatch, TrackError
from occtrack.harness import (
    EvalReport,
    Sequence,
    SynthSpec,
    config_from_dict,
    evaluate,
    iou,
    load_config,
    load_sequence,
    parse_flat_config,
    read_trajectory,
    recovery_score,
    run_tracker,
    save_sequence,
    synth_sequence,
    write_diagnostics,
    write_trajectory,
)
from occtrack.imaging import BBox


class TestIoU:
    def test_known_overlap(self):
        # unit-square arithmetic oracle: two 2x2 boxes offset by (1,1)
        # intersect in a 1x1 square, union is 4 + 4 - 1
        a = BBox.from_topleft(0, 0, 2, 2)
        b = BBox.from_topleft(1, 1, 2, 2)
        assert iou(a, b) == pytest.approx(1.0 / 7.0)
        assert iou(b, a) == pytest.approx(1.0 / 7.0)

    def test_identity_and_disjoint(self):
        a = BBox.from_topleft(10, 10, 5, 5)
        assert iou(a, a) == 1.0
        b = BBox.from_topleft(100, 100, 5, 5)
        assert iou(a, b) == 0.0

    def test_containment(self):
        outer = BBox.from_topleft(0, 0, 4, 4)
        inner = BBox.from_topleft(1, 1, 2, 2)
        assert iou(outer, inner) == pytest.approx(4.0 / 16.0)


class TestEvaluate:
    def test_perfect_trajectory(self):
        gt = [BBox.from_topleft(i, i, 10.0, 10.0) for i in range(5)]
        report = evaluate(list(gt), gt)
        assert report.ious == [1.0] * 5
        # success thresholds compare strictly, so the t=1.0 bin is empty
        assert report.auc == pytest.approx(100.0 / 101.0)
        assert report.precision_20px == 1.0

    def test_disjoint_trajectory(self):
        gt = [BBox.from_topleft(0, 0, 5, 5) for _ in range(4)]
        pred = [BBox.from_topleft(200, 200, 5, 5) for _ in range(4)]
        report = evaluate(pred, gt)
        assert report.ious == [0.0] * 4
        assert report.auc == 0.0
        assert report.precision_20px == 0.0

    def test_length_mismatch(self):
        gt = [BBox.from_topleft(0, 0, 5, 5)] * 3
        with pytest.raises(ShapeMismatch):
            evaluate(gt[:2], gt)

    def test_unannotated_frames_skipped(self):
        gt = [BBox.from_topleft(0, 0, 5, 5), None, BBox.from_topleft(2, 2, 5, 5)]
        pred = [BBox.from_topleft(0, 0, 5, 5)] * 3
        report = evaluate(pred, gt)
        assert len(report.ious) == 2

    def test_deterministic(self):
        gt = [BBox.from_topleft(i, 2 * i, 8, 8) for i in range(6)]
        pred = [BBox.from_topleft(i + 1, 2 * i, 8, 8) for i in range(6)]
        a = evaluate(pred, gt)
        b = evaluate(pred, gt)
        assert a.auc == b.auc
        assert a.ious == b.ious


class TestRecoveryScore:
    def test_tail_after_schedule(self):
        seq = Sequence(
            name="t",
            gt=[BBox(0, 0, 4, 4)] * 10,
            frames=[np.zeros((8, 8), dtype=np.uint8)] * 10,
            occlusion_schedule=[(4, 0.5), (5, 0.8)],
        )
        report = EvalReport(
            ious=[float(i) for i in range(10)],
            success_curve=np.zeros(101),
            auc=0.0,
            precision_20px=0.0,
        )
        assert recovery_score(seq, report) == pytest.approx(np.mean([6.0, 7.0, 8.0, 9.0]))

    def test_whole_run_without_schedule(self):
        seq = Sequence(
            name="t",
            gt=[BBox(0, 0, 4, 4)] * 3,
            frames=[np.zeros((8, 8), dtype=np.uint8)] * 3,
        )
        report = EvalReport(
            ious=[0.2, 0.4, 0.6],
            success_curve=np.zeros(101),
            auc=0.0,
            precision_20px=0.0,
        )
        assert recovery_score(seq, report) == pytest.approx(0.4)


class TestSynthSpec:
    def test_validation(self):
        with pytest.raises(BadSpec):
            SynthSpec(width=100)
        with pytest.raises(BadSpec):
            SynthSpec(target_w=10)
        with pytest.raises(BadSpec):
            SynthSpec(n_frames=5)
        with pytest.raises(BadSpec):
            SynthSpec(zoom=0.0)
        with pytest.raises(BadSpec):
            SynthSpec(occluder=True, occ_start=50, occ_end=40)
        with pytest.raises(BadSpec):
            SynthSpec(zoom=1.05, n_frames=100)  # outgrows the frame

    def test_from_dict(self):
        spec = SynthSpec.from_dict(
            {
                "n_frames": "20",
                "vx": "0.5",
                "occluder": "true",
                "occ_start": "6",
                "occ_end": "12",
            }
        )
        assert spec.n_frames == 20
        assert spec.vx == 0.5
        assert spec.occluder is True
        assert (spec.occ_start, spec.occ_end) == (6, 12)
        with pytest.raises(BadSpec):
            SynthSpec.from_dict({"bogus_key": "1"})


class TestSynthSequence:
    def test_same_seed_bit_identical(self):
        spec = SynthSpec(n_frames=12, vx=0.5, noise=2.0)
        a = synth_sequence(spec, 4)
        b = synth_sequence(spec, 4)
        assert len(a) == 12
        for fa, fb in zip(a.frames, b.frames):
            assert fa.tobytes() == fb.tobytes()
        assert [g.as_topleft_tuple() for g in a.gt] == [g.as_topleft_tuple() for g in b.gt]

    def test_different_seed_differs(self):
        spec = SynthSpec(n_frames=12, vx=0.5, noise=2.0)
        a = synth_sequence(spec, 4)
        b = synth_sequence(spec, 5)
        assert any(fa.tobytes() != fb.tobytes() for fa, fb in zip(a.frames, b.frames))

    def test_occlusion_schedule_window(self):
        spec = SynthSpec(n_frames=80, occluder=True, occ_start=30, occ_end=50)
        seq = synth_sequence(spec, 0)
        assert seq.occlusion_schedule
        frames_with_overlap = [f for f, ov in seq.occlusion_schedule if ov > 0.0]
        assert frames_with_overlap
        assert min(frames_with_overlap) >= 30
        assert max(frames_with_overlap) <= 50

    def test_zoom_compounds_per_frame(self):
        spec = SynthSpec(n_frames=30, zoom=1.01, vx=0.0, target_w=40, target_h=40)
        seq = synth_sequence(spec, 1)
        for i, g in enumerate(seq.gt):
            assert g.w / seq.gt[0].w == pytest.approx(1.01**i, rel=0.03)
        assert seq.gt[-1].w / seq.gt[0].w == pytest.approx(1.01**29, rel=0.02)

    def test_static_target_tracks_tightly(self):
        spec = SynthSpec(n_frames=20, vx=0.0, vy=0.0, noise=1.5)
        seq = synth_sequence(spec, 2)
        result = run_tracker(seq)
        report = evaluate(result.trajectory, seq.gt)
        assert all(v >= 0.9 for v in report.ious)

    def test_single_frame_sequence(self):
        spec = SynthSpec(n_frames=10, vx=0.0)
        base = synth_sequence(spec, 3)
        seq = Sequence(name="one", gt=[base.gt[0]], frames=[base.frames[0]])
        result = run_tracker(seq)
        assert len(result.trajectory) == 1
        assert result.trajectory[0] == base.gt[0]


class TestSequenceIO:
    def test_save_load_roundtrip(self, tmp_path):
        spec = SynthSpec(n_frames=10, occluder=True, occ_start=3, occ_end=6, vx=0.5)
        seq = synth_sequence(spec, 6)
        save_sequence(seq, tmp_path / "seq")
        back = load_sequence(tmp_path / "seq")
        assert len(back) == 10
        assert back.gt[0].w == pytest.approx(seq.gt[0].w, abs=0.01)
        assert back.occlusion_schedule
        assert back.frame(0).shape == seq.frames[0].shape

    def test_gt_convention(self, tmp_path):
        d = tmp_path / "seq"
        (d / "img").mkdir(parents=True)
        from occtrack.imaging import save_image

        for i in range(2):
            save_image(d / "img" / f"{i + 1:04d}.png", np.zeros((60, 60, 3), dtype=np.uint8))
        (d / "groundtruth_rect.txt").write_text("10,20,30,40\n12,22,30,40\n")
        seq = load_sequence(d)
        assert (seq.gt[0].cx, seq.gt[0].cy) == (25.0, 40.0)
        assert (seq.gt[0].w, seq.gt[0].h) == (30.0, 40.0)

    def test_malformed_line_names_position(self, tmp_path):
        d = tmp_path / "seq"
        (d / "img").mkdir(parents=True)
        from occtrack.imaging import save_image

        save_image(d / "img" / "0001.png", np.zeros((60, 60, 3), dtype=np.uint8))
        (d / "groundtruth_rect.txt").write_text("10,20,oops,40\n")
        with pytest.raises(TrackError, match=":1"):
            load_sequence(d)

    def test_missing_pieces(self, tmp_path):
        with pytest.raises(TrackError, match="img/"):
            load_sequence(tmp_path)

    def test_trajectory_roundtrip(self, tmp_path):
        boxes = [BBox.from_topleft(1.25, 2.5, 30.0, 40.75), BBox.from_topleft(3, 4, 30, 40)]
        p = tmp_path / "traj.txt"
        write_trajectory(boxes, p)
        back = read_trajectory(p)
        assert len(back) == 2
        assert back[0].as_topleft_tuple() == (1.25, 2.5, 30.0, 40.75)

    def test_diagnostics_jsonl(self, tmp_path):
        spec = SynthSpec(n_frames=10, vx=0.3)
        seq = synth_sequence(spec, 7)
        result = run_tracker(seq)
        p = tmp_path / "diag.jsonl"
        write_diagnostics(result.diagnostics, p)
        lines = p.read_text().strip().splitlines()
        assert len(lines) == len(result.diagnostics)
        rec = json.loads(lines[0])
        assert {"frame", "active", "q_f", "trigger_f"} <= set(rec)


class TestConfigPlumbing:
    def test_parse_flat_config(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\n\nalpha = 2.5\n  beta=9\nuse_colornames = false\n")
        d = parse_flat_config(p)
        assert d == {"alpha": "2.5", "beta": "9", "use_colornames": "false"}

    def test_parse_error_names_line(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("alpha = 2\nnot a kv line\n")
        with pytest.raises(TrackError, match=":2"):
            parse_flat_config(p)

    def test_config_from_dict_applies_values(self):
        cfg = config_from_dict(
            {"alpha": "3", "lambda": "0.02", "theta": "0.4", "occlusion_handling": "false"}
        )
        assert cfg.quality.alpha == 3.0
        assert cfg.admm.lambda_reg == 0.02
        assert cfg.scale.theta == 0.4
        assert cfg.occlusion_handling is False

    def test_config_unknown_key(self):
        with pytest.raises(TrackError, match="unknown"):
            config_from_dict({"no_such_knob": "1"})

    def test_config_invalid_value_surfaces(self):
        with pytest.raises((TrackError, ValueError)):
            config_from_dict({"alpha": "0.5"})

    def test_load_config_default_file(self, tmp_path):
        p = tmp_path / "d.cfg"
        p.write_text("phi = 40\n")
        cfg = load_config(p)
        assert cfg.quality.phi == 40.0
