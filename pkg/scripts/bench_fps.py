#!/usr/bin/env python3
"""Measure tracking throughput on a synthetic 320x240 sequence.

Usage: python scripts/bench_fps.py [n_frames]
"""

from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from occtrack.harness import SynthSpec, run_tracker, synth_sequence  # noqa: E402


def main() -> None:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 100
    spec = SynthSpec(n_frames=n, vx=0.8, vy=0.3)
    seq = synth_sequence(spec, seed=3)
    result = run_tracker(seq)
    print(f"{len(seq)} frames at {spec.width}x{spec.height}: {result.fps:.1f} fps")


if __name__ == "__main__":
    main()
