#!/usr/bin/env python3
"""Regenerate src/occtrack/assets/colornames.bin from the colorimetric model.

The table is deterministic, so the committed asset only needs regenerating
when the prototype set or kernel width in colornames.py changes.
"""

from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from occtrack.colornames import build_table, save_table  # noqa: E402


def main() -> None:
    out = Path(__file__).resolve().parents[1] / "src" / "occtrack" / "assets"
    out.mkdir(parents=True, exist_ok=True)
    table = build_table()
    path = out / "colornames.bin"
    save_table(table, path)
    print(f"wrote {path} ({path.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
