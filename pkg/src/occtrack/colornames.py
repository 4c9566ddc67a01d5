"""Quantized RGB -> color-name probability table.

The table maps each of the 32*32*32 quantized RGB bins (5 bits per channel)
to a probability distribution over 11 English color names. Layout of the
binary asset, documented here and in docs/formats.md:

* flat little-endian float32 array of 32*32*32*11 entries;
* entry index = ((r >> 3) * 32 + (g >> 3)) * 32 + (b >> 3), followed by the
  11 name probabilities in the order of NAMES below;
* every 11-vector sums to 1.

Probabilities come from a softmax over negative squared CIELAB distances to
fixed RGB prototypes, so saturated inputs map almost entirely onto their own
name channel. The asset regenerates bit-identically via
scripts/gen_colorname_table.py.
"""

from __future__ import annotations

import importlib.resources

import numpy as np

NAMES = (
    "black",
    "blue",
    "brown",
    "grey",
    "green",
    "orange",
    "pink",
    "purple",
    "red",
    "white",
    "yellow",
)

# sRGB prototype for each name, same order as NAMES
_PROTOTYPES = np.array(
    [
        (0, 0, 0),
        (0, 0, 255),
        (139, 69, 19),
        (128, 128, 128),
        (0, 128, 0),
        (255, 165, 0),
        (255, 192, 203),
        (128, 0, 128),
        (255, 0, 0),
        (255, 255, 255),
        (255, 255, 0),
    ],
    dtype=np.float64,
)

# softmax temperature in CIELAB distance units
_TAU = 15.0

_ASSET = "colornames.bin"
_N_BINS = 32
_cached_table: np.ndarray | None = None


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert (N, 3) sRGB values in [0, 255] to CIELAB (D65 white point)."""
    c = np.asarray(rgb, dtype=np.float64) / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    m = np.array(
        [
            [0.4124564, 0.3575761, 0.1804375],
            [0.2126729, 0.7151522, 0.0721750],
            [0.0193339, 0.1191920, 0.9503041],
        ]
    )
    xyz = lin @ m.T
    xyz /= np.array([0.95047, 1.0, 1.08883])
    eps = (6.0 / 29.0) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[:, 0] = 116.0 * f[:, 1] - 16.0
    lab[:, 1] = 500.0 * (f[:, 0] - f[:, 1])
    lab[:, 2] = 200.0 * (f[:, 1] - f[:, 2])
    return lab


def build_table() -> np.ndarray:
    """Compute the (32768, 11) float32 table from the prototype colors."""
    idx = np.arange(_N_BINS)
    centers = idx * 8.0 + 4.0
    r, g, b = np.meshgrid(centers, centers, centers, indexing="ij")
    bins = np.stack([r.ravel(), g.ravel(), b.ravel()], axis=1)
    lab_bins = srgb_to_lab(bins)
    lab_proto = srgb_to_lab(_PROTOTYPES)
    d2 = ((lab_bins[:, None, :] - lab_proto[None, :, :]) ** 2).sum(axis=2)
    logits = -d2 / (2.0 * _TAU * _TAU)
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return p.astype(np.float32)


def save_table(table: np.ndarray, path) -> None:
    """Write the table in the documented little-endian float32 layout."""
    flat = np.ascontiguousarray(table, dtype="<f4")
    if flat.size != _N_BINS**3 * len(NAMES):
        raise ValueError(f"table has wrong size {flat.shape}")
    with open(path, "wb") as fh:
        fh.write(flat.tobytes())


def load_table(path) -> np.ndarray:
    """Read a table saved by save_table; returns (32768, 11) float32."""
    raw = np.fromfile(path, dtype="<f4")
    expect = _N_BINS**3 * len(NAMES)
    if raw.size != expect:
        raise ValueError(f"expected {expect} float32 entries, found {raw.size}")
    return raw.reshape(_N_BINS**3, len(NAMES)).astype(np.float32)


def color_name_table() -> np.ndarray:
    """The packaged (32768, 11) table; falls back to rebuilding if absent."""
    global _cached_table
    if _cached_table is None:
        res = importlib.resources.files("occtrack").joinpath("assets", _ASSET)
        if res.is_file():
            raw = np.frombuffer(res.read_bytes(), dtype="<f4")
            _cached_table = raw.reshape(_N_BINS**3, len(NAMES)).astype(np.float32)
        else:
            _cached_table = build_table()
    return _cached_table


def bin_index(img: np.ndarray) -> np.ndarray:
    """Quantize a uint8 RGB image to flat table indices, shape (H, W)."""
    q = (img.astype(np.intp) >> 3)
    return (q[:, :, 0] * _N_BINS + q[:, :, 1]) * _N_BINS + q[:, :, 2]
