"""Figure emission without a plotting dependency.

Spectrograms become 8-bit grayscale PNGs with a documented pixel mapping
(columns = frames left to right, rows = frequency top-down from Nyquist,
white = loudest, black = `db_range` dB below the peak) plus a raw CSV dB
grid so any plotting stack can re-render. Sweep results become a simple
rasterized line plot.
"""

import pathlib
import struct
import zlib

import numpy as np

from .core import Spectrogram

DB_RANGE = 80.0
DB_FLOOR_EPS = 1e-12


def write_png_gray(path, pixels: np.ndarray) -> None:
    """Minimal 8-bit grayscale PNG encoder (rows top to bottom)."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim != 2:
        raise ValueError(f"expected a 2-D pixel grid, got shape {pixels.shape}")
    height, width = pixels.shape
    raw = b"".join(b"\x00" + pixels[row].tobytes() for row in range(height))

    def chunk(tag: bytes, payload: bytes) -> bytes:
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))

    header = struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)  # 8-bit grayscale
    data = (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", zlib.compress(raw, level=9))
        + chunk(b"IEND", b"")
    )
    pathlib.Path(path).write_bytes(data)


def spectrogram_db(spec: Spectrogram, db_range: float = DB_RANGE) -> np.ndarray:
    """Log-magnitude grid in dB relative to the global peak, floored at
    -db_range."""
    mags = spec.magnitudes
    peak = mags.max()
    if peak <= 0:
        return np.full_like(mags, -db_range)
    db = 20.0 * np.log10(np.maximum(mags, peak * DB_FLOOR_EPS) / peak)
    return np.maximum(db, -db_range)


def spectrogram_png(spec: Spectrogram, path, db_range: float = DB_RANGE) -> None:
    db = spectrogram_db(spec, db_range)
    pixels = np.round((db + db_range) / db_range * 255.0).astype(np.uint8)
    write_png_gray(path, pixels.T[::-1])  # rows = freq from Nyquist down


def spectrogram_csv(spec: Spectrogram, path, db_range: float = DB_RANGE) -> None:
    """dB grid with a frequency header row and a time column (seconds)."""
    db = spectrogram_db(spec, db_range)
    lines = ["time_s," + ",".join(f"{f:.2f}" for f in spec.freqs)]
    for t, row in zip(spec.frame_times, db):
        lines.append(f"{t:.4f}," + ",".join(f"{v:.2f}" for v in row))
    pathlib.Path(path).write_text("\n".join(lines) + "\n")


def line_plot_png(path, series: dict, width: int = 640, height: int = 440) -> None:
    """Rasterized line plot: series maps label -> (x values, y values).

    Gray levels distinguish the series (darkest first); axes are drawn at
    the data bounding box. Intended for the SDRi-vs-J sweep figure.
    """
    canvas = np.full((height, width), 255, dtype=np.uint8)
    if not series:
        write_png_gray(path, canvas)
        return
    all_x = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    all_y = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    if len(all_x) == 0:
        write_png_gray(path, canvas)
        return
    margin = 40
    x_lo, x_hi = all_x.min(), all_x.max()
    y_lo, y_hi = all_y.min(), all_y.max()
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def to_px(x, y):
        col = margin + (np.asarray(x) - x_lo) / x_span * (width - 2 * margin)
        row = height - margin - (np.asarray(y) - y_lo) / y_span * (height - 2 * margin)
        return col, row

    canvas[height - margin, margin : width - margin] = 0
    canvas[margin : height - margin, margin] = 0
    levels = np.linspace(0, 160, max(len(series), 1)).astype(np.uint8)
    for level, (xs, ys) in zip(levels, series.values()):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        order = np.argsort(xs)
        xs, ys = xs[order], ys[order]
        for i in range(len(xs) - 1):
            c0, r0 = to_px(xs[i], ys[i])
            c1, r1 = to_px(xs[i + 1], ys[i + 1])
            steps = int(max(abs(c1 - c0), abs(r1 - r0))) * 2 + 2
            cols = np.clip(np.round(np.linspace(c0, c1, steps)).astype(int), 0, width - 1)
            rows = np.clip(np.round(np.linspace(r0, r1, steps)).astype(int), 0, height - 1)
            canvas[rows, cols] = level
            canvas[np.clip(rows + 1, 0, height - 1), cols] = level
    write_png_gray(path, canvas)
