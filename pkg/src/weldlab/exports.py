"""Deterministic flat-file writers behind the command line tools.

A given payload always serializes to identical bytes; manifest-driven
reruns can therefore be compared with plain `cmp`.  Numbers go through
`repr` (shortest round-trip form), never locale- or precision-dependent
formatting.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

__all__ = ["format_number", "write_csv", "write_json", "write_svg_polyline"]


def format_number(value) -> str:
    """Shortest exact decimal form of a scalar, stable across runs."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])


def _plain(obj):
    """Recursively convert numpy containers so json can take them."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, payload) -> None:
    text = json.dumps(_plain(payload), indent=2, sort_keys=True, allow_nan=True)
    Path(path).write_text(text + "\n")


def write_svg_polyline(path, points, size: int = 640, margin: float = 24.0) -> None:
    """Render a closed curve of complex points as one static polyline."""
    pts = np.asarray(points, dtype=complex).ravel()
    if pts.size < 2:
        raise ValueError("polyline needs at least two points")
    lo_x, hi_x = float(pts.real.min()), float(pts.real.max())
    lo_y, hi_y = float(pts.imag.min()), float(pts.imag.max())
    span = max(hi_x - lo_x, hi_y - lo_y, 1e-12)
    scale = (size - 2.0 * margin) / span
    # y is flipped: SVG grows downward
    xs = margin + (pts.real - lo_x) * scale
    ys = size - margin - (pts.imag - lo_y) * scale
    coords = " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys))
    body = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">\n'
        f'  <rect width="{size}" height="{size}" fill="white"/>\n'
        f'  <polyline points="{coords}" fill="none" stroke="black" stroke-width="1"/>\n'
        f"</svg>\n"
    )
    Path(path).write_text(body)
