"""Byte-deterministic scatter rendering to binary P6 pixmaps."""

import numpy as np

SIZE = 512
MARGIN = 0.05
DISC_RADIUS = 2
BACKGROUND = (255, 255, 255)
POINT_COLOR = (25, 55, 140)


def _window(points):
    """Axis window with a 5% margin; a degenerate cloud gets a centered unit box."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = hi - lo
    if span[0] <= 0.0 and span[1] <= 0.0:
        center = lo
        return center - 0.5, center + 0.5
    pad = MARGIN * np.where(span > 0.0, span, 1.0)
    return lo - pad, hi + pad


def render_points(points):
    """Rasterize 2D points as filled discs; returns a (SIZE, SIZE, 3) uint8 image."""
    img = np.empty((SIZE, SIZE, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.size == 0:
        return img
    if pts.shape[1] != 2:
        raise ValueError("plots take 2D point sets")
    lo, hi = _window(pts)
    scale = (SIZE - 1) / (hi - lo)
    cols = np.rint((pts[:, 0] - lo[0]) * scale[0]).astype(int)
    rows = (SIZE - 1) - np.rint((pts[:, 1] - lo[1]) * scale[1]).astype(int)
    offs = [
        (dr, dc)
        for dr in range(-DISC_RADIUS, DISC_RADIUS + 1)
        for dc in range(-DISC_RADIUS, DISC_RADIUS + 1)
        if dr * dr + dc * dc <= DISC_RADIUS * DISC_RADIUS
    ]
    color = np.array(POINT_COLOR, dtype=np.uint8)
    for dr, dc in offs:
        rr = np.clip(rows + dr, 0, SIZE - 1)
        cc = np.clip(cols + dc, 0, SIZE - 1)
        img[rr, cc] = color
    return img


def emit_plot(points, path):
    """Write the scatter as a binary P6 pixmap; byte-identical per input."""
    img = render_points(points)
    header = f"P6\n{SIZE} {SIZE}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.tobytes())
    return path
