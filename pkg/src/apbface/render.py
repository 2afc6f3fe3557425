"""Landmark rasterization and face-mask construction.

Geometry conventions: normalized coordinates are clamped to [0, 1], scaled by
the resolution, then clamped to [0, res-1]; pixel (row y, col x) centers sit
on the integer grid. A point lights every pixel within ``point_radius`` of
it; group polylines light pixels within half a pixel of each segment; masks
fill the convex hull and dilate it with a Euclidean disk.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass
class BinaryImage:
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2 or self.pixels.shape[0] != self.pixels.shape[1]:
            raise ValueError("binary image must be square")
        if not np.isin(self.pixels, (0, 1)).all():
            raise ValueError("binary image must contain only 0/1")
        self.pixels = self.pixels.astype(np.uint8)

    @property
    def resolution(self):
        return self.pixels.shape[0]


class MaskImage(BinaryImage):
    pass


def _to_pixel_coords(points, resolution):
    pts = np.clip(np.asarray(points, dtype=np.float64), 0.0, 1.0) * resolution
    return np.clip(pts, 0.0, resolution - 1.0)


def landmark_pixels(points, resolution):
    """Nearest pixel (col, row) for each landmark after clamping."""
    return np.rint(_to_pixel_coords(points, resolution)).astype(int)


def _stamp_disk(grid, cx, cy, radius):
    res = grid.shape[0]
    x0, x1 = max(int(np.floor(cx - radius)), 0), min(int(np.ceil(cx + radius)), res - 1)
    y0, y1 = max(int(np.floor(cy - radius)), 0), min(int(np.ceil(cy + radius)), res - 1)
    if x0 > x1 or y0 > y1:
        return
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
    grid[y0 : y1 + 1, x0 : x1 + 1] |= inside


def _stamp_segment(grid, a, b, half_width=0.5):
    res = grid.shape[0]
    (ax, ay), (bx, by) = a, b
    x0 = max(int(np.floor(min(ax, bx) - half_width)), 0)
    x1 = min(int(np.ceil(max(ax, bx) + half_width)), res - 1)
    y0 = max(int(np.floor(min(ay, by) - half_width)), 0)
    y1 = min(int(np.ceil(max(ay, by) + half_width)), res - 1)
    if x0 > x1 or y0 > y1:
        return
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    dx, dy = bx - ax, by - ay
    seg_len2 = dx * dx + dy * dy
    if seg_len2 == 0.0:
        dist2 = (xs - ax) ** 2 + (ys - ay) ** 2
    else:
        t = np.clip(((xs - ax) * dx + (ys - ay) * dy) / seg_len2, 0.0, 1.0)
        dist2 = (xs - (ax + t * dx)) ** 2 + (ys - (ay + t * dy)) ** 2
    grid[y0 : y1 + 1, x0 : x1 + 1] |= dist2 <= half_width**2


def rasterize(landmark_set, resolution, point_radius=1.0):
    """Plot a landmark set as a binary image: point disks plus group polylines."""
    if resolution < 8:
        raise ValueError("resolution must be at least 8")
    grid = np.zeros((resolution, resolution), dtype=bool)
    pts = _to_pixel_coords(landmark_set.points, resolution)
    for cx, cy in pts:
        _stamp_disk(grid, cx, cy, point_radius)
    for idx in landmark_set.index_groups.values():
        idx = np.asarray(idx, dtype=int)
        for i, j in zip(idx[:-1], idx[1:]):
            _stamp_segment(grid, pts[i], pts[j])
    return BinaryImage(grid.astype(np.uint8))


def convex_hull(points):
    """Monotone-chain hull, counter-clockwise in (x, y) axis convention.

    Raises on fewer than 3 distinct non-collinear points.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if pts.shape[0] < 3:
        raise ValueError("degenerate hull")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        raise ValueError("degenerate hull")
    return hull


def fill_convex_polygon(vertices, resolution):
    """Boolean grid of pixels inside (or on) a counter-clockwise convex polygon."""
    ys, xs = np.mgrid[0:resolution, 0:resolution]
    inside = np.ones((resolution, resolution), dtype=bool)
    v = np.asarray(vertices, dtype=np.float64)
    for (x1, y1), (x2, y2) in zip(v, np.roll(v, -1, axis=0)):
        cross = (x2 - x1) * (ys - y1) - (y2 - y1) * (xs - x1)
        inside &= cross >= 0.0
    return inside


def dilate_disk(mask, radius):
    """Binary dilation with a Euclidean disk: white iff a white pixel lies within ``radius``."""
    if radius <= 0:
        return mask.copy()
    dist = ndimage.distance_transform_edt(~mask)
    return dist <= radius


def face_mask(landmark_set, resolution, dilation_radius=None):
    """Fill the convex hull of the landmarks and dilate it to cover the face."""
    if dilation_radius is None:
        dilation_radius = resolution / 16
    pts = _to_pixel_coords(landmark_set.points, resolution)
    hull = convex_hull(pts)
    filled = fill_convex_polygon(hull, resolution)
    return MaskImage(dilate_disk(filled, dilation_radius).astype(np.uint8))
