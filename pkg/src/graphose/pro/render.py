"""Exact rasterization of scene specs: same spec, same bytes.

All geometry tests run against pixel centers in canvas-normalized
coordinates. Filled shapes use the even-odd rule; strokes are distance bands
around segments or circles; lattice edges blend their endpoint colors along
the segment. Objects are painted in list order, later ones over earlier ones.
"""

from __future__ import annotations

import math

import numpy as np

from .objects import SceneObject, SceneSpec
from .palette import COLOR_VALUES, LATTICE_DOT_RADIUS, STROKE_HALF_WIDTH


def _pixel_grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    xs = (np.arange(size, dtype=np.float64) + 0.5) / size
    ys = (np.arange(size, dtype=np.float64) + 0.5) / size
    return np.meshgrid(xs, ys)


def _seg_dist(px, py, p, q):
    vx, vy = q[0] - p[0], q[1] - p[1]
    ln2 = vx * vx + vy * vy
    if ln2 == 0.0:
        return np.hypot(px - p[0], py - p[1]), np.zeros_like(px)
    t = np.clip(((px - p[0]) * vx + (py - p[1]) * vy) / ln2, 0.0, 1.0)
    return np.hypot(px - (p[0] + t * vx), py - (p[1] + t * vy)), t


def _paint(img, mask, color):
    img[mask] = color


def _stroke_segment(img, px, py, p, q, color, halfw):
    dist, _ = _seg_dist(px, py, p, q)
    _paint(img, dist <= halfw, color)


def _stroke_segment_gradient(img, px, py, p, q, c0, c1, halfw):
    dist, t = _seg_dist(px, py, p, q)
    mask = dist <= halfw
    mix = (1.0 - t[mask])[:, None] * np.asarray(c0) + t[mask][:, None] * np.asarray(c1)
    img[mask] = mix


def _fill_disk(img, px, py, center, radius, color):
    _paint(img, np.hypot(px - center[0], py - center[1]) <= radius, color)


def _stroke_circle(img, px, py, center, radius, color, halfw):
    d = np.hypot(px - center[0], py - center[1])
    _paint(img, np.abs(d - radius) <= halfw, color)


def _fill_polygon(img, px, py, pts, color):
    # even-odd crossing test at pixel centers
    inside = np.zeros(px.shape, dtype=bool)
    k = len(pts)
    for i in range(k):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % k]
        if y1 == y2:
            continue
        crosses = (y1 > py) != (y2 > py)
        with np.errstate(invalid="ignore"):
            xs = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < xs)
    _paint(img, inside, color)


def _fill_sector(img, px, py, center, tip0, tip1, color):
    """Filled circular sector spanned the short way from tip0 to tip1."""
    radius = math.hypot(tip0[0] - center[0], tip0[1] - center[1])
    d0 = (tip0[0] - center[0], tip0[1] - center[1])
    d1 = (tip1[0] - center[0], tip1[1] - center[1])
    total = math.atan2(d0[0] * d1[1] - d0[1] * d1[0], d0[0] * d1[0] + d0[1] * d1[1])
    vx = px - center[0]
    vy = py - center[1]
    rel = np.arctan2(d0[0] * vy - d0[1] * vx, d0[0] * vx + d0[1] * vy)
    if total >= 0:
        in_angle = (rel >= 0.0) & (rel <= total)
    else:
        in_angle = (rel <= 0.0) & (rel >= total)
    _paint(img, in_angle & (np.hypot(vx, vy) <= radius), color)


def _render_pie(img, px, py, obj, halfw):
    color = COLOR_VALUES[int(obj.colors[0])]
    _fill_sector(img, px, py, obj.positions[0], obj.positions[1], obj.positions[2], color)


def _render_scissors(img, px, py, obj, halfw):
    blade = COLOR_VALUES[int(obj.colors[1])]
    handle = COLOR_VALUES[int(obj.colors[3])]
    pivot = obj.positions[0]
    for i in (1, 2):
        _stroke_segment(img, px, py, pivot, obj.positions[i], blade, halfw)
    for i in (3, 4):
        mid = (pivot + obj.positions[i]) / 2.0
        radius = np.linalg.norm(obj.positions[i] - pivot) / 2.0
        _stroke_circle(img, px, py, mid, radius, handle, halfw)


def _render_chains(img, px, py, obj, halfw):
    for a, b in obj.edges:
        color = COLOR_VALUES[int(obj.colors[int(b)])]
        _stroke_segment(img, px, py, obj.positions[int(a)], obj.positions[int(b)], color, halfw)


def _render_hollow_polygon(img, px, py, obj, halfw):
    color = COLOR_VALUES[int(obj.colors[0])]
    k = len(obj.positions)
    for i in range(k):
        _stroke_segment(img, px, py, obj.positions[i], obj.positions[(i + 1) % k], color, halfw)


def _render_filled_polygon(img, px, py, obj, halfw):
    color = COLOR_VALUES[int(obj.colors[0])]
    _fill_polygon(img, px, py, obj.positions[:-1], color)


def _render_lattice(img, px, py, obj, halfw):
    for a, b in obj.edges:
        c0 = COLOR_VALUES[int(obj.colors[int(a)])]
        c1 = COLOR_VALUES[int(obj.colors[int(b)])]
        _stroke_segment_gradient(
            img, px, py, obj.positions[int(a)], obj.positions[int(b)], c0, c1, halfw
        )
    # node dots keep isolated lattice vertices visible in the image
    for i, p in enumerate(obj.positions):
        _fill_disk(img, px, py, p, LATTICE_DOT_RADIUS, COLOR_VALUES[int(obj.colors[i])])


_RENDERERS = {
    "pie": _render_pie,
    "scissors": _render_scissors,
    "hand": _render_chains,
    "robotic_arm": _render_chains,
    "hollow_polygon": _render_hollow_polygon,
    "filled_polygon": _render_filled_polygon,
    "lattice": _render_lattice,
}


def render_object(img: np.ndarray, obj: SceneObject, size: int) -> None:
    px, py = _pixel_grid(size)
    _RENDERERS[obj.kind](img, px, py, obj, STROKE_HALF_WIDTH)


def render_scene(spec: SceneSpec) -> np.ndarray:
    """RGB float image in [0,1], black background, painter's order."""
    size = spec.image_size
    img = np.zeros((size, size, 3))
    px, py = _pixel_grid(size)
    for obj in spec.objects:
        _RENDERERS[obj.kind](img, px, py, obj, STROKE_HALF_WIDTH)
    return img


def image_to_u8(img: np.ndarray) -> np.ndarray:
    return np.round(255.0 * np.clip(img, 0.0, 1.0)).astype(np.uint8)


def save_image_png(img: np.ndarray, path) -> None:
    from PIL import Image

    Image.fromarray(image_to_u8(img), mode="RGB").save(path)
