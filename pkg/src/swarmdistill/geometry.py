"""Planar geometry: radial discretization of the visible disk, discrete action
offsets and the smallest enclosing circle.

Points are handled as plain ``(x, y)`` float pairs or ``(N, 2)`` numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyPointSet

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Circle:
    x: float
    y: float
    r: float

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def contains(self, p, tol: float = 1e-9) -> bool:
        return math.hypot(p[0] - self.x, p[1] - self.y) <= self.r + tol


@dataclass(frozen=True)
class Discretization:
    """Central disk (component 0) plus ``P - 1`` equal angular sectors of the
    annulus between ``inner_radius`` and ``d_lim``.

    ``start_angle`` is where sector 1 begins. The default ``-pi/(P-1)`` puts
    sector centers on the compass directions, with sector 1 pointing along +x.
    """

    P: int = 9
    d_lim: float = 2.0
    inner_radius: Optional[float] = None
    start_angle: Optional[float] = None

    def __post_init__(self):
        if self.P < 2:
            raise ValueError("P must be at least 2")
        if not self.d_lim > 0:
            raise ValueError("d_lim must be positive")
        if self.inner_radius is None:
            object.__setattr__(self, "inner_radius", 0.2 * self.d_lim)
        if self.start_angle is None:
            object.__setattr__(self, "start_angle", -math.pi / (self.P - 1))
        if not 0.0 < self.inner_radius < self.d_lim:
            raise ValueError("inner_radius must lie in (0, d_lim)")

    @property
    def n_sectors(self) -> int:
        return self.P - 1

    @property
    def sector_width(self) -> float:
        return TWO_PI / (self.P - 1)

    @property
    def offset_radius(self) -> float:
        return 0.5 * (self.inner_radius + self.d_lim)


def sector_index(rel, disc: Discretization) -> Optional[int]:
    """Component containing the relative position ``rel``, or None if it is
    outside the visibility range."""
    x, y = float(rel[0]), float(rel[1])
    r = math.hypot(x, y)
    if r <= disc.inner_radius:
        return 0
    if r > disc.d_lim:
        return None
    phase = (math.atan2(y, x) - disc.start_angle) % TWO_PI
    k = int(phase // disc.sector_width)
    # phase can round up to exactly 2*pi
    return 1 + min(k, disc.n_sectors - 1)


def sector_indices(rel: np.ndarray, disc: Discretization) -> np.ndarray:
    """Vectorized :func:`sector_index` over an ``(..., 2)`` array; -1 marks
    points outside the visibility range."""
    rel = np.asarray(rel, dtype=float)
    r = np.hypot(rel[..., 0], rel[..., 1])
    phase = np.mod(np.arctan2(rel[..., 1], rel[..., 0]) - disc.start_angle, TWO_PI)
    k = np.minimum(np.floor_divide(phase, disc.sector_width).astype(np.int64), disc.n_sectors - 1)
    out = 1 + k
    out[r <= disc.inner_radius] = 0
    out[r > disc.d_lim] = -1
    return out


def action_offsets(disc: Discretization) -> np.ndarray:
    """``(P, 2)`` array of component centers; row 0 is the zero vector."""
    out = np.zeros((disc.P, 2))
    p = np.arange(1, disc.P)
    ang = disc.start_angle + disc.sector_width * (p - 1) + 0.5 * disc.sector_width
    out[1:, 0] = disc.offset_radius * np.cos(ang)
    out[1:, 1] = disc.offset_radius * np.sin(ang)
    return out


def nearest_action(desired, offsets: np.ndarray) -> int:
    """Index of the offset closest to ``desired``; lowest index wins ties."""
    d = np.asarray(desired, dtype=float)
    dist = np.hypot(offsets[:, 0] - d[0], offsets[:, 1] - d[1])
    return int(np.argmin(dist))


def nearest_actions(desired: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Row-wise :func:`nearest_action` for an ``(N, 2)`` array."""
    diff = desired[:, None, :] - offsets[None, :, :]
    return np.argmin(np.hypot(diff[..., 0], diff[..., 1]), axis=1)


# --- smallest enclosing circle -------------------------------------------------

_REL_TOL = 1e-14


def _inside(c: Circle, p) -> bool:
    return math.hypot(p[0] - c.x, p[1] - c.y) <= c.r * (1 + _REL_TOL) + 1e-15


def circle_from_two(a, b) -> Circle:
    cx = 0.5 * (a[0] + b[0])
    cy = 0.5 * (a[1] + b[1])
    r = max(math.hypot(a[0] - cx, a[1] - cy), math.hypot(b[0] - cx, b[1] - cy))
    return Circle(cx, cy, r)


def circumcircle(a, b, c) -> Optional[Circle]:
    """Circle through three points, None when they are collinear."""
    # translate to the bounding-box middle for accuracy
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        return None
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    x = ox + (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    y = oy + (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    r = max(math.hypot(x - p[0], y - p[1]) for p in (a, b, c))
    return Circle(x, y, r)


def _cross(ox, oy, ax, ay, bx, by) -> float:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def _with_two(pts, i: int, p, q) -> Circle:
    # smallest circle over pts[:i] with p and q on its boundary
    base = circle_from_two(p, q)
    left = right = None
    px, py = p
    qx, qy = q
    for r in pts[:i]:
        if _inside(base, r):
            continue
        side = _cross(px, py, qx, qy, r[0], r[1])
        c = circumcircle(p, q, r)
        if c is None:
            continue
        k = _cross(px, py, qx, qy, c.x, c.y)
        if side > 0.0 and (left is None or k > _cross(px, py, qx, qy, left.x, left.y)):
            left = c
        elif side < 0.0 and (right is None or k < _cross(px, py, qx, qy, right.x, right.y)):
            right = c
    if left is None and right is None:
        return base
    if left is None:
        return right
    if right is None:
        return left
    return left if left.r <= right.r else right


def _with_one(pts, i: int, p) -> Circle:
    c = Circle(p[0], p[1], 0.0)
    for j in range(i):
        q = pts[j]
        if not _inside(c, q):
            c = circle_from_two(p, q) if c.r == 0.0 else _with_two(pts, j, p, q)
    return c


def smallest_enclosing_circle(points: Iterable[Sequence[float]]) -> Circle:
    """Minimum-radius circle containing every point.

    Incremental move-to-front construction over the input order, so the
    result is a deterministic function of the input sequence.
    """
    pts = [(float(p[0]), float(p[1])) for p in points]
    if not pts:
        raise EmptyPointSet("smallest_enclosing_circle needs at least one point")
    c = None
    for i, p in enumerate(pts):
        if c is None or not _inside(c, p):
            c = _with_one(pts, i, p)
    return c
