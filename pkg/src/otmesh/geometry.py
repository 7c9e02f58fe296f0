"""Boundary geometry: line and arc segments described by level-set functions ``c``.

Segments are listed counter-clockwise around the domain.  Each ``c`` is
positive outside the domain and its gradient has unit length on the segment,
so for a line ``c(x) = A . x + b`` with ``|A| = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LineSegment:
    p0: tuple[float, float]
    p1: tuple[float, float]
    kind: str = field(default="line", init=False)

    @property
    def start(self) -> np.ndarray:
        return np.asarray(self.p0, dtype=float)

    @property
    def end(self) -> np.ndarray:
        return np.asarray(self.p1, dtype=float)

    @property
    def normal(self) -> np.ndarray:
        d = self.end - self.start
        return np.array([d[1], -d[0]]) / np.hypot(*d)

    @property
    def offset(self) -> float:
        return -float(self.normal @ self.start)

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.end - self.start)))

    def c(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.normal + self.offset

    def grad_c(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.broadcast_to(self.normal, x.shape).copy()

    def param(self, x: np.ndarray) -> np.ndarray:
        d = self.end - self.start
        return (np.atleast_2d(x) - self.start) @ d / (d @ d)

    def point_at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.start + t[:, None] * (self.end - self.start)

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.point_at(np.clip(self.param(x), 0.0, 1.0))

    def to_record(self) -> str:
        return "line {:.17g} {:.17g} {:.17g} {:.17g}".format(*self.p0, *self.p1)


@dataclass(frozen=True)
class ArcSegment:
    """Circular arc from angle ``theta0`` to ``theta1`` (radians).

    ``inside`` is True when the domain lies inside the circle; then
    ``c = |x - center| - radius``, otherwise ``c = radius - |x - center|``.
    """

    center: tuple[float, float]
    radius: float
    theta0: float
    theta1: float
    inside: bool = True
    kind: str = field(default="arc", init=False)

    @property
    def sign(self) -> float:
        return 1.0 if self.inside else -1.0

    @property
    def start(self) -> np.ndarray:
        return self.point_at(0.0)[0]

    @property
    def end(self) -> np.ndarray:
        return self.point_at(1.0)[0]

    @property
    def length(self) -> float:
        return abs(self.theta1 - self.theta0) * self.radius

    def c(self, x: np.ndarray) -> np.ndarray:
        d = np.atleast_2d(x) - np.asarray(self.center)
        return self.sign * (np.hypot(d[:, 0], d[:, 1]) - self.radius)

    def grad_c(self, x: np.ndarray) -> np.ndarray:
        d = np.atleast_2d(x) - np.asarray(self.center)
        r = np.maximum(np.hypot(d[:, 0], d[:, 1]), 1e-300)
        return self.sign * d / r[:, None]

    def param(self, x: np.ndarray) -> np.ndarray:
        d = np.atleast_2d(x) - np.asarray(self.center)
        ang = np.arctan2(d[:, 1], d[:, 0])
        mid = 0.5 * (self.theta0 + self.theta1)
        delta = (ang - mid + np.pi) % (2 * np.pi) - np.pi
        return 0.5 + delta / (self.theta1 - self.theta0)

    def point_at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ang = self.theta0 + t * (self.theta1 - self.theta0)
        return np.asarray(self.center) + self.radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.point_at(np.clip(self.param(x), 0.0, 1.0))

    def to_record(self) -> str:
        return "arc {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {}".format(
            *self.center, self.radius, math.degrees(self.theta0), math.degrees(self.theta1),
            "inside" if self.inside else "outside",
        )


Segment = LineSegment | ArcSegment


def parse_segment(record: str) -> Segment:
    """Parse ``line x0 y0 x1 y1`` or ``arc cx cy r theta0_deg theta1_deg inside|outside``."""
    tok = record.split()
    if not tok:
        raise ValueError("empty segment record")
    if tok[0] == "line" and len(tok) == 5:
        x0, y0, x1, y1 = map(float, tok[1:])
        return LineSegment((x0, y0), (x1, y1))
    if tok[0] == "arc" and len(tok) in (6, 7):
        cx, cy, r, t0, t1 = map(float, tok[1:6])
        inside = tok[6] != "outside" if len(tok) == 7 else True
        return ArcSegment((cx, cy), r, math.radians(t0), math.radians(t1), inside)
    raise ValueError(f"bad segment record: {record!r}")


class BoundaryGeometry:
    """Closed loops of segments with corner adjacency."""

    def __init__(self, segments, tol: float = 1e-10):
        self.segments: list[Segment] = list(segments)
        n = len(self.segments)
        if n == 0:
            raise ValueError("geometry needs at least one segment")
        self.next = [-1] * n
        self.prev = [-1] * n
        scale = max(1.0, self.diameter)
        for i, si in enumerate(self.segments):
            for j, sj in enumerate(self.segments):
                if i != j and np.hypot(*(si.end - sj.start)) <= 1e-9 * scale:
                    self.next[i] = j
                    self.prev[j] = i
        self.corners = [self.segments[i].end for i in range(n) if self.next[i] >= 0]
        self.corner_segments = [(i, self.next[i]) for i in range(n) if self.next[i] >= 0]

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def bbox(self) -> np.ndarray:
        pts = np.vstack([s.point_at(np.linspace(0, 1, 33)) for s in self.segments])
        return np.array([pts.min(axis=0), pts.max(axis=0)])

    @property
    def diameter(self) -> float:
        lo, hi = self.bbox
        return float(np.hypot(*(hi - lo)))

    def c(self, seg_ids, x) -> np.ndarray:
        """Level-set value of the given segment at each point."""
        seg_ids = np.asarray(seg_ids, dtype=int)
        x = np.atleast_2d(x)
        out = np.empty(len(x))
        for s in np.unique(seg_ids):
            m = seg_ids == s
            out[m] = self.segments[s].c(x[m])
        return out

    def grad_c(self, seg_ids, x) -> np.ndarray:
        seg_ids = np.asarray(seg_ids, dtype=int)
        x = np.atleast_2d(x)
        out = np.empty_like(x, dtype=float)
        for s in np.unique(seg_ids):
            m = seg_ids == s
            out[m] = self.segments[s].grad_c(x[m])
        return out

    def slide(self, x, seg_ids) -> np.ndarray:
        """Move each point's active segment across corners it has passed.

        A point whose parameter on its segment falls below 0 (above 1) is
        handed to the previous (next) segment; hops repeat until the point
        is within bounds or no further neighbour exists.
        """
        x = np.atleast_2d(x)
        seg = np.array(seg_ids, dtype=int, copy=True)
        came_from = np.full(len(seg), -1)
        for _ in range(len(self.segments)):
            changed = False
            for s in np.unique(seg):
                m = np.flatnonzero(seg == s)
                t = self.segments[s].param(x[m])
                target = np.where(t < 0.0, self.prev[s], np.where(t > 1.0, self.next[s], -1))
                # no hop back across the corner just crossed (point outside a convex corner)
                hop = (target >= 0) & (target != came_from[m])
                if hop.any():
                    came_from[m[hop]] = s
                    seg[m[hop]] = target[hop]
                    changed = True
            if not changed:
                break
        return seg

    def slide_one(self, q, seg: int) -> int:
        return int(self.slide(np.asarray(q, dtype=float)[None], [seg])[0])

    def closest(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Closest boundary point, its segment, and the distance, for each point."""
        x = np.atleast_2d(x)
        best_d = np.full(len(x), np.inf)
        best_p = np.zeros_like(x, dtype=float)
        best_s = np.zeros(len(x), dtype=int)
        for i, s in enumerate(self.segments):
            p = s.project(x)
            d = np.hypot(*(p - x).T)
            m = d < best_d
            best_d[m], best_p[m], best_s[m] = d[m], p[m], i
        return best_p, best_s, best_d

    def distance(self, x) -> np.ndarray:
        return self.closest(x)[2]

    def to_records(self) -> list[str]:
        return [s.to_record() for s in self.segments]


def unit_square() -> BoundaryGeometry:
    return rectangle(0.0, 0.0, 1.0, 1.0)


def rectangle(x0: float, y0: float, x1: float, y1: float) -> BoundaryGeometry:
    return BoundaryGeometry(
        [
            LineSegment((x0, y0), (x1, y0)),
            LineSegment((x1, y0), (x1, y1)),
            LineSegment((x1, y1), (x0, y1)),
            LineSegment((x0, y1), (x0, y0)),
        ]
    )


def bump_channel(length: float = 3.0, height: float = 1.0, bump: float = 0.04) -> BoundaryGeometry:
    """Channel with a circular-arc bump of relative thickness ``bump`` on its middle third."""
    a, b = length / 3.0, 2.0 * length / 3.0
    chord = b - a
    sag = bump * chord
    radius = (0.25 * chord**2 + sag**2) / (2.0 * sag)
    cx, cy = 0.5 * (a + b), sag - radius
    t0 = math.atan2(0.0 - cy, a - cx)
    t1 = math.atan2(0.0 - cy, b - cx)
    return BoundaryGeometry(
        [
            LineSegment((0.0, 0.0), (a, 0.0)),
            ArcSegment((cx, cy), radius, t0, t1, inside=False),
            LineSegment((b, 0.0), (length, 0.0)),
            LineSegment((length, 0.0), (length, height)),
            LineSegment((length, height), (0.0, height)),
            LineSegment((0.0, height), (0.0, 0.0)),
        ]
    )


DOUBLE_RAMP = dict(flat=1.0, ramp1=1.0, ramp2=0.6, angle1=25.0, angle2=37.0, height=1.5)


def double_ramp_profile(**kw) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints of the piecewise-linear ramp floor: x positions and heights."""
    p = {**DOUBLE_RAMP, **kw}
    xb = np.array([0.0, p["flat"], p["flat"] + p["ramp1"], p["flat"] + p["ramp1"] + p["ramp2"]])
    y1 = p["ramp1"] * math.tan(math.radians(p["angle1"]))
    y2 = y1 + p["ramp2"] * math.tan(math.radians(p["angle2"]))
    return xb, np.array([0.0, 0.0, y1, y2])


def double_ramp(**kw) -> BoundaryGeometry:
    """Six-segment double ramp: inflow, flat floor, two inclines, outflow, top."""
    p = {**DOUBLE_RAMP, **kw}
    xb, yb = double_ramp_profile(**kw)
    h = p["height"]
    pts = list(zip(xb, yb))
    return BoundaryGeometry(
        [
            LineSegment(pts[0], pts[1]),
            LineSegment(pts[1], pts[2]),
            LineSegment(pts[2], pts[3]),
            LineSegment(pts[3], (xb[3], h)),
            LineSegment((xb[3], h), (0.0, h)),
            LineSegment((0.0, h), pts[0]),
        ]
    )


PRESETS = {
    "unit_square": unit_square,
    "channel": bump_channel,
    "double_ramp": double_ramp,
}
