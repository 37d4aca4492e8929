"""Embedded shapes: inside tests, closest-point projection and boundary frames.

Conventions
-----------
The computational domain surrounds the embedded shape (the "hole"). The true
normal ``n`` is the outward normal of the computational domain, so on the
shape boundary it points *into* the hole. For a point ``p`` outside the hole
with closest boundary point ``x`` the distance vector is ``d = x - p`` and
``d = |d| n`` holds exactly; at rectangle corners ``n`` is taken as
``d / |d|``. Points on the boundary get ``d = 0`` and the face normal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

__all__ = [
    "BoundaryFrame",
    "Rectangle",
    "Circle",
    "YCenterRectangle",
    "AspectRectangle",
    "FixedDisc",
    "make_shape",
    "closest_point",
    "is_inside",
]

# geometric tolerance for "on the boundary"
TOL = 1e-12


@dataclass(frozen=True)
class BoundaryFrame:
    """Closest point ``x`` on the true boundary seen from a point ``p``."""

    x: np.ndarray
    d: np.ndarray
    n: np.ndarray
    tau: np.ndarray

    @property
    def distance(self) -> float:
        return float(np.hypot(*self.d))


@dataclass(frozen=True)
class Frames:
    """Vectorized boundary frames, every field of shape ``(m, 2)``."""

    x: np.ndarray
    d: np.ndarray
    n: np.ndarray
    tau: np.ndarray

    def __getitem__(self, i) -> BoundaryFrame:
        return BoundaryFrame(self.x[i], self.d[i], self.n[i], self.tau[i])


def _rotate(n: np.ndarray) -> np.ndarray:
    """Rotate vectors by +90 degrees."""
    return np.column_stack([-n[:, 1], n[:, 0]])


def _finish(points, x, n_fallback) -> Frames:
    d = x - points
    dist = np.hypot(d[:, 0], d[:, 1])
    n = n_fallback.copy()
    far = dist > TOL
    n[far] = d[far] / dist[far, None]
    return Frames(x, d, n, _rotate(n))


@dataclass(frozen=True)
class Rectangle:
    """Open axis-aligned rectangle ``(x0, x1) x (y0, y1)``."""

    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return self.x0, self.x1, self.y0, self.y1

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return (
            (p[:, 0] > self.x0 + TOL)
            & (p[:, 0] < self.x1 - TOL)
            & (p[:, 1] > self.y0 + TOL)
            & (p[:, 1] < self.y1 - TOL)
        )

    def frames(self, points) -> Frames:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.contains(p).any():
            raise ValueError("closest-point projection requested for a point inside the shape")
        x = np.column_stack([np.clip(p[:, 0], self.x0, self.x1), np.clip(p[:, 1], self.y0, self.y1)])
        # face normals into the hole, in perimeter order: bottom, right, top, left;
        # argmin picks the first face on ties (corners)
        gaps = np.column_stack(
            [
                np.abs(p[:, 1] - self.y0),
                np.abs(p[:, 0] - self.x1),
                np.abs(p[:, 1] - self.y1),
                np.abs(p[:, 0] - self.x0),
            ]
        )
        faces = np.array([[0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, 0.0]])
        return _finish(p, x, faces[np.argmin(gaps, axis=1)])

    def intersects_triangles(self, tri: np.ndarray) -> np.ndarray:
        """True where a closed triangle meets the open rectangle.

        Separating-axis test over the two box axes and the three edge normals
        of each triangle; touching does not count as intersecting. Triangles
        with a vertex strictly inside are hits without further tests.
        """
        x = [tri[:, k, 0] for k in range(3)]
        y = [tri[:, k, 1] for k in range(3)]
        overlap = ~(
            (np.maximum(np.maximum(x[0], x[1]), x[2]) <= self.x0 + TOL)
            | (np.minimum(np.minimum(x[0], x[1]), x[2]) >= self.x1 - TOL)
            | (np.maximum(np.maximum(y[0], y[1]), y[2]) <= self.y0 + TOL)
            | (np.minimum(np.minimum(y[0], y[1]), y[2]) >= self.y1 - TOL)
        )
        hit = overlap & self.contains(tri.reshape(-1, 2)).reshape(-1, 3).any(axis=1)
        rest = np.flatnonzero(overlap & ~hit)
        hit[rest] = ~self._edge_axes_separate(tri[rest])
        return hit

    def _edge_axes_separate(self, tri: np.ndarray) -> np.ndarray:
        corners = np.array(
            [[self.x0, self.y0], [self.x1, self.y0], [self.x1, self.y1], [self.x0, self.y1]]
        )
        sep = np.zeros(tri.shape[0], dtype=bool)
        for k in range(3):
            a = tri[:, (k + 1) % 3]
            b = tri[:, (k + 2) % 3]
            e = b - a
            # outward normal of a counterclockwise triangle
            nu = np.column_stack([e[:, 1], -e[:, 0]])
            nu /= np.hypot(nu[:, 0], nu[:, 1])[:, None]
            s = corners @ nu.T - np.einsum("ej,ej->e", a, nu)[None, :]
            sep |= s.min(axis=0) >= -TOL
        return sep


@dataclass(frozen=True)
class Circle:
    """Open disc of radius ``r`` around ``(cx, cy)``."""

    cx: float
    cy: float
    r: float

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return self.cx - self.r, self.cx + self.r, self.cy - self.r, self.cy + self.r

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.hypot(p[:, 0] - self.cx, p[:, 1] - self.cy) < self.r - TOL

    def frames(self, points) -> Frames:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.contains(p).any():
            raise ValueError("closest-point projection requested for a point inside the shape")
        rel = p - np.array([self.cx, self.cy])
        u = rel / np.hypot(rel[:, 0], rel[:, 1])[:, None]
        x = np.array([self.cx, self.cy]) + self.r * u
        return _finish(p, x, -u)

    def intersects_triangles(self, tri: np.ndarray) -> np.ndarray:
        c = np.array([self.cx, self.cy])
        dist = np.full(tri.shape[0], np.inf)
        inside = np.ones(tri.shape[0], dtype=bool)
        for k in range(3):
            a = tri[:, (k + 1) % 3]
            b = tri[:, (k + 2) % 3]
            e = b - a
            t = np.clip(np.einsum("ej,ej->e", c - a, e) / np.einsum("ej,ej->e", e, e), 0.0, 1.0)
            q = a + t[:, None] * e
            dist = np.minimum(dist, np.hypot(*(c - q).T))
            cross = e[:, 0] * (c[1] - a[:, 1]) - e[:, 1] * (c[0] - a[:, 0])
            inside &= cross >= 0.0
        dist[inside] = 0.0
        return dist < self.r - TOL


class _Family:
    """A one-parameter family of shapes."""

    kind: ClassVar[str] = ""
    mu_range: tuple[float, float] = (-np.inf, np.inf)

    def check(self, mu: float) -> float:
        lo, hi = self.mu_range
        mu = float(mu)
        if not lo <= mu <= hi:
            raise ValueError(f"{self.kind}: parameter {mu} outside admissible range [{lo}, {hi}]")
        return mu

    def at(self, mu: float):
        raise NotImplementedError


@dataclass(frozen=True)
class YCenterRectangle(_Family):
    """Rectangle of fixed size whose vertical center is the parameter."""

    width: float = 0.8
    height: float = 0.7
    xc: float = 0.0
    mu_range: tuple[float, float] = (-0.5, 0.5)
    kind: ClassVar[str] = "rectangle_ycenter"

    def at(self, mu: float) -> Rectangle:
        mu = self.check(mu)
        hw, hh = 0.5 * self.width, 0.5 * self.height
        return Rectangle(self.xc - hw, self.xc + hw, mu - hh, mu + hh)


@dataclass(frozen=True)
class AspectRectangle(_Family):
    """Centered rectangle ``k1 x k2`` with aspect ratio ``mu = k1 / k2``.

    The constraint ``mu * k2 = product`` pins the width ``k1`` to ``product``
    and leaves the height ``k2 = product / mu`` free.
    """

    product: float = 0.2
    center: tuple[float, float] = (0.0, 0.0)
    mu_range: tuple[float, float] = (0.29, 6.67)
    kind: ClassVar[str] = "rectangle_aspect"

    def at(self, mu: float) -> Rectangle:
        mu = self.check(mu)
        k2 = self.product / mu
        k1 = mu * k2
        cx, cy = self.center
        return Rectangle(cx - 0.5 * k1, cx + 0.5 * k1, cy - 0.5 * k2, cy + 0.5 * k2)


@dataclass(frozen=True)
class FixedDisc(_Family):
    """Disc that does not depend on the parameter."""

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.5
    mu_range: tuple[float, float] = (-np.inf, np.inf)
    kind: ClassVar[str] = "disc"

    def at(self, mu: float = 0.0) -> Circle:
        self.check(mu)
        return Circle(float(self.center[0]), float(self.center[1]), float(self.radius))


_KINDS = {
    "rectangle_ycenter": YCenterRectangle,
    "rectangle_aspect": AspectRectangle,
    "disc": FixedDisc,
}


def make_shape(kind: str, **params) -> _Family:
    """Build a shape family from its config name and keyword data."""
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown shape kind {kind!r}; expected one of {sorted(_KINDS)}") from None
    for key in ("mu_range", "center"):
        if key in params:
            params[key] = tuple(float(v) for v in params[key])
    return cls(**params)


def is_inside(shape, mu: float, p) -> bool | np.ndarray:
    """Strict inside test for the hole; boundary points are outside."""
    inside = shape.at(mu).contains(p)
    return bool(inside[0]) if np.ndim(p) == 1 else inside


def closest_point(shape, mu: float, p) -> BoundaryFrame:
    """Closest point on the shape boundary with distance vector and normals."""
    return shape.at(mu).frames(np.asarray(p, dtype=float).reshape(1, 2))[0]
