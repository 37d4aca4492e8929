import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbmrom.geometry import (
    AspectRectangle,
    Circle,
    FixedDisc,
    Rectangle,
    YCenterRectangle,
    closest_point,
    is_inside,
    make_shape,
)


def polyline_oracle(rect: Rectangle, p, n=4001):
    """Nearest point on a densely sampled rectangle perimeter, including the corners."""
    x0, x1, y0, y1 = rect.bounds
    t = np.linspace(0.0, 1.0, n)
    pts = np.concatenate(
        [
            np.column_stack([x0 + t * (x1 - x0), np.full(n, y0)]),
            np.column_stack([np.full(n, x1), y0 + t * (y1 - y0)]),
            np.column_stack([x1 - t * (x1 - x0), np.full(n, y1)]),
            np.column_stack([np.full(n, x0), y1 - t * (y1 - y0)]),
        ]
    )
    k = np.argmin(np.hypot(*(pts - p).T))
    return pts[k]


def clip_area(tri, rect: Rectangle):
    """Area of triangle ∩ rectangle by Sutherland-Hodgman clipping."""
    poly = [tuple(v) for v in tri]
    x0, x1, y0, y1 = rect.bounds
    planes = [(1, 0, -x0), (-1, 0, x1), (0, 1, -y0), (0, -1, y1)]
    for a, b, c in planes:
        out = []
        for i in range(len(poly)):
            p, q = poly[i], poly[(i + 1) % len(poly)]
            fp, fq = a * p[0] + b * p[1] + c, a * q[0] + b * q[1] + c
            if fp >= 0:
                out.append(p)
            if (fp >= 0) != (fq >= 0):
                s = fp / (fp - fq)
                out.append((p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])))
        poly = out
        if not poly:
            return 0.0
    xs, ys = np.array(poly).T
    return 0.5 * abs(np.dot(xs, np.roll(ys, -1)) - np.dot(ys, np.roll(xs, -1)))


def test_inside_examples():
    shape = YCenterRectangle()
    assert is_inside(shape, 0.0, (0.0, 0.0))
    assert not is_inside(shape, 0.0, (1.0, 0.0))
    disc = FixedDisc(radius=0.5)
    assert not is_inside(disc, 0.0, (0.5, 0.0))
    assert is_inside(disc, 0.0, (0.49, 0.0))


def test_face_projection():
    fr = closest_point(YCenterRectangle(), 0.0, (0.5, 0.0))
    np.testing.assert_allclose(fr.x, [0.4, 0.0])
    np.testing.assert_allclose(fr.d, [-0.1, 0.0], atol=1e-15)
    # the normal points into the hole
    np.testing.assert_allclose(fr.n, [-1.0, 0.0])
    np.testing.assert_allclose(fr.tau, [0.0, -1.0])


def test_disc_projection():
    c, r = np.array([0.3, -0.2]), 0.5
    circle = Circle(*c, r)
    p = c + 2 * r * np.array([math.cos(0.7), math.sin(0.7)])
    fr = circle.frames(p)[0]
    np.testing.assert_allclose(fr.x, c + r * (p - c) / np.linalg.norm(p - c))
    assert fr.distance == pytest.approx(r)
    np.testing.assert_allclose(fr.n, fr.d / fr.distance)


@pytest.mark.parametrize("mu", [-0.5, -0.2, 0.0, 0.31, 0.5])
def test_corner_projection(mu):
    shape = YCenterRectangle()
    p = np.array([0.5, mu + 0.45])
    fr = closest_point(shape, mu, p)
    np.testing.assert_allclose(fr.x, [0.4, mu + 0.35], atol=1e-15)
    np.testing.assert_allclose(fr.d, [-0.1, -0.1], atol=1e-14)
    np.testing.assert_allclose(fr.n, np.array([-1.0, -1.0]) / math.sqrt(2.0), atol=1e-12)
    np.testing.assert_allclose(fr.x, polyline_oracle(shape.at(mu), p), atol=1e-12)


points_outside = st.tuples(st.floats(-2.0, 2.0), st.floats(-1.5, 1.5))


@given(p=points_outside, mu=st.floats(-0.5, 0.5))
@settings(max_examples=200, deadline=None)
def test_rectangle_projection_oracle(p, mu):
    shape = YCenterRectangle()
    rect = shape.at(mu)
    p = np.array(p)
    if rect.contains(p)[0]:
        with pytest.raises(ValueError):
            closest_point(shape, mu, p)
        return
    fr = closest_point(shape, mu, p)
    oracle = polyline_oracle(rect, p)
    # the sampled polyline has spacing <= 1e-3 / 4000
    assert fr.distance <= np.hypot(*(oracle - p)) + 1e-12
    assert fr.distance >= np.hypot(*(oracle - p)) - 5e-4
    np.testing.assert_allclose(fr.x + 0.0, p + fr.d)
    assert abs(np.hypot(*fr.n) - 1.0) < 1e-12
    assert abs(fr.n @ fr.tau) < 1e-12
    # idempotence: the boundary point projects to itself
    again = closest_point(shape, mu, fr.x)
    np.testing.assert_allclose(again.x, fr.x, atol=1e-15)
    assert again.distance == 0.0


@given(p=points_outside, mu=st.floats(-0.4, 0.4), shift=st.floats(-0.1, 0.1))
@settings(max_examples=100, deadline=None)
def test_shift_consistency(p, mu, shift):
    shape = YCenterRectangle()
    p = np.array(p)
    if shape.at(mu).contains(p)[0]:
        return
    a = closest_point(shape, mu, p)
    b = closest_point(shape, mu + shift, p + [0.0, shift])
    np.testing.assert_allclose(b.x, a.x + [0.0, shift], atol=1e-12)
    np.testing.assert_allclose(b.d, a.d, atol=1e-12)


def test_projection_inside_raises():
    with pytest.raises(ValueError, match="inside"):
        closest_point(YCenterRectangle(), 0.0, (0.0, 0.1))
    with pytest.raises(ValueError, match="inside"):
        Circle(0, 0, 1).frames([[0.2, 0.2]])


def test_parameter_range():
    with pytest.raises(ValueError, match="outside admissible range"):
        YCenterRectangle().at(0.6)
    with pytest.raises(ValueError):
        AspectRectangle().at(0.1)


@pytest.mark.parametrize("mu", [0.29, 1.0, 6.67])
def test_aspect_family(mu):
    rect = AspectRectangle().at(mu)
    k1 = rect.x1 - rect.x0
    k2 = rect.y1 - rect.y0
    assert k1 / k2 == pytest.approx(mu)
    assert k1 == pytest.approx(0.2)


def test_make_shape():
    assert make_shape("rectangle_ycenter", mu_range=[-0.3, 0.3]).mu_range == (-0.3, 0.3)
    assert isinstance(make_shape("disc", radius=0.2), FixedDisc)
    with pytest.raises(ValueError, match="unknown shape kind"):
        make_shape("ellipse")


grid = st.integers(-8, 8).map(lambda k: k / 4.0)


@given(v=st.lists(st.tuples(grid, grid), min_size=3, max_size=3))
@settings(max_examples=400, deadline=None)
def test_triangle_rectangle_intersection_oracle(v):
    tri = np.array(v, dtype=float)
    cross = (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1]) - (tri[1, 1] - tri[0, 1]) * (tri[2, 0] - tri[0, 0])
    if cross == 0:
        return
    if cross < 0:
        tri = tri[[0, 2, 1]]
    rect = Rectangle(-0.5, 0.75, -0.25, 1.0)
    got = rect.intersects_triangles(tri[None])[0]
    assert got == (clip_area(tri, rect) > 1e-12)


@given(v=st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=3, max_size=3))
@settings(max_examples=300, deadline=None)
def test_triangle_circle_intersection_oracle(v):
    tri = np.array(v, dtype=float)
    cross = (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1]) - (tri[1, 1] - tri[0, 1]) * (tri[2, 0] - tri[0, 0])
    if abs(cross) < 1e-6:
        return
    if cross < 0:
        tri = tri[[0, 2, 1]]
    circle = Circle(0.1, -0.05, 0.4)
    # dense barycentric sampling of the closed triangle
    s = np.linspace(0, 1, 201)
    a, b = np.meshgrid(s, s)
    keep = a + b <= 1
    pts = tri[0] + a[keep, None] * (tri[1] - tri[0]) + b[keep, None] * (tri[2] - tri[0])
    dmin = np.hypot(pts[:, 0] - 0.1, pts[:, 1] + 0.05).min()
    got = circle.intersects_triangles(tri[None])[0]
    if abs(dmin - 0.4) > 1e-2:
        assert got == (dmin < 0.4)
