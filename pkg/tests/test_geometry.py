import math

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from gpdist.geometry import (
    ConvexPolygon,
    GeometryError,
    box_polygon,
    epa_penetration,
    gjk_distance,
    regular_polygon,
    signed_distance,
    support,
)


def _segment_distance(p, q):
    d = q - p
    t = np.clip(-(p @ d) / (d @ d), 0.0, 1.0)
    return float(np.linalg.norm(p + t * d))


def brute_force_signed_distance(a: ConvexPolygon, b: ConvexPolygon) -> float:
    """Signed distance of the origin to the explicit Minkowski difference hull."""
    points = (a.vertices[:, None, :] - b.vertices[None, :, :]).reshape(-1, 2)
    hull = ConvexHull(points)
    offsets = hull.equations[:, 2]
    if np.all(offsets <= 0.0):
        return float(np.max(offsets))
    ring = points[hull.vertices]
    return min(_segment_distance(ring[i], ring[(i + 1) % len(ring)]) for i in range(len(ring)))


def random_polygon(rng):
    return regular_polygon(
        rng.uniform(-1.5, 1.5, size=2),
        rng.uniform(0.2, 1.0),
        int(rng.integers(3, 9)),
        phase=rng.uniform(0.0, 2.0 * math.pi),
    )


def test_separated_squares():
    a = box_polygon((0.0, 0.0), 1.0, 1.0)
    b = box_polygon((3.0, 0.0), 1.0, 1.0)
    result = gjk_distance(a, b)
    assert not result.intersecting
    assert result.distance == pytest.approx(2.0, abs=1e-12)
    assert signed_distance(a, b) == pytest.approx(2.0, abs=1e-12)


def test_touching_squares_report_zero_and_do_not_intersect():
    a = box_polygon((0.0, 0.0), 1.0, 1.0)
    b = box_polygon((1.0, 0.0), 1.0, 1.0)
    assert not gjk_distance(a, b).intersecting
    assert signed_distance(a, b) == 0.0


def test_coincident_squares_penetrate_by_side_length():
    a = box_polygon((0.0, 0.0), 1.0, 1.0)
    assert signed_distance(a, a) == pytest.approx(-1.0, abs=1e-9)


def test_partial_overlap():
    a = ConvexPolygon([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    b = ConvexPolygon([[0.8, 0.0], [1.8, 0.0], [1.8, 1.0], [0.8, 1.0]])
    result = gjk_distance(a, b)
    assert result.intersecting
    assert epa_penetration(a, b, result.simplex) == pytest.approx(0.2, abs=1e-9)
    assert signed_distance(a, b) == pytest.approx(-0.2, abs=1e-9)


def test_distance_is_symmetric_and_translation_invariant(rng):
    for _ in range(50):
        a, b = random_polygon(rng), random_polygon(rng)
        d = signed_distance(a, b)
        assert signed_distance(b, a) == pytest.approx(d, abs=1e-7)
        offset = rng.uniform(-5.0, 5.0, size=2)
        assert signed_distance(a.translated(offset), b.translated(offset)) == pytest.approx(d, abs=1e-7)


def test_matches_minkowski_hull_brute_force():
    rng = np.random.default_rng(7)
    checked = intersecting = 0
    while checked < 500:
        a, b = random_polygon(rng), random_polygon(rng)
        expected = brute_force_signed_distance(a, b)
        if abs(expected) < 1e-6:
            continue
        assert signed_distance(a, b) == pytest.approx(expected, abs=1e-7)
        checked += 1
        intersecting += expected < 0.0
    assert 0 < intersecting < checked


def test_support_picks_extreme_vertex():
    square = box_polygon((0.0, 0.0), 2.0, 2.0)
    np.testing.assert_array_equal(support(square, [1.0, 1.0]), [1.0, 1.0])
    np.testing.assert_array_equal(support(square, [-1.0, -1.0]), [-1.0, -1.0])


def test_support_rejects_degenerate_direction():
    square = box_polygon((0.0, 0.0), 2.0, 2.0)
    with pytest.raises(GeometryError, match="degenerate direction"):
        support(square, [0.0, 0.0])
    with pytest.raises(GeometryError):
        support(square, [math.nan, 1.0])


@pytest.mark.parametrize("vertices", [
    [[0.0, 0.0], [2.0, 0.0], [1.0, 0.5], [2.0, 2.0], [0.0, 2.0]],  # reflex vertex
    [[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]],  # clockwise
    [[0.0, 0.0], [1.0, 0.0]],
    [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],  # zero area
])
def test_invalid_polygons_are_rejected(vertices):
    with pytest.raises(GeometryError):
        ConvexPolygon(vertices)


def test_polygon_vertices_are_read_only():
    square = box_polygon((0.0, 0.0), 1.0, 1.0)
    assert square.area == pytest.approx(1.0)
    with pytest.raises(ValueError):
        square.vertices[0, 0] = 5.0
