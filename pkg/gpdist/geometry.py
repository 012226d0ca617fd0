"""
Distance queries between convex polygons.

Separation distance comes from GJK on the Minkowski difference ``A - B``;
penetration depth comes from the expanding polytope algorithm (EPA) seeded
with the terminal GJK simplex. Everything here is 2-D.
"""
import logging
import math
from dataclasses import InitVar, dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import GpdistError

logger = logging.getLogger(__name__)

CONVEXITY_TOLERANCE = 1e-9
GJK_MAX_ITERATIONS = 64
GJK_TOLERANCE = 1e-10
EPA_MAX_ITERATIONS = 128
EPA_TOLERANCE = 1e-10
# |v| at or below this means GJK reached the origin
CONTACT_TOLERANCE = 1e-12
CONTAINMENT_TOLERANCE = 1e-12

_AXES = (
    np.array([1.0, 0.0]),
    np.array([-1.0, 0.0]),
    np.array([0.0, 1.0]),
    np.array([0.0, -1.0]),
)


class GeometryError(GpdistError):
    """Invalid polygon or a distance query that cannot be answered."""


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """
    A convex polygon with counter-clockwise vertices.

    Args:
        vertices: (n, 2) array-like of workspace points
        validate: check vertex count, orientation and convexity. Link bodies
            produced by the kinematics module are valid by construction and
            skip the check.
    """
    vertices: np.ndarray
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool):
        vertices = np.array(self.vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise GeometryError("polygon vertices must be an (n, 2) array", f"got shape {vertices.shape}")
        vertices.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        if validate:
            _check_convex_ccw(vertices)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        """Mean of the vertices (always interior for a convex polygon)."""
        return self.vertices.mean(axis=0)

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    def translated(self, offset: Sequence[float]) -> "ConvexPolygon":
        return ConvexPolygon(self.vertices + np.asarray(offset, dtype=float), validate=False)

    def to_list(self) -> List[List[float]]:
        return self.vertices.tolist()


@dataclass(frozen=True)
class GjkResult:
    """
    Outcome of a GJK query.

    ``distance`` is the separation when the bodies are disjoint (0.0 when
    they touch). When ``intersecting`` is set, ``simplex`` holds points of
    the Minkowski difference whose hull contains the origin.
    """
    distance: float
    intersecting: bool
    simplex: np.ndarray
    iterations: int


def _signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _check_convex_ccw(vertices: np.ndarray) -> None:
    if len(vertices) < 3:
        raise GeometryError("polygon needs at least 3 vertices", f"got {len(vertices)}")
    if not np.all(np.isfinite(vertices)):
        raise GeometryError("polygon vertices must be finite")
    area = _signed_area(vertices)
    if area <= 0.0:
        raise GeometryError("polygon vertices must be counter-clockwise", f"signed area {area:.6g}")
    edges = np.roll(vertices, -1, axis=0) - vertices
    following = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * following[:, 1] - edges[:, 1] * following[:, 0]
    if np.any(cross <= -CONVEXITY_TOLERANCE):
        raise GeometryError("polygon is not convex", f"reflex vertex {int(np.argmin(cross)) + 1}")
    # positive turns that wind around twice (a star) are not convex either
    turning = np.arctan2(cross, np.einsum("ij,ij->i", edges, following)).sum()
    if turning > 2.0 * math.pi + 1e-6:
        raise GeometryError("polygon is self-intersecting")


def box_polygon(center: Sequence[float], width: float, height: float) -> ConvexPolygon:
    """Axis-aligned rectangle centred on ``center``."""
    cx, cy = float(center[0]), float(center[1])
    hw, hh = width / 2.0, height / 2.0
    return ConvexPolygon([[cx - hw, cy - hh], [cx + hw, cy - hh], [cx + hw, cy + hh], [cx - hw, cy + hh]])


def regular_polygon(center: Sequence[float], radius: float, n_vertices: int, phase: float = 0.0) -> ConvexPolygon:
    angles = phase + 2.0 * math.pi * np.arange(n_vertices) / n_vertices
    points = np.asarray(center, dtype=float) + radius * np.column_stack((np.cos(angles), np.sin(angles)))
    return ConvexPolygon(points)


def support(poly: ConvexPolygon, direction: Sequence[float]) -> np.ndarray:
    """
    Return a vertex of ``poly`` maximising the dot product with ``direction``.

    Raises:
        GeometryError: if the direction is zero or not finite
    """
    d = np.asarray(direction, dtype=float)
    if d.shape != (2,) or not np.all(np.isfinite(d)) or not np.any(d):
        raise GeometryError("degenerate direction", f"got {d.tolist()}")
    return poly.vertices[int(np.argmax(poly.vertices @ d))]


def _minkowski_support(va: np.ndarray, vb: np.ndarray, d: np.ndarray) -> np.ndarray:
    return va[int(np.argmax(va @ d))] - vb[int(np.argmin(vb @ d))]


def _closest_on_segment(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return a, [a]
    t = -float(a @ ab) / denom
    if t <= 0.0:
        return a, [a]
    if t >= 1.0:
        return b, [b]
    return a + t * ab, [a, b]


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def _origin_in_triangle(a: np.ndarray, b: np.ndarray, c: np.ndarray, margin: float = 0.0) -> bool:
    """Closed containment test; with a positive margin the origin must be strictly inside."""
    if abs(_cross(a, b, c)) <= 1e-300:
        return False
    origin = np.zeros(2)
    signs = (_cross(a, b, origin), _cross(b, c, origin), _cross(c, a, origin))
    if margin > 0.0:
        return min(signs) > margin or max(signs) < -margin
    return min(signs) >= 0.0 or max(signs) <= 0.0


def _closest_on_simplex(simplex: List[np.ndarray]) -> Tuple[np.ndarray, List[np.ndarray]]:
    if len(simplex) == 1:
        return simplex[0], simplex
    if len(simplex) == 2:
        return _closest_on_segment(simplex[0], simplex[1])
    a, b, c = simplex
    if _origin_in_triangle(a, b, c):
        return np.zeros(2), simplex
    best_v, best_simplex = None, None
    for p, q in ((a, b), (b, c), (c, a)):
        v, reduced = _closest_on_segment(p, q)
        if best_v is None or v @ v < best_v @ best_v:
            best_v, best_simplex = v, reduced
    return best_v, best_simplex


def _convex_hull(points: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Monotone-chain hull, counter-clockwise, collinear points dropped."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) <= 2:
        return [np.array(p) for p in pts]

    def turn(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: List[Tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and turn(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: List[Tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and turn(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return [np.array(p) for p in lower[:-1] + upper[:-1]]


def _enclosing_polygon(va: np.ndarray, vb: np.ndarray, simplex: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Grow a simplex that touches the origin into a polygon EPA can expand."""
    points = [np.asarray(p, dtype=float) for p in simplex]
    hull = _convex_hull(points)
    if len(hull) == 2:
        edge = hull[1] - hull[0]
        normal = np.array([-edge[1], edge[0]])
        points += [_minkowski_support(va, vb, normal), _minkowski_support(va, vb, -normal)]
        hull = _convex_hull(points)
    if len(hull) < 3:
        points += [_minkowski_support(va, vb, d) for d in _AXES]
        hull = _convex_hull(points)
    if len(hull) < 3:
        raise GeometryError("degenerate Minkowski difference")
    return hull


def _expand(va: np.ndarray, vb: np.ndarray, polygon: List[np.ndarray]) -> float:
    polygon = list(polygon)
    for iteration in range(EPA_MAX_ITERATIONS):
        best_index, best_distance, best_normal = -1, math.inf, None
        n = len(polygon)
        for i in range(n):
            p, q = polygon[i], polygon[(i + 1) % n]
            edge = q - p
            length = math.hypot(edge[0], edge[1])
            if length <= 1e-15:
                continue
            # outward normal of a counter-clockwise edge
            normal = np.array([edge[1], -edge[0]]) / length
            distance = float(normal @ p)
            if distance < best_distance:
                best_index, best_distance, best_normal = i, distance, normal
        if best_normal is None:
            raise GeometryError("degenerate polytope in EPA")
        if iteration == 0 and best_distance < -CONTAINMENT_TOLERANCE:
            raise GeometryError("penetration depth requested for disjoint bodies")
        w = _minkowski_support(va, vb, best_normal)
        if float(best_normal @ w) - best_distance <= EPA_TOLERANCE:
            return max(best_distance, 0.0)
        polygon.insert(best_index + 1, w)
    raise GeometryError("EPA did not converge", f"{EPA_MAX_ITERATIONS} iterations")


def _resolve_contact(va: np.ndarray, vb: np.ndarray, simplex: List[np.ndarray], iterations: int) -> GjkResult:
    # The origin lies in A - B; decide between touching (origin on the
    # boundary) and overlap (origin in the interior).
    if len(simplex) == 3 and _origin_in_triangle(*simplex, margin=CONTACT_TOLERANCE):
        return GjkResult(0.0, True, np.array(simplex), iterations)
    polygon = _enclosing_polygon(va, vb, simplex)
    if _expand(va, vb, polygon) <= EPA_TOLERANCE:
        return GjkResult(0.0, False, np.array(simplex), iterations)
    return GjkResult(0.0, True, np.array(polygon), iterations)


def gjk_distance(a: ConvexPolygon, b: ConvexPolygon) -> GjkResult:
    """
    Separation distance between two convex polygons.

    Touching polygons report a distance of 0.0 and are not intersecting.

    Raises:
        GeometryError: if the iteration cap is reached
    """
    va, vb = a.vertices, b.vertices
    d = a.centroid - b.centroid
    if not np.any(d):
        d = _AXES[0]
    v = _minkowski_support(va, vb, d)
    simplex = [v]
    for iteration in range(1, GJK_MAX_ITERATIONS + 1):
        vv = float(v @ v)
        if vv <= CONTACT_TOLERANCE * CONTACT_TOLERANCE:
            return _resolve_contact(va, vb, simplex, iteration)
        w = _minkowski_support(va, vb, -v)
        if vv - float(v @ w) <= GJK_TOLERANCE or any(np.array_equal(w, s) for s in simplex):
            return GjkResult(math.sqrt(vv), False, np.array(simplex), iteration)
        simplex.append(w)
        v, simplex = _closest_on_simplex(simplex)
    raise GeometryError("GJK did not converge", f"{GJK_MAX_ITERATIONS} iterations")


def epa_penetration(a: ConvexPolygon, b: ConvexPolygon, simplex: np.ndarray) -> float:
    """
    Minimum translation distance separating two intersecting polygons.

    Args:
        a, b: the polygons passed to :func:`gjk_distance`
        simplex: the terminal simplex of an intersecting GJK result

    Raises:
        GeometryError: if the simplex does not enclose the origin (disjoint bodies)
    """
    simplex = np.atleast_2d(np.asarray(simplex, dtype=float))
    if simplex.shape[1] != 2 or len(simplex) == 0:
        raise GeometryError("simplex must be an (k, 2) array")
    polygon = _enclosing_polygon(a.vertices, b.vertices, list(simplex))
    return _expand(a.vertices, b.vertices, polygon)


def signed_distance(a: ConvexPolygon, b: ConvexPolygon) -> float:
    """Separation distance when disjoint, negated penetration depth when overlapping."""
    result = gjk_distance(a, b)
    if not result.intersecting:
        return result.distance
    return -epa_penetration(a, b, result.simplex)
