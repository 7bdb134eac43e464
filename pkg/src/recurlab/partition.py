"""Piece families and cylinders of matrix torus maps, plus Minkowski-content tools.

Every piece {x in [0,1)^d : xT in c + [0,1)^d} is convex, and so is every
cylinder, because T is affine on each piece.  The planar path therefore only
needs convex clipping.  Integer matrices in d >= 3 go through a half-space
description with vertex enumeration from scipy.

Boundary contents use the /eps normalization m_d(A(eps))/eps, under which a
rectifiable planar curve has content 2 x length (C_M = 2).
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, cKDTree

from .errors import (
    DegeneracyWarning,
    DomainError,
    FeatureScaleWarning,
    RefinementLimit,
    UnsupportedDimension,
)

C_M = 2.0
CLIP_TOL = 1e-12
SLIVER_AREA = 1e-15
MIN_DIAMETER = 1e-12
MAX_CYLINDERS = 2_000_000


# ---------------------------------------------------------------------------
# planar convex polygons

def _signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _dedupe(v):
    if len(v) == 0:
        return v
    keep = [v[0]]
    for p in v[1:]:
        if np.max(np.abs(p - keep[-1])) > CLIP_TOL:
            keep.append(p)
    if len(keep) > 1 and np.max(np.abs(keep[0] - keep[-1])) <= CLIP_TOL:
        keep.pop()
    return np.array(keep)


@dataclass(frozen=True, eq=False)
class Polygon2:
    """Counterclockwise polygon; clipping assumes convexity."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if len(v) >= 3 and _signed_area(v) < 0:
            v = v[::-1]
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def box(cls, x0, y0, x1, y1):
        return cls(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float))

    @classmethod
    def unit_square(cls):
        return cls.box(0.0, 0.0, 1.0, 1.0)

    @property
    def area(self):
        return _signed_area(self.vertices) if len(self.vertices) >= 3 else 0.0

    @property
    def perimeter(self):
        v = self.vertices
        if len(v) < 2:
            return 0.0
        return float(np.sum(np.hypot(*(np.roll(v, -1, axis=0) - v).T)))

    @property
    def diameter(self):
        v = self.vertices
        if len(v) < 2:
            return 0.0
        diff = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())

    @property
    def is_empty(self):
        return len(self.vertices) < 3 or self.area <= 0.0

    def is_convex(self, tol=1e-12):
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        return bool(np.all(cross >= -tol))

    def halfplanes(self):
        """Rows (a, b) with a . x <= b describing the (convex) polygon."""
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        normals = np.column_stack([e[:, 1], -e[:, 0]])
        b = np.einsum("ij,ij->i", normals, v)
        return normals, b

    def clip(self, a, b):
        """Intersection with the half-plane a . x <= b."""
        v = self.vertices
        if len(v) == 0:
            return self
        scale = max(1.0, float(np.hypot(*a)))
        s = v @ np.asarray(a, dtype=float) - b
        inside = s <= CLIP_TOL * scale
        if inside.all():
            return self
        if not inside.any():
            return Polygon2(np.empty((0, 2)))
        out = []
        n = len(v)
        for i in range(n):
            j = (i + 1) % n
            if inside[i]:
                out.append(v[i])
            if inside[i] != inside[j]:
                t = s[i] / (s[i] - s[j])
                out.append(v[i] + t * (v[j] - v[i]))
        return Polygon2(_dedupe(np.array(out)))

    def intersect(self, other):
        normals, b = other.halfplanes()
        poly = self
        for a, bb in zip(normals, b):
            poly = poly.clip(a, bb)
            if poly.is_empty:
                return Polygon2(np.empty((0, 2)))
        return poly

    def affine(self, M, offset=None):
        """The image {x M - offset} of the polygon (row-vector convention)."""
        w = self.vertices @ np.asarray(M, dtype=float)
        if offset is not None:
            w = w - np.asarray(offset, dtype=float)
        return Polygon2(w)

    def contains(self, other, tol=1e-9):
        normals, b = self.halfplanes()
        norms = np.maximum(np.hypot(normals[:, 0], normals[:, 1]), 1e-300)
        s = (other.vertices @ normals.T - b) / norms
        return bool(np.all(s <= tol))

    def bounds(self):
        v = self.vertices
        return v.min(axis=0), v.max(axis=0)

    def to_list(self):
        return [[float(x), float(y)] for x, y in self.vertices]


@dataclass(frozen=True)
class Interval:
    """Half-open interval [lo, hi) of the circle's fundamental domain."""

    lo: float
    hi: float

    @property
    def area(self):
        return max(0.0, self.hi - self.lo)

    length = area

    @property
    def diameter(self):
        return self.area

    @property
    def is_empty(self):
        return self.hi - self.lo <= 0.0

    def intersect(self, other):
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    def affine(self, t, offset=0.0):
        a, b = self.lo * t - offset, self.hi * t - offset
        return Interval(min(a, b), max(a, b))

    def contains(self, other, tol=1e-12):
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol

    def to_list(self):
        return [self.lo, self.hi]


@dataclass(frozen=True, eq=False)
class HalfspaceCell:
    """Polytope {x : A x <= b} for the d >= 3 integer-matrix path."""

    A: np.ndarray
    b: np.ndarray

    @property
    def dim(self):
        return self.A.shape[1]

    def chebyshev(self):
        norms = np.linalg.norm(self.A, axis=1)
        d = self.dim
        c = np.zeros(d + 1)
        c[-1] = -1.0
        res = linprog(c, A_ub=np.column_stack([self.A, norms]), b_ub=self.b,
                      bounds=[(None, None)] * d + [(0, None)], method="highs")
        if res.status != 0:
            return None, 0.0
        return res.x[:d], float(res.x[-1])

    def with_constraints(self, A, b):
        return HalfspaceCell(np.vstack([self.A, A]), np.concatenate([self.b, b]))

    @property
    def _hull(self):
        if "_hull" not in self.__dict__:
            centre, radius = self.chebyshev()
            hull = None
            if radius > 1e-10:
                hs = HalfspaceIntersection(np.column_stack([self.A, -self.b]), centre)
                hull = ConvexHull(hs.intersections)
            self.__dict__["_hull"] = hull
        return self.__dict__["_hull"]

    @property
    def area(self):
        h = self._hull
        return 0.0 if h is None else float(h.volume)

    @property
    def surface(self):
        h = self._hull
        return 0.0 if h is None else float(h.area)

    @property
    def diameter(self):
        h = self._hull
        if h is None:
            return 0.0
        p = h.points[h.vertices]
        return float(np.sqrt(((p[:, None] - p[None]) ** 2).sum(-1)).max())

    @property
    def is_empty(self):
        return self._hull is None

    def to_list(self):
        return {"A": self.A.tolist(), "b": self.b.tolist()}


def _unit_cube(d):
    eye = np.eye(d)
    return HalfspaceCell(np.vstack([-eye, eye]), np.concatenate([np.zeros(d), np.ones(d)]))


def _cell_preimage_constraints(M, k, offset):
    """Constraints on x for x M - k in offset + [0,1]^d."""
    M = np.asarray(M, dtype=float)
    lo = np.asarray(offset, dtype=float) + np.asarray(k, dtype=float)
    # (xM)_j = x . M[:, j]
    return np.vstack([-M.T, M.T]), np.concatenate([-lo, lo + 1.0])


# ---------------------------------------------------------------------------
# pieces and cylinders

@dataclass(frozen=True)
class Piece:
    index: int
    offset: tuple
    region: object


@dataclass(frozen=True)
class PartitionFamily:
    map: object
    pieces: tuple
    K_bound: float
    path: str

    @property
    def Q(self):
        return len(self.pieces)

    @property
    def dim(self):
        return self.map.dim

    def total_area(self):
        return math.fsum(p.region.area for p in self.pieces)

    def to_dict(self):
        return {
            "Q": self.Q,
            "K_bound": self.K_bound,
            "path": self.path,
            "total_area": self.total_area(),
            "pieces": [
                {"index": p.index, "offset": list(p.offset), "area": p.region.area,
                 "vertices": p.region.to_list()}
                for p in self.pieces
            ],
        }


@dataclass(frozen=True)
class Cylinder:
    """U_{i_0} cap T^-1 U_{i_1} cap ... with its branch x -> x M - k of T^n."""

    word: tuple
    region: object
    image: object
    M: np.ndarray = field(repr=False)
    k: np.ndarray = field(repr=False)

    @property
    def order(self):
        return len(self.word)


def _boundary_content(region):
    if isinstance(region, Polygon2):
        return C_M * region.perimeter
    if isinstance(region, HalfspaceCell):
        return C_M * region.surface
    if isinstance(region, Interval):
        return 2.0 * C_M  # two endpoints: m_1(A(eps))/eps = 4
    raise TypeError(type(region))


def _candidate_cells(T):
    d = T.shape[0]
    corners = np.array(list(itertools.product([0.0, 1.0], repeat=d))) @ T
    lo = np.floor(corners.min(axis=0) - 1e-12).astype(int)
    hi = np.ceil(corners.max(axis=0) + 1e-12).astype(int)
    return itertools.product(*[range(a, b) for a, b in zip(lo, hi)])


def compute_pieces(tmap):
    """Pieces U_c = {x in [0,1)^d : xT in c + [0,1)^d} with positive measure."""
    if not tmap.certificate.passes:
        raise DomainError("map is not expanding-certified")
    d = tmap.dim
    T = tmap.float_matrix
    pieces = []
    dropped = 0
    if d == 1:
        t = T[0, 0]
        for (c,) in _candidate_cells(T):
            a, b = sorted((c / t, (c + 1) / t))
            iv = Interval(max(a, 0.0), min(b, 1.0))
            if iv.area > SLIVER_AREA:
                pieces.append(((c,), iv))
            elif iv.area > 0:
                dropped += 1
        path = "interval"
    elif d == 2:
        for cell in _candidate_cells(T):
            A, b = _cell_preimage_constraints(T, np.zeros(2), cell)
            poly = Polygon2.unit_square()
            for a_row, b_val in zip(A, b):
                poly = poly.clip(a_row, b_val)
                if poly.is_empty:
                    break
            if poly.is_empty:
                continue
            if poly.area > SLIVER_AREA:
                pieces.append((tuple(cell), poly))
            else:
                dropped += 1
        path = "polygon"
    elif tmap.is_integer:
        cube = _unit_cube(d)
        for cell in _candidate_cells(T):
            A, b = _cell_preimage_constraints(T, np.zeros(d), cell)
            region = cube.with_constraints(A, b)
            if region.is_empty:
                continue
            if region.area > SLIVER_AREA:
                pieces.append((tuple(cell), region))
            else:
                dropped += 1
        path = "symbolic"
    else:
        raise UnsupportedDimension(f"d = {d} partitions need an integer matrix")
    if dropped:
        warnings.warn(f"{dropped} sliver piece(s) below {SLIVER_AREA} merged away",
                      DegeneracyWarning, stacklevel=2)
    pieces.sort(key=lambda item: item[0])
    out = tuple(Piece(i, off, reg) for i, (off, reg) in enumerate(pieces))
    K = max(_boundary_content(p.region) for p in out)
    return PartitionFamily(map=tmap, pieces=out, K_bound=K, path=path)


def _piece_cylinder(piece, T):
    off = np.asarray(piece.offset, dtype=float)
    reg = piece.region
    if isinstance(reg, Interval):
        image = reg.affine(T[0, 0], off[0]).intersect(Interval(0.0, 1.0))
    elif isinstance(reg, Polygon2):
        image = reg.affine(T, off).intersect(Polygon2.unit_square())
    else:
        image = None
    return Cylinder((piece.index,), reg, image, T.copy(), off)


def _refine_one(cyl, piece, T):
    """Child cylinder cyl.word + (piece.index,), or None if it is empty."""
    off = np.asarray(piece.offset, dtype=float)
    M, k = cyl.M, cyl.k
    newM = M @ T
    newk = k @ T + off
    reg = cyl.region
    if isinstance(reg, Interval):
        w = cyl.image.intersect(piece.region)
        if w.area <= 0:
            return None
        m = M[0, 0]
        region = Interval(*sorted(((w.lo + k[0]) / m, (w.hi + k[0]) / m))).intersect(reg)
        image = w.affine(T[0, 0], off[0])
    elif isinstance(reg, Polygon2):
        lo1, hi1 = cyl.image.bounds()
        lo2, hi2 = piece.region.bounds()
        if np.any(hi1 < lo2 - CLIP_TOL) or np.any(hi2 < lo1 - CLIP_TOL):
            return None
        w = cyl.image.intersect(piece.region)
        if w.is_empty:
            return None
        region = Polygon2((w.vertices + k) @ np.linalg.inv(M))
        image = w.affine(T, off)
    else:
        # x M - k in U_piece  <=>  x (M T) - (k T + off) in [0,1]^d
        A, b = _cell_preimage_constraints(newM, newk, np.zeros(len(off)))
        region = reg.with_constraints(A, b)
        image = None
    if region.is_empty or region.area <= SLIVER_AREA:
        return None
    return Cylinder(cyl.word + (piece.index,), region, image, newM, newk)


def refine_cylinders(tmap, family, n):
    """All non-empty cylinders of order n, sorted by word."""
    if n < 1:
        raise ValueError("cylinder order must be >= 1")
    T = tmap.float_matrix
    d = T.shape[0]
    # every order-n cylinder sits inside T^-n of a unit cube
    sig_min = float(np.linalg.svd(T, compute_uv=False).min())
    if math.sqrt(d) * sig_min ** -n < MIN_DIAMETER:
        raise RefinementLimit(f"order {n} cylinders have diameter below 1e-12")
    if abs(float(np.linalg.det(T))) ** n > MAX_CYLINDERS:
        raise RefinementLimit(f"order {n} would need about |det T|^n cylinders")
    level = [_piece_cylinder(p, T) for p in family.pieces]
    for _ in range(n - 1):
        nxt = []
        for cyl in level:
            for piece in family.pieces:
                child = _refine_one(cyl, piece, T)
                if child is not None:
                    nxt.append(child)
        if nxt and min(c.region.diameter for c in nxt) < MIN_DIAMETER:
            raise RefinementLimit("cylinder diameter fell below 1e-12")
        level = nxt
    level.sort(key=lambda c: c.word)
    return level


# ---------------------------------------------------------------------------
# Minkowski content

@dataclass(frozen=True)
class MinkowskiEstimate:
    epsilons: tuple
    ratios: tuple
    extrapolated: float
    sigmas: tuple = ()
    feature_warnings: tuple = ()


def _richardson(eps, ratios):
    if len(ratios) == 1:
        return ratios[0]
    e1, e2 = eps[-2], eps[-1]
    r1, r2 = ratios[-2], ratios[-1]
    return (e1 * r2 - e2 * r1) / (e1 - e2)


def _check_eps(epsilons):
    eps = tuple(float(e) for e in epsilons)
    if not eps or any(e <= 0 for e in eps):
        raise ValueError("epsilons must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    return eps


def _inner_parallel(poly, eps):
    normals, b = poly.halfplanes()
    norms = np.hypot(normals[:, 0], normals[:, 1])
    inner = poly
    for a, bb, nrm in zip(normals, b, norms):
        inner = inner.clip(a, bb - eps * nrm)
        if inner.is_empty:
            return None
    return inner


def _polygon_neighbourhood_area(poly, eps):
    """Area of {x : dist(x, boundary) < eps} and whether eps exceeds the feature scale."""
    if poly.is_convex():
        outer = poly.area + poly.perimeter * eps + math.pi * eps * eps
        inner = _inner_parallel(poly, eps)
        return outer - (inner.area if inner is not None else 0.0), inner is None
    from shapely.geometry import LinearRing

    ring = LinearRing(poly.vertices)
    return ring.buffer(eps, quad_segs=256).area, False


def minkowski_content_estimate(boundary, epsilons, samples=200_000, seed=0):
    """Ratios m_d(A(eps))/eps for a polygon boundary or a finite point set.

    Polygons use the exact offset area; point sets use Monte Carlo over the
    bounding box of the neighbourhood.  The extrapolated value removes the
    O(eps) term with the last two ratios.
    """
    eps = _check_eps(epsilons)
    ratios, sigmas, flags = [], [], []
    if isinstance(boundary, Polygon2):
        for e in eps:
            area, too_big = _polygon_neighbourhood_area(boundary, e)
            ratios.append(area / e)
            sigmas.append(0.0)
            flags.append(too_big)
    else:
        pts = np.atleast_2d(np.asarray(boundary, dtype=float))
        tree = cKDTree(pts)
        rng = np.random.default_rng(seed)
        d = pts.shape[1]
        extent = np.ptp(pts, axis=0) if len(pts) > 1 else np.zeros(d)
        for e in eps:
            lo = pts.min(axis=0) - e
            hi = pts.max(axis=0) + e
            vol = float(np.prod(hi - lo))
            X = lo + (hi - lo) * rng.random((samples, d))
            dist, _ = tree.query(X)
            frac = float(np.mean(dist < e))
            ratios.append(vol * frac / e)
            sigmas.append(vol * math.sqrt(frac * (1 - frac) / samples) / e)
            flags.append(bool(len(pts) > 1 and e > 0.5 * float(extent.max())))
    for e, f in zip(eps, flags):
        if f:
            warnings.warn(f"eps = {e} exceeds the feature scale", FeatureScaleWarning,
                          stacklevel=2)
    return MinkowskiEstimate(eps, tuple(ratios), float(_richardson(eps, ratios)),
                             tuple(sigmas), tuple(flags))


# ---------------------------------------------------------------------------
# boundary-content bound for J_n cap R1 cap T^-n R2

@dataclass(frozen=True)
class BoundaryContentReport:
    n: int
    contents: tuple
    max_content: float
    bound: float
    holds: bool
    K: float
    L: float


def content_bound(d, K, L, c_M=C_M):
    return 4 * d * c_M + K * c_M / (1.0 - L ** (-(d - 1)))


def _as_box(poly):
    """(x0, y0, x1, y1) if poly is an axis-parallel rectangle, else None."""
    v = poly.vertices
    if len(v) != 4:
        return None
    lo, hi = v.min(axis=0), v.max(axis=0)
    on_edge = np.isclose(v, lo, atol=1e-15) | np.isclose(v, hi, atol=1e-15)
    return (lo[0], lo[1], hi[0], hi[1]) if on_edge.all() else None


def _clip_box_pts(pts, box):
    """Sutherland-Hodgman against an axis box on plain float tuples."""
    x0, y0, x1, y1 = box
    for axis, bound, keep_below in ((0, x0, False), (0, x1, True), (1, y0, False),
                                    (1, y1, True)):
        if not pts:
            return pts
        out = []
        prev = pts[-1]
        pin = (prev[axis] <= bound + CLIP_TOL) if keep_below else             (prev[axis] >= bound - CLIP_TOL)
        for cur in pts:
            cin = (cur[axis] <= bound + CLIP_TOL) if keep_below else                 (cur[axis] >= bound - CLIP_TOL)
            if cin != pin:
                t = (bound - prev[axis]) / (cur[axis] - prev[axis])
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            if cin:
                out.append(cur)
            prev, pin = cur, cin
        pts = out
    return pts


def _perimeter_if_solid(pts):
    if len(pts) < 3:
        return 0.0
    area = 0.0
    per = 0.0
    for (ax, ay), (bx, by) in zip(pts, pts[1:] + pts[:1]):
        area += ax * by - bx * ay
        per += math.hypot(bx - ax, by - ay)
    return per if abs(area) / 2 > SLIVER_AREA else 0.0


def _content_generic(cyl, R1, R2):
    w = cyl.image.intersect(R2)
    if w.is_empty:
        return 0.0
    back = Polygon2((w.vertices + cyl.k) @ np.linalg.inv(cyl.M))
    poly = back.intersect(cyl.region).intersect(R1)
    return 0.0 if poly.is_empty else C_M * poly.perimeter


def boundary_content_bound_check(tmap, family, n, R1, R2, cylinders=None):
    """Max boundary content of J_n cap R1 cap T^-n R2 over order-n cylinders, vs the bound."""
    if tmap.dim != 2:
        raise UnsupportedDimension("boundary-content check is planar only")
    if cylinders is None:
        cylinders = refine_cylinders(tmap, family, n)
    b1, b2 = _as_box(R1), _as_box(R2)
    contents = []
    for cyl in cylinders:
        if b1 is None or b2 is None:
            contents.append(_content_generic(cyl, R1, R2))
            continue
        lo, hi = cyl.region.bounds()
        if hi[0] < b1[0] or lo[0] > b1[2] or hi[1] < b1[1] or lo[1] > b1[3]:
            contents.append(0.0)
            continue
        # the cylinder is the branch preimage of its image, so
        # J_n cap T^-n R2 = preimage(image cap R2)
        w = _clip_box_pts([tuple(p) for p in cyl.image.vertices.tolist()], b2)
        if len(w) < 3:
            contents.append(0.0)
            continue
        Mi = np.linalg.inv(cyl.M)
        back = ((np.array(w) + cyl.k) @ Mi).tolist()
        poly = _clip_box_pts([tuple(p) for p in back], b1)
        contents.append(C_M * _perimeter_if_solid(poly))
    L = tmap.certificate.expansion_L
    bound = content_bound(2, family.K_bound, L)
    mx = max(contents) if contents else 0.0
    return BoundaryContentReport(n, tuple(contents), mx, bound, mx <= bound,
                                 family.K_bound, L)


# ---------------------------------------------------------------------------
# rendering

def partition_svg(family, size=480):
    pad = 10
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 2 * pad}" '
             f'height="{size + 2 * pad}" viewBox="0 0 {size + 2 * pad} {size + 2 * pad}">']
    Q = family.Q
    for p in family.pieces:
        hue = int(360 * p.index / max(Q, 1))
        reg = p.region
        if isinstance(reg, Polygon2):
            pts = " ".join(f"{pad + x * size:.3f},{pad + (1 - y) * size:.3f}"
                           for x, y in reg.vertices)
            parts.append(f'<polygon points="{pts}" fill="hsl({hue},65%,65%)" '
                         f'stroke="black" stroke-width="0.8"><title>U_{p.index + 1} '
                         f'offset {list(p.offset)}</title></polygon>')
        elif isinstance(reg, Interval):
            parts.append(f'<rect x="{pad + reg.lo * size:.3f}" y="{pad}" '
                         f'width="{reg.area * size:.3f}" height="{size}" '
                         f'fill="hsl({hue},65%,65%)" stroke="black" stroke-width="0.8"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
