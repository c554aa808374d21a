"""Shapes, reference flows, well-prepared initial data, and phase geometry.

Shapes carry a signed distance that is positive inside and negative
outside; primitives are exact and composites combine by min/max, which is
exact only for components with separated boundaries.  Initial data places
the 1-D transition profile along the (smoothly truncated) signed distance.
Two independent perimeter estimators are provided: the layer-energy
surrogate and direct isoline/isosurface extraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _mc_tables
from .errors import RefusalError
from .fields import ScalarField, gradient_values
from .potential import STANDARD_WELL

TRUNCATION_FACTOR = 10.0   # clamp level, in units of eps, at data preparation
CLAMP_KNEE = 0.8           # fraction of the level below which the clamp is exact


# ---------------------------------------------------------------------------
# constructive shapes

class Shape:
    """Base class; subclasses provide ``distance`` (positive inside)."""

    def distance(self, xs):
        raise NotImplementedError

    def __or__(self, other):
        return Union(self, other)

    def __and__(self, other):
        return Intersection(self, other)

    def __invert__(self):
        return Complement(self)


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple
    radius: float

    def distance(self, xs):
        rr = np.zeros(np.broadcast(*xs).shape)
        for a, x in enumerate(xs):
            rr = rr + (x - self.center[a]) ** 2
        return self.radius - np.sqrt(rr)


@dataclass(frozen=True)
class HalfSpace(Shape):
    """Points with normal . x <= offset; the unit normal points outward."""

    normal: tuple
    offset: float

    def distance(self, xs):
        scale = math.sqrt(sum(c * c for c in self.normal))
        out = np.zeros(np.broadcast(*xs).shape)
        for a, x in enumerate(xs):
            out = out + self.normal[a] * x
        return (self.offset - out) / scale


@dataclass(frozen=True)
class Box(Shape):
    lo: tuple
    hi: tuple

    def distance(self, xs):
        # exact signed distance: negative Euclidean outside, inset inside
        outside2 = np.zeros(np.broadcast(*xs).shape)
        inner = None
        for a, x in enumerate(xs):
            q = np.maximum(self.lo[a] - x, x - self.hi[a])
            outside2 = outside2 + np.maximum(q, 0.0) ** 2
            inner = q if inner is None else np.maximum(inner, q)
        return -(np.sqrt(outside2) + np.minimum(inner, 0.0))


@dataclass(frozen=True)
class Union(Shape):
    first: Shape
    second: Shape

    def distance(self, xs):
        return np.maximum(self.first.distance(xs), self.second.distance(xs))


@dataclass(frozen=True)
class Intersection(Shape):
    first: Shape
    second: Shape

    def distance(self, xs):
        return np.minimum(self.first.distance(xs), self.second.distance(xs))


@dataclass(frozen=True)
class Complement(Shape):
    part: Shape

    def distance(self, xs):
        return -self.part.distance(xs)


def shape_from_json(obj) -> Shape:
    """Build a shape from its scenario-config JSON description."""
    kind = obj.get("type")
    if kind == "ball":
        return Ball(tuple(float(c) for c in obj["center"]), float(obj["radius"]))
    if kind == "half-space":
        return HalfSpace(tuple(float(c) for c in obj["normal"]), float(obj["offset"]))
    if kind == "box":
        return Box(tuple(float(c) for c in obj["lo"]), tuple(float(c) for c in obj["hi"]))
    if kind in ("union", "intersection"):
        parts = [shape_from_json(p) for p in obj["parts"]]
        if len(parts) < 2:
            raise ValueError(f"{kind} needs at least two parts")
        out = parts[0]
        for p in parts[1:]:
            out = Union(out, p) if kind == "union" else Intersection(out, p)
        return out
    if kind == "complement":
        return Complement(shape_from_json(obj["part"]))
    raise ValueError(f"unknown shape type {kind!r}")


def clamped_distance(shape, xs, level):
    """Signed distance clamped C^1-smoothly into [-level, level].

    Exact below CLAMP_KNEE * level, then saturates along a tanh cap, so
    the zero level set and near-interface values are untouched.
    """
    d = shape.distance(xs)
    knee = CLAMP_KNEE * level
    span = level - knee
    a = np.abs(d)
    capped = knee + span * np.tanh((a - knee) / span)
    return np.sign(d) * np.where(a <= knee, a, capped)


def lipschitz_defect(shape, grid, pairs=2048, seed=20240901):
    """Largest sampled violation of the 1-Lipschitz property (before clamp)."""
    rng = np.random.default_rng(seed)
    dim = grid.dim
    lo = np.array([grid.bounds(a)[0] for a in range(dim)])
    span = np.array(grid.extent)
    p = lo + rng.random((pairs, dim)) * span
    q = lo + rng.random((pairs, dim)) * span
    dp = shape.distance(tuple(p.T))
    dq = shape.distance(tuple(q.T))
    dist = np.sqrt(np.sum((p - q) ** 2, axis=1))
    ok = dist > 1e-12
    return float(np.max(np.abs(dp - dq)[ok] / dist[ok] - 1.0, initial=0.0))


# ---------------------------------------------------------------------------
# reference flows

@dataclass(frozen=True)
class ReferenceFlow:
    """Closed-form comparison flow: a sphere shrinking by its curvature.

    ``smooth-sphere`` follows radius(t) = sqrt(r0^2 - 2 (dim-1) t) until
    extinction.  ``truncated-sphere`` is the same flow cut dead at
    ``t_cut`` strictly before extinction (the set jumps to empty there).
    """

    kind: str
    r0: float
    dim: int
    t_cut: float | None = None

    def __post_init__(self):
        if self.kind not in ("smooth-sphere", "truncated-sphere"):
            raise ValueError(f"unknown reference flow kind {self.kind!r}")
        if self.dim < 2:
            raise ValueError("reference flows need dimension >= 2")
        if self.kind == "truncated-sphere":
            if self.t_cut is None or not (0.0 < self.t_cut < self.extinction_time):
                raise ValueError("truncated flow needs 0 < t_cut < extinction")

    @property
    def extinction_time(self):
        return self.r0 ** 2 / (2.0 * (self.dim - 1))

    def radius(self, t):
        if t < 0:
            raise ValueError("flow time must be nonnegative")
        if self.kind == "truncated-sphere" and t >= self.t_cut:
            return 0.0
        rr = self.r0 ** 2 - 2.0 * (self.dim - 1) * t
        return math.sqrt(rr) if rr > 0.0 else 0.0

    def speed(self, t):
        """Radial velocity dr/dt, equal to the (scalar) mean curvature."""
        r = self.radius(t)
        if r == 0.0:
            raise ValueError("flow is extinct at this time")
        return -(self.dim - 1) / r

    def volume(self, t):
        r = self.radius(t)
        if self.dim == 2:
            return math.pi * r * r
        return 4.0 * math.pi * r ** 3 / 3.0

    def surface(self, t):
        r = self.radius(t)
        if self.dim == 2:
            return 2.0 * math.pi * r
        return 4.0 * math.pi * r * r


def exact_flow_radius(flow: ReferenceFlow, t: float) -> float:
    """Radius of the reference flow at time t (0 once the set is empty)."""
    return flow.radius(t)


def sphere_quadrature(dim, center, radius, n_points=2048):
    """Quadrature points/weights for integrals over a sphere surface.

    Weights sum to the surface measure.  2-D uses a uniform angle grid
    (spectrally accurate for smooth integrands); 3-D uses Gauss-Legendre
    in the polar cosine times a uniform azimuth.
    """
    if dim == 2:
        theta = (np.arange(n_points) + 0.5) * (2.0 * math.pi / n_points)
        pts = np.stack([center[0] + radius * np.cos(theta),
                        center[1] + radius * np.sin(theta)], axis=1)
        w = np.full(n_points, 2.0 * math.pi * radius / n_points)
        return pts, w
    if dim == 3:
        n_pol = max(8, int(math.sqrt(n_points / 2)))
        n_az = 2 * n_pol
        mu, wmu = np.polynomial.legendre.leggauss(n_pol)
        phi = (np.arange(n_az) + 0.5) * (2.0 * math.pi / n_az)
        mu2 = np.repeat(mu, n_az)
        w = np.repeat(wmu, n_az) * (2.0 * math.pi / n_az) * radius ** 2
        phi2 = np.tile(phi, n_pol)
        sin_t = np.sqrt(1.0 - mu2 ** 2)
        pts = np.stack([center[0] + radius * sin_t * np.cos(phi2),
                        center[1] + radius * sin_t * np.sin(phi2),
                        center[2] + radius * mu2], axis=1)
        return pts, w
    raise ValueError("sphere quadrature supports dimensions 2 and 3")


# ---------------------------------------------------------------------------
# well-prepared initial data

def prepare_initial_data(shape, eps, grid, well=STANDARD_WELL):
    """Phase field carrying the 1-D profile across the shape boundary.

    Refuses under-resolved layers (eps < 2h) and configurations whose
    interface comes within 10 eps of the box boundary; periodic axes are
    additionally checked for a seam-continuous field.
    """
    from .solver import PhaseField  # local import; solver depends on fields only

    if eps < 2.0 * grid.h:
        raise RefusalError(
            f"eps {eps:g} under-resolved: eps/h = {eps / grid.h:.3f} < 2")
    defect = lipschitz_defect(shape, grid)
    if defect > 1e-6:
        raise RefusalError(
            f"signed distance not 1-Lipschitz (sampled defect {defect:.2e}); "
            "composite boundaries may be touching")
    level = TRUNCATION_FACTOR * eps
    _check_boundary_clearance(shape, grid, level)
    d = clamped_distance(shape, grid.centers, level)
    values = well.profile(d / eps)
    for a in range(grid.dim):
        if grid.bc[a] == "periodic":
            lo = np.take(values, 0, axis=a)
            hi = np.take(values, -1, axis=a)
            if np.max(np.abs(lo - hi)) > 0.05:
                raise RefusalError(
                    f"field jumps across the periodic seam on axis {a}; "
                    "shape is not compatible with the torus")
    return PhaseField(grid=grid, values=values, eps=eps, time=0.0)


def _face_coords(grid, axis, position):
    if grid.dim == 1:
        return (np.array([position]),)
    others = [grid.axes[b] for b in range(grid.dim) if b != axis]
    mesh = np.meshgrid(*others, indexing="ij")
    coords = []
    k = 0
    for b in range(grid.dim):
        if b == axis:
            coords.append(np.full(mesh[0].shape, position))
        else:
            coords.append(mesh[k])
            k += 1
    return tuple(coords)


def _check_boundary_clearance(shape, grid, need):
    """Keep the interface ``need`` away from every box face.

    On reflective axes an interface meeting the face orthogonally is the
    mirror-symmetric continuation and is allowed: in that case the signed
    distance is constant along the face normal, which is what gets tested.
    """
    for a in range(grid.dim):
        for pos in grid.bounds(a):
            face = _face_coords(grid, a, pos)
            d = shape.distance(face)
            clearance = float(np.min(np.abs(d)))
            if clearance >= need * (1.0 - 1e-9):
                continue
            if grid.bc[a] == "reflective":
                inward = 1.0 if pos == grid.bounds(a)[0] else -1.0
                shifted = tuple(
                    c + inward * grid.h if b == a else c
                    for b, c in enumerate(face))
                drift = float(np.max(np.abs(shape.distance(shifted) - d)))
                if drift <= 0.1 * grid.h:
                    continue  # orthogonal crossing of a mirror face
            raise RefusalError(
                f"interface clearance {clearance:g} below {need:g} on axis {a}"
                f" (ratio {clearance / need:.3f})")


def initial_l1_gap(field, shape):
    """L^1 distance between (phi+1)/2 and the sharp indicator of the shape."""
    d = shape.distance(field.grid.centers)
    chi = (d >= 0.0).astype(float)
    gap = np.abs((field.values + 1.0) / 2.0 - chi)
    return float(np.sum(gap)) * field.grid.cell_volume


# ---------------------------------------------------------------------------
# indicator, volume and perimeter

class PhaseGeometry(NamedTuple):
    volume: float
    energy_perimeter: float
    isoline_perimeter: float


def phase_indicator(field) -> ScalarField:
    """Cell indicator of the positive phase {phi >= 0}."""
    return ScalarField(field.grid, (field.values >= 0.0).astype(float))


def phase_volume(field) -> float:
    return float(np.sum(field.values >= 0.0)) * field.grid.cell_volume


def volume_and_perimeter(field, well=STANDARD_WELL) -> PhaseGeometry:
    """Volume plus two independent perimeter estimates.

    The first estimate integrates the layer-energy surrogate
    sqrt(2W(phi)) |grad phi| / sigma; the second measures the phi = 0
    isoline (2-D), isosurface (3-D) or zero-crossing count (1-D).
    """
    grid = field.grid
    grads = gradient_values(field.values, grid)
    norm = np.sqrt(np.sum([g * g for g in grads], axis=0))
    surrogate = well.sqrt_2w(field.values) * norm / well.surface_tension
    energy_perimeter = float(np.sum(surrogate)) * grid.cell_volume
    if grid.dim == 1:
        iso = float(np.sum(np.diff((field.values >= 0.0).astype(np.int8)) != 0))
    elif grid.dim == 2:
        iso = _marching_squares_length(field.values, grid.h)
    else:
        iso = _marching_cubes_area(field.values, grid.h)
    return PhaseGeometry(phase_volume(field), energy_perimeter, iso)


def _marching_squares_length(values, h):
    """Length of the zero isoline via the 16-case square march."""
    f = values
    c00 = f[:-1, :-1]
    c10 = f[1:, :-1]
    c11 = f[1:, 1:]
    c01 = f[:-1, 1:]
    case = ((c00 < 0).astype(np.int8) | ((c10 < 0) << 1)
            | ((c11 < 0) << 2) | ((c01 < 0) << 3))
    mixed = np.argwhere((case != 0) & (case != 15))
    total = 0.0
    for i, j in mixed:
        v = (f[i, j], f[i + 1, j], f[i + 1, j + 1], f[i, j + 1])
        # corner coordinates in units of h, relative to corner 0
        corners = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))
        pts = []
        for a, b in ((0, 1), (1, 2), (2, 3), (3, 0)):
            if (v[a] < 0) != (v[b] < 0):
                t = v[a] / (v[a] - v[b])
                pts.append((corners[a][0] + t * (corners[b][0] - corners[a][0]),
                            corners[a][1] + t * (corners[b][1] - corners[a][1])))
        if len(pts) == 2:
            total += math.dist(pts[0], pts[1])
        elif len(pts) == 4:
            # saddle: split by the cell-center sign
            center_neg = (v[0] + v[1] + v[2] + v[3]) < 0
            first_neg = v[0] < 0
            if center_neg == first_neg:
                total += math.dist(pts[0], pts[3]) + math.dist(pts[1], pts[2])
            else:
                total += math.dist(pts[0], pts[1]) + math.dist(pts[2], pts[3])
    return total * h


def _marching_cubes_area(values, h):
    """Area of the zero isosurface via the standard 256-case cube march."""
    f = values
    corners = _mc_tables.CORNER_OFFSETS
    sub = [f[dx:f.shape[0] - 1 + dx, dy:f.shape[1] - 1 + dy, dz:f.shape[2] - 1 + dz]
           for (dx, dy, dz) in corners]
    case = np.zeros(sub[0].shape, dtype=np.int32)
    for bit, s in enumerate(sub):
        case |= (s < 0).astype(np.int32) << bit
    mixed = np.argwhere((case != 0) & (case != 255))
    total = 0.0
    for i, j, k in mixed:
        idx = int(case[i, j, k])
        edges = _mc_tables.EDGE_TABLE[idx]
        if edges == 0:
            continue
        verts = {}
        for e in range(12):
            if edges & (1 << e):
                a, b = _mc_tables.EDGE_VERTEX_PAIRS[e]
                va = f[i + corners[a][0], j + corners[a][1], k + corners[a][2]]
                vb = f[i + corners[b][0], j + corners[b][1], k + corners[b][2]]
                t = va / (va - vb)
                verts[e] = tuple(corners[a][d] + t * (corners[b][d] - corners[a][d])
                                 for d in range(3))
        row = _mc_tables.TRI_TABLE[idx]
        for m in range(0, 16, 3):
            if row[m] < 0:
                break
            p0 = np.array(verts[row[m]])
            p1 = np.array(verts[row[m + 1]])
            p2 = np.array(verts[row[m + 2]])
            total += 0.5 * float(np.linalg.norm(np.cross(p1 - p0, p2 - p0)))
    return total * h * h
