"""Uniform cell-centered grids, discrete operators, and test functions.

Grids are isotropic (same spacing on every axis) with periodic or
reflective closure per axis.  Fields are immutable after construction and
all reductions run in a fixed order, so repeated evaluations are
bit-identical regardless of how callers schedule them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import RefusalError

BOUNDARY_MODES = ("periodic", "reflective")


def _as_tuple(value, dim, cast):
    if np.isscalar(value):
        return tuple(cast(value) for _ in range(dim))
    out = tuple(cast(v) for v in value)
    if len(out) != dim:
        raise ValueError(f"expected {dim} per-axis entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on a box, 1 to 3 dimensions."""

    dim: int
    extent: tuple
    resolution: tuple
    bc: tuple
    origin: tuple

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        for r in self.resolution:
            if r < 8:
                raise ValueError("resolution below 8 cells per axis")
        hs = [e / r for e, r in zip(self.extent, self.resolution)]
        if max(hs) - min(hs) > 1e-12 * max(hs):
            raise ValueError("grid spacing must be identical across axes")
        for b in self.bc:
            if b not in BOUNDARY_MODES:
                raise ValueError(f"unknown boundary mode {b!r}")

    @classmethod
    def uniform(cls, dim, extent, resolution, bc="periodic", origin=None):
        extent_t = _as_tuple(extent, dim, float)
        res_t = _as_tuple(resolution, dim, int)
        bc_t = _as_tuple(bc, dim, str)
        if origin is None:
            origin_t = tuple(-e / 2.0 for e in extent_t)
        else:
            origin_t = _as_tuple(origin, dim, float)
        return cls(dim, extent_t, res_t, bc_t, origin_t)

    @property
    def h(self):
        return self.extent[0] / self.resolution[0]

    @property
    def shape(self):
        return self.resolution

    @property
    def cell_volume(self):
        return self.h ** self.dim

    @cached_property
    def axes(self):
        return tuple(self.origin[a] + (np.arange(self.resolution[a]) + 0.5) * self.h
                     for a in range(self.dim))

    @cached_property
    def centers(self):
        """Cell-center coordinates as ``dim`` broadcast-ready arrays."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def bounds(self, axis):
        return self.origin[axis], self.origin[axis] + self.extent[axis]


@dataclass(frozen=True)
class ScalarField:
    """Immutable scalar samples at the cell centers of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.shape != tuple(self.grid.shape):
            raise ValueError(f"value shape {arr.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)


def _neighbor(values, axis, step, bc):
    """Values of the cell ``step`` places along ``axis`` (+1 or -1)."""
    if bc == "periodic":
        return np.roll(values, -step, axis=axis)
    # reflective: ghost cell mirrors the boundary cell across the face
    moved = np.roll(values, -step, axis=axis)
    sl = [slice(None)] * values.ndim
    edge = [slice(None)] * values.ndim
    if step > 0:
        sl[axis] = slice(-1, None)
        edge[axis] = slice(-1, None)
    else:
        sl[axis] = slice(0, 1)
        edge[axis] = slice(0, 1)
    moved[tuple(sl)] = values[tuple(edge)]
    return moved


def gradient_values(values, grid):
    h2 = 2.0 * grid.h
    return [(_neighbor(values, a, +1, grid.bc[a])
             - _neighbor(values, a, -1, grid.bc[a])) / h2
            for a in range(grid.dim)]


def laplacian_values(values, grid):
    out = np.zeros_like(values)
    for a in range(grid.dim):
        out += (_neighbor(values, a, +1, grid.bc[a])
                + _neighbor(values, a, -1, grid.bc[a])
                - 2.0 * values)
    return out / grid.h ** 2


def spatial_gradient(f: ScalarField):
    """Second-order central-difference gradient, one field per axis."""
    return [ScalarField(f.grid, g) for g in gradient_values(f.values, f.grid)]


def laplacian(f: ScalarField) -> ScalarField:
    """Compact (2n+1)-point Laplacian; exact on quadratics in the interior."""
    return ScalarField(f.grid, laplacian_values(f.values, f.grid))


def divergence(components, scheme="central") -> ScalarField:
    """Divergence of a vector field given as one component per axis."""
    grid = components[0].grid
    out = np.zeros(grid.shape)
    for a, comp in enumerate(components):
        v = comp.values
        if scheme == "central":
            out += (_neighbor(v, a, +1, grid.bc[a])
                    - _neighbor(v, a, -1, grid.bc[a])) / (2.0 * grid.h)
        elif scheme == "forward":
            out += (_neighbor(v, a, +1, grid.bc[a]) - v) / grid.h
        elif scheme == "backward":
            out += (v - _neighbor(v, a, -1, grid.bc[a])) / grid.h
        else:
            raise ValueError(f"unknown divergence scheme {scheme!r}")
    return ScalarField(grid, out)


def ball_mask(grid, center, radius):
    if radius < 2.0 * grid.h:
        raise RefusalError(
            f"ball radius {radius:g} below 2h = {2 * grid.h:g}: too coarse")
    rr = np.zeros(grid.shape)
    for a in range(grid.dim):
        rr += (grid.centers[a] - center[a]) ** 2
    return rr <= radius * radius


def integrate(f: ScalarField, weight=None, region=None, time=None):
    """Midpoint-rule integral of ``f`` (optionally weighted/restricted).

    ``weight`` may be an array of cell values or a :class:`TestFunction`
    (then ``time`` is required).  ``region`` is either None for the whole
    box or ``("ball", center, radius)`` with radius at least 2h.  The sum
    runs over the full array in a fixed pairwise order.
    """
    vals = f.values
    if weight is not None:
        if isinstance(weight, TestFunction):
            if time is None:
                raise ValueError("weighting by a test function needs a time")
            vals = vals * weight.value(f.grid.centers, time)
        else:
            vals = vals * np.asarray(weight)
    if region is not None:
        kind, center, radius = region
        if kind != "ball":
            raise ValueError(f"unknown region kind {kind!r}")
        vals = np.where(ball_mask(f.grid, center, radius), vals, 0.0)
    return float(np.sum(vals)) * f.grid.cell_volume


# ---------------------------------------------------------------------------
# test functions

def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _smoothstep_slope(u):
    inside = (u > 0.0) & (u < 1.0)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 6.0 * u * (1.0 - u), 0.0)


@dataclass(frozen=True)
class TestFunction:
    """Compactly supported C^1 space-time test function.

    Kinds:
      * ``polynomial-bump``: (1 - rho^2)^2 inside the ball, rho = |x-c|/R
      * ``gaussian-bump``: the smooth bump exp(1 - 1/(1 - rho^2))
      * ``constant-on-window``: spatially constant (time window does the
        cutoff; stands in for a constant test on the whole torus)

    The time factor ramps C^1-smoothly from 0 to 1 over ``ramp`` after
    ``t_start`` and back down before ``t_stop``; infinite bounds mean no
    cutoff on that side.
    """

    kind: str
    center: tuple = ()
    radius: float = np.inf
    amplitude: float = 1.0
    t_start: float = -np.inf
    t_stop: float = np.inf
    ramp: float = 0.0

    __test__ = False  # not a pytest collection target

    def __post_init__(self):
        if self.kind not in ("gaussian-bump", "polynomial-bump",
                             "constant-on-window"):
            raise ValueError(f"unknown test function kind {self.kind!r}")
        if self.kind != "constant-on-window" and not np.isfinite(self.radius):
            raise ValueError("bump test functions need a finite radius")

    @property
    def sup_norm(self):
        return abs(self.amplitude)

    # -- time factor -----------------------------------------------------

    def _time_factor(self, t):
        up = dn = 1.0
        if np.isfinite(self.t_start):
            if t <= self.t_start:
                return 0.0
            up = _smoothstep((t - self.t_start) / self.ramp) if self.ramp > 0 else 1.0
        if np.isfinite(self.t_stop):
            if t >= self.t_stop:
                return 0.0
            dn = _smoothstep((self.t_stop - t) / self.ramp) if self.ramp > 0 else 1.0
        return float(up * dn)

    def _time_factor_slope(self, t):
        if self.ramp <= 0:
            return 0.0
        up = dn = 1.0
        dup = ddn = 0.0
        if np.isfinite(self.t_start):
            if t <= self.t_start:
                return 0.0
            u = (t - self.t_start) / self.ramp
            up, dup = _smoothstep(u), _smoothstep_slope(u) / self.ramp
        if np.isfinite(self.t_stop):
            if t >= self.t_stop:
                return 0.0
            u = (self.t_stop - t) / self.ramp
            dn, ddn = _smoothstep(u), -_smoothstep_slope(u) / self.ramp
        return float(dup * dn + up * ddn)

    # -- spatial factor ----------------------------------------------------

    def _rho2(self, xs):
        rho2 = np.zeros(np.broadcast(*xs).shape)
        for a, x in enumerate(xs):
            rho2 = rho2 + ((x - self.center[a]) / self.radius) ** 2
        return rho2

    def _space_value(self, xs):
        if self.kind == "constant-on-window":
            return np.ones(np.broadcast(*xs).shape)
        rho2 = self._rho2(xs)
        inside = rho2 < 1.0
        if self.kind == "polynomial-bump":
            return np.where(inside, (1.0 - rho2) ** 2, 0.0)
        gap = np.where(inside, 1.0 - rho2, 1.0)
        with np.errstate(over="ignore"):
            return np.where(inside, np.exp(1.0 - 1.0 / gap), 0.0)

    def _space_gradient(self, xs):
        if self.kind == "constant-on-window":
            shape = np.broadcast(*xs).shape
            return [np.zeros(shape) for _ in xs]
        rho2 = self._rho2(xs)
        inside = rho2 < 1.0
        if self.kind == "polynomial-bump":
            factor = np.where(inside, -4.0 * (1.0 - rho2), 0.0) / self.radius ** 2
        else:
            gap = np.where(inside, 1.0 - rho2, 1.0)
            with np.errstate(over="ignore"):
                bump = np.where(inside, np.exp(1.0 - 1.0 / gap), 0.0)
            factor = -2.0 * bump / (gap * gap) / self.radius ** 2
        return [factor * (x - self.center[a]) for a, x in enumerate(xs)]

    # -- public evaluators ------------------------------------------------

    def value(self, xs, t):
        return self.amplitude * self._time_factor(t) * self._space_value(xs)

    def space_gradient(self, xs, t):
        tau = self.amplitude * self._time_factor(t)
        return [tau * g for g in self._space_gradient(xs)]

    def time_derivative(self, xs, t):
        return self.amplitude * self._time_factor_slope(t) * self._space_value(xs)

    def fits_inside(self, grid, margin=0.0):
        """True when the support ball stays inside the box with ``margin``."""
        if self.kind == "constant-on-window":
            return True
        for a in range(grid.dim):
            lo, hi = grid.bounds(a)
            if (self.center[a] - self.radius < lo + margin
                    or self.center[a] + self.radius > hi - margin):
                return False
        return True


# ---------------------------------------------------------------------------
# binary snapshot format ("ACF1")

MAGIC = b"ACF1"


def dump_phase_values(path, grid, values, eps, time):
    """Write one snapshot: magic, u32 dim, u32 resolution per axis,
    f64 extent per axis, f64 eps, f64 time, then row-major f64 values.
    All fields little-endian; round trips are bit-exact.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", grid.dim))
        fh.write(struct.pack(f"<{grid.dim}I", *grid.resolution))
        fh.write(struct.pack(f"<{grid.dim}d", *grid.extent))
        fh.write(struct.pack("<dd", eps, time))
        fh.write(values.astype("<f8", copy=False).tobytes(order="C"))


def load_phase_values(path, bc="periodic"):
    """Read an ACF1 snapshot; returns (grid, values, eps, time).

    The format stores no boundary/origin metadata, so the grid is rebuilt
    with the given closure and a box centered at the coordinate origin.
    """
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not an ACF1 field dump")
        dim, = struct.unpack("<I", fh.read(4))
        res = struct.unpack(f"<{dim}I", fh.read(4 * dim))
        extent = struct.unpack(f"<{dim}d", fh.read(8 * dim))
        eps, time = struct.unpack("<dd", fh.read(16))
        count = int(np.prod(res))
        raw = fh.read(8 * count)
        if len(raw) != 8 * count:
            raise ValueError(f"{path}: truncated field dump")
        values = np.frombuffer(raw, dtype="<f8").reshape(res)
    grid = Grid.uniform(dim, extent, res, bc=bc)
    return grid, values.astype(np.float64), eps, time
