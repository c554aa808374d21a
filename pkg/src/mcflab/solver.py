"""Explicit time integration of the phase equation.

The update is forward Euler on
    d(phi)/dt = lap(phi) - W'(phi) / eps^2
with the compact Laplacian from :mod:`mcflab.fields`.  The admissible step
combines the diffusion limit h^2/(4 dim) with the reaction limit
eps^2 / (2 max|W''|); both carry margin, but the combined bound is only
safe strictly below safety 1, so production scenarios run at 0.9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RefusalError
from .fields import Grid, ScalarField, laplacian_values, gradient_values
from .potential import STANDARD_WELL

OVERSHOOT_BUDGET = 1e-3


@dataclass(frozen=True)
class PhaseField:
    """One snapshot of the phase variable on a grid."""

    grid: Grid
    values: np.ndarray
    eps: float
    time: float

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.shape != tuple(self.grid.shape):
            raise ValueError("phase values do not match the grid")
        if not np.all(np.isfinite(arr)):
            raise ValueError("phase field contains non-finite values")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < -1.0 - OVERSHOOT_BUDGET or hi > 1.0 + OVERSHOOT_BUDGET:
            raise ValueError(
                f"phase values [{lo:g}, {hi:g}] outside the overshoot budget")
        if self.eps < 2.0 * self.grid.h:
            raise ValueError(
                f"eps {self.eps:g} below 2h = {2 * self.grid.h:g}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class PhaseTrajectory:
    """Snapshots of one run at a uniform cadence, plus per-snapshot logs."""

    snapshots: tuple
    dt: float
    scheme: str
    meta: dict
    energies: tuple
    volumes: tuple

    def __post_init__(self):
        times = [s.time for s in self.snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must increase strictly")
        eps = {s.eps for s in self.snapshots}
        if len(eps) != 1:
            raise ValueError("snapshots mix different eps values")

    @property
    def eps(self):
        return self.snapshots[0].eps

    @property
    def grid(self):
        return self.snapshots[0].grid

    @property
    def times(self):
        return tuple(s.time for s in self.snapshots)


def stable_dt(eps, h, dim, safety=1.0, well=STANDARD_WELL):
    """Admissible explicit step: safety * min(h^2/(4 dim), eps^2/(2 max|W''|))."""
    if not 0.0 < safety <= 1.0:
        raise ValueError("safety must lie in (0, 1]")
    if eps < 2.0 * h:
        raise RefusalError(f"eps {eps:g} below 2h = {2 * h:g}")
    return safety * min(h * h / (4.0 * dim), eps * eps / (2.0 * well.stiffness_bound))


def rate_values(values, grid, eps, well):
    """Right side of the phase equation, evaluated on raw cell values."""
    return laplacian_values(values, grid) - well.derivative(values) / (eps * eps)


def phase_rate(f: PhaseField, well=STANDARD_WELL) -> ScalarField:
    """Instantaneous time derivative reconstructed from the equation.

    Used for diagnostics instead of snapshot differencing: it is the exact
    discrete-in-space rate and has no cadence artifacts.
    """
    return ScalarField(f.grid, rate_values(f.values, f.grid, f.eps, well))


def normalized_energy(f: PhaseField, well=STANDARD_WELL) -> float:
    """Total layer energy divided by the surface tension."""
    grads = gradient_values(f.values, f.grid)
    dens = f.eps * np.sum([g * g for g in grads], axis=0) / 2.0 \
        + well.value(f.values) / f.eps
    return float(np.sum(dens)) * f.grid.cell_volume / well.surface_tension


def step(f: PhaseField, dt, well=STANDARD_WELL) -> PhaseField:
    """One forward-Euler update; the input snapshot is left untouched."""
    limit = stable_dt(f.eps, f.grid.h, f.grid.dim, 1.0, well)
    if dt > limit * (1.0 + 1e-12):
        raise RefusalError(f"dt {dt:g} above the stability limit {limit:g}")
    new = f.values + dt * rate_values(f.values, f.grid, f.eps, well)
    if not np.all(np.isfinite(new)):
        raise RuntimeError(
            f"non-finite phase values after step at t = {f.time:g} (dt {dt:g})")
    return PhaseField(grid=f.grid, values=new, eps=f.eps, time=f.time + dt)


def evolve(f0: PhaseField, t_end, snapshot_every, safety=0.9,
           well=STANDARD_WELL, meta=None, on_snapshot=None) -> PhaseTrajectory:
    """March from the initial snapshot to ``t_end``, recording snapshots.

    The step divides the snapshot cadence exactly, so snapshot times are
    hit identically.  Runs continue through extinction: once the positive
    phase is gone the field just relaxes to the outer well.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    meta = dict(meta or {})
    grid, eps = f0.grid, f0.eps
    snaps = [f0]
    energies = [normalized_energy(f0, well)]
    volumes = [float(np.sum(f0.values >= 0.0)) * grid.cell_volume]
    if on_snapshot is not None:
        on_snapshot(f0)
    if t_end == 0:
        return PhaseTrajectory(tuple(snaps), 0.0, "euler", meta,
                               tuple(energies), tuple(volumes))
    if snapshot_every <= 0:
        raise ValueError("snapshot cadence must be positive")
    base = stable_dt(eps, grid.h, grid.dim, safety, well)
    per = max(1, math.ceil(snapshot_every / base - 1e-12))
    dt = snapshot_every / per
    n_snaps = math.ceil(t_end / snapshot_every - 1e-9)
    values = np.array(f0.values)
    for k in range(1, n_snaps + 1):
        for _ in range(per):
            values = values + dt * rate_values(values, grid, eps, well)
        if not np.all(np.isfinite(values)):
            raise RuntimeError(
                f"non-finite phase values near t = {k * snapshot_every:g}")
        snap = PhaseField(grid=grid, values=values, eps=eps,
                          time=k * snapshot_every)
        snaps.append(snap)
        energies.append(normalized_energy(snap, well))
        volumes.append(float(np.sum(snap.values >= 0.0)) * grid.cell_volume)
        if on_snapshot is not None:
            on_snapshot(snap)
    return PhaseTrajectory(tuple(snaps), dt, "euler", meta,
                           tuple(energies), tuple(volumes))
