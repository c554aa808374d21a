"""Layer-energy densities, interface fields, and density ratios.

The energy density eps |grad phi|^2 / 2 + W(phi)/eps carries the moving
interface measure; its normalization by the surface tension makes totals
comparable to perimeters.  The discrepancy (kinetic minus potential part)
measures how far the layer is from the equipartitioned profile.  Interface
quantities (normal, normal speed, curvature) are only meaningful on the
band where the layer is actually resolved, and are zeroed elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RefusalError
from .fields import ScalarField, _neighbor, ball_mask, gradient_values
from .potential import STANDARD_WELL
from .solver import PhaseField, rate_values

BAND_LEVEL = 0.95
GRADIENT_FLOOR_FACTOR = 0.1


@dataclass(frozen=True)
class DensitySnapshot:
    """Energy, normalized, and discrepancy densities at one time."""

    time: float
    eps: float
    energy: ScalarField
    normalized: ScalarField
    discrepancy: ScalarField
    normalized_total: float


@dataclass(frozen=True)
class InterfaceFields:
    """Band-restricted unit normal, normal speed, and curvature."""

    band: np.ndarray
    normal: tuple
    speed: np.ndarray
    curvature: np.ndarray
    gradient_norm: np.ndarray
    empty: bool


def density_snapshot(f: PhaseField, well=STANDARD_WELL) -> DensitySnapshot:
    grads = gradient_values(f.values, f.grid)
    kinetic = f.eps * np.sum([g * g for g in grads], axis=0) / 2.0
    potential = well.value(f.values) / f.eps
    energy = kinetic + potential
    sigma = well.surface_tension
    total = float(np.sum(energy)) * f.grid.cell_volume / sigma
    return DensitySnapshot(
        time=f.time,
        eps=f.eps,
        energy=ScalarField(f.grid, energy),
        normalized=ScalarField(f.grid, energy / sigma),
        discrepancy=ScalarField(f.grid, kinetic - potential),
        normalized_total=total,
    )


def interface_fields(f: PhaseField, well=STANDARD_WELL,
                     band_level=BAND_LEVEL,
                     floor_factor=GRADIENT_FLOOR_FACTOR) -> InterfaceFields:
    """Normal, normal speed and curvature on the resolved interface band.

    The band keeps cells with |phi| < band_level whose gradient exceeds
    floor_factor times the peak profile slope 1/eps; where the gradient
    nearly vanishes these quantities are meaningless and are set to zero.
    The normal points out of the positive phase; the speed is the phase
    rate divided by the gradient norm, so a shrinking positive phase has
    negative speed.
    """
    grid = f.grid
    grads = gradient_values(f.values, grid)
    gnorm = np.sqrt(np.sum([g * g for g in grads], axis=0))
    floor = floor_factor * well.profile_slope(0.0) / f.eps
    band = (np.abs(f.values) < band_level) & (gnorm > floor)
    valid = gnorm > 0.5 * floor
    if not band.any():
        zeros = np.zeros(grid.shape)
        return InterfaceFields(band=band, normal=tuple(zeros.copy() for _ in grads),
                               speed=zeros.copy(), curvature=zeros.copy(),
                               gradient_norm=gnorm, empty=True)
    safe = np.where(valid, gnorm, 1.0)
    normal = tuple(np.where(valid, -g / safe, 0.0) for g in grads)
    rate = rate_values(f.values, grid, f.eps, well)
    speed = np.where(band, rate / safe, 0.0)
    curvature = np.where(band, -_masked_divergence(normal, valid, grid), 0.0)
    return InterfaceFields(band=band, normal=tuple(np.where(band, c, 0.0) for c in normal),
                           speed=speed, curvature=curvature,
                           gradient_norm=gnorm, empty=False)


def _masked_divergence(components, valid, grid):
    """Divergence with one-sided fallbacks where neighbors leave the band."""
    h = grid.h
    out = np.zeros(grid.shape)
    for a, comp in enumerate(components):
        fwd = _neighbor(comp, a, +1, grid.bc[a])
        bwd = _neighbor(comp, a, -1, grid.bc[a])
        fwd_ok = _neighbor(valid.astype(np.int8), a, +1, grid.bc[a]).astype(bool)
        bwd_ok = _neighbor(valid.astype(np.int8), a, -1, grid.bc[a]).astype(bool)
        central = (fwd - bwd) / (2.0 * h)
        forward = (fwd - comp) / h
        backward = (comp - bwd) / h
        term = np.where(fwd_ok & bwd_ok, central,
                        np.where(fwd_ok, forward,
                                 np.where(bwd_ok, backward, 0.0)))
        out += term
    return out


def density_ratio(snapshot: DensitySnapshot, center, radii):
    """Normalized ball measures divided by r^(dim-1), one pair per radius."""
    grid = snapshot.normalized.grid
    out = []
    for r in radii:
        if r < 2.0 * grid.h:
            raise RefusalError(
                f"ratio radius {r:g} below 2h = {2 * grid.h:g}")
        for a in range(grid.dim):
            lo, hi = grid.bounds(a)
            if center[a] - r < lo or center[a] + r > hi:
                raise RefusalError(
                    f"ratio ball (center {tuple(center)}, r {r:g}) leaves the domain")
        mask = ball_mask(grid, center, r)
        measure = float(np.sum(np.where(mask, snapshot.normalized.values, 0.0))) \
            * grid.cell_volume
        out.append((float(r), measure / r ** (grid.dim - 1)))
    return out
