"""Verification checks for phase trajectories and closed-form flows.

Every check is a pure function of its inputs and returns one or more
report rows; rerunning a check reproduces its rows bit for bit.  One-sided
checks (upper bounds, monotone decreases) record their sidedness so a
signed residual is never misread as a two-sided failure.  Counterexample
checks are must-detect rows: they pass only when the violation they are
built to expose is actually observed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import RefusalError
from .fields import TestFunction, gradient_values
from .geometry import ReferenceFlow, sphere_quadrature
from .measures import density_ratio, density_snapshot
from .potential import STANDARD_WELL
from .solver import rate_values

#: Default tolerances and knobs, also surfaced in report metadata.
DEFAULTS = {
    "energy_dissipation_slack": 1e-2,
    "discrepancy_ratio_tol": 1e-2,
    "profile_fidelity_tol": 1e-3,
    "radius_law_tol": 0.03,
    "brakke_tol_factor": 0.05,
    "bv_tol": 0.10,
    "l2_cap_slack": 0.05,
    "l2_amplitude_tol": 1e-10,
    "abscont_identity_tol": 1e-8,
    "abscont_delta": 1e-4,
    "abscont_eta": 1e-4,
    "abscont_block_cells": 8,
    "abscont_block_intervals": 4,
    "density_ratio_cap": 10.0,
    "mfp_lsc_slack": 0.05,
    "geometric_identity_tol": 1e-12,
    "mesh_oracle_tol": 1e-6,
    "counterexample_tol": 0.01,
    "min_window_intervals": 20,
}


@dataclass(frozen=True)
class CheckRow:
    """One verified statement: measured value against a bound or target."""

    scenario: str
    epsilon: float
    check: str
    value: float
    target: float
    tolerance: float
    sided: str      # "upper" | "two-sided" | "decreasing" | "detect"
    passed: bool
    seconds: float = 0.0

    def __post_init__(self):
        for name in ("epsilon", "value", "target", "tolerance", "seconds"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "passed", bool(self.passed))


def row_sort_key(row: CheckRow):
    return (row.scenario, row.check, row.epsilon)


@dataclass
class VerificationReport:
    rows: list
    meta: dict

    def sorted_rows(self):
        return sorted(self.rows, key=row_sort_key)

    @property
    def all_passed(self):
        return all(r.passed for r in self.rows)

    def failures(self):
        return [r for r in self.rows if not r.passed]


# ---------------------------------------------------------------------------
# shared trajectory helpers

def _window_indices(traj, t1, t2, min_intervals=DEFAULTS["min_window_intervals"]):
    times = np.asarray(traj.times)
    k1 = int(np.argmin(np.abs(times - t1)))
    k2 = int(np.argmin(np.abs(times - t2)))
    if k2 <= k1:
        raise RefusalError(f"empty check window [{t1:g}, {t2:g}]")
    if k2 - k1 < min_intervals:
        cadence = times[1] - times[0] if len(times) > 1 else math.inf
        raise RefusalError(
            f"snapshot cadence {cadence:g} too coarse for window "
            f"[{t1:g}, {t2:g}]: need cadence <= (t2-t1)/{min_intervals}")
    return k1, k2


def _dissipation_series(traj, well):
    """Instantaneous normalized dissipation per snapshot."""
    sigma = well.surface_tension
    out = []
    for pf in traj.snapshots:
        rate = rate_values(pf.values, pf.grid, pf.eps, well)
        out.append(pf.eps * float(np.sum(rate * rate)) * pf.grid.cell_volume / sigma)
    return np.array(out)


def _require_test_inside(test, grid):
    if not test.fits_inside(grid):
        raise RefusalError(
            f"test function support (center {test.center}, radius {test.radius:g}) "
            "touches the domain boundary")


def _measured_radius(volume, dim):
    if dim == 2:
        return math.sqrt(max(volume, 0.0) / math.pi)
    if dim == 3:
        return (3.0 * max(volume, 0.0) / (4.0 * math.pi)) ** (1.0 / 3.0)
    raise ValueError("radius measurement needs dimension 2 or 3")


class _LayerState:
    """Per-snapshot derived fields shared by the moving-measure checks.

    One gradient/rate evaluation serves the energy density, the band,
    the normal, the normal speed, and the layer-primitive gradient norm.
    """

    __slots__ = ("energy", "band", "speed", "normal", "gradient_norm",
                 "layer", "rate")

    def __init__(self, pf, well):
        grid = pf.grid
        grads = gradient_values(pf.values, grid)
        gnorm2 = np.zeros(grid.shape)
        for g in grads:
            gnorm2 += g * g
        gnorm = np.sqrt(gnorm2)
        self.gradient_norm = gnorm
        self.energy = pf.eps * gnorm2 / 2.0 + well.value(pf.values) / pf.eps
        self.rate = rate_values(pf.values, grid, pf.eps, well)
        floor = 0.1 * well.profile_slope(0.0) / pf.eps
        band = (np.abs(pf.values) < 0.95) & (gnorm > floor)
        self.band = band
        valid = gnorm > 0.5 * floor
        safe = np.where(valid, gnorm, 1.0)
        self.speed = np.where(band, self.rate / safe, 0.0)
        self.normal = tuple(np.where(band, -g / safe, 0.0) for g in grads)
        self.layer = well.sqrt_2w(pf.values) * gnorm


# ---------------------------------------------------------------------------
# per-run checks

def energy_dissipation_check(traj, well=STANDARD_WELL, scenario="",
                             slack=None) -> CheckRow:
    """Running energy balance: energy now plus dissipation so far never
    exceeds the initial energy (up to quadrature slack)."""
    slack = DEFAULTS["energy_dissipation_slack"] if slack is None else slack
    times = np.asarray(traj.times)
    mus = np.asarray(traj.energies)
    diss = _dissipation_series(traj, well)
    running = [mus[k] + float(np.trapezoid(diss[:k + 1], times[:k + 1]))
               for k in range(len(times))]
    value = float(max(running))
    target = float(mus[0])
    tol = slack * target
    return CheckRow(scenario, traj.eps, "energy_dissipation", value, target,
                    tol, "upper", value <= target + tol)


def discrepancy_space_time(traj, well=STANDARD_WELL):
    """Space-time integral of |discrepancy| / sigma along the run."""
    sigma = well.surface_tension
    vals = []
    for pf in traj.snapshots:
        ds = density_snapshot(pf, well)
        vals.append(float(np.sum(np.abs(ds.discrepancy.values)))
                    * pf.grid.cell_volume / sigma)
    return float(np.trapezoid(vals, np.asarray(traj.times)))


def discrepancy_ratio_check(traj, well=STANDARD_WELL, scenario="",
                            tol=None) -> CheckRow:
    """Final-time equipartition: integral of |discrepancy| over energy."""
    tol = DEFAULTS["discrepancy_ratio_tol"] if tol is None else tol
    ds = density_snapshot(traj.snapshots[-1], well)
    num = float(np.sum(np.abs(ds.discrepancy.values)))
    den = float(np.sum(ds.energy.values))
    value = num / max(den, 1e-300)
    return CheckRow(scenario, traj.eps, "discrepancy_ratio", value, 0.0, tol,
                    "upper", value <= tol)


def profile_fidelity_check(traj, shape, well=STANDARD_WELL, scenario="",
                           tol=None) -> CheckRow:
    """Final snapshot against the exact transition profile of the shape."""
    tol = DEFAULTS["profile_fidelity_tol"] if tol is None else tol
    pf = traj.snapshots[-1]
    target_values = well.profile(shape.distance(pf.grid.centers) / pf.eps)
    value = float(np.max(np.abs(pf.values - target_values)))
    return CheckRow(scenario, traj.eps, "profile_fidelity", value, 0.0, tol,
                    "upper", value <= tol)


def radius_law_check(traj, flow: ReferenceFlow, scenario="", tol=None) -> CheckRow:
    """Measured final radius against the shrinking-sphere law."""
    tol = DEFAULTS["radius_law_tol"] if tol is None else tol
    dim = traj.grid.dim
    r_meas = _measured_radius(traj.volumes[-1], dim)
    r_exact = flow.radius(traj.times[-1])
    if r_exact <= 0:
        raise RefusalError("reference flow already extinct at the final time")
    value = abs(r_meas / r_exact - 1.0)
    return CheckRow(scenario, traj.eps, "radius_law", value, 0.0, tol,
                    "upper", value <= tol)


def brakke_residual(traj, test: TestFunction, t1, t2, well=STANDARD_WELL,
                    scenario="", tol_factor=None, label="") -> CheckRow:
    """Moving-measure inequality for one nonnegative test function.

    The left side is the change of the energy pairing; the right side
    integrates (grad(test) - test h) . h + dt(test) against the energy
    measure, with the curvature vector realized as speed times normal on
    the interface band.  The smooth-flow identity makes the signed gap
    small; the check is one-sided from above.
    """
    if np.isfinite(test.radius):
        _require_test_inside(test, traj.grid)
    tol_factor = DEFAULTS["brakke_tol_factor"] if tol_factor is None else tol_factor
    k1, k2 = _window_indices(traj, t1, t2)
    grid = traj.grid
    xs = grid.centers
    sigma = well.surface_tension

    def pairing(k):
        pf = traj.snapshots[k]
        ds = density_snapshot(pf, well)
        return float(np.sum(ds.energy.values * test.value(xs, pf.time))) \
            * grid.cell_volume / sigma

    lhs = pairing(k2) - pairing(k1)
    integrand = []
    for k in range(k1, k2 + 1):
        pf = traj.snapshots[k]
        st = _LayerState(pf, well)
        tv = test.value(xs, pf.time)
        tg = test.space_gradient(xs, pf.time)
        tdt = test.time_derivative(xs, pf.time)
        grad_dot_nu = np.zeros(grid.shape)
        for g, nu in zip(tg, st.normal):
            grad_dot_nu += g * nu
        cell = (st.speed * grad_dot_nu - tv * st.speed * st.speed + tdt) * st.energy
        integrand.append(float(np.sum(cell)) * grid.cell_volume / sigma)
    times = np.asarray(traj.times[k1:k2 + 1])
    rhs = float(np.trapezoid(np.asarray(integrand), times))
    mu0 = traj.energies[0]
    tol = tol_factor * mu0
    value = lhs - rhs
    name = f"brakke:{label}" if label else "brakke"
    return CheckRow(scenario, traj.eps, name, value, 0.0, tol, "upper",
                    value <= tol)


def _bv_series(traj, test, well):
    """Per-snapshot phase pairing and volume-change integrand for a test.

    The boundary flux is test * speed * |layer-primitive gradient| / sigma
    over the band; the bulk term pairs the test's time derivative with the
    phase indicator.
    """
    grid = traj.grid
    xs = grid.centers
    sigma = well.surface_tension
    pairings, integrand = [], []
    for pf in traj.snapshots:
        chi = (pf.values >= 0.0).astype(float)
        st = _LayerState(pf, well)
        tv = test.value(xs, pf.time)
        tdt = test.time_derivative(xs, pf.time)
        pairings.append(float(np.sum(chi * tv)) * grid.cell_volume)
        bulk = float(np.sum(tdt * chi)) * grid.cell_volume
        flux = float(np.sum(np.where(st.band, tv * st.speed * st.layer, 0.0))) \
            * grid.cell_volume / sigma
        integrand.append(bulk + flux)
    return np.asarray(pairings), np.asarray(integrand)


def _bv_window_residual(traj, test, pairings, integrand, k1, k2):
    times = np.asarray(traj.times)
    lhs = pairings[k2] - pairings[k1]
    rhs = float(np.trapezoid(integrand[k1:k2 + 1], times[k1:k2 + 1]))
    scale = max(abs(lhs),
                test.sup_norm * max(traj.volumes[k1], traj.volumes[k2]),
                1e-300)
    return abs(lhs - rhs) / scale


def bv_residual(traj, test: TestFunction, t1, t2, well=STANDARD_WELL,
                scenario="", tol=None, label="") -> CheckRow:
    """Volume-change formula residual for one test function.

    Compares the change of the phase-weighted test integral against the
    bulk time-derivative term plus the boundary flux, reported relative
    to max(|change|, test sup norm * phase volume).
    """
    _require_test_inside(test, traj.grid)
    tol = DEFAULTS["bv_tol"] if tol is None else tol
    k1, k2 = _window_indices(traj, t1, t2)
    pairings, integrand = _bv_series(traj, test, well)
    value = _bv_window_residual(traj, test, pairings, integrand, k1, k2)
    name = f"bv:{label}" if label else "bv"
    return CheckRow(scenario, traj.eps, name, value, 0.0, tol, "upper",
                    value <= tol)


def _l2_pairing_ratio(traj, test, well):
    grid = traj.grid
    xs = grid.centers
    sigma = well.surface_tension
    integrand = []
    for pf in traj.snapshots:
        st = _LayerState(pf, well)
        tg = test.space_gradient(xs, pf.time)
        tdt = test.time_derivative(xs, pf.time)
        grad_dot_v = np.zeros(grid.shape)
        for g, nu in zip(tg, st.normal):
            grad_dot_v += g * nu
        cell = (tdt + st.speed * grad_dot_v) * st.energy
        integrand.append(float(np.sum(cell)) * grid.cell_volume / sigma)
    num = float(np.trapezoid(np.asarray(integrand), np.asarray(traj.times)))
    return abs(num) / test.sup_norm


def l2_flow_check(traj, tests, well=STANDARD_WELL, scenario="",
                  slack=None) -> CheckRow:
    """Square-integrable-velocity pairing bound over a test suite.

    The cap is the computable stand-in 2 (mu0 + total dissipation), an
    artifact choice recorded in the report metadata.
    """
    if not tests:
        raise RefusalError("l2 flow check needs a nonempty test suite")
    slack = DEFAULTS["l2_cap_slack"] if slack is None else slack
    ratios = [_l2_pairing_ratio(traj, test, well) for test in tests]
    diss = _dissipation_series(traj, well)
    total_diss = float(np.trapezoid(diss, np.asarray(traj.times)))
    cap = 2.0 * (traj.energies[0] + total_diss) * (1.0 + slack)
    value = float(max(ratios))
    return CheckRow(scenario, traj.eps, "l2_flow", value, cap, 0.0, "upper",
                    value <= cap)


def l2_amplitude_check(traj, test, well=STANDARD_WELL, scenario="",
                       tol=None) -> CheckRow:
    """Homogeneity: the normalized pairing is amplitude-invariant."""
    tol = DEFAULTS["l2_amplitude_tol"] if tol is None else tol
    base = _l2_pairing_ratio(traj, test, well)
    scaled = _l2_pairing_ratio(traj, replace(test, amplitude=10.0 * test.amplitude),
                               well)
    value = abs(scaled - base) / max(base, 1e-300)
    return CheckRow(scenario, traj.eps, "l2_amplitude", value, 0.0, tol,
                    "upper", value <= tol)


def abscont_identity_check(traj, well=STANDARD_WELL, scenario="",
                           tol=None) -> CheckRow:
    """Pointwise space-time layer-gradient identity on the band.

    |grad'(primitive)| assembled from components must equal
    sqrt(1 + (rate/|grad|)^2) |grad(primitive)|; both sides are built from
    the same discrete gradient and rate, so only rounding separates them.
    """
    tol = DEFAULTS["abscont_identity_tol"] if tol is None else tol
    worst = 0.0
    for pf in traj.snapshots:
        grads = gradient_values(pf.values, pf.grid)
        gnorm = np.sqrt(np.sum([g * g for g in grads], axis=0))
        rate = rate_values(pf.values, pf.grid, pf.eps, well)
        a = well.sqrt_2w(pf.values)
        floor = 0.1 * well.profile_slope(0.0) / pf.eps
        band = (np.abs(pf.values) < 0.95) & (gnorm > floor)
        if not band.any():
            continue
        comp2 = np.sum([(a * g) ** 2 for g in grads], axis=0) + (a * rate) ** 2
        lhs = np.sqrt(comp2)
        safe = np.where(band, gnorm, 1.0)
        rhs = np.sqrt(1.0 + (rate / safe) ** 2) * a * safe
        rel = np.where(band, np.abs(lhs - rhs) / np.maximum(rhs, 1e-300), 0.0)
        worst = max(worst, float(rel.max()))
    return CheckRow(scenario, traj.eps, "abscont_identity", worst, 0.0, tol,
                    "upper", worst <= tol)


def _block_reduce(values, cells):
    """Sum over aligned blocks of ``cells`` per axis (ragged tail merged)."""
    out = values
    for axis in range(values.ndim):
        idx = np.arange(0, values.shape[axis], cells)
        out = np.add.reduceat(out, idx, axis=axis)
    return out


def _spacetime_block_masses(traj, well, block_cells, block_intervals):
    """Per space-time block: layer-boundary surrogate mass and energy mass."""
    sigma = well.surface_tension
    times = np.asarray(traj.times)
    n_snap = len(times)
    if n_snap < block_intervals + 1:
        raise RefusalError("too few snapshots for the block proxy")
    edges = list(range(0, n_snap - 1, block_intervals))
    if edges[-1] != n_snap - 1:
        edges.append(n_snap - 1)
    if len(edges) > 2 and (edges[-1] - edges[-2]) < block_intervals:
        edges.pop(-2)  # merge the ragged tail into the previous window
    per_snap_p = []
    per_snap_m = []
    for pf in traj.snapshots:
        grads = gradient_values(pf.values, pf.grid)
        gnorm2 = np.sum([g * g for g in grads], axis=0)
        rate = rate_values(pf.values, pf.grid, pf.eps, well)
        a = well.sqrt_2w(pf.values)
        kinetic = pf.eps * gnorm2 / 2.0
        energy = kinetic + well.value(pf.values) / pf.eps
        p_density = a * np.sqrt(gnorm2 + rate * rate) / sigma
        per_snap_p.append(_block_reduce(p_density, block_cells) * pf.grid.cell_volume)
        per_snap_m.append(_block_reduce(energy / sigma, block_cells) * pf.grid.cell_volume)
    p_masses, m_masses = [], []
    for a0, a1 in zip(edges[:-1], edges[1:]):
        tt = times[a0:a1 + 1]
        p_masses.append(np.trapezoid(np.array(per_snap_p[a0:a1 + 1]), tt, axis=0))
        m_masses.append(np.trapezoid(np.array(per_snap_m[a0:a1 + 1]), tt, axis=0))
    return np.array(p_masses), np.array(m_masses)


def abscont_blocks_check(traj, well=STANDARD_WELL, scenario="", delta=None,
                         eta=None, block_cells=None, block_intervals=None) -> CheckRow:
    """Block proxy for absolute continuity of the space-time boundary.

    Splits space-time into blocks and flags any block whose share of the
    total boundary-surrogate mass exceeds eta while its share of the total
    energy mass is below delta.  Smooth runs must produce no such block;
    a genuine jump concentrates boundary mass where the energy vanishes.
    """
    delta = DEFAULTS["abscont_delta"] if delta is None else delta
    eta = DEFAULTS["abscont_eta"] if eta is None else eta
    block_cells = DEFAULTS["abscont_block_cells"] if block_cells is None else block_cells
    block_intervals = (DEFAULTS["abscont_block_intervals"]
                       if block_intervals is None else block_intervals)
    if eta > delta:
        raise RefusalError("block proxy needs eta <= delta")
    p, m = _spacetime_block_masses(traj, well, block_cells, block_intervals)
    p_rel = p / max(float(p.sum()), 1e-300)
    m_rel = m / max(float(m.sum()), 1e-300)
    offending = int(np.sum((p_rel > eta) & (m_rel < delta)))
    return CheckRow(scenario, traj.eps, "abscont_blocks", float(offending),
                    0.0, 0.0, "upper", offending == 0)


def density_ratio_bound_check(traj, center, t_min, r_max, well=STANDARD_WELL,
                              scenario="", cap=None, n_radii=6) -> CheckRow:
    """Interface-centered ball measures stay below the desk-scale cap."""
    cap = DEFAULTS["density_ratio_cap"] if cap is None else cap
    grid = traj.grid
    radii = np.geomspace(4.0 * grid.h, r_max, n_radii)
    worst = 0.0
    for k, pf in enumerate(traj.snapshots):
        if pf.time < t_min:
            continue
        ds = density_snapshot(pf, well)
        r_m = _measured_radius(traj.volumes[k], grid.dim)
        for axis in range(grid.dim):
            for sign in (-1.0, 1.0):
                point = list(center)
                point[axis] += sign * r_m
                for r, ratio in density_ratio(ds, point, radii):
                    worst = max(worst, ratio)
    return CheckRow(scenario, traj.eps, "density_ratio", worst, cap, 0.0,
                    "upper", worst <= cap)


# ---------------------------------------------------------------------------
# sweep-level checks

def discrepancy_decay_rows(trajs_by_eps, well=STANDARD_WELL, scenario=""):
    """Space-time discrepancy decreasing strictly along decreasing eps."""
    if len(trajs_by_eps) < 3:
        raise RefusalError("discrepancy decay needs a sweep of >= 3 eps values")
    eps_sorted = sorted(trajs_by_eps, reverse=True)
    rows = []
    previous = math.inf
    for eps in eps_sorted:
        d = discrepancy_space_time(trajs_by_eps[eps], well)
        rows.append(CheckRow(scenario, eps, "discrepancy_decay", d, previous,
                             0.0, "decreasing", d < previous))
        previous = d
    return rows


def bv_decay_row(trajs_by_eps, test, t_min, window, well=STANDARD_WELL,
                 scenario="") -> CheckRow:
    """Volume-change residual decreasing strictly along decreasing eps.

    A single window's residual is dominated by the endpoint quantization
    of the sharp phase indicator (a few grid cells' worth, with an
    arbitrary sign), so the decay is measured on the rms residual over
    every snapshot-aligned window of the given length starting at or
    after ``t_min``; that functional decays cleanly under matched
    eps/grid refinement.
    """
    if len(trajs_by_eps) < 3:
        raise RefusalError("bv decay needs a sweep of >= 3 eps values")
    eps_sorted = sorted(trajs_by_eps, reverse=True)
    values = []
    for eps in eps_sorted:
        traj = trajs_by_eps[eps]
        _require_test_inside(test, traj.grid)
        times = np.asarray(traj.times)
        cadence = times[1] - times[0]
        span = max(window, DEFAULTS["min_window_intervals"] * cadence)
        pairings, integrand = _bv_series(traj, test, well)
        residuals = []
        for k1 in range(len(times)):
            if times[k1] < t_min - 1e-12:
                continue
            k2 = k1 + int(round(span / cadence))
            if k2 >= len(times):
                break
            residuals.append(_bv_window_residual(traj, test, pairings,
                                                 integrand, k1, k2))
        if not residuals:
            raise RefusalError("no admissible windows for the bv decay check")
        values.append(float(np.sqrt(np.mean(np.asarray(residuals) ** 2))))
    decreasing = all(b < a for a, b in zip(values, values[1:]))
    return CheckRow(scenario, min(eps_sorted), "bv_decay", values[-1],
                    values[0], 0.0, "decreasing", decreasing)


def mfp_lsc_rows(trajs_by_eps, flow: ReferenceFlow, tests, t_ref,
                 well=STANDARD_WELL, scenario="", slack=None,
                 speed_override=None):
    """Measure-function-pair checks against the closed-form limit flow.

    Pairs (energy measure, band speed) per eps against (surface measure,
    curvature velocity): the limit second moment must not exceed the
    sweep's (lower-semicontinuity), and the pairing gap must shrink from
    the coarsest to the finest level.  With only a few levels the signed
    error components cross zero, so consecutive-pair strictness is not
    required, only the net head-to-tail decrease.  ``speed_override``
    lets tests perturb the paired function without touching the runs.
    """
    if len(trajs_by_eps) < 3:
        raise RefusalError("measure-function check needs >= 3 eps values")
    slack = DEFAULTS["mfp_lsc_slack"] if slack is None else slack
    eps_sorted = sorted(trajs_by_eps, reverse=True)
    sigma = well.surface_tension
    second_moments = {}
    pairings = {}
    for eps in eps_sorted:
        traj = trajs_by_eps[eps]
        k = int(np.argmin(np.abs(np.asarray(traj.times) - t_ref)))
        pf = traj.snapshots[k]
        st = _LayerState(pf, well)
        speed = st.speed if speed_override is None else speed_override(st, pf)
        weight = st.energy * pf.grid.cell_volume / sigma
        second_moments[eps] = float(np.sum(speed * speed * weight))
        xs = pf.grid.centers
        pairings[eps] = [float(np.sum(speed * t.value(xs, pf.time) * weight))
                         for t in tests]
    if not all(np.isfinite(v) for v in second_moments.values()):
        raise RefusalError("unbounded second moments in the sweep")
    r = flow.radius(t_ref)
    if r <= 0:
        raise RefusalError("limit flow extinct at the pairing time")
    hdot = flow.speed(t_ref)
    m2_limit = hdot * hdot * flow.surface(t_ref)
    pts, w = sphere_quadrature(flow.dim, (0.0,) * flow.dim, r)
    pair_limit = [hdot * float(np.sum(w * t.value(tuple(pts.T), t_ref)))
                  for t in tests]
    rows = []
    best = min(second_moments.values())
    rows.append(CheckRow(scenario, min(eps_sorted), "mfp_lsc", m2_limit,
                         best, slack * best, "upper",
                         m2_limit <= best * (1.0 + slack)))
    for j, t in enumerate(tests):
        gaps = [abs(pairings[eps][j] - pair_limit[j]) for eps in eps_sorted]
        label = t.kind if len(tests) == 1 else f"{j}-{t.kind}"
        # non-strict so a constant sequence passes with equality
        rows.append(CheckRow(scenario, min(eps_sorted), f"mfp_pairing:{label}",
                             gaps[-1], gaps[0], 0.0, "decreasing",
                             gaps[-1] <= gaps[0]))
    return rows


# ---------------------------------------------------------------------------
# closed-form flow checks

def _flow_smooth_radius(flow, t):
    rr = flow.r0 ** 2 - 2.0 * (flow.dim - 1) * t
    return math.sqrt(rr) if rr > 0 else 0.0


def geometric_identity_rows(flow: ReferenceFlow, scenario="", times=None,
                            tol=None, mesh_tol=None):
    """Co-area factor, slicing normal, and space-time normal identities
    on the analytic shrinking sphere, plus a finite-difference mesh oracle
    for the co-area factor."""
    tol = DEFAULTS["geometric_identity_tol"] if tol is None else tol
    mesh_tol = DEFAULTS["mesh_oracle_tol"] if mesh_tol is None else mesh_tol
    dim = flow.dim
    horizon = flow.extinction_time if flow.t_cut is None else flow.t_cut
    if times is None:
        times = [0.0, 0.45 * horizon, 0.8 * horizon]
    for t in times:
        if _flow_smooth_radius(flow, t) <= 0 or (flow.t_cut is not None and t >= flow.t_cut):
            raise RefusalError(f"identity time {t:g} beyond the smooth regime")
    rng = np.random.default_rng(7)
    dirs = rng.normal(size=(16, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    worst_coarea = worst_slice = worst_normal = worst_unit = 0.0
    worst_mesh = 0.0
    for t in times:
        r = _flow_smooth_radius(flow, t)
        hmag = (dim - 1) / r
        for d in dirs:
            nu_t = d                       # outward unit normal of the slice
            scale = 1.0 / math.sqrt(1.0 + hmag * hmag)
            # curvature vector points inward: h . nu = -hmag
            nu_spacetime = np.append(nu_t, hmag) * scale
            # route 1: formula; route 2: projector algebra on grad(time)
            coarea_formula = scale
            e_t = np.zeros(dim + 1)
            e_t[dim] = 1.0
            tangential = e_t - np.dot(e_t, nu_spacetime) * nu_spacetime
            coarea_proj = float(np.linalg.norm(tangential))
            worst_coarea = max(worst_coarea, abs(coarea_formula - coarea_proj))
            # geometric route: normalized space-time gradient of
            # F = |x|^2 - (r0^2 - 2 (dim-1) t)
            grad = np.append(2.0 * r * d, 2.0 * (dim - 1))
            nu_geo = grad / np.linalg.norm(grad)
            worst_normal = max(worst_normal,
                               float(np.max(np.abs(nu_geo - nu_spacetime))))
            p_part = nu_geo[:dim]
            sliced = p_part / np.linalg.norm(p_part)
            worst_slice = max(worst_slice, float(np.max(np.abs(sliced - nu_t))))
            worst_unit = max(worst_unit,
                             abs(np.dot(p_part, p_part) + nu_geo[dim] ** 2 - 1.0))
        # patch step scaled to the radius so the curvature bias stays
        # well below the tolerance near extinction
        worst_mesh = max(worst_mesh,
                         _mesh_coarea_error(flow, t, dirs[0], delta=1e-4 * r))
    rows = [
        CheckRow(scenario, 0.0, "coarea_factor", worst_coarea, 0.0, tol,
                 "upper", worst_coarea <= tol),
        CheckRow(scenario, 0.0, "slicing_normal", worst_slice, 0.0, tol,
                 "upper", worst_slice <= tol),
        CheckRow(scenario, 0.0, "spacetime_normal", worst_normal, 0.0, tol,
                 "upper", worst_normal <= tol),
        CheckRow(scenario, 0.0, "unit_normal_split", worst_unit, 0.0, tol,
                 "upper", worst_unit <= tol),
        CheckRow(scenario, 0.0, "coarea_mesh_oracle", worst_mesh, 0.0,
                 mesh_tol, "upper", worst_mesh <= mesh_tol),
    ]
    return rows


def _mesh_coarea_error(flow, t, direction, delta=1e-4):
    """Tangential gradient of the time coordinate on a local manifold mesh.

    Perturbs the space-time sphere around a base point along an
    orthonormal parameter patch and solves the least-norm gradient fit;
    compares its magnitude with the closed-form co-area factor.
    """
    dim = flow.dim
    r = _flow_smooth_radius(flow, t)
    base = np.append(r * direction, t)
    # orthonormal tangent directions of the sphere slice
    basis = []
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = 1.0
        v = e - np.dot(e, direction) * direction
        for b in basis:
            v -= np.dot(v, b) * b
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            basis.append(v / norm)
    rows = []
    rhs = []
    for v in basis:
        for s in (-1.0, 1.0):
            d2 = direction + s * delta * v
            d2 /= np.linalg.norm(d2)
            point = np.append(r * d2, t)
            rows.append(point - base)
            rhs.append(0.0)
    for s in (-1.0, 1.0):
        t2 = t + s * delta
        r2 = _flow_smooth_radius(flow, t2)
        point = np.append(r2 * direction, t2)
        rows.append(point - base)
        rhs.append(t2 - t)
    # rcond truncates the near-null normal direction (singular value of
    # order delta * curvature relative to the tangent ones), leaving the
    # minimum-norm tangential gradient
    g, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=1e-2)
    hmag = (dim - 1) / r
    return abs(float(np.linalg.norm(g)) - 1.0 / math.sqrt(1.0 + hmag * hmag))


def _disk_quadrature(dim, radius, n_radial=160, n_sphere=1024):
    """Points/weights integrating over a solid ball of the given radius.

    Radial Gauss-Legendre nodes carry shells whose surface-quadrature
    weights already include the r^(dim-1) factor.
    """
    nodes, wts = np.polynomial.legendre.leggauss(n_radial)
    rr = 0.5 * radius * (nodes + 1.0)
    wr = 0.5 * radius * wts
    pts_all = []
    w_all = []
    for r, w in zip(rr, wr):
        sp, sw = sphere_quadrature(dim, (0.0,) * dim, float(r), n_sphere)
        pts_all.append(sp)
        w_all.append(sw * w)
    return np.concatenate(pts_all), np.concatenate(w_all)


def bv_counterexample_row(flow: ReferenceFlow, test: TestFunction, t1, t2,
                          scenario="", tol=None) -> CheckRow:
    """Volume-change formula failure across the truncation time.

    Builds both sides of the formula from the closed-form flow; the
    residual must equal the phase volume lost at the cut (test-weighted).
    This is a must-detect row: it fails when the jump is NOT seen.
    """
    if flow.kind != "truncated-sphere":
        raise RefusalError("counterexample check needs the truncated flow")
    if not t1 < flow.t_cut < t2:
        raise RefusalError("window must straddle the truncation time")
    tol = DEFAULTS["counterexample_tol"] if tol is None else tol
    dim = flow.dim

    def phase_pairing(t):
        r = flow.radius(t)
        if r <= 0:
            return 0.0
        pts, w = _disk_quadrature(dim, r)
        return float(np.sum(w * test.value(tuple(pts.T), t)))

    lhs = phase_pairing(t2) - phase_pairing(t1)
    nodes, wts = np.polynomial.legendre.leggauss(200)
    ts = 0.5 * (flow.t_cut - t1) * (nodes + 1.0) + t1
    tw = 0.5 * (flow.t_cut - t1) * wts
    rhs = 0.0
    for t, w in zip(ts, tw):
        r = flow.radius(t)
        pts_b, w_b = _disk_quadrature(dim, r)
        bulk = float(np.sum(w_b * test.time_derivative(tuple(pts_b.T), t)))
        sp, sw = sphere_quadrature(dim, (0.0,) * dim, r)
        flux = flow.speed(t) * float(np.sum(sw * test.value(tuple(sp.T), t)))
        rhs += w * (bulk + flux)
    # between the cut and t2 the set is empty: both terms vanish
    residual = abs(lhs - rhs)
    r_cut = _flow_smooth_radius(flow, flow.t_cut)
    pts, w = _disk_quadrature(dim, r_cut)
    expected = float(np.sum(w * test.value(tuple(pts.T), flow.t_cut)))
    return CheckRow(scenario, 0.0, "bv_counterexample", residual, expected,
                    tol * expected, "detect",
                    abs(residual - expected) <= tol * expected)


def abscont_counterexample_row(flow: ReferenceFlow, extent, resolution,
                               t1, t2, scenario="", n_windows=4, delta=None,
                               eta=None, block_cells=None) -> CheckRow:
    """Block proxy applied to the truncated flow: the lid left by the jump
    must produce at least one block with boundary mass but no energy mass.
    Must-detect: the row fails when no offending block is found."""
    if flow.kind != "truncated-sphere":
        raise RefusalError("counterexample check needs the truncated flow")
    if flow.dim != 2:
        raise RefusalError("analytic block proxy implemented for dimension 2")
    delta = DEFAULTS["abscont_delta"] if delta is None else delta
    eta = DEFAULTS["abscont_eta"] if eta is None else eta
    block_cells = DEFAULTS["abscont_block_cells"] if block_cells is None else block_cells
    h = extent / resolution
    n_blocks = math.ceil(resolution / block_cells)
    block_size = block_cells * h
    lo = -extent / 2.0
    edges_t = np.linspace(t1, t2, n_windows + 1)

    def block_of(x, y):
        bx = np.clip(((x - lo) / block_size).astype(int), 0, n_blocks - 1)
        by = np.clip(((y - lo) / block_size).astype(int), 0, n_blocks - 1)
        return bx, by

    p_mass = np.zeros((n_windows, n_blocks, n_blocks))
    m_mass = np.zeros((n_windows, n_blocks, n_blocks))
    nodes, wts = np.polynomial.legendre.leggauss(24)
    n_theta = 4096
    theta = (np.arange(n_theta) + 0.5) * (2.0 * math.pi / n_theta)
    # left-closed windows; the lid deposited at the cut belongs to the
    # window whose left edge is the cut (fp-tolerant lookup)
    lid_idx = min(max(int(np.searchsorted(edges_t, flow.t_cut + 1e-12)) - 1, 0),
                  n_windows - 1)
    for wdx, (ta, tb) in enumerate(zip(edges_t[:-1], edges_t[1:])):
        live_end = min(tb, flow.t_cut)
        if ta < live_end - 1e-15:
            ts = 0.5 * (live_end - ta) * (nodes + 1.0) + ta
            tw = 0.5 * (live_end - ta) * wts
            for t, w in zip(ts, tw):
                r = flow.radius(t)
                x = r * np.cos(theta)
                y = r * np.sin(theta)
                bx, by = block_of(x, y)
                seg = r * (2.0 * math.pi / n_theta)
                speed = flow.speed(t)
                lateral = math.sqrt(1.0 + speed * speed)
                np.add.at(m_mass[wdx], (bx, by), w * seg)
                np.add.at(p_mass[wdx], (bx, by), w * seg * lateral)
        if wdx == lid_idx:
            r_cut = _flow_smooth_radius(flow, flow.t_cut)
            pts, wq = _disk_quadrature(2, r_cut, n_radial=160, n_sphere=2048)
            bx, by = block_of(pts[:, 0], pts[:, 1])
            np.add.at(p_mass[wdx], (bx, by), wq)
    p_rel = p_mass / max(float(p_mass.sum()), 1e-300)
    m_rel = m_mass / max(float(m_mass.sum()), 1e-300)
    offending = int(np.sum((p_rel > eta) & (m_rel < delta)))
    return CheckRow(scenario, 0.0, "abscont_counterexample", float(offending),
                    1.0, 0.0, "detect", offending >= 1)
