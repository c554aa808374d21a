import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from mcflab.errors import RefusalError
from mcflab.fields import Grid
from mcflab.geometry import Ball, HalfSpace, prepare_initial_data
from mcflab.potential import STANDARD_WELL
from mcflab.solver import (PhaseField, evolve, phase_rate, rate_values,
                           stable_dt, step)

well = STANDARD_WELL


def planar_field(res=512, eps=0.05):
    g = Grid.uniform(1, 1.0, res, bc="reflective")
    return prepare_initial_data(HalfSpace((1.0,), 0.0), eps, g)


def ball_field(res=128, eps=0.04, r0=0.3, extent=1.6):
    g = Grid.uniform(2, extent, res)
    return prepare_initial_data(Ball((0.0, 0.0), r0), eps, g)


# -- step size ----------------------------------------------------------------

def test_stable_dt_formula_values():
    # min(h^2/(4 n), eps^2 / (2 max|W''|)) with max|W''| = 4 for the quartic
    dt = stable_dt(0.02, 1.0 / 256.0, 2, safety=1.0)
    assert dt == pytest.approx(min((1 / 256.0) ** 2 / 8.0, 0.02 ** 2 / 8.0), rel=1e-15)
    assert dt == pytest.approx(1.9073486328125e-06, rel=1e-15)
    assert stable_dt(0.02, 1.0 / 256.0, 2, safety=0.5) == pytest.approx(dt / 2.0)
    # large eps leaves the diffusion term binding
    assert stable_dt(10.0, 0.01, 1, safety=1.0) == pytest.approx(0.01 ** 2 / 4.0)


def test_stable_dt_rejects_bad_inputs():
    with pytest.raises(ValueError):
        stable_dt(0.05, 0.01, 2, safety=1.5)
    with pytest.raises(RefusalError):
        stable_dt(0.01, 0.01, 2)


def test_instability_beyond_the_limit():
    # step-doubling experiment: the raw update at 2.5x the limit blows up
    pf = planar_field(res=128, eps=0.05)
    g = pf.grid
    good = stable_dt(pf.eps, g.h, 1, safety=0.9)
    vals = np.array(pf.values)
    for _ in range(200):
        vals = vals + good * rate_values(vals, g, pf.eps, well)
    assert np.max(np.abs(vals)) < 1.0 + 1e-3
    vals = np.array(pf.values)
    vals[64] += 1e-6  # seed the unstable mode
    bad = 2.5 * stable_dt(pf.eps, g.h, 1, safety=1.0)
    blew_up = False
    for _ in range(400):
        vals = vals + bad * rate_values(vals, g, pf.eps, well)
        if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) > 2.0:
            blew_up = True
            break
    assert blew_up


# -- single step --------------------------------------------------------------

def test_step_fixed_point_at_wells():
    g = Grid.uniform(2, 1.0, 32)
    pf = PhaseField(grid=g, values=np.ones(g.shape), eps=0.1, time=0.0)
    dt = stable_dt(pf.eps, g.h, 2, safety=0.9)
    after = step(pf, dt)
    assert np.array_equal(after.values, pf.values)
    assert after.time == dt


def test_step_refuses_unstable_dt():
    pf = planar_field(res=128, eps=0.05)
    limit = stable_dt(pf.eps, pf.grid.h, 1, safety=1.0)
    with pytest.raises(RefusalError):
        step(pf, 1.5 * limit)


def test_step_leaves_input_untouched():
    pf = planar_field(res=128, eps=0.05)
    before = pf.values.copy()
    step(pf, stable_dt(pf.eps, pf.grid.h, 1, safety=0.5))
    assert np.array_equal(pf.values, before)


def test_planar_profile_stays_on_oracle():
    # long relaxation keeps the transition profile within 1e-3 of tanh
    pf = planar_field()
    g = pf.grid
    dt = stable_dt(pf.eps, g.h, 1, safety=0.9)
    vals = np.array(pf.values)
    for _ in range(10000):
        vals = vals + dt * rate_values(vals, g, pf.eps, well)
    x, = g.centers
    target = well.profile(-x / pf.eps)
    assert float(np.max(np.abs(vals - target))) <= 1e-3


def test_phase_field_validation():
    g = Grid.uniform(1, 1.0, 64)
    with pytest.raises(ValueError):
        PhaseField(grid=g, values=np.full(64, 1.5), eps=0.1, time=0.0)
    with pytest.raises(ValueError):
        PhaseField(grid=g, values=np.zeros(64), eps=0.01, time=0.0)  # eps < 2h


# -- trajectories -------------------------------------------------------------

def test_evolve_zero_horizon_single_snapshot():
    pf = planar_field(res=128, eps=0.05)
    traj = evolve(pf, 0.0, 0.0)
    assert len(traj.snapshots) == 1
    assert traj.snapshots[0].time == 0.0


def test_evolve_snapshot_times_exact():
    pf = ball_field()
    traj = evolve(pf, 0.002, 0.0005, safety=0.9)
    assert traj.times == (0.0, 0.0005, 0.001, 0.0015, 0.002)
    assert traj.dt <= stable_dt(pf.eps, pf.grid.h, 2, safety=0.9) * (1 + 1e-12)


def test_shrinking_ball_volume_monotone():
    pf = ball_field()
    traj = evolve(pf, 0.004, 0.0005, safety=0.9)
    vols = traj.volumes
    assert all(b <= a for a, b in zip(vols, vols[1:]))
    assert vols[-1] < vols[0]


def test_radius_follows_curvature_law():
    pf = ball_field(res=128, eps=0.04)
    traj = evolve(pf, 0.004, 0.001, safety=0.9)
    r_meas = math.sqrt(traj.volumes[-1] / math.pi)
    r_exact = math.sqrt(0.09 - 2.0 * 0.004)
    assert abs(r_meas / r_exact - 1.0) < 0.05


def test_energy_monotone_and_maximum_principle():
    pf = ball_field()
    traj = evolve(pf, 0.003, 0.0005, safety=0.9)
    e = traj.energies
    slack = 1e-12 * e[0]
    assert all(b <= a + slack for a, b in zip(e, e[1:]))
    for snap in traj.snapshots:
        assert np.max(np.abs(snap.values)) <= 1.0 + 1e-3


def test_refinement_improves_radius():
    # doubling resolution and halving eps shrinks the radius error
    errs = []
    for eps, res in ((0.04, 128), (0.02, 256)):
        pf = ball_field(res=res, eps=eps)
        traj = evolve(pf, 0.004, 0.002, safety=0.9)
        r_meas = math.sqrt(traj.volumes[-1] / math.pi)
        errs.append(abs(r_meas - math.sqrt(0.09 - 0.008)))
    assert errs[1] < errs[0]


def test_evolve_deterministic_and_thread_independent():
    pf = ball_field(res=128, eps=0.04)

    def run(_):
        return evolve(pf, 0.002, 0.0005, safety=0.9).snapshots[-1].values

    serial = run(0)
    again = run(1)
    assert np.array_equal(serial, again)
    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(run, range(4)))
    for r in results:
        assert np.array_equal(r, serial)


def test_phase_rate_matches_step_update():
    pf = planar_field(res=128, eps=0.05)
    dt = stable_dt(pf.eps, pf.grid.h, 1, safety=0.5)
    manual = pf.values + dt * phase_rate(pf).values
    assert np.allclose(step(pf, dt).values, manual, atol=0.0, rtol=0.0)


def test_extinction_run_continues():
    # small ball vanishes; the run keeps going and relaxes to the outer well
    g = Grid.uniform(2, 1.6, 128)
    pf = prepare_initial_data(Ball((0.0, 0.0), 0.13), 0.0405, g)
    traj = evolve(pf, 0.012, 0.002, safety=0.9)
    assert traj.volumes[-1] == 0.0
    assert float(np.max(traj.snapshots[-1].values)) < 0.0


def test_trajectory_invariants_enforced():
    pf = planar_field(res=128, eps=0.05)
    from mcflab.solver import PhaseTrajectory

    with pytest.raises(ValueError):
        PhaseTrajectory((pf, pf), 0.1, "euler", {}, (1.0, 1.0), (0.5, 0.5))
