import math

import numpy as np
import pytest

from mcflab.errors import RefusalError
from mcflab.fields import Grid, TestFunction
from mcflab.geometry import Ball, HalfSpace, ReferenceFlow, prepare_initial_data
from mcflab.potential import STANDARD_WELL
from mcflab.solver import PhaseField, evolve
from mcflab import verify

well = STANDARD_WELL
CONST = TestFunction(kind="constant-on-window", amplitude=1.0)


@pytest.fixture(scope="module")
def planar_traj():
    g = Grid.uniform(1, 1.0, 512, bc="reflective")
    pf = prepare_initial_data(HalfSpace((1.0,), 0.0), 0.05, g)
    return evolve(pf, 0.0042, 0.0002, safety=0.9)


@pytest.fixture(scope="module")
def ball_traj():
    g = Grid.uniform(2, 1.6, 128)
    pf = prepare_initial_data(Ball((0.0, 0.0), 0.3), 0.04, g)
    return evolve(pf, 0.004, 0.0002, safety=0.9)


@pytest.fixture(scope="module")
def mini_sweep():
    out = {}
    for eps, res in ((0.08, 96), (0.04, 192), (0.02, 384)):
        g = Grid.uniform(2, 2.4, res)
        pf = prepare_initial_data(Ball((0.0, 0.0), 0.3), eps, g)
        out[eps] = evolve(pf, 0.004, 0.0001, safety=0.9)
    return out


# -- energy dissipation --------------------------------------------------------

def test_energy_dissipation_stationary_profile(planar_traj):
    row = verify.energy_dissipation_check(planar_traj, scenario="t")
    assert row.passed and row.sided == "upper"
    # nothing moves: the dissipation contribution stays tiny
    assert row.value - row.target <= 1e-4 * row.target


def test_energy_dissipation_trivial_phase():
    g = Grid.uniform(2, 1.0, 32)
    pf = PhaseField(grid=g, values=np.ones(g.shape), eps=0.1, time=0.0)
    traj = evolve(pf, 0.001, 0.0005, safety=0.9)
    row = verify.energy_dissipation_check(traj)
    assert row.value == 0.0 and row.target == 0.0 and row.passed


def test_energy_dissipation_moving_ball(ball_traj):
    row = verify.energy_dissipation_check(ball_traj)
    assert row.passed
    assert row.value <= row.target * (1.0 + 1e-2)


# -- discrepancy ----------------------------------------------------------------

def test_discrepancy_ratio_planar(planar_traj):
    row = verify.discrepancy_ratio_check(planar_traj)
    assert row.passed and row.value <= 1e-2


def test_discrepancy_decay_needs_a_sweep(planar_traj):
    with pytest.raises(RefusalError):
        verify.discrepancy_decay_rows({0.05: planar_traj})


def test_discrepancy_decay_flags_non_monotone(ball_traj):
    rows = verify.discrepancy_decay_rows(
        {0.04: ball_traj, 0.02: ball_traj, 0.01: ball_traj})
    assert rows[0].passed          # first level compares against infinity
    assert not rows[1].passed      # equal values are not a strict decrease
    assert not rows[2].passed


def test_discrepancy_decay_on_mini_sweep(mini_sweep):
    rows = verify.discrepancy_decay_rows(mini_sweep, scenario="mini")
    assert all(r.passed for r in rows)
    values = {r.epsilon: r.value for r in rows}
    assert values[0.02] < values[0.04] < values[0.08]


# -- profile fidelity ------------------------------------------------------------

def test_profile_fidelity_row(planar_traj):
    row = verify.profile_fidelity_check(planar_traj, HalfSpace((1.0,), 0.0))
    assert row.passed and row.value <= 1e-3


# -- moving-measure checks --------------------------------------------------------

def test_brakke_constant_test_stationary(planar_traj):
    row = verify.brakke_residual(planar_traj, CONST, 0.0, 0.0042,
                                 tol_factor=1e-3)
    assert row.passed
    assert abs(row.value) <= 1e-3 * planar_traj.energies[0]


def test_brakke_moving_ball(ball_traj):
    bump = TestFunction(kind="polynomial-bump", center=(0.0, 0.0), radius=0.7)
    row = verify.brakke_residual(ball_traj, bump, 0.0, 0.004)
    assert row.passed
    assert row.value <= 0.05 * ball_traj.energies[0]


def test_brakke_refuses_boundary_touching_test(ball_traj):
    bad = TestFunction(kind="polynomial-bump", center=(0.5, 0.0), radius=0.4)
    with pytest.raises(RefusalError):
        verify.brakke_residual(ball_traj, bad, 0.0, 0.004)


def test_residual_checks_refuse_coarse_cadence(ball_traj):
    with pytest.raises(RefusalError):
        verify.brakke_residual(ball_traj, CONST, 0.0, 0.001)


def test_bv_stationary_profile(planar_traj):
    row = verify.bv_residual(planar_traj, CONST, 0.0, 0.0042, tol=1e-3)
    assert row.passed and row.value <= 1e-3


def test_bv_moving_ball(ball_traj):
    row = verify.bv_residual(ball_traj, CONST, 0.0, 0.004)
    assert row.passed and row.value <= 0.10


def test_bv_decay_on_mini_sweep(mini_sweep):
    row = verify.bv_decay_row(mini_sweep, CONST, t_min=0.0, window=0.002)
    assert row.passed
    assert row.value < row.target


def test_l2_flow_and_amplitude(planar_traj, ball_traj):
    bump = TestFunction(kind="polynomial-bump", center=(0.0, 0.0), radius=0.7)
    row = verify.l2_flow_check(ball_traj, [bump, CONST])
    assert row.passed and row.value <= row.target
    row1 = verify.l2_flow_check(planar_traj, [CONST])
    assert row1.value <= 1e-3
    amp = verify.l2_amplitude_check(ball_traj, bump)
    assert amp.passed and amp.value <= 1e-10


def test_l2_flow_needs_tests(ball_traj):
    with pytest.raises(RefusalError):
        verify.l2_flow_check(ball_traj, [])


# -- space-time absolute continuity -----------------------------------------------

def test_abscont_identity_algebraic(ball_traj, planar_traj):
    for traj in (ball_traj, planar_traj):
        row = verify.abscont_identity_check(traj)
        assert row.passed and row.value <= 1e-8


def test_abscont_blocks_smooth_runs(ball_traj, planar_traj):
    for traj in (ball_traj, planar_traj):
        row = verify.abscont_blocks_check(traj)
        assert row.passed and row.value == 0.0


def test_abscont_blocks_rejects_bad_thresholds(ball_traj):
    with pytest.raises(RefusalError):
        verify.abscont_blocks_check(ball_traj, delta=1e-5, eta=1e-4)


# -- density ratios ---------------------------------------------------------------

def test_density_ratio_bound_on_ball(ball_traj):
    row = verify.density_ratio_bound_check(ball_traj, (0.0, 0.0),
                                           t_min=0.001, r_max=0.2)
    assert row.passed
    assert 0.0 < row.value <= 10.0


# -- measure-function pairs -------------------------------------------------------

def flow_for(traj):
    return ReferenceFlow(kind="smooth-sphere", r0=0.3, dim=2)


def test_mfp_constant_sequence_passes_with_equality(ball_traj):
    trio = {0.04: ball_traj, 0.02: ball_traj, 0.01: ball_traj}
    rows = verify.mfp_lsc_rows(trio, flow_for(ball_traj), [CONST], 0.004)
    assert all(r.passed for r in rows)
    pairing = [r for r in rows if r.check.startswith("mfp_pairing")][0]
    assert pairing.value == pairing.target


def test_mfp_sign_flip_keeps_lsc_but_stalls_pairing(mini_sweep):
    flow = ReferenceFlow(kind="smooth-sphere", r0=0.3, dim=2)

    def flipped(state, pf):
        x = pf.grid.centers[0]
        return np.where(x > 0, -state.speed, state.speed)

    clean = verify.mfp_lsc_rows(mini_sweep, flow, [CONST], 0.004)
    noisy = verify.mfp_lsc_rows(mini_sweep, flow, [CONST], 0.004,
                                speed_override=flipped)
    # the second moment is insensitive to the sign flip: lsc still holds
    assert [r for r in noisy if r.check == "mfp_lsc"][0].passed
    clean_gap = [r for r in clean if r.check.startswith("mfp_pairing")][0]
    noisy_gap = [r for r in noisy if r.check.startswith("mfp_pairing")][0]
    # the pairing gap no longer converges toward zero
    assert noisy_gap.value > 10.0 * clean_gap.value


def test_mfp_needs_three_levels(ball_traj):
    with pytest.raises(RefusalError):
        verify.mfp_lsc_rows({0.04: ball_traj}, flow_for(ball_traj), [CONST],
                            0.004)


# -- closed-form flow checks -------------------------------------------------------

def test_geometric_identity_rows_pass():
    flow = ReferenceFlow(kind="smooth-sphere", r0=1.0, dim=3)
    rows = verify.geometric_identity_rows(flow, times=[0.0, 0.1])
    assert all(r.passed for r in rows)
    by_name = {r.check: r for r in rows}
    assert by_name["coarea_factor"].value <= 1e-12
    assert by_name["coarea_mesh_oracle"].value <= 1e-6


def test_geometric_identities_refuse_beyond_extinction():
    flow = ReferenceFlow(kind="smooth-sphere", r0=0.3, dim=2)
    with pytest.raises(RefusalError):
        verify.geometric_identity_rows(flow, times=[flow.extinction_time + 0.1])


def test_bv_counterexample_detects_jump():
    flow = ReferenceFlow(kind="truncated-sphere", r0=1.0, dim=2, t_cut=0.25)
    row = verify.bv_counterexample_row(flow, CONST, 0.125, 0.375)
    assert row.sided == "detect" and row.passed
    assert row.target == pytest.approx(math.pi / 2.0, rel=1e-6)
    assert abs(row.value - row.target) <= 0.01 * row.target


def test_bv_counterexample_refusals():
    smooth = ReferenceFlow(kind="smooth-sphere", r0=1.0, dim=2)
    with pytest.raises(RefusalError):
        verify.bv_counterexample_row(smooth, CONST, 0.1, 0.2)
    flow = ReferenceFlow(kind="truncated-sphere", r0=1.0, dim=2, t_cut=0.25)
    with pytest.raises(RefusalError):
        verify.bv_counterexample_row(flow, CONST, 0.26, 0.3)


def test_abscont_counterexample_detects_lid():
    flow = ReferenceFlow(kind="truncated-sphere", r0=1.0, dim=2, t_cut=0.25)
    row = verify.abscont_counterexample_row(flow, extent=2.56, resolution=256,
                                            t1=0.125, t2=0.375)
    assert row.sided == "detect" and row.passed
    assert row.value >= 1.0


# -- report assembly ---------------------------------------------------------------

def test_rows_are_pure_and_deterministic(planar_traj):
    a = verify.energy_dissipation_check(planar_traj, scenario="x")
    b = verify.energy_dissipation_check(planar_traj, scenario="x")
    assert a == b


def test_report_sorting_stable():
    rows = [
        verify.CheckRow("b", 0.1, "z", 1.0, 0.0, 0.1, "upper", True),
        verify.CheckRow("a", 0.2, "z", 1.0, 0.0, 0.1, "upper", True),
        verify.CheckRow("a", 0.1, "z", 1.0, 0.0, 0.1, "upper", True),
        verify.CheckRow("a", 0.1, "m", 1.0, 0.0, 0.1, "upper", False),
    ]
    report = verify.VerificationReport(rows=rows, meta={})
    ordered = report.sorted_rows()
    assert [(r.scenario, r.check, r.epsilon) for r in ordered] == [
        ("a", "m", 0.1), ("a", "z", 0.1), ("a", "z", 0.2), ("b", "z", 0.1)]
    assert not report.all_passed
    assert len(report.failures()) == 1
