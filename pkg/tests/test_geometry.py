import math

import numpy as np
import pytest

from mcflab.errors import RefusalError
from mcflab.fields import Grid
from mcflab.geometry import (Ball, Box, Complement, HalfSpace, Intersection,
                             ReferenceFlow, Union, clamped_distance,
                             exact_flow_radius, initial_l1_gap,
                             lipschitz_defect, phase_indicator, phase_volume,
                             prepare_initial_data, shape_from_json,
                             sphere_quadrature, volume_and_perimeter)
from mcflab.potential import STANDARD_WELL

well = STANDARD_WELL


# -- signed distances ---------------------------------------------------------

def test_ball_distance_exact():
    ball = Ball((0.2, -0.1), 0.3)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(50, 2))
    d = ball.distance(tuple(pts.T))
    oracle = 0.3 - np.hypot(pts[:, 0] - 0.2, pts[:, 1] + 0.1)
    assert np.max(np.abs(d - oracle)) < 1e-14


def test_half_space_distance_normalizes():
    hs = HalfSpace((3.0, 4.0), 1.0)  # |n| = 5
    d = hs.distance((np.array([0.0]), np.array([0.0])))
    assert d[0] == pytest.approx(0.2)


def test_box_distance_inside_outside():
    box = Box((-0.5, -0.25), (0.5, 0.25))
    xs = (np.array([0.0, 0.0, 0.9]), np.array([0.0, 0.35, 0.45]))
    d = box.distance(xs)
    assert d[0] == pytest.approx(0.25)          # inset to the nearest face
    assert d[1] == pytest.approx(-0.1)          # straight above the top face
    assert d[2] == pytest.approx(-math.hypot(0.4, 0.2))  # past a corner


def test_union_is_exact_for_disjoint_balls():
    a, b = Ball((-0.4, 0.0), 0.2), Ball((0.4, 0.0), 0.2)
    union = a | b
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1, 1, size=(200, 2))
    xs = tuple(pts.T)
    assert np.array_equal(union.distance(xs),
                          np.maximum(a.distance(xs), b.distance(xs)))


def test_complement_and_intersection_algebra():
    a = Ball((0.0, 0.0), 0.5)
    xs = (np.array([0.1]), np.array([0.0]))
    assert Complement(a).distance(xs)[0] == -a.distance(xs)[0]
    inter = Intersection(a, HalfSpace((1.0, 0.0), 0.0))
    assert inter.distance(xs)[0] == pytest.approx(-0.1)


def test_shape_from_json_round_trip():
    spec = {"type": "union", "parts": [
        {"type": "ball", "center": [0.0, 0.0], "radius": 0.2},
        {"type": "complement", "part": {"type": "box", "lo": [-1, -1], "hi": [1, 1]}},
    ]}
    shape = shape_from_json(spec)
    assert isinstance(shape, Union)
    with pytest.raises(ValueError):
        shape_from_json({"type": "pyramid"})


def test_primitives_are_one_lipschitz():
    g = Grid.uniform(2, 2.0, 64)
    for shape in (Ball((0.1, 0.2), 0.4), HalfSpace((1.0, 2.0), 0.3),
                  Box((-0.4, -0.3), (0.2, 0.5))):
        assert lipschitz_defect(shape, g) < 1e-9


def test_clamped_distance_saturates_smoothly():
    ball = Ball((0.0,), 0.5)
    xs = (np.linspace(-3.0, 0.5, 400),)
    level = 0.2
    c = clamped_distance(ball, xs, level)
    raw = ball.distance(xs)
    assert np.max(np.abs(c)) <= level
    inner = np.abs(raw) <= 0.8 * level
    assert np.array_equal(c[inner], raw[inner])
    assert np.all(np.sign(c) == np.sign(raw))


# -- initial data -------------------------------------------------------------

def test_prepare_refuses_under_resolved_eps():
    g = Grid.uniform(2, 1.6, 64)
    with pytest.raises(RefusalError, match="eps/h"):
        prepare_initial_data(Ball((0.0, 0.0), 0.3), 0.04, g)


def test_prepare_refuses_interface_near_boundary():
    g = Grid.uniform(2, 1.0, 128)
    with pytest.raises(RefusalError, match="clearance"):
        prepare_initial_data(Ball((0.0, 0.0), 0.45), 0.03, g)


def test_prepare_refuses_periodic_seam_jump():
    g = Grid.uniform(1, 1.0, 128, bc="periodic")
    with pytest.raises(RefusalError, match="seam"):
        prepare_initial_data(HalfSpace((1.0,), 0.0), 0.02, g)


def test_prepare_center_value_and_zero_level():
    g = Grid.uniform(2, 1.6, 256)
    pf = prepare_initial_data(Ball((0.0, 0.0), 0.3), 0.02, g)
    assert pf.values[128, 128] > 1.0 - 1e-8
    assert np.all(np.abs(pf.values) < 1.0)
    # a half-space aligned with a cell center has exact zeros there
    g1 = Grid.uniform(1, 1.0, 64, bc="reflective")
    offset = float(g1.axes[0][32])
    pf1 = prepare_initial_data(HalfSpace((1.0,), offset), 0.04, g1)
    assert pf1.values[32] == 0.0


def test_prepare_l1_gap_scales_with_eps():
    g1 = Grid.uniform(1, 1.0, 512, bc="reflective")
    shape = HalfSpace((1.0,), 0.0)
    gaps = []
    for eps in (0.04, 0.02):
        pf = prepare_initial_data(shape, eps, g1)
        gaps.append(initial_l1_gap(pf, shape))
    # transition layer carries O(eps) mass; halving eps halves it
    assert gaps[1] < gaps[0]
    assert gaps[0] < 2.0 * 0.04


def test_prepare_energy_close_to_perimeter():
    g = Grid.uniform(2, 1.6, 256)
    pf = prepare_initial_data(Ball((0.0, 0.0), 0.3), 0.02, g)
    from mcflab.solver import normalized_energy

    mu0 = normalized_energy(pf)
    target = 2.0 * math.pi * 0.3
    assert abs(mu0 - target) / target < 0.05


def test_prepare_energy_error_nonincreasing_under_refinement():
    target = 2.0 * math.pi * 0.3
    errs = []
    for eps, res in ((0.04, 128), (0.02, 256), (0.01, 512)):
        g = Grid.uniform(2, 1.6, res)
        pf = prepare_initial_data(Ball((0.0, 0.0), 0.3), eps, g)
        from mcflab.solver import normalized_energy

        errs.append(abs(normalized_energy(pf) - target))
    assert errs[0] >= errs[1] >= errs[2]


# -- indicator, volume, perimeter ---------------------------------------------

def test_indicator_saturated_fields():
    g = Grid.uniform(2, 1.0, 32)
    from mcflab.solver import PhaseField

    plus = PhaseField(grid=g, values=np.ones(g.shape), eps=0.1, time=0.0)
    minus = PhaseField(grid=g, values=-np.ones(g.shape), eps=0.1, time=0.0)
    assert np.all(phase_indicator(plus).values == 1.0)
    assert np.all(phase_indicator(minus).values == 0.0)
    vol, per, iso = volume_and_perimeter(minus)
    assert vol == 0.0 and per == 0.0 and iso == 0.0


def test_indicator_ball_volume_oracle():
    g = Grid.uniform(2, 1.6, 256)
    pf = prepare_initial_data(Ball((0.0, 0.0), 0.3), 0.02, g)
    vol = phase_volume(pf)
    target = math.pi * 0.09
    assert abs(vol - target) / target < 3.0 * g.h / 0.3


def test_perimeter_estimators_agree_on_ball():
    g = Grid.uniform(2, 1.6, 256)
    pf = prepare_initial_data(Ball((0.0, 0.0), 0.3), 0.02, g)
    vol, per_energy, per_iso = volume_and_perimeter(pf)
    target = 2.0 * math.pi * 0.3
    assert abs(per_energy - target) / target < 0.05
    assert abs(per_iso - target) / target < 0.05
    assert abs(per_energy - per_iso) / target < 0.05


def test_perimeter_planar_interface_2d():
    g = Grid.uniform(2, 1.0, 256, bc="reflective")
    pf = prepare_initial_data(HalfSpace((1.0, 0.0), 0.0), 0.02, g)
    _, per_energy, per_iso = volume_and_perimeter(pf)
    assert abs(per_energy - 1.0) < 0.02
    assert abs(per_iso - 1.0) < 0.02


def test_zero_crossing_count_1d():
    g = Grid.uniform(1, 1.0, 512, bc="reflective")
    pf = prepare_initial_data(HalfSpace((1.0,), 0.0), 0.05, g)
    assert volume_and_perimeter(pf).isoline_perimeter == 1.0


def test_marching_squares_on_exact_circle():
    g = Grid.uniform(2, 1.0, 256)
    from mcflab.geometry import _marching_squares_length

    x, y = g.centers
    field = 0.3 - np.hypot(x, y)
    length = _marching_squares_length(field, g.h)
    assert abs(length - 2.0 * math.pi * 0.3) / (2.0 * math.pi * 0.3) < 0.01


def test_marching_cubes_on_exact_sphere():
    g = Grid.uniform(3, 1.0, 64)
    from mcflab.geometry import _marching_cubes_area

    x, y, z = g.centers
    field = 0.3 - np.sqrt(x * x + y * y + z * z)
    area = _marching_cubes_area(field, g.h)
    target = 4.0 * math.pi * 0.09
    assert abs(area - target) / target < 0.02


# -- reference flows ----------------------------------------------------------

def test_smooth_flow_radius_law():
    flow = ReferenceFlow(kind="smooth-sphere", r0=1.0, dim=2)
    assert exact_flow_radius(flow, 0.0) == 1.0
    # radius^2 = 1 - 2 (n-1) t
    assert exact_flow_radius(flow, 0.125) == pytest.approx(math.sqrt(0.75))
    assert exact_flow_radius(flow, flow.extinction_time + 0.1) == 0.0
    assert flow.speed(0.125) == pytest.approx(-1.0 / math.sqrt(0.75))


def test_truncated_flow_jumps_empty():
    flow = ReferenceFlow(kind="truncated-sphere", r0=1.0, dim=2, t_cut=0.25)
    assert exact_flow_radius(flow, 0.25) == 0.0
    assert exact_flow_radius(flow, 0.25 - 1e-9) == pytest.approx(
        math.sqrt(0.5), abs=1e-8)
    with pytest.raises(ValueError):
        ReferenceFlow(kind="truncated-sphere", r0=1.0, dim=2, t_cut=0.6)


def test_flow_rejects_negative_time():
    flow = ReferenceFlow(kind="smooth-sphere", r0=1.0, dim=3)
    with pytest.raises(ValueError):
        flow.radius(-0.1)


def test_sphere_quadrature_weights_and_moments():
    pts, w = sphere_quadrature(2, (0.0, 0.0), 0.7)
    assert np.sum(w) == pytest.approx(2.0 * math.pi * 0.7, rel=1e-12)
    pts, w = sphere_quadrature(3, (0.0, 0.0, 0.0), 0.5)
    assert np.sum(w) == pytest.approx(4.0 * math.pi * 0.25, rel=1e-12)
    # second moment of one coordinate over the sphere: area r^2 / 3
    m2 = float(np.sum(w * pts[:, 0] ** 2))
    assert m2 == pytest.approx(4.0 * math.pi * 0.25 * 0.25 / 3.0, rel=1e-10)
