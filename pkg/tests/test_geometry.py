import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ghostflare.exceptions import (
    DegeneratePairs,
    DegenerateProjection,
    InvalidRatio,
    NonPositiveDistance,
    OutOfTable,
    RankDeficient,
)
from ghostflare.optics.geometry import (
    REFERENCE_CAMERA_MATRIX,
    CameraGeometry,
    ProjectorOptics,
    fit_camera_matrix,
    fit_ghost_ratio,
    ghost_position,
    ghost_positions,
    ghost_resolution,
    project_point,
    resolution_schedule,
)

coordinates = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)
ratios = st.one_of(st.floats(min_value=0.1, max_value=10), st.floats(min_value=-10, max_value=-0.1))


def test_project_point_with_reference_matrix():
    u, v = project_point(REFERENCE_CAMERA_MATRIX, (0.0, 0.0, 1.0))
    assert u == pytest.approx(0.8252 / 0.0009)
    assert v == pytest.approx(0.3508 / 0.0009)


def test_project_point_identity_camera():
    matrix = np.hstack([np.eye(3), np.zeros((3, 1))])
    assert project_point(matrix, (2.0, 4.0, 2.0)) == pytest.approx((1.0, 2.0))


@given(coordinates, coordinates, st.floats(min_value=1.0, max_value=1e3))
def test_project_point_ignores_matrix_scale(x, y, z):
    matrix = np.array(REFERENCE_CAMERA_MATRIX)
    u, v = project_point(matrix, (x, y, z))
    scaled_u, scaled_v = project_point(5 * matrix, (x, y, z))
    assert scaled_u == pytest.approx(u, rel=1e-9, abs=1e-9)
    assert scaled_v == pytest.approx(v, rel=1e-9, abs=1e-9)


def test_project_point_degenerate():
    matrix = np.zeros((3, 4))
    matrix[0, 0] = 1.0
    with pytest.raises(DegenerateProjection):
        project_point(matrix, (1.0, 2.0, 3.0))


def test_ghost_position_example():
    assert ghost_position((100, 100), 1.0, (120, 90)) == (80.0, 110.0)


def test_ghost_position_rejects_zero_ratio():
    with pytest.raises(InvalidRatio):
        ghost_position((0, 0), 0.0, (1, 1))


@given(coordinates, coordinates, coordinates, coordinates, ratios)
def test_ghost_position_inverse_composition(ox, oy, ax, ay, r):
    gx, gy = ghost_position((ox, oy), r, (ax, ay))
    back = ghost_position((ox, oy), 1.0 / r, (gx, gy))
    assert back[0] == pytest.approx(ax, abs=1e-12 * (1 + abs(ax) + abs(ox)) * 1e3)
    assert back[1] == pytest.approx(ay, abs=1e-12 * (1 + abs(ay) + abs(oy)) * 1e3)


def test_ghost_positions_cover_every_ratio():
    geometry = CameraGeometry(width=100, height=60, ghost_ratios=(1.0, 2.0))
    assert ghost_positions(geometry, (60, 30)) == [(40.0, 30.0), (45.0, 30.0)]


def test_ghost_resolution_at_one_metre():
    assert ghost_resolution(ProjectorOptics(), 1.0) == pytest.approx(654.3, abs=0.05)


@pytest.mark.parametrize("distance", [0.5, 1.0, 2.5, 7.0])
def test_ghost_resolution_inverse_square(distance):
    optics = ProjectorOptics()
    ratio = ghost_resolution(optics, distance) / ghost_resolution(optics, 2 * distance)
    assert ratio == pytest.approx(4.0, rel=1e-12)


def test_ghost_resolution_rejects_non_positive_distance():
    with pytest.raises(NonPositiveDistance):
        ghost_resolution(ProjectorOptics(), 0.0)


@pytest.mark.parametrize("distance,side", [(1, 32), (2, 16), (3, 8), (4, 4), (5, 2), (3.0, 8)])
def test_resolution_table(distance, side):
    assert resolution_schedule(distance) == side


@pytest.mark.parametrize("distance", [2.5, 6, 0.5])
def test_resolution_table_gaps(distance):
    with pytest.raises(OutOfTable):
        resolution_schedule(distance)


def test_resolution_formula():
    assert resolution_schedule(1.0, "formula") == 25
    assert resolution_schedule(2.0, "formula") == 12
    assert resolution_schedule(1000.0, "formula") == 1


def _world_points(rng, n):
    return rng.uniform(-1.0, 1.0, size=(n, 3)) + np.array([0.0, 0.0, 3.0])


def test_dlt_recovers_camera(rng):
    truth = np.array(REFERENCE_CAMERA_MATRIX)
    truth[2] = [0.001, -0.002, 0.003, 0.0009]
    world = _world_points(rng, 20)
    correspondences = [(X, project_point(truth, X)) for X in world]
    fitted = fit_camera_matrix(correspondences)

    assert np.linalg.norm(fitted) == pytest.approx(1.0)
    for X in _world_points(rng, 10):
        np.testing.assert_allclose(project_point(fitted, X), project_point(truth, X), atol=1e-6)


def test_dlt_needs_six_points(rng):
    truth = np.array(REFERENCE_CAMERA_MATRIX)
    with pytest.raises(RankDeficient):
        fit_camera_matrix([(X, project_point(truth, X)) for X in _world_points(rng, 5)])


def test_dlt_rejects_coplanar_points(rng):
    truth = np.array(REFERENCE_CAMERA_MATRIX)
    truth[2] = [0.001, -0.002, 0.003, 0.0009]
    world = _world_points(rng, 12)
    world[:, 2] = 3.0
    with pytest.raises(RankDeficient):
        fit_camera_matrix([(X, project_point(truth, X)) for X in world])


def test_fit_ghost_ratio_recovers_ratio(rng):
    center = (16.0, 16.0)
    sources = rng.uniform(0, 32, size=(10, 2))
    pairs = [(tuple(a), ghost_position(center, 1.7, tuple(a))) for a in sources]
    assert fit_ghost_ratio(pairs, center) == pytest.approx(1.7)


@pytest.mark.parametrize("ratio", [2.0, -3.0])
def test_fit_ghost_ratio_recovers_signed_ratio(rng, ratio):
    center = (100.0, 100.0)
    pairs = [(tuple(a), ghost_position(center, ratio, tuple(a))) for a in rng.uniform(0, 200, size=(6, 2))]
    assert fit_ghost_ratio(pairs, center) == pytest.approx(ratio)


def test_fit_ghost_ratio_single_pair():
    assert fit_ghost_ratio([((120.0, 90.0), (80.0, 110.0))], (100.0, 100.0)) == pytest.approx(1.0)


def test_fit_ghost_ratio_degenerate():
    with pytest.raises(DegeneratePairs):
        fit_ghost_ratio([((5.0, 5.0), (5.0, 5.0))], (5.0, 5.0))


def test_camera_geometry_validation():
    with pytest.raises(ValueError):
        CameraGeometry(ghost_ratios=(0.0,))
    with pytest.raises(ValueError):
        CameraGeometry(width=0)
