"""Flatness certificates and zero-coefficient frame construction."""

import numpy as np
import pytest

from pathtransport import (
    ConnectionField,
    DomainError,
    EvaluationError,
    FlatnessError,
    FrameField,
    Path,
    ShapeError,
    TangentBundleError,
    build_flat_frame,
    coefficients_from_zero_frame,
    connection_functional,
    flatness_certificate,
    get_geometry,
    holonomic_obstruction,
    loop_holonomy,
    residual_coefficients,
)
from pathtransport import sampling
from pathtransport.catalog import cartesian_in_polar_frame, gauge_rotation_frame

POLAR_REGION = ((0.5, 1.5), (0.2, 1.2))


def test_certificate_polar_flat():
    conn = get_geometry("euclidean-polar").connection
    cert = flatness_certificate(conn, POLAR_REGION, (4, 4))
    assert cert.verdict == "flat"
    assert cert.max_curvature_norm < cert.threshold
    assert cert.grid_spec["resolution"] == [4, 4]


def test_certificate_sphere_not_flat():
    geo = get_geometry("sphere")
    cert = flatness_certificate(geo.connection, geo.region, (4, 4))
    assert cert.verdict == "not-flat"
    assert cert.max_curvature_norm > 0.01


def test_certificate_validation():
    conn = get_geometry("euclidean-polar").connection
    with pytest.raises(DomainError):
        flatness_certificate(conn, POLAR_REGION, (4, 4), threshold=0.0)
    with pytest.raises(DomainError):
        flatness_certificate(conn, POLAR_REGION, (1, 4))
    with pytest.raises(ShapeError):
        flatness_certificate(conn, POLAR_REGION, (4, 4, 4))
    with pytest.raises(ShapeError):
        flatness_certificate(conn, ((0.5, 1.5),), (4, 4))
    with pytest.raises(DomainError):
        flatness_certificate(conn, ((1.5, 0.5), (0.2, 1.2)), (4, 4))


def test_certificate_wraps_node_failures():
    conn = get_geometry("euclidean-polar").connection
    # the grid touches the r = 0 coordinate singularity
    with pytest.raises(EvaluationError, match="grid node"):
        flatness_certificate(conn, ((0.0, 1.0), (0.0, 1.0)), (3, 3))


def test_certificate_thread_parity(monkeypatch):
    conn = get_geometry("euclidean-polar").connection
    monkeypatch.delenv("PATH_TRANSPORT_THREADS", raising=False)
    serial = flatness_certificate(conn, POLAR_REGION, (4, 4))
    monkeypatch.setenv("PATH_TRANSPORT_THREADS", "2")
    threaded = flatness_certificate(conn, POLAR_REGION, (4, 4))
    assert serial.max_curvature_norm == threaded.max_curvature_norm
    assert serial.verdict == threaded.verdict


@pytest.fixture(scope="module")
def polar_frame():
    conn = get_geometry("euclidean-polar").connection
    return build_flat_frame(conn, (1.0, 0.7), POLAR_REGION, (5, 5))


def test_built_frame_residual(polar_frame):
    assert polar_frame.residual < 1e-6
    assert polar_frame.basepoint == (1.0, 0.7)
    assert polar_frame.grid_frames.shape == (5, 5, 2, 2)


def test_built_frame_identity_at_basepoint(polar_frame):
    A = polar_frame.frame.matrix(np.array([1.0, 0.7]))
    np.testing.assert_allclose(A, np.eye(2), rtol=0, atol=1e-9)


def test_built_frame_is_constant_factor_of_known_frame(polar_frame):
    # two frames trivializing the same connection differ by a constant
    # invertible right factor
    known = cartesian_in_polar_frame()
    points = [np.array([0.7, 0.4]), np.array([1.2, 1.0]), np.array([1.45, 0.25])]
    factors = [
        np.linalg.solve(known.matrix(x), polar_frame.frame.matrix(x))
        for x in points
    ]
    np.testing.assert_allclose(factors[0], factors[1], rtol=0, atol=1e-8)
    np.testing.assert_allclose(factors[0], factors[2], rtol=0, atol=1e-8)


def test_axis_order_does_not_matter(polar_frame):
    conn = get_geometry("euclidean-polar").connection
    swapped = build_flat_frame(
        conn, (1.0, 0.7), POLAR_REGION, (5, 5), axis_order=(1, 0)
    )
    for x in [np.array([0.6, 0.3]), np.array([1.3, 1.1])]:
        np.testing.assert_allclose(
            polar_frame.frame.matrix(x), swapped.frame.matrix(x),
            rtol=0, atol=1e-8,
        )


def test_build_rejects_curved_region():
    geo = get_geometry("sphere")
    with pytest.raises(FlatnessError, match="not flat"):
        build_flat_frame(geo.connection, (1.0, 1.0), geo.region, (3, 3))


def test_build_rejects_general_functionals():
    geo = get_geometry("euclidean-polar")
    fun = connection_functional(geo.connection)
    with pytest.raises(TypeError):
        build_flat_frame(fun, (1.0, 0.7), POLAR_REGION, (4, 4))


def test_build_input_validation():
    conn = get_geometry("euclidean-polar").connection
    with pytest.raises(DomainError):
        build_flat_frame(conn, (3.0, 0.7), POLAR_REGION, (4, 4))
    with pytest.raises(ShapeError):
        build_flat_frame(conn, (1.0, 0.7, 0.0), POLAR_REGION, (4, 4))
    with pytest.raises(ShapeError):
        build_flat_frame(conn, (1.0, 0.7), POLAR_REGION, (4, 4), axis_order=(0, 0))


def test_loop_holonomy_trivial_in_flat_region():
    geo = get_geometry("euclidean-polar")
    fun = connection_functional(geo.connection)
    # closed loop inside the simply-connected build region
    loop = Path.from_expressions(
        (0.0, 2 * np.pi), ["1.0 + 0.3*cos(s)", "0.7 + 0.3*sin(s)"]
    )
    result = loop_holonomy(fun, loop, periods=geo.periods)
    np.testing.assert_allclose(result.matrix, np.eye(2), rtol=0, atol=1e-6)


def test_pure_gauge_extraction_matches_catalog_table():
    frame = gauge_rotation_frame()
    conn = coefficients_from_zero_frame(frame)
    reference = get_geometry("gauge-rotation").connection
    for x in [np.array([0.0, 0.0]), np.array([0.4, -0.3])]:
        np.testing.assert_allclose(
            conn.coefficients(x), reference.coefficients(x), rtol=0, atol=1e-9
        )


def test_pure_gauge_connection_is_flat(rng):
    frame = sampling.random_frame_on_chart(rng, 2, 2)
    conn = coefficients_from_zero_frame(frame)
    assert not conn.has_analytic_partials
    cert = flatness_certificate(conn, ((-0.5, 0.5), (-0.5, 0.5)), (3, 3))
    assert cert.verdict == "flat"


def test_pure_gauge_frame_has_zero_residual(rng):
    frame = sampling.random_frame_on_chart(rng, 2, 2)
    conn = coefficients_from_zero_frame(frame)
    paths = [sampling.random_smooth_path(rng, ((-0.4, 0.4), (-0.4, 0.4)))
             for _ in range(3)]
    assert residual_coefficients(conn, frame, paths, 4) < 1e-5


def test_known_frame_trivializes_polar():
    conn = get_geometry("euclidean-polar").connection
    frame = cartesian_in_polar_frame()
    paths = [Path.from_expressions((0.0, 1.0), ["1.0 + 0.3*s", "0.8*s"])]
    assert residual_coefficients(conn, frame, paths, 5) < 1e-6


def test_pure_gauge_extraction_validation():
    along = FrameField(along_path=lambda s: np.eye(2), dimension=2)
    with pytest.raises(ShapeError):
        coefficients_from_zero_frame(along)
    no_dims = FrameField(on_chart=lambda x: np.eye(2))
    with pytest.raises(ShapeError):
        coefficients_from_zero_frame(no_dims)


def test_holonomic_obstruction_coordinate_frame():
    conn = get_geometry("euclidean-cartesian").connection
    frame = FrameField(on_chart=lambda x: np.eye(2), dimension=2, chart_dim=2)
    comm = holonomic_obstruction(conn, frame, np.array([0.1, 0.2]))
    np.testing.assert_allclose(comm, np.zeros((2, 2, 2)), rtol=0, atol=1e-12)


def test_holonomic_obstruction_rotating_frame():
    conn = get_geometry("euclidean-cartesian").connection
    comm = holonomic_obstruction(conn, gauge_rotation_frame(), np.array([0.3, 0.1]))
    # [e_1', e_2'] = (-1, 0) for the frame rotating with x1
    np.testing.assert_allclose(comm[0, 1], [-1.0, 0.0], rtol=0, atol=1e-7)
    assert np.linalg.norm(comm[0, 1]) > 0.1
    np.testing.assert_allclose(comm[1, 0], -comm[0, 1], rtol=0, atol=1e-12)


def test_holonomic_obstruction_validation():
    line_table = [[["0"], ["0"]], [["0"], ["0"]]]
    rect = ConnectionField.from_expressions(line_table)
    frame = gauge_rotation_frame()
    with pytest.raises(TangentBundleError):
        holonomic_obstruction(rect, frame, np.array([0.5]))
    conn = get_geometry("euclidean-cartesian").connection
    with pytest.raises(ShapeError):
        holonomic_obstruction(
            conn, FrameField(along_path=lambda s: np.eye(2), dimension=2),
            np.array([0.0, 0.0]),
        )
    with pytest.raises(ShapeError):
        holonomic_obstruction(conn, frame, np.array([0.0, 0.0, 0.0]))


def test_residual_requires_samples():
    conn = get_geometry("euclidean-polar").connection
    with pytest.raises(DomainError):
        residual_coefficients(conn, cartesian_in_polar_frame(), [], 0)
