"""Transport matrices, group laws, derivations, holonomy."""

import numpy as np
import pytest

from pathtransport import (
    CoefficientFunctional,
    DomainError,
    NotALoopError,
    Path,
    SectionAlongPath,
    ShapeError,
    apply_transport,
    connection_functional,
    derivation_analytic,
    derivation_limit,
    get_geometry,
    loop_holonomy,
    rotation_angle,
    transport_matrix,
    transported_section,
)
from pathtransport.transport import loop_defect


def _polar():
    geo = get_geometry("euclidean-polar")
    return geo, connection_functional(geo.connection)


def _polar_arc(r0, phi1):
    return Path.from_expressions((0.0, phi1), [repr(r0), "s"])


def _arc_transport_exact(r0, phi):
    # polar components of a constant Cartesian vector field rotate with -phi
    return np.array(
        [[np.cos(phi), r0 * np.sin(phi)], [-np.sin(phi) / r0, np.cos(phi)]]
    )


def test_identity_at_equal_parameters():
    geo, fun = _polar()
    path = _polar_arc(1.0, 1.0)
    result = transport_matrix(fun, path, 0.4, 0.4)
    np.testing.assert_array_equal(result.matrix, np.eye(2))
    assert result.est_error == 0.0


def test_polar_arc_closed_form():
    geo, fun = _polar()
    r0, phi = 1.3, 1.1
    path = _polar_arc(r0, phi)
    result = transport_matrix(fun, path, 0.0, phi, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(
        result.matrix, _arc_transport_exact(r0, phi), rtol=0, atol=1e-9
    )


def test_generic_functional_route_matches_kernel_route():
    geo, fun = _polar()
    conn = geo.connection
    generic = CoefficientFunctional(
        lambda path, s: np.einsum(
            "ija,a->ij", conn.coefficients(path.point(s)), path.velocity(s)
        ),
        fiber_dim=2,
    )
    path = _polar_arc(0.9, 1.2)
    a = transport_matrix(fun, path, 0.0, 1.2).matrix
    b = transport_matrix(generic, path, 0.0, 1.2).matrix
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_callable_path_route():
    geo, fun = _polar()
    path = Path((0.0, 1.2), lambda s: np.array([0.9, s]), lambda s: np.array([0.0, 1.0]))
    got = transport_matrix(fun, path, 0.0, 1.2).matrix
    np.testing.assert_allclose(got, _arc_transport_exact(0.9, 1.2), rtol=0, atol=1e-8)


@pytest.mark.parametrize("name", ["euclidean-polar", "sphere", "gauge-rotation"])
def test_group_laws(name):
    geo = get_geometry(name)
    fun = connection_functional(geo.connection)
    if name == "sphere":
        path = Path.from_expressions((0.0, 1.0), ["0.7+0.4*sin(s)", "1.2*s"])
    else:
        path = Path.from_expressions((0.0, 1.0), ["0.8+0.15*cos(3*s)", "0.4*s"])
    rtol, atol = 1e-9, 1e-12
    s, u, t = 0.1, 0.55, 0.95
    h_su = transport_matrix(fun, path, s, u, rtol=rtol, atol=atol)
    h_ut = transport_matrix(fun, path, u, t, rtol=rtol, atol=atol)
    h_st = transport_matrix(fun, path, s, t, rtol=rtol, atol=atol)
    h_ts = transport_matrix(fun, path, t, s, rtol=rtol, atol=atol)
    scale = 10.0 * (rtol * np.linalg.norm(h_st.matrix) + atol)
    assert np.max(np.abs(h_ut.matrix @ h_su.matrix - h_st.matrix)) < scale
    assert np.max(np.abs(h_ts.matrix @ h_st.matrix - np.eye(2))) < scale


def test_metric_compatible_transport_is_isometry():
    # Levi-Civita transport preserves the metric: H^T g(end) H = g(start)
    geo = get_geometry("sphere")
    fun = connection_functional(geo.connection)
    path = Path.from_expressions((0.0, 1.4), ["0.6+0.5*s", "0.8*s+0.3*sin(s)"])
    result = transport_matrix(fun, path, 0.0, 1.4, rtol=1e-11, atol=1e-13)
    g_start = geo.metric(path.point(0.0))
    g_end = geo.metric(path.point(1.4))
    np.testing.assert_allclose(
        result.matrix.T @ g_end @ result.matrix, g_start, rtol=0, atol=1e-9
    )


def test_fixed_step_transport_is_bytewise_deterministic():
    geo, fun = _polar()
    path = _polar_arc(1.0, 2.0)
    a = transport_matrix(fun, path, 0.0, 2.0, fixed_step=1e-3)
    b = transport_matrix(fun, path, 0.0, 2.0, fixed_step=1e-3)
    assert a.matrix.tobytes() == b.matrix.tobytes()
    assert a.est_error == 0.0


def test_fixed_step_accuracy_tracks_step_size():
    geo, fun = _polar()
    path = _polar_arc(1.1, 1.0)
    exact = _arc_transport_exact(1.1, 1.0)
    coarse = transport_matrix(fun, path, 0.0, 1.0, fixed_step=0.1).matrix
    fine = transport_matrix(fun, path, 0.0, 1.0, fixed_step=0.01).matrix
    assert np.max(np.abs(fine - exact)) < np.max(np.abs(coarse - exact))


def test_apply_transport():
    geo, fun = _polar()
    path = _polar_arc(1.0, np.pi / 2)
    result = transport_matrix(fun, path, 0.0, np.pi / 2)
    moved = apply_transport(result, np.array([1.0, 0.0]))
    np.testing.assert_allclose(moved, [np.cos(np.pi / 2), -np.sin(np.pi / 2)], atol=1e-9)
    with pytest.raises(ShapeError):
        apply_transport(result, np.array([1.0, 0.0, 0.0]))


def test_derivation_analytic_formula():
    geo, fun = _polar()
    path = _polar_arc(1.2, 1.5)
    sec = SectionAlongPath.from_expressions(["sin(s)", "cos(s)"])
    s = 0.8
    got = derivation_analytic(fun, path, sec, s).components
    expected = np.array([np.cos(s), -np.sin(s)]) + fun.eval(path, s) @ np.array(
        [np.sin(s), np.cos(s)]
    )
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)


def test_derivation_limit_first_order_convergence():
    geo, fun = _polar()
    path = Path.from_expressions((0.0, 2.0), ["1.0+0.3*sin(s)", "0.7*s"])
    sec = SectionAlongPath.from_expressions(["cos(2*s)", "s"])
    result = derivation_limit(fun, path, sec, 1.0)
    assert result.converged
    assert result.fitted_order >= 0.9
    analytic = result.analytic
    # raw quotient errors shrink linearly; the extrapolated value beats them
    errs = [np.max(np.abs(q - analytic)) for _, q in result.quotients_forward]
    assert errs[0] > errs[1] > errs[2]
    assert np.max(np.abs(result.components - analytic)) < errs[2]


def test_derivation_limit_backward_quotients_only_in_interior():
    geo, fun = _polar()
    path = Path.from_expressions((0.0, 2.0), ["1.0", "s"])
    sec = SectionAlongPath.from_expressions(["s", "1.0"])
    mid = derivation_limit(fun, path, sec, 1.0)
    assert len(mid.quotients_backward) == len(mid.quotients_forward)
    edge = derivation_limit(fun, path, sec, 0.005)
    assert edge.quotients_backward is None


def test_derivation_limit_validates_epsilons():
    geo, fun = _polar()
    path = _polar_arc(1.0, 1.0)
    sec = SectionAlongPath.from_expressions(["s", "s"])
    with pytest.raises(DomainError):
        derivation_limit(fun, path, sec, 0.5, eps_sequence=(1e-3, 1e-2))
    with pytest.raises(DomainError):
        derivation_limit(fun, path, sec, 0.5, eps_sequence=(1e-2, -1e-3))


def test_transported_section_has_zero_derivation():
    geo, fun = _polar()
    path = Path.from_expressions((0.0, 1.5), ["1.0+0.2*s", "0.9*s"])
    sec = transported_section(fun, path, 0.0, np.array([0.7, -0.4]))
    np.testing.assert_allclose(sec.components(0.0), [0.7, -0.4], rtol=1e-12)
    limit = derivation_limit(fun, path, sec, 0.75)
    np.testing.assert_allclose(limit.components, np.zeros(2), atol=1e-6)


def test_loop_defect_uses_periods():
    path = Path.from_expressions((0.0, 2 * np.pi), ["1.0", "s"])
    raw = loop_defect(path, None)
    assert np.max(np.abs(raw)) == pytest.approx(2 * np.pi, rel=1e-12)
    wrapped = loop_defect(path, (None, 2 * np.pi))
    assert np.max(np.abs(wrapped)) < 1e-12


def test_loop_holonomy_requires_closure():
    geo, fun = _polar()
    open_path = Path.from_expressions((0.0, 1.0), ["1.0+s", "0.0"])
    with pytest.raises(NotALoopError):
        loop_holonomy(fun, open_path)


def test_flat_loop_holonomy_is_identity():
    geo = get_geometry("euclidean-cartesian")
    fun = connection_functional(geo.connection)
    loop = Path.from_expressions(
        (0.0, 2 * np.pi), ["0.5*cos(s)", "0.5*sin(s)"]
    )
    result = loop_holonomy(fun, loop)
    np.testing.assert_allclose(result.matrix, np.eye(2), rtol=0, atol=1e-9)


def test_polar_circle_holonomy_identity_with_periods():
    geo, fun = _polar()
    loop = Path.from_expressions((0.0, 2 * np.pi), ["1.0", "s"])
    result = loop_holonomy(fun, loop, periods=geo.periods)
    np.testing.assert_allclose(result.matrix, np.eye(2), rtol=0, atol=1e-8)


def test_rotation_angle_euclidean():
    theta = 0.7
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    assert rotation_angle(R) == pytest.approx(theta, rel=1e-12)


def test_rotation_angle_with_metric():
    # conjugating by the metric orthonormalization recovers the angle for a
    # rotation expressed in a non-orthonormal frame
    theta = 0.4
    g = np.array([[1.0, 0.0], [0.0, 4.0]])
    E = np.linalg.cholesky(g).T
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    H = np.linalg.inv(E) @ R @ E
    assert rotation_angle(H, metric=g) == pytest.approx(theta, rel=1e-12)
