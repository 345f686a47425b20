"""Torsion and curvature operators for coefficient functionals, and their
closed-form tensor reductions for point-dependent connections.

The curvature matrix differentiates the functional across a family of
neighboring extracted paths (vary the free parameter of the map), which
is a different quantity from differentiating along a single path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TangentBundleError
from .geometry import (
    CoefficientFunctional,
    ConnectionField,
    TwoParamMap,
    connection_functional,
)

# family-differencing step: larger than the pointwise FD step because each
# stencil evaluation already carries velocity FD noise
FAMILY_STEP = 1e-4


@dataclass(frozen=True)
class TorsionVector:
    """Components of the torsion of a two-parameter map at (s, t)."""

    components: np.ndarray


@dataclass(frozen=True)
class TorsionTensor:
    """Point values T[i][j][k], antisymmetric in (j, k); contracting with
    A^j B^k gives the torsion of any map with s-tangent A and t-tangent B."""

    values: np.ndarray


@dataclass(frozen=True)
class CurvatureMatrix:
    """m x m curvature of a two-parameter map at (s, t), in the working frame."""

    matrix: np.ndarray


@dataclass(frozen=True)
class CurvatureTensor:
    """Point values R[i][j][alpha][beta], antisymmetric in (alpha, beta)."""

    values: np.ndarray


def _require_tangent(fiber_dim, base_dim, what):
    if fiber_dim != base_dim:
        raise TangentBundleError(
            f"{what} needs fiber dimension == base dimension, "
            f"got {fiber_dim} and {base_dim}"
        )


def torsion_vector(gamma_fun: CoefficientFunctional, eta: TwoParamMap,
                   s, t) -> TorsionVector:
    """P eta_t - Q eta_s, where P are the coefficients along the s-line
    through (s, t) and Q those along the t-line."""
    eta_s = eta.partial_s(s, t)
    eta_t = eta.partial_t(s, t)
    _require_tangent(gamma_fun.fiber_dim, eta_s.size, "torsion")
    P = gamma_fun.eval(eta.extract_s_path(t), s)
    Q = gamma_fun.eval(eta.extract_t_path(s), t)
    return TorsionVector(components=P @ eta_t - Q @ eta_s)


def torsion_tensor(conn: ConnectionField, x) -> TorsionTensor:
    """values[i][j][k] = table[i][k][j] - table[i][j][k] at the point x."""
    _require_tangent(conn.chart.fiber_dim, conn.chart.base_dim, "torsion tensor")
    table = conn.coefficients(x)
    return TorsionTensor(values=table.transpose(0, 2, 1) - table)


def contract_torsion(tensor: TorsionTensor, a, b) -> np.ndarray:
    """T[i][j][k] a^j b^k; bilinear and antisymmetric in (a, b)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    return np.einsum("ijk,j,k->i", tensor.values, a, b)


def _family_step(s, t, h):
    if h is not None:
        step = float(h)
        if not step > 0.0:
            raise DomainError("difference step must be positive")
        return step
    return FAMILY_STEP * max(1.0, abs(float(s)), abs(float(t)))


def curvature_matrix(gamma_fun: CoefficientFunctional, eta: TwoParamMap,
                     s, t, h=None) -> CurvatureMatrix:
    """dQ/ds - dP/dt + P Q - Q P at (s, t).

    P(t') are the coefficients along the extracted s-line at parameter
    s, Q(s') those along the extracted t-line at parameter t; the two
    derivatives are central differences across neighboring extracted
    paths, so (s, t) must sit inside the rectangle by margin h.
    """
    s = float(s)
    t = float(t)
    step = _family_step(s, t, h)
    (a, b), (c, d) = eta.domain
    if s - step < a or s + step > b or t - step < c or t + step > d:
        raise DomainError(
            f"difference stencil around ({s}, {t}) with step {step} "
            "exits the parameter rectangle"
        )

    def P(t_val):
        return gamma_fun.eval(eta.extract_s_path(t_val), s)

    def Q(s_val):
        return gamma_fun.eval(eta.extract_t_path(s_val), t)

    P0 = P(t)
    Q0 = Q(s)
    dQ_ds = (Q(s + step) - Q(s - step)) / (2.0 * step)
    dP_dt = (P(t + step) - P(t - step)) / (2.0 * step)
    return CurvatureMatrix(matrix=dQ_ds - dP_dt + P0 @ Q0 - Q0 @ P0)


def curvature_tensor(conn: ConnectionField, x, h=None) -> CurvatureTensor:
    """Point curvature from the coefficient table and its partials.

    R[i][j][a][b] combines the two partial-derivative terms with the two
    quadratic terms so that swapping (a, b) negates the result exactly
    in floating point.
    """
    table = conn.coefficients(x)
    partials = conn.partials(x, step=h)
    m, _, n = table.shape
    R = np.zeros((m, m, n, n), dtype=np.float64)
    for i in range(m):
        for j in range(m):
            for a in range(n):
                for b in range(a + 1, n):
                    deriv = partials[i, j, b, a] - partials[i, j, a, b]
                    quad_ab = 0.0
                    quad_ba = 0.0
                    for k in range(m):
                        quad_ab += table[k, j, a] * table[i, k, b]
                        quad_ba += table[k, j, b] * table[i, k, a]
                    value = deriv + (quad_ba - quad_ab)
                    R[i, j, a, b] = value
                    R[i, j, b, a] = -value
    return CurvatureTensor(values=R)


def contract_curvature(tensor: CurvatureTensor, a, b) -> np.ndarray:
    """R[i][j][alpha][beta] a^alpha b^beta as an m x m matrix."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    return np.einsum("ijab,a,b->ij", tensor.values, a, b)


def curvature_contraction_defect(conn: ConnectionField, eta: TwoParamMap,
                                 sample_points, h=None) -> float:
    """Max discrepancy between the map curvature and the contraction of
    the point curvature with the map tangents, over the sample points.

    Near zero for any point-dependent connection; the residual measures
    differencing noise only.
    """
    gamma_fun = connection_functional(conn)
    worst = 0.0
    for (s, t) in sample_points:
        lhs = curvature_matrix(gamma_fun, eta, s, t, h=h).matrix
        x = eta.point(s, t)
        tensor = curvature_tensor(conn, x)
        rhs = contract_curvature(tensor, eta.partial_s(s, t), eta.partial_t(s, t))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst
