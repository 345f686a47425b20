"""Transport matrices by ODE integration, the derivation along paths in
its analytic and defining-limit forms, and loop holonomy.

The transport matrix H solves dH/dtau = -G(tau) H with H(s) = I, where
G(tau) is the coefficient matrix of the functional along the path; its
columns carry fiber components from parameter s to parameter t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import DomainError, NotALoopError, ShapeError
from .geometry import (
    CoefficientFunctional,
    ConnectionCoefficients,
    Path,
    SectionAlongPath,
    checked_inverse,
    _clamp_param,
)
from .integrate import dopri5_matrix, rk4_matrix

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12

# tight tolerances for integrations whose output feeds difference quotients
TIGHT_RTOL = 1e-12
TIGHT_ATOL = 1e-14


@dataclass(frozen=True)
class TransportMatrix:
    """m x m transport matrix from parameter ``from_param`` to ``to_param``
    with the integrator's accumulated error estimate."""

    matrix: np.ndarray
    from_param: float
    to_param: float
    est_error: float


@dataclass(frozen=True)
class DerivationValue:
    """Fiber components of the derivation of a section at one parameter."""

    components: np.ndarray


@dataclass(frozen=True)
class DerivationLimitResult:
    """Limit-quotient evaluation of the derivation with diagnostics.

    ``components`` is the Richardson extrapolation of the two smallest
    forward quotients; ``quotients_forward``/``quotients_backward`` hold
    the raw (eps, value) pairs (backward is None when the stencil would
    leave the domain); ``fitted_order`` is the log-log slope of
    |quotient - analytic| against eps (None when the errors sit at
    roundoff); ``converged`` is False when that error fails to shrink
    at first order.
    """

    components: np.ndarray
    quotients_forward: tuple
    quotients_backward: Optional[tuple]
    analytic: np.ndarray
    fitted_order: Optional[float]
    converged: bool


def _kernel_data(gamma_fun, path):
    if not isinstance(gamma_fun, ConnectionCoefficients):
        return None
    conn = gamma_fun.conn
    if not (conn.is_expression_backed and path.is_expression_backed):
        return None
    packs = path.kernel_packs()
    if packs is None:
        return None
    return conn.kernel_pack(), packs[0], packs[1], conn.chart.fiber_dim, conn.chart.base_dim


def transport_matrix(gamma_fun: CoefficientFunctional, path: Path, s, t,
                     rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
                     fixed_step=None) -> TransportMatrix:
    """Integrate the transport ODE from parameter s to t along the path.

    Adaptive order-5(4) integration by default; passing ``fixed_step``
    switches to the deterministic fixed-step fourth-order scheme with
    that step size (no error estimate).
    """
    s = _clamp_param(s, path.domain, "transport start")
    t = _clamp_param(t, path.domain, "transport end")
    m = gamma_fun.fiber_dim
    if s == t:
        return TransportMatrix(np.eye(m), s, t, 0.0)
    data = _kernel_data(gamma_fun, path)
    if fixed_step is not None:
        h = float(fixed_step)
        if not h > 0.0:
            raise DomainError("fixed step must be positive")
        nsteps = max(1, int(math.ceil(abs(t - s) / h)))
        if data is not None:
            conn, pos, vel, km, kn = data
            H = kernels.transport_rk4(conn, pos, vel, km, kn, s, t, nsteps)
        else:
            H = rk4_matrix(
                lambda tau, Y: -gamma_fun.eval(path, tau) @ Y,
                s, t, np.eye(m), nsteps,
            )
        return TransportMatrix(H, s, t, 0.0)
    if data is not None:
        conn, pos, vel, km, kn = data
        H, est, _ = kernels.transport_ode(conn, pos, vel, km, kn, s, t, rtol, atol)
    else:
        H, est, _ = dopri5_matrix(
            lambda tau, Y: -gamma_fun.eval(path, tau) @ Y,
            s, t, np.eye(m), rtol=rtol, atol=atol,
        )
    return TransportMatrix(H, s, t, est)


def apply_transport(H: TransportMatrix, v) -> np.ndarray:
    """Push fiber components through the transport matrix."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    m = H.matrix.shape[0]
    if v.size != m:
        raise ShapeError(f"vector has {v.size} components, transport is {m}x{m}")
    return H.matrix @ v


def derivation_analytic(gamma_fun: CoefficientFunctional, path: Path,
                        section: SectionAlongPath, s) -> DerivationValue:
    """dsigma/ds + G(s) sigma(s) in the working frame."""
    s = _clamp_param(s, path.domain, "path parameter")
    G = gamma_fun.eval(path, s)
    sigma = section.components(s)
    if sigma.size != G.shape[0]:
        raise ShapeError(
            f"section has {sigma.size} components, coefficients are "
            f"{G.shape[0]}x{G.shape[0]}"
        )
    dsigma = np.asarray(section.derivative(s, path.domain), dtype=np.float64).reshape(-1)
    return DerivationValue(components=dsigma + G @ sigma)


def derivation_limit(gamma_fun: CoefficientFunctional, path: Path,
                     section: SectionAlongPath, s,
                     eps_sequence: Sequence[float] = (1e-2, 1e-3, 1e-4),
                     rtol=TIGHT_RTOL, atol=TIGHT_ATOL) -> DerivationLimitResult:
    """The derivation as its defining limit of transport quotients.

    For each eps the quotient [H(s+eps -> s) sigma(s+eps) - sigma(s)]/eps
    is formed; the backward family uses s-eps when it stays in the
    domain.  The returned value is the one-level Richardson
    extrapolation of the two smallest forward quotients.
    """
    a, b = path.domain
    s = float(s)
    if not a < s < b:
        raise DomainError(f"limit parameter {s!r} must be interior to [{a}, {b}]")
    eps = [float(e) for e in eps_sequence]
    if len(eps) < 2 or any(e <= 0.0 for e in eps) or any(
        eps[k + 1] >= eps[k] for k in range(len(eps) - 1)
    ):
        raise DomainError("eps_sequence must be strictly decreasing and positive")
    if s + eps[0] > b:
        raise DomainError(
            f"forward stencil point {s + eps[0]!r} outside domain [{a}, {b}]"
        )
    sigma0 = section.components(s)

    def quotient(e):
        H = transport_matrix(gamma_fun, path, s + e, s, rtol=rtol, atol=atol)
        moved = apply_transport(H, section.components(s + e))
        return (moved - sigma0) / e

    forward = tuple((e, quotient(e)) for e in eps)
    backward = None
    if s - eps[0] >= a:
        backward = tuple((e, quotient(-e)) for e in eps)

    (e1, q1), (e2, q2) = forward[-2], forward[-1]
    extrapolated = (e1 * q2 - e2 * q1) / (e1 - e2)

    analytic = derivation_analytic(gamma_fun, path, section, s).components
    errors = np.array([float(np.max(np.abs(q - analytic))) for _, q in forward])
    if np.all(errors <= 1e-12):
        fitted_order = None
        converged = True
    else:
        logs = np.log(np.maximum(errors, 1e-16))
        slope, _ = np.polyfit(np.log(eps), logs, 1)
        fitted_order = float(slope)
        converged = fitted_order >= 0.9
    return DerivationLimitResult(
        components=extrapolated,
        quotients_forward=forward,
        quotients_backward=backward,
        analytic=analytic,
        fitted_order=fitted_order,
        converged=converged,
    )


def transported_section(gamma_fun: CoefficientFunctional, path: Path, s0, v0,
                        rtol=TIGHT_RTOL, atol=TIGHT_ATOL) -> SectionAlongPath:
    """The section s -> H(s0 -> s) v0, derivation-constant by construction.

    No analytic derivative is attached on purpose: consumers that
    difference this section measure the transport itself, not a
    restatement of the ODE.
    """
    s0 = _clamp_param(s0, path.domain, "section base parameter")
    v0 = np.asarray(v0, dtype=np.float64).reshape(-1)

    def components(s):
        H = transport_matrix(gamma_fun, path, s0, s, rtol=rtol, atol=atol)
        return apply_transport(H, v0)

    return SectionAlongPath(components, dimension=v0.size, step=1e-4)


def loop_defect(path: Path, periods=None) -> float:
    """Max coordinate mismatch between the path's endpoints, reduced by
    the supplied per-coordinate periods (None entries are aperiodic)."""
    a, b = path.domain
    delta = path.point(b) - path.point(a)
    if periods is not None:
        delta = delta.copy()
        for alpha, period in enumerate(periods):
            if period is not None and alpha < delta.size:
                p = float(period)
                delta[alpha] -= p * round(delta[alpha] / p)
    return float(np.max(np.abs(delta)))


def loop_holonomy(gamma_fun: CoefficientFunctional, path: Path, periods=None,
                  rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
                  fixed_step=None) -> TransportMatrix:
    """Transport around a closed path, over its full parameter range.

    ``periods`` lists per-coordinate periods (e.g. 2*pi for an angular
    coordinate) so that loops closing modulo a period count as closed.
    """
    defect = loop_defect(path, periods)
    if defect > 1e-10:
        raise NotALoopError(
            f"path endpoints differ by {defect:.3e} (tolerance 1e-10)"
        )
    a, b = path.domain
    return transport_matrix(gamma_fun, path, a, b, rtol=rtol, atol=atol,
                            fixed_step=fixed_step)


def rotation_angle(matrix, metric=None) -> float:
    """Rotation angle of a 2x2 transport matrix.

    When a symmetric positive-definite ``metric`` is given, the matrix
    is first conjugated into the frame orthonormalized against it; the
    angle is only meaningful when the conjugated matrix is close to a
    rotation, which holds for metric-compatible transports.
    """
    H = np.asarray(matrix, dtype=np.float64)
    if H.shape != (2, 2):
        raise ShapeError("rotation angle extraction needs a 2x2 matrix")
    if metric is not None:
        G = np.asarray(metric, dtype=np.float64)
        if G.shape != (2, 2):
            raise ShapeError("metric must be a 2x2 matrix")
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            raise ShapeError("metric must be symmetric positive-definite") from None
        E = L.T
        H = E @ H @ checked_inverse(E)
    return math.atan2(H[1, 0] - H[0, 1], H[0, 0] + H[1, 1])
