"""Flatness certification and zero-coefficient frame construction.

A flat connection admits a frame field in which every transport matrix
is the identity.  The inverse frame B = A^-1 satisfies dB/du = B G
along any path (G the coefficient matrix along it), so B is built by
integrating that system along axis-parallel coordinate lines from a
basepoint where B = I.  Flatness is exactly the integrability condition
making the result independent of the line order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np

from . import fdiff, sampling
from .curvature import curvature_tensor
from .errors import (
    DomainError,
    EvaluationError,
    FlatnessError,
    InvertibilityError,
    PathTransportError,
    ShapeError,
    TangentBundleError,
)
from .geometry import (
    ChartSpec,
    ConnectionField,
    FrameField,
    checked_inverse,
    connection_functional,
    frame_transform_coefficients,
)
from .integrate import dopri5_matrix
from .parallel import worker_count

# thresholds separating genuine curvature from differencing noise
TAU_FLAT_ANALYTIC = 1e-8
TAU_FLAT_FD = 1e-6

# line integrations feed difference quotients downstream, so they run
# far tighter than ordinary transports
LINE_RTOL = 1e-12
LINE_ATOL = 1e-14


@dataclass(frozen=True)
class FlatnessCertificate:
    """Grid maximum of |curvature| with the verdict at the threshold."""

    max_curvature_norm: float
    grid_spec: dict
    verdict: str  # "flat" or "not-flat"
    threshold: float


@dataclass(frozen=True)
class FlatFrameResult:
    """Constructed frame with its zero-coefficient residual.

    ``frame`` evaluates A(x) anywhere in the region by re-integration
    from the nearest grid node; ``residual`` is the largest transformed
    coefficient seen on random test paths (reported, never assumed).
    """

    frame: FrameField
    basepoint: tuple
    residual: float
    grid_axes: tuple
    grid_frames: np.ndarray  # inverse frames B on the grid, shape counts+(m, m)


def _check_region(region, n):
    region = tuple(tuple(map(float, axis)) for axis in region)
    if len(region) != n:
        raise ShapeError(f"region has {len(region)} axes, chart has {n}")
    for lo, hi in region:
        if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
            raise DomainError("region axes must be finite intervals [lo, hi], lo < hi")
    return region


def _check_resolution(resolution, n):
    counts = tuple(int(k) for k in resolution)
    if len(counts) != n:
        raise ShapeError(f"resolution has {len(counts)} axes, chart has {n}")
    if any(k < 2 for k in counts):
        raise DomainError("resolution needs at least 2 nodes per axis")
    return counts


def flatness_certificate(conn: ConnectionField, region, resolution,
                         threshold=None, step=None) -> FlatnessCertificate:
    """Evaluate the point curvature on a regular grid and compare the max
    absolute component against the flatness threshold."""
    n = conn.chart.base_dim
    region = _check_region(region, n)
    counts = _check_resolution(resolution, n)
    if threshold is None:
        threshold = TAU_FLAT_ANALYTIC if conn.has_analytic_partials else TAU_FLAT_FD
    threshold = float(threshold)
    if not threshold > 0.0:
        raise DomainError("flatness threshold must be positive")
    axes = [np.linspace(lo, hi, k) for (lo, hi), k in zip(region, counts)]
    nodes = [np.array(node) for node in product(*axes)]

    def node_max(x):
        try:
            return float(np.max(np.abs(curvature_tensor(conn, x, h=step).values)))
        except PathTransportError as exc:
            raise EvaluationError(
                f"curvature evaluation failed at grid node {tuple(x)}: {exc}",
                where=tuple(x),
            ) from exc

    workers = worker_count()
    if workers > 1 and len(nodes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            worst = max(pool.map(node_max, nodes))
    else:
        worst = max(node_max(x) for x in nodes)
    verdict = "flat" if worst < threshold else "not-flat"
    return FlatnessCertificate(
        max_curvature_norm=worst,
        grid_spec={"region": [list(axis) for axis in region],
                   "resolution": list(counts)},
        verdict=verdict,
        threshold=threshold,
    )


def _integrate_line(conn: ConnectionField, start_point, axis, u0, u1, B0):
    """Advance B along the axis-parallel line through start_point."""
    u0 = float(u0)
    u1 = float(u1)
    if u0 == u1:
        return np.array(B0, dtype=np.float64)
    base = np.array(start_point, dtype=np.float64)

    def f(u, B):
        x = base.copy()
        x[axis] = u
        table = conn.coefficients(x)
        return B @ table[:, :, axis]

    B, _, _ = dopri5_matrix(f, u0, u1, B0, rtol=LINE_RTOL, atol=LINE_ATOL)
    return B


def _validate_node_frame(B, node):
    det = abs(float(np.linalg.det(B)))
    if not (1e-10 <= det <= 1e10) or not np.all(np.isfinite(B)):
        raise InvertibilityError(
            f"frame became singular during integration (|det| = {det:.3e} "
            f"at {tuple(np.round(node, 6))})"
        )
    return B


def build_flat_frame(conn: ConnectionField, basepoint, region, resolution,
                     axis_order=None, threshold=None,
                     residual_paths=6, residual_samples=5,
                     seed=2024) -> FlatFrameResult:
    """Construct the zero-coefficient frame on a grid over the region.

    The inverse frame B is integrated with B(basepoint) = I along
    axis-parallel lines, one axis at a time in ``axis_order`` (ascending
    by default): first along the first axis from the basepoint, then
    along the second axis from every point of that line, and so on.
    Flatness over the region is certified first; the integrability it
    guarantees is what makes the result independent of the axis order.

    Only point-dependent connection coefficients are accepted: for a
    general parameter-dependent functional the line integrals would not
    patch into a single-valued field.
    """
    if not isinstance(conn, ConnectionField):
        raise TypeError(
            "flat-frame construction needs point-dependent connection "
            "coefficients (a ConnectionField), not a general coefficient "
            "functional"
        )
    n = conn.chart.base_dim
    m = conn.chart.fiber_dim
    region = _check_region(region, n)
    counts = _check_resolution(resolution, n)
    basepoint = np.asarray(basepoint, dtype=np.float64).reshape(-1)
    if basepoint.size != n:
        raise ShapeError(f"basepoint has {basepoint.size} coordinates, chart has {n}")
    slack = [1e-12 * max(1.0, abs(lo), abs(hi)) for lo, hi in region]
    for a, ((lo, hi), eps) in enumerate(zip(region, slack)):
        if basepoint[a] < lo - eps or basepoint[a] > hi + eps:
            raise DomainError(
                f"basepoint coordinate {basepoint[a]!r} outside region axis "
                f"[{lo}, {hi}]"
            )
    if axis_order is None:
        axis_order = tuple(range(n))
    else:
        axis_order = tuple(int(a) for a in axis_order)
        if sorted(axis_order) != list(range(n)):
            raise ShapeError(f"axis_order must be a permutation of 0..{n - 1}")

    certificate = flatness_certificate(conn, region, counts, threshold=threshold)
    if certificate.verdict != "flat":
        raise FlatnessError(
            f"region is not flat: max curvature {certificate.max_curvature_norm:.3e} "
            f">= threshold {certificate.threshold:.1e}; the line integrals would "
            "not patch into a single-valued frame"
        )

    axes = tuple(np.linspace(lo, hi, k) for (lo, hi), k in zip(region, counts))

    # stage k holds frames at points whose axis_order[:k] coordinates sit on
    # the grid and whose remaining coordinates sit at the basepoint
    stage = {(): (basepoint.copy(), np.eye(m))}
    for axis in axis_order:
        next_stage = {}
        for prefix, (pt, B) in stage.items():
            for g, value in enumerate(axes[axis]):
                new_pt = pt.copy()
                new_pt[axis] = value
                new_B = _integrate_line(conn, pt, axis, pt[axis], value, B)
                _validate_node_frame(new_B, new_pt)
                next_stage[prefix + (g,)] = (new_pt, new_B)
        stage = next_stage

    grid = np.empty(counts + (m, m), dtype=np.float64)
    for key, (_, B) in stage.items():
        idx = [0] * n
        for pos, axis in enumerate(axis_order):
            idx[axis] = key[pos]
        grid[tuple(idx)] = B

    def inverse_frame_at(x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.size != n:
            raise ShapeError(f"point has {x.size} coordinates, chart has {n}")
        idx = tuple(int(np.argmin(np.abs(axes[a] - x[a]))) for a in range(n))
        node = np.array([axes[a][idx[a]] for a in range(n)])
        B = grid[idx]
        pt = node.copy()
        for a in range(n):
            B = _integrate_line(conn, pt, a, pt[a], x[a], B)
            pt[a] = x[a]
        return B

    frame = FrameField(
        on_chart=lambda x: checked_inverse(inverse_frame_at(x)),
        dimension=m,
        chart_dim=n,
    )

    margin = [0.02 * (hi - lo) for lo, hi in region]
    inner = tuple((lo + d, hi - d) for (lo, hi), d in zip(region, margin))
    gen = sampling.generator(seed)
    paths = [
        sampling.random_smooth_path(gen, inner) for _ in range(int(residual_paths))
    ]
    residual = residual_coefficients(conn, frame, paths, int(residual_samples))

    return FlatFrameResult(
        frame=frame,
        basepoint=tuple(float(v) for v in basepoint),
        residual=residual,
        grid_axes=axes,
        grid_frames=grid,
    )


def residual_coefficients(conn: ConnectionField, frame: FrameField,
                          test_paths, samples_per_path: int) -> float:
    """Largest transformed-coefficient component over the test paths.

    Zero (up to integration and differencing noise) exactly when the
    frame trivializes the transport; the frame derivative is taken by
    finite differences, so the residual measures the constructed frame
    rather than restating its defining equation.
    """
    samples = int(samples_per_path)
    if samples < 1:
        raise DomainError("samples_per_path must be at least 1")
    functional = connection_functional(conn)
    worst = 0.0
    for path in test_paths:
        a, b = path.domain
        for s in np.linspace(a, b, samples + 2)[1:-1]:
            G = frame_transform_coefficients(functional, frame, path, s)
            worst = max(worst, float(np.max(np.abs(G))))
    return worst


def coefficients_from_zero_frame(frame_change: FrameField,
                                 base_dim=None) -> ConnectionField:
    """The connection whose transports the given frame trivializes.

    table[:, :, alpha] = -(dA/dx^alpha) A^-1; its curvature vanishes
    identically because the coefficients are pure gauge.
    """
    if frame_change.on_chart is None:
        raise ShapeError("pure-gauge extraction needs an on-chart frame field")
    n = frame_change.chart_dim if base_dim is None else int(base_dim)
    if n is None:
        raise ShapeError(
            "chart dimension unknown: construct the frame with chart_dim= "
            "or pass base_dim"
        )
    m = frame_change.dimension
    if m is None:
        raise ShapeError(
            "frame dimension unknown: construct the frame with dimension="
        )
    chart = ChartSpec(base_dim=n, fiber_dim=m)

    def coeff_fn(x):
        A = frame_change.matrix(x)
        dA = frame_change.partials(x)
        Ainv = checked_inverse(A)
        table = np.empty((m, m, n), dtype=np.float64)
        for alpha in range(n):
            table[:, :, alpha] = -(dA[:, :, alpha] @ Ainv)
        return table

    return ConnectionField(chart, coeff_fn)


def holonomic_obstruction(conn: ConnectionField, frame: FrameField, x,
                          step=None) -> np.ndarray:
    """Pairwise commutators of the frame vector fields at x.

    The frame columns define vector fields e_j' with components A[. , j'];
    the result is indexed [j'][k'][i] = [e_j', e_k']^i, computed with
    central differences of the frame entries.  All-zero certifies that
    the frame is holonomic (a coordinate basis) near x.
    """
    if conn.chart.fiber_dim != conn.chart.base_dim:
        raise TangentBundleError(
            "holonomicity is a tangent-bundle notion: fiber dimension must "
            "equal base dimension"
        )
    if frame.on_chart is None:
        raise ShapeError("holonomicity check needs an on-chart frame field")
    n = conn.chart.base_dim
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != n:
        raise ShapeError(f"point has {x.size} coordinates, chart has {n}")
    A = frame.matrix(x)
    if A.shape[0] != n:
        raise ShapeError("frame size must match the chart dimension")
    h = fdiff.DEFAULT_STEP if step is None else float(step)
    dA = fdiff.gradient(lambda y: frame.matrix(y), x, h)  # (m, m, l)
    comm = np.zeros((n, n, n), dtype=np.float64)
    for jp in range(n):
        for kp in range(n):
            for i in range(n):
                acc = 0.0
                for l in range(n):
                    acc += A[l, jp] * dA[i, kp, l] - A[l, kp] * dA[i, jp, l]
                comm[jp, kp, i] = acc
    return comm
