"""Built-in geometries: expression-backed connections with metric,
period, and safe-region metadata.

Every built-in is fully expressible as an explicit coefficient table,
so the same geometry can be spelled either by name or by its table in a
scenario file; both spellings run through identical code.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .errors import ConfigError
from .expressions import ProgramTable, parse_expression
from .geometry import ConnectionField, FrameField

TWO_PI = 2.0 * math.pi


class GeometrySpec:
    """A named connection plus the metadata the runner and tests need:
    an optional metric (for angle extraction), per-coordinate periods
    (for loop closure on angular charts), and a safe sampling region
    that stays clear of chart singularities."""

    def __init__(self, name: str, table, metric_sources=None, periods=None,
                 region=None, description: str = ""):
        self.name = name
        self.table_sources = tuple(tuple(tuple(cell) for cell in row) for row in table)
        self.connection = ConnectionField.from_expressions(table)
        n = self.connection.chart.base_dim
        self.metric_sources = (
            None
            if metric_sources is None
            else tuple(tuple(row) for row in metric_sources)
        )
        self._metric_table: Optional[ProgramTable] = None
        if self.metric_sources is not None:
            if len(self.metric_sources) != n or any(
                len(row) != n for row in self.metric_sources
            ):
                raise ConfigError(f"metric for {name!r} must be {n}x{n}")
            exprs = [parse_expression(src) for row in self.metric_sources for src in row]
            self._metric_table = ProgramTable([e.program for e in exprs])
        self.periods = (None,) * n if periods is None else tuple(periods)
        if len(self.periods) != n:
            raise ConfigError(f"periods for {name!r} must list {n} entries")
        self.region = (
            tuple((-1.0, 1.0) for _ in range(n))
            if region is None
            else tuple(tuple(map(float, axis)) for axis in region)
        )
        self.description = description

    @property
    def has_metric(self) -> bool:
        return self._metric_table is not None

    def metric(self, x) -> np.ndarray:
        if self._metric_table is None:
            raise ConfigError(f"geometry {self.name!r} carries no metric")
        n = self.connection.chart.base_dim
        return self._metric_table.evaluate(np.asarray(x, dtype=np.float64)).reshape(n, n)


_Z = "0"


def _builtin_specs():
    cartesian = GeometrySpec(
        "euclidean-cartesian",
        table=[[[_Z, _Z], [_Z, _Z]], [[_Z, _Z], [_Z, _Z]]],
        metric_sources=[["1", "0"], ["0", "1"]],
        periods=(None, None),
        region=((-2.0, 2.0), (-2.0, 2.0)),
        description="flat plane in Cartesian coordinates; all coefficients zero",
    )
    polar = GeometrySpec(
        "euclidean-polar",
        table=[
            [[_Z, _Z], [_Z, "-x1"]],
            [[_Z, "1/x1"], ["1/x1", _Z]],
        ],
        metric_sources=[["1", "0"], ["0", "x1^2"]],
        periods=(None, TWO_PI),
        region=((0.5, 2.0), (0.0, math.pi)),
        description="flat plane in polar coordinates (x1 = radius, x2 = angle)",
    )
    sphere = GeometrySpec(
        "sphere",
        table=[
            [[_Z, _Z], [_Z, "-sin(x1)*cos(x1)"]],
            [[_Z, "cos(x1)/sin(x1)"], ["cos(x1)/sin(x1)", _Z]],
        ],
        metric_sources=[["1", "0"], ["0", "sin(x1)^2"]],
        periods=(None, TWO_PI),
        region=((0.3, math.pi - 0.3), (0.0, TWO_PI)),
        description="unit sphere (x1 = colatitude, x2 = longitude)",
    )
    torsion_constant = GeometrySpec(
        "torsion-constant",
        table=[
            [[_Z, "1"], [_Z, _Z]],
            [[_Z, _Z], [_Z, _Z]],
        ],
        metric_sources=[["1", "0"], ["0", "1"]],
        periods=(None, None),
        region=((-2.0, 2.0), (-2.0, 2.0)),
        description="flat plane with one constant non-symmetric coefficient",
    )
    gauge_rotation = GeometrySpec(
        "gauge-rotation",
        table=[
            [[_Z, _Z], ["1", _Z]],
            [["-1", _Z], [_Z, _Z]],
        ],
        metric_sources=[["1", "0"], ["0", "1"]],
        periods=(None, None),
        region=((-1.0, 1.0), (-1.0, 1.0)),
        description=(
            "flat but torsionful: the pure-gauge connection of the frame "
            "rotating with the first coordinate"
        ),
    )
    return (cartesian, polar, sphere, torsion_constant, gauge_rotation)


_REGISTRY = {spec.name: spec for spec in _builtin_specs()}


def list_geometries():
    return sorted(_REGISTRY)


def get_geometry(name: str) -> GeometrySpec:
    try:
        return _REGISTRY[name]
    except KeyError:
        known = ", ".join(list_geometries())
        raise ConfigError(f"unknown geometry {name!r}; built-ins: {known}") from None


def gauge_rotation_frame() -> FrameField:
    """The frame field whose pure-gauge coefficients are the
    gauge-rotation geometry: a rotation by the first coordinate."""
    return FrameField.from_chart_expressions(
        [["cos(x1)", "-sin(x1)"], ["sin(x1)", "cos(x1)"]], 2
    )


def cartesian_in_polar_frame() -> FrameField:
    """The constant Cartesian frame written in polar coordinates; it
    trivializes the polar connection and equals I at (1, 0)."""
    return FrameField.from_chart_expressions(
        [["cos(x2)", "sin(x2)"], ["-sin(x2)/x1", "cos(x2)/x1"]], 2
    )
