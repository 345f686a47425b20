"""Domain types for transports along paths: charts, paths, two-parameter
maps, sections, coefficient functionals, connection fields, frame fields,
and the frame-change algebra.

Storage conventions, fixed once for the whole package:

* coefficient matrices are stored as ``G[i][j]`` with ``i`` the upper
  (row) index and ``j`` the lower (column) index;
* point-dependent coefficient tables are ``table[i][j][alpha]`` with
  ``alpha`` the base-coordinate direction;
* frame matrices are ``A[i][i']`` with the unprimed index as the row, so
  components transform by ``v = A v'`` and coefficients by
  ``A^-1 G A + A^-1 dA/ds``.

Paths and maps are callables plus a closed bounded domain; operations
pick their own evaluation points (ODE stages, difference stencils).
Everything here is immutable after construction and safe to use from
several threads at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import fdiff
from .errors import (
    DomainError,
    EvaluationError,
    InvertibilityError,
    ShapeError,
    TangentBundleError,
)
from .expressions import (
    Expression,
    ProgramTable,
    parse_expression,
    shift_variable,
)


@dataclass(frozen=True)
class ChartSpec:
    """Chart dimensions: ``base_dim`` coordinates, ``fiber_dim`` components."""

    base_dim: int
    fiber_dim: int

    def __post_init__(self):
        if int(self.base_dim) < 1 or int(self.fiber_dim) < 1:
            raise ShapeError("chart dimensions must be positive integers")
        object.__setattr__(self, "base_dim", int(self.base_dim))
        object.__setattr__(self, "fiber_dim", int(self.fiber_dim))


def _finite_vector(value, what, where=None):
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"non-finite {what}", where=where)
    return arr


def _finite_matrix(value, what, where=None):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{what} must be a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"non-finite {what}", where=where)
    return arr


def _check_interval(bounds, what):
    a, b = float(bounds[0]), float(bounds[1])
    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise DomainError(f"{what} must be a closed interval [a, b] with a < b")
    return (a, b)


def _clamp_param(s, interval, what):
    a, b = interval
    s = float(s)
    slack = 1e-12 * max(1.0, abs(a), abs(b))
    if s < a - slack or s > b + slack:
        raise DomainError(f"{what} {s!r} outside domain [{a}, {b}]")
    return min(max(s, a), b)


def _parse_components(sources, variables):
    exprs = []
    for src in sources:
        if isinstance(src, Expression):
            exprs.append(src)
        else:
            exprs.append(parse_expression(src, variables))
    return exprs


def _pack(table: ProgramTable):
    return (
        table.codes,
        table.code_offsets,
        table.consts,
        table.const_offsets,
        table.stack_need,
    )


class Path:
    """A parametrized path s -> coordinate n-tuple on a closed interval.

    ``velocity_fn`` is optional; when absent, velocities come from
    central finite differences (one-sided at the endpoints).
    """

    def __init__(self, domain, point_fn, velocity_fn=None, dimension=None,
                 step=None):
        self.domain = _check_interval(domain, "path domain")
        self.point_fn = point_fn
        self.velocity_fn = velocity_fn
        self._dimension = None if dimension is None else int(dimension)
        self.step = fdiff.DEFAULT_STEP if step is None else float(step)
        self.position_exprs: Optional[tuple] = None
        self.velocity_exprs: Optional[tuple] = None
        self._position_table: Optional[ProgramTable] = None
        self._velocity_table: Optional[ProgramTable] = None

    @classmethod
    def from_expressions(cls, domain, components, velocities=None):
        """Build a path from per-coordinate expressions in the variable ``s``.

        Velocity expressions default to the symbolic derivatives of the
        components, so expression-backed paths always carry analytic
        velocities.
        """
        exprs = _parse_components(components, ("s",))
        if velocities is None:
            vel_exprs = [e.derivative(0) for e in exprs]
        else:
            vel_exprs = _parse_components(velocities, ("s",))
            if len(vel_exprs) != len(exprs):
                raise ShapeError("velocity expression count must match components")
        position = ProgramTable([e.program for e in exprs])
        velocity = ProgramTable([e.program for e in vel_exprs])
        if position.nvars > 1 or velocity.nvars > 1:
            raise ShapeError("path expressions may only use the variable s")

        arg = np.empty(1, dtype=np.float64)

        def point_fn(s, _table=position, _arg=arg):
            _arg[0] = s
            return _table.evaluate(_arg)

        def velocity_fn(s, _table=velocity, _arg=arg):
            _arg[0] = s
            return _table.evaluate(_arg)

        path = cls(domain, point_fn, velocity_fn, dimension=len(exprs))
        path.position_exprs = tuple(exprs)
        path.velocity_exprs = tuple(vel_exprs)
        path._position_table = position
        path._velocity_table = velocity
        return path

    @property
    def is_expression_backed(self) -> bool:
        return self._position_table is not None

    def kernel_packs(self):
        """Flat bytecode buffers for the compiled transport kernel."""
        if self._position_table is None:
            return None
        return _pack(self._position_table), _pack(self._velocity_table)

    @property
    def dimension(self) -> int:
        if self._dimension is None:
            self.point(self.domain[0])
        return self._dimension

    def point(self, s):
        s = _clamp_param(s, self.domain, "path parameter")
        p = _finite_vector(self.point_fn(s), "path point", where=s)
        if self._dimension is None:
            self._dimension = p.size
        elif p.size != self._dimension:
            raise ShapeError(
                f"path point has {p.size} coordinates, expected {self._dimension}"
            )
        return p

    def velocity(self, s):
        s = _clamp_param(s, self.domain, "path parameter")
        if self.velocity_fn is not None:
            v = _finite_vector(self.velocity_fn(s), "path velocity", where=s)
        else:
            v = fdiff.derivative(self.point, s, self.step, self.domain)
        if self._dimension is not None and v.size != self._dimension:
            raise ShapeError(
                f"path velocity has {v.size} components, expected {self._dimension}"
            )
        return np.asarray(v, dtype=np.float64).reshape(-1)

    def reparametrized(self, phi, phi_prime, domain):
        """The path u -> point(phi(u)) with chain-rule velocities."""
        return Path(
            domain,
            lambda u: self.point(phi(u)),
            lambda u: self.velocity(phi(u)) * phi_prime(u),
            dimension=self._dimension,
            step=self.step,
        )


def path_velocity(path: Path, s) -> np.ndarray:
    """Tangent components of ``path`` at parameter ``s``."""
    return path.velocity(s)


class TwoParamMap:
    """A C2 map (s, t) -> coordinate n-tuple on a parameter rectangle."""

    def __init__(self, domain, point_fn, partial_s_fn=None, partial_t_fn=None,
                 dimension=None, step=None):
        s_dom, t_dom = domain
        self.domain = (
            _check_interval(s_dom, "map s-domain"),
            _check_interval(t_dom, "map t-domain"),
        )
        self.point_fn = point_fn
        self.partial_s_fn = partial_s_fn
        self.partial_t_fn = partial_t_fn
        self._dimension = None if dimension is None else int(dimension)
        self.step = fdiff.DEFAULT_STEP if step is None else float(step)
        self.point_exprs: Optional[tuple] = None
        self.partial_s_exprs: Optional[tuple] = None
        self.partial_t_exprs: Optional[tuple] = None

    @classmethod
    def from_expressions(cls, domain, components):
        """Build a map from per-coordinate expressions in ``s`` and ``t``.

        Partial derivatives are produced symbolically.
        """
        exprs = _parse_components(components, ("s", "t"))
        ds = [e.derivative(0) for e in exprs]
        dt = [e.derivative(1) for e in exprs]
        tables = [ProgramTable([e.program for e in group]) for group in (exprs, ds, dt)]
        for table in tables:
            if table.nvars > 2:
                raise ShapeError("map expressions may only use the variables s, t")
        point_t, ds_t, dt_t = tables
        arg = np.empty(2, dtype=np.float64)

        def make(table):
            def fn(s, t, _table=table, _arg=arg):
                _arg[0] = s
                _arg[1] = t
                return _table.evaluate(_arg)

            return fn

        m = cls(domain, make(point_t), make(ds_t), make(dt_t), dimension=len(exprs))
        m.point_exprs = tuple(exprs)
        m.partial_s_exprs = tuple(ds)
        m.partial_t_exprs = tuple(dt)
        return m

    @property
    def is_expression_backed(self) -> bool:
        return self.point_exprs is not None

    @property
    def dimension(self) -> int:
        if self._dimension is None:
            self.point(self.domain[0][0], self.domain[1][0])
        return self._dimension

    def _params(self, s, t):
        s = _clamp_param(s, self.domain[0], "map parameter s")
        t = _clamp_param(t, self.domain[1], "map parameter t")
        return s, t

    def point(self, s, t):
        s, t = self._params(s, t)
        p = _finite_vector(self.point_fn(s, t), "map point", where=(s, t))
        if self._dimension is None:
            self._dimension = p.size
        elif p.size != self._dimension:
            raise ShapeError(
                f"map point has {p.size} coordinates, expected {self._dimension}"
            )
        return p

    def partial_s(self, s, t):
        s, t = self._params(s, t)
        if self.partial_s_fn is not None:
            return _finite_vector(self.partial_s_fn(s, t), "map s-partial", where=(s, t))
        return fdiff.derivative(lambda u: self.point(u, t), s, self.step, self.domain[0])

    def partial_t(self, s, t):
        s, t = self._params(s, t)
        if self.partial_t_fn is not None:
            return _finite_vector(self.partial_t_fn(s, t), "map t-partial", where=(s, t))
        return fdiff.derivative(lambda u: self.point(s, u), t, self.step, self.domain[1])

    def extract_s_path(self, t) -> Path:
        """The path s' -> point(s', t) with velocities from the s-partial."""
        t = _clamp_param(t, self.domain[1], "map parameter t")
        if self.is_expression_backed:
            comps = [e.substituted(1, t) for e in self.point_exprs]
            vels = [e.substituted(1, t) for e in self.partial_s_exprs]
            return Path.from_expressions(self.domain[0], comps, vels)
        return Path(
            self.domain[0],
            lambda u: self.point(u, t),
            lambda u: self.partial_s(u, t),
            dimension=self._dimension,
            step=self.step,
        )

    def extract_t_path(self, s) -> Path:
        """The path t' -> point(s, t') with velocities from the t-partial."""
        s = _clamp_param(s, self.domain[0], "map parameter s")
        if self.is_expression_backed:
            comps = [_shift_to_s(e.substituted(0, s)) for e in self.point_exprs]
            vels = [_shift_to_s(e.substituted(0, s)) for e in self.partial_t_exprs]
            return Path.from_expressions(self.domain[1], comps, vels)
        return Path(
            self.domain[1],
            lambda u: self.point(s, u),
            lambda u: self.partial_t(s, u),
            dimension=self._dimension,
            step=self.step,
        )

    def transposed(self) -> "TwoParamMap":
        """The map (s, t) -> point(t, s) with swapped partials."""
        if self.is_expression_backed:
            swapped = [
                Expression(shift_variable(e.ast, {0: 1, 1: 0}), source=e.source,
                           variables=("s", "t"))
                for e in self.point_exprs
            ]
            return TwoParamMap.from_expressions(
                (self.domain[1], self.domain[0]), swapped
            )
        return TwoParamMap(
            (self.domain[1], self.domain[0]),
            lambda s, t: self.point(t, s),
            lambda s, t: self.partial_t(t, s),
            lambda s, t: self.partial_s(t, s),
            dimension=self._dimension,
            step=self.step,
        )


def _shift_to_s(expr: Expression) -> Expression:
    # after substituting s, the remaining variable t must move to slot 0
    return Expression(shift_variable(expr.ast, {1: 0}), source=expr.source,
                      variables=("s",))


class SectionAlongPath:
    """Fiber components s -> m-tuple along an owning path."""

    def __init__(self, components_fn, derivative_fn=None, dimension=None,
                 step=None):
        self.components_fn = components_fn
        self.derivative_fn = derivative_fn
        self._dimension = None if dimension is None else int(dimension)
        self.step = fdiff.DEFAULT_STEP if step is None else float(step)

    @classmethod
    def from_expressions(cls, components, derivatives=None):
        exprs = _parse_components(components, ("s",))
        if derivatives is None:
            der = [e.derivative(0) for e in exprs]
        else:
            der = _parse_components(derivatives, ("s",))
        comp_t = ProgramTable([e.program for e in exprs])
        der_t = ProgramTable([e.program for e in der])
        if comp_t.nvars > 1 or der_t.nvars > 1:
            raise ShapeError("section expressions may only use the variable s")
        arg = np.empty(1, dtype=np.float64)

        def comp_fn(s, _t=comp_t, _a=arg):
            _a[0] = s
            return _t.evaluate(_a)

        def der_fn(s, _t=der_t, _a=arg):
            _a[0] = s
            return _t.evaluate(_a)

        return cls(comp_fn, der_fn, dimension=len(exprs))

    @property
    def dimension(self) -> int:
        if self._dimension is None:
            self.components(0.0)
        return self._dimension

    def components(self, s):
        v = _finite_vector(self.components_fn(s), "section components", where=s)
        if self._dimension is None:
            self._dimension = v.size
        elif v.size != self._dimension:
            raise ShapeError(
                f"section has {v.size} components, expected {self._dimension}"
            )
        return v

    def derivative(self, s, interval):
        """dsigma/ds at s; finite differences over ``interval`` when no
        analytic derivative was supplied."""
        if self.derivative_fn is not None:
            return _finite_vector(self.derivative_fn(s), "section derivative", where=s)
        return fdiff.derivative(self.components, s, self.step, interval)


class CoefficientFunctional:
    """The map (path, s) -> m x m coefficient matrix G[i][j]."""

    def __init__(self, eval_fn: Callable, fiber_dim: int):
        self.eval_fn = eval_fn
        self.fiber_dim = int(fiber_dim)
        if self.fiber_dim < 1:
            raise ShapeError("fiber dimension must be positive")

    def eval(self, path: Path, s) -> np.ndarray:
        G = _finite_matrix(self.eval_fn(path, s), "coefficient matrix", where=s)
        if G.shape[0] != self.fiber_dim:
            raise ShapeError(
                f"coefficient matrix is {G.shape[0]}x{G.shape[1]}, "
                f"expected {self.fiber_dim}x{self.fiber_dim}"
            )
        return G


class ConnectionField:
    """Point-dependent coefficients: x -> table[i][j][alpha].

    ``coeff_partials_fn`` optionally supplies the analytic partials
    d(table[i][j][alpha])/dx^beta as an (m, m, n, n) array with beta
    last; finite differences are used otherwise.
    """

    def __init__(self, chart: ChartSpec, coeff_fn, coeff_partials_fn=None,
                 step=None):
        self.chart = chart
        self.coeff_fn = coeff_fn
        self.coeff_partials_fn = coeff_partials_fn
        self.step = fdiff.DEFAULT_STEP if step is None else float(step)
        self.table_exprs: Optional[tuple] = None
        self._coeff_table: Optional[ProgramTable] = None
        self._partials_table: Optional[ProgramTable] = None

    @classmethod
    def from_expressions(cls, table, step=None):
        """Build from an m x m x n nested list of expression sources in the
        default variables x1..xn; partials are produced symbolically."""
        m = len(table)
        if m == 0 or any(len(row) != m for row in table):
            raise ShapeError("coefficient table must be m x m x n")
        n = len(table[0][0])
        if n == 0 or any(len(cell) != n for row in table for cell in row):
            raise ShapeError("coefficient table must be m x m x n")
        exprs = [
            [
                _parse_components(cell, None)
                for cell in row
            ]
            for row in table
        ]
        flat = [e for row in exprs for cell in row for e in cell]
        coeff_table = ProgramTable([e.program for e in flat])
        if coeff_table.nvars > n:
            raise ShapeError(
                f"coefficient expressions use {coeff_table.nvars} variables, "
                f"chart has {n}"
            )
        partials = [e.derivative(beta) for e in flat for beta in range(n)]
        partials_table = ProgramTable([e.program for e in partials])

        chart = ChartSpec(base_dim=n, fiber_dim=m)

        def coeff_fn(x, _t=coeff_table, _m=m, _n=n):
            return _t.evaluate(np.asarray(x, dtype=np.float64)).reshape(_m, _m, _n)

        def partials_fn(x, _t=partials_table, _m=m, _n=n):
            return _t.evaluate(np.asarray(x, dtype=np.float64)).reshape(_m, _m, _n, _n)

        conn = cls(chart, coeff_fn, partials_fn, step=step)
        conn.table_exprs = tuple(flat)
        conn._coeff_table = coeff_table
        conn._partials_table = partials_table
        return conn

    @property
    def is_expression_backed(self) -> bool:
        return self._coeff_table is not None

    @property
    def has_analytic_partials(self) -> bool:
        return self.coeff_partials_fn is not None

    def kernel_pack(self):
        if self._coeff_table is None:
            return None
        return _pack(self._coeff_table)

    def _point(self, x):
        x = _finite_vector(x, "chart point")
        if x.size != self.chart.base_dim:
            raise ShapeError(
                f"point has {x.size} coordinates, chart has {self.chart.base_dim}"
            )
        return x

    def coefficients(self, x) -> np.ndarray:
        x = self._point(x)
        m, n = self.chart.fiber_dim, self.chart.base_dim
        table = np.asarray(self.coeff_fn(x), dtype=np.float64)
        if table.shape != (m, m, n):
            raise ShapeError(
                f"coefficient table has shape {table.shape}, expected {(m, m, n)}"
            )
        if not np.all(np.isfinite(table)):
            raise EvaluationError("non-finite connection coefficients", where=tuple(x))
        return table

    def partials(self, x, step=None) -> np.ndarray:
        """d(coefficients)/dx^beta, beta on the last axis."""
        x = self._point(x)
        m, n = self.chart.fiber_dim, self.chart.base_dim
        if self.coeff_partials_fn is not None:
            d = np.asarray(self.coeff_partials_fn(x), dtype=np.float64)
            if d.shape != (m, m, n, n):
                raise ShapeError(
                    f"partials have shape {d.shape}, expected {(m, m, n, n)}"
                )
            if not np.all(np.isfinite(d)):
                raise EvaluationError("non-finite coefficient partials", where=tuple(x))
            return d
        h = self.step if step is None else float(step)
        return fdiff.gradient(self.coefficients, x, h)

    def symmetry_defect(self, points) -> float:
        """max |table[i][j][k] - table[i][k][j]| over the sample points;
        meaningful only on the tangent bundle (m = n)."""
        if self.chart.fiber_dim != self.chart.base_dim:
            raise TangentBundleError(
                "coefficient symmetry needs fiber dimension == base dimension"
            )
        worst = 0.0
        for x in points:
            table = self.coefficients(x)
            worst = max(worst, float(np.max(np.abs(table - table.transpose(0, 2, 1)))))
        return worst


class ConnectionCoefficients(CoefficientFunctional):
    """Connection-induced functional: contraction of a coefficient table
    with path velocities, summed over the base index in ascending order."""

    def __init__(self, conn: ConnectionField):
        self.conn = conn
        super().__init__(self._contract, conn.chart.fiber_dim)

    def _contract(self, path: Path, s):
        x = path.point(s)
        v = path.velocity(s)
        n = self.conn.chart.base_dim
        if v.size != n:
            raise ShapeError(
                f"path lives in {v.size} dimensions, connection chart in {n}"
            )
        table = self.conn.coefficients(x)
        m = self.conn.chart.fiber_dim
        G = np.empty((m, m), dtype=np.float64)
        # ascending-alpha loop: same arithmetic path as the compiled kernel
        for i in range(m):
            for j in range(m):
                acc = 0.0
                for a in range(n):
                    acc += table[i, j, a] * v[a]
                G[i, j] = acc
        return G


def connection_functional(conn: ConnectionField) -> ConnectionCoefficients:
    """The functional (path, s) -> sum_alpha table[i][j][alpha] * velocity[alpha]."""
    return ConnectionCoefficients(conn)


class FrameField:
    """An invertible matrix field, either along a path (s -> A) or on the
    chart (x -> A), with the storage convention A[i][i'] (row unprimed)."""

    def __init__(self, along_path=None, on_chart=None, derivative_fn=None,
                 det_min=1e-10, det_max=1e10, dimension=None, step=None,
                 chart_dim=None):
        if (along_path is None) == (on_chart is None):
            raise ShapeError("give exactly one of along_path or on_chart")
        self.along_path = along_path
        self.on_chart = on_chart
        self.derivative_fn = derivative_fn
        self.det_min = float(det_min)
        self.det_max = float(det_max)
        self._dimension = None if dimension is None else int(dimension)
        self.step = fdiff.DEFAULT_STEP if step is None else float(step)
        self.entry_exprs: Optional[tuple] = None
        self._entry_table: Optional[ProgramTable] = None
        self._partials_table: Optional[ProgramTable] = None
        self._chart_dim: Optional[int] = None if chart_dim is None else int(chart_dim)

    @classmethod
    def constant(cls, matrix, **kwargs):
        M = np.array(matrix, dtype=np.float64)
        return cls(on_chart=lambda x: M, derivative_fn=None,
                   dimension=M.shape[0], **kwargs)

    @classmethod
    def from_path_expressions(cls, entries, **kwargs):
        """m x m nested list of expression sources in the variable ``s``;
        the frame derivative is produced symbolically."""
        m = len(entries)
        exprs = [
            _parse_components(row, ("s",)) for row in entries
        ]
        if any(len(row) != m for row in exprs):
            raise ShapeError("frame entry table must be m x m")
        flat = [e for row in exprs for e in row]
        table = ProgramTable([e.program for e in flat])
        dtable = ProgramTable([e.derivative(0).program for e in flat])
        if table.nvars > 1:
            raise ShapeError("path-frame expressions may only use the variable s")
        arg = np.empty(1, dtype=np.float64)

        def along(s, _t=table, _a=arg, _m=m):
            _a[0] = s
            return _t.evaluate(_a).reshape(_m, _m)

        def deriv(s, _t=dtable, _a=arg, _m=m):
            _a[0] = s
            return _t.evaluate(_a).reshape(_m, _m)

        frame = cls(along_path=along, derivative_fn=deriv, dimension=m, **kwargs)
        frame.entry_exprs = tuple(flat)
        frame._entry_table = table
        return frame

    @classmethod
    def from_chart_expressions(cls, entries, base_dim, **kwargs):
        """m x m nested list of expression sources in x1..xn; partial
        derivatives are symbolic and drive the chain rule along paths."""
        m = len(entries)
        exprs = [_parse_components(row, None) for row in entries]
        if any(len(row) != m for row in exprs):
            raise ShapeError("frame entry table must be m x m")
        flat = [e for row in exprs for e in row]
        n = int(base_dim)
        table = ProgramTable([e.program for e in flat])
        if table.nvars > n:
            raise ShapeError(
                f"frame expressions use {table.nvars} variables, chart has {n}"
            )
        partials = ProgramTable(
            [e.derivative(beta).program for e in flat for beta in range(n)]
        )

        def on_chart(x, _t=table, _m=m):
            return _t.evaluate(np.asarray(x, dtype=np.float64)).reshape(_m, _m)

        frame = cls(on_chart=on_chart, dimension=m, **kwargs)
        frame.entry_exprs = tuple(flat)
        frame._entry_table = table
        frame._partials_table = partials
        frame._chart_dim = n
        return frame

    @property
    def is_along_path(self) -> bool:
        return self.along_path is not None

    @property
    def chart_dim(self) -> Optional[int]:
        return self._chart_dim

    @property
    def dimension(self) -> Optional[int]:
        return self._dimension

    def _validate(self, A, where=None):
        A = _finite_matrix(A, "frame matrix", where=where)
        if self._dimension is None:
            self._dimension = A.shape[0]
        elif A.shape[0] != self._dimension:
            raise ShapeError(
                f"frame matrix is {A.shape[0]}x{A.shape[0]}, "
                f"expected {self._dimension}x{self._dimension}"
            )
        det = abs(float(np.linalg.det(A)))
        if not (self.det_min <= det <= self.det_max):
            raise InvertibilityError(
                f"frame determinant {det:.3e} outside [{self.det_min:.1e}, "
                f"{self.det_max:.1e}]"
            )
        return A

    def matrix(self, arg):
        """A at a path parameter (along-path frames) or chart point."""
        if self.along_path is not None:
            return self._validate(self.along_path(arg), where=arg)
        return self._validate(self.on_chart(arg), where=arg)

    def matrix_on_path(self, path: Path, s):
        if self.along_path is not None:
            return self._validate(self.along_path(s), where=s)
        return self._validate(self.on_chart(path.point(s)), where=s)

    def inverse(self, arg):
        return checked_inverse(self.matrix(arg))

    def derivative_on_path(self, path: Path, s):
        """dA/ds along the path, by analytic data when available, else
        central finite differences over the path domain."""
        if self.along_path is not None:
            if self.derivative_fn is not None:
                return _finite_matrix(self.derivative_fn(s), "frame derivative", where=s)
            return fdiff.derivative(
                lambda u: self._validate(self.along_path(u), where=u),
                s, self.step, path.domain,
            )
        if self._partials_table is not None:
            d = self.partials(path.point(s))
            v = path.velocity(s)
            return np.einsum("ijk,k->ij", d, v)
        if self.derivative_fn is not None:
            d = np.asarray(self.derivative_fn(path.point(s)), dtype=np.float64)
            v = path.velocity(s)
            return np.einsum("ijk,k->ij", d, v)
        return fdiff.derivative(
            lambda u: self._validate(self.on_chart(path.point(u)), where=u),
            s, self.step, path.domain,
        )

    def partials(self, x):
        """dA/dx^beta for chart frames, shape (m, m, n), beta last."""
        if self.on_chart is None:
            raise ShapeError("partials need an on-chart frame")
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if self._partials_table is not None:
            m = self._dimension
            n = self._chart_dim
            d = self._partials_table.evaluate(x).reshape(m, m, n)
            if not np.all(np.isfinite(d)):
                raise EvaluationError("non-finite frame partials", where=tuple(x))
            return d
        if self.derivative_fn is not None:
            return np.asarray(self.derivative_fn(x), dtype=np.float64)
        return fdiff.gradient(lambda y: self._validate(self.on_chart(y)), x, self.step)


def checked_inverse(A: np.ndarray) -> np.ndarray:
    """Matrix inverse with one Newton refinement and a residual check."""
    A = np.asarray(A, dtype=np.float64)
    try:
        X = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise InvertibilityError(f"singular matrix: {exc}") from None
    eye = np.eye(A.shape[0])
    X = X @ (2.0 * eye - A @ X)
    residual = float(np.max(np.abs(A @ X - eye)))
    if not residual < 1e-12:
        raise InvertibilityError(
            f"matrix too ill-conditioned to invert (residual {residual:.3e})"
        )
    return X


def frame_transform_coefficients(gamma_fun: CoefficientFunctional,
                                 frame: FrameField, path: Path, s) -> np.ndarray:
    """Coefficients in the primed frame: A^-1 G A + A^-1 dA/ds."""
    s = _clamp_param(s, path.domain, "path parameter")
    G = gamma_fun.eval(path, s)
    A = frame.matrix_on_path(path, s)
    if A.shape[0] != G.shape[0]:
        raise ShapeError(
            f"frame is {A.shape[0]}x{A.shape[0]}, coefficients are "
            f"{G.shape[0]}x{G.shape[0]}"
        )
    dA = frame.derivative_on_path(path, s)
    Ainv = checked_inverse(A)
    return Ainv @ G @ A + Ainv @ dA


def transformed_functional(gamma_fun: CoefficientFunctional,
                           frame: FrameField) -> CoefficientFunctional:
    """The coefficient functional as seen in the primed frame."""
    return CoefficientFunctional(
        lambda path, s: frame_transform_coefficients(gamma_fun, frame, path, s),
        gamma_fun.fiber_dim,
    )
