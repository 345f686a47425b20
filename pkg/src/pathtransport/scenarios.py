"""Declarative scenario runner.

Scenario documents are JSON objects validated against the shipped schema
(``data/scenario.schema.json``).  A document names a geometry (built-in or
given as an expression table), one task, and optional integrator and output
settings.  ``run_scenario`` executes the task and returns a report dict whose
leaves are plain JSON types, so rendering it is deterministic: identical
configs produce byte-identical JSON reports.

Angle-valued numbers may be written as the literal strings "pi" or "2pi".
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from functools import lru_cache
from importlib import resources

import numpy as np

from . import catalog, kernels, sampling
from .curvature import (
    contract_curvature,
    contract_torsion,
    curvature_contraction_defect,
    curvature_matrix,
    curvature_tensor,
    torsion_tensor,
    torsion_vector,
)
from .errors import ConfigError, ExpressionSyntaxError
from .flatframe import build_flat_frame, flatness_certificate
from .geometry import Path, SectionAlongPath, TwoParamMap, connection_functional
from .transport import (
    DEFAULT_ATOL,
    DEFAULT_RTOL,
    apply_transport,
    derivation_limit,
    loop_holonomy,
    rotation_angle,
    transport_matrix,
)

SCHEMA_VERSION = 1

_ANGLES = {"pi": math.pi, "2pi": 2.0 * math.pi}


@lru_cache(maxsize=1)
def load_schema():
    """Return the scenario JSON schema shipped with the package."""
    text = resources.files("pathtransport").joinpath("data/scenario.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_config(doc):
    """Check ``doc`` against the schema.  Raises ConfigError on violation."""
    import jsonschema

    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        where = "/".join(str(p) for p in best.absolute_path) or "<root>"
        raise ConfigError(f"invalid scenario config at {where}: {best.message}")


def config_hash(doc):
    """SHA-256 of the canonical JSON serialization of the raw config."""
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _number(value):
    if isinstance(value, str):
        return _ANGLES[value]
    return float(value)


def _interval(pair):
    return (_number(pair[0]), _number(pair[1]))


def _point(values):
    return np.array([_number(v) for v in values], dtype=float)


def build_geometry(spec):
    """Resolve the config geometry entry into a GeometrySpec."""
    if isinstance(spec, str):
        return catalog.get_geometry(spec)
    n = spec["base_dim"]
    m = spec["fiber_dim"]
    table = spec["table"]
    if len(table) != m or any(len(row) != m for row in table):
        raise ConfigError(f"coefficient table must be {m}x{m}x{n} for this geometry")
    if any(len(cell) != n for row in table for cell in row):
        raise ConfigError(f"coefficient table must be {m}x{m}x{n} for this geometry")
    metric = spec.get("metric")
    if metric is not None and (len(metric) != n or any(len(row) != n for row in metric)):
        raise ConfigError(f"metric must be an {n}x{n} expression table")
    periods = spec.get("periods")
    if periods is not None:
        if len(periods) != n:
            raise ConfigError(f"periods must list {n} entries")
        periods = tuple(None if p is None else _number(p) for p in periods)
    region = spec.get("region")
    if region is not None:
        if len(region) != n:
            raise ConfigError(f"region must list {n} intervals")
        region = tuple(_interval(pair) for pair in region)
    try:
        return catalog.GeometrySpec(
            "custom",
            table,
            metric_sources=metric,
            periods=periods,
            region=region,
            description="expression-defined geometry",
        )
    except ExpressionSyntaxError as exc:
        raise ConfigError(f"bad expression in geometry: {exc}") from exc


def _build_path(spec):
    domain = _interval(spec["domain"])
    try:
        return Path.from_expressions(domain, spec["components"], spec.get("velocities"))
    except ExpressionSyntaxError as exc:
        raise ConfigError(f"bad expression in path: {exc}") from exc


def _build_map(spec):
    domain = tuple(_interval(pair) for pair in spec["domain"])
    try:
        return TwoParamMap.from_expressions(domain, spec["components"])
    except ExpressionSyntaxError as exc:
        raise ConfigError(f"bad expression in map: {exc}") from exc


def _build_section(spec):
    try:
        return SectionAlongPath.from_expressions(spec["components"])
    except ExpressionSyntaxError as exc:
        raise ConfigError(f"bad expression in section: {exc}") from exc


def _check_dims(geo, *, path=None, eta=None, section=None):
    n = geo.connection.chart.base_dim
    m = geo.connection.chart.fiber_dim
    if path is not None and path.dimension != n:
        raise ConfigError(f"path has {path.dimension} components, geometry expects {n}")
    if eta is not None and eta.dimension != n:
        raise ConfigError(f"map has {eta.dimension} components, geometry expects {n}")
    if section is not None and section.dimension != m:
        raise ConfigError(f"section has {section.dimension} components, fiber has {m}")


def _task_transport(geo, task, rtol, atol, fixed_step, seed):
    fun = connection_functional(geo.connection)
    path = _build_path(task["path"])
    _check_dims(geo, path=path)
    s = _number(task["from"])
    t = _number(task["to"])
    result = transport_matrix(fun, path, s, t, rtol=rtol, atol=atol, fixed_step=fixed_step)
    out = {
        "H": result.matrix.tolist(),
        "est_error": float(result.est_error),
        "from": s,
        "to": t,
    }
    if "apply_to" in task:
        vec = _point(task["apply_to"])
        if vec.size != geo.connection.chart.fiber_dim:
            raise ConfigError("apply_to vector does not match the fiber dimension")
        out["v_out"] = apply_transport(result, vec).tolist()
    return out


def _task_derivation(geo, task, rtol, atol, fixed_step, seed):
    fun = connection_functional(geo.connection)
    path = _build_path(task["path"])
    section = _build_section(task["section"])
    _check_dims(geo, path=path, section=section)
    s = _number(task["at"])
    eps = tuple(float(e) for e in task.get("eps", (1e-2, 1e-3, 1e-4)))
    limit = derivation_limit(fun, path, section, s, eps_sequence=eps)
    order = limit.fitted_order
    return {
        "D_analytic": limit.analytic.tolist(),
        "D_limit": limit.components.tolist(),
        "limit_defect": float(np.max(np.abs(limit.components - limit.analytic))),
        "fitted_order": None if order is None else float(order),
        "converged": bool(limit.converged),
    }


def _task_torsion(geo, task, rtol, atol, fixed_step, seed):
    conn = geo.connection
    fun = connection_functional(conn)
    eta = _build_map(task["map"])
    _check_dims(geo, eta=eta)
    s, t = (_number(v) for v in task["at"])
    vec = torsion_vector(fun, eta, s, t)
    out = {"T": vec.components.tolist()}
    if conn.chart.base_dim == conn.chart.fiber_dim:
        tens = torsion_tensor(conn, eta.point(s, t))
        out["T_tensor"] = tens.values.tolist()
        contracted = contract_torsion(tens, eta.partial_s(s, t), eta.partial_t(s, t))
        out["T_contracted"] = contracted.tolist()
    return out


def _task_curvature(geo, task, rtol, atol, fixed_step, seed):
    conn = geo.connection
    fun = connection_functional(conn)
    eta = _build_map(task["map"])
    _check_dims(geo, eta=eta)
    s, t = (_number(v) for v in task["at"])
    matrix = curvature_matrix(fun, eta, s, t, h=task.get("family_step"))
    point = eta.point(s, t)
    tens = curvature_tensor(conn, point)
    contracted = contract_curvature(tens, eta.partial_s(s, t), eta.partial_t(s, t))
    return {
        "R": tens.values.tolist(),
        "R_matrix": matrix.matrix.tolist(),
        "at_point": point.tolist(),
        "contraction_defect": float(np.max(np.abs(matrix.matrix - contracted))),
    }


def _region_arg(geo, task):
    if "region" in task:
        region = tuple(_interval(pair) for pair in task["region"])
        if len(region) != geo.connection.chart.base_dim:
            raise ConfigError("region dimension does not match the geometry")
        return region
    return geo.region


def _task_certify_flat(geo, task, rtol, atol, fixed_step, seed):
    conn = geo.connection
    region = _region_arg(geo, task)
    resolution = tuple(task.get("resolution", (5,) * len(region)))
    cert = flatness_certificate(conn, region, resolution, threshold=task.get("threshold"))
    return {
        "verdict": cert.verdict,
        "max_curvature_norm": float(cert.max_curvature_norm),
        "threshold": float(cert.threshold),
    }


def _task_build_frame(geo, task, rtol, atol, fixed_step, seed):
    conn = geo.connection
    region = _region_arg(geo, task)
    resolution = tuple(task.get("resolution", (5,) * len(region)))
    basepoint = _point(task["basepoint"])
    axis_order = task.get("axis_order")
    built = build_flat_frame(
        conn,
        basepoint,
        region,
        resolution,
        axis_order=None if axis_order is None else tuple(axis_order),
        seed=seed,
    )
    points = [_point(p) for p in task.get("evaluate_at", [task["basepoint"]])]
    frames = np.stack([built.frame.matrix(p) for p in points])
    return {
        "basepoint": [float(v) for v in built.basepoint],
        "residual": float(built.residual),
        "evaluated_at": [p.tolist() for p in points],
        "frame": frames.tolist(),
    }


def _task_holonomy(geo, task, rtol, atol, fixed_step, seed):
    conn = geo.connection
    fun = connection_functional(conn)
    loop = _build_path(task["loop"])
    _check_dims(geo, path=loop)
    result = loop_holonomy(
        fun, loop, periods=geo.periods, rtol=rtol, atol=atol, fixed_step=fixed_step
    )
    out = {"H": result.matrix.tolist(), "est_error": float(result.est_error)}
    # the rotation angle is frame-dependent: only report it when the scenario
    # supplies a metric to orthonormalize against
    if conn.chart.fiber_dim == 2 and geo.has_metric and task.get("use_metric", True):
        base = loop.point(loop.domain[0])
        out["angle"] = float(rotation_angle(result.matrix, metric=geo.metric(base)))
        out["angle_frame"] = "metric-orthonormal"
    return out


def _task_verify_props(geo, task, rtol, atol, fixed_step, seed):
    conn = geo.connection
    fun = connection_functional(conn)
    n = conn.chart.base_dim
    m = conn.chart.fiber_dim
    gen = sampling.generator(seed)
    trials = int(task.get("trials", 5))
    region = geo.region
    checks = {}

    worst = 0.0
    for _ in range(trials):
        path = sampling.random_smooth_path(gen, region)
        params = np.sort(sampling.random_parameters(gen, path.domain, 3))
        s, u, t = (float(v) for v in params)
        h_su = transport_matrix(fun, path, s, u, rtol=rtol, atol=atol).matrix
        h_ut = transport_matrix(fun, path, u, t, rtol=rtol, atol=atol).matrix
        h_st = transport_matrix(fun, path, s, t, rtol=rtol, atol=atol).matrix
        h_ts = transport_matrix(fun, path, t, s, rtol=rtol, atol=atol).matrix
        worst = max(worst, float(np.max(np.abs(h_ut @ h_su - h_st))))
        worst = max(worst, float(np.max(np.abs(h_ts @ h_st - np.eye(m)))))
    checks["group_laws"] = {"defect": worst, "threshold": 1e-7, "pass": worst < 1e-7}

    converged = True
    orders = []
    for _ in range(max(1, trials // 2)):
        path = sampling.random_smooth_path(gen, region)
        section = sampling.random_section(gen, m)
        a, b = path.domain
        s = float(a + (0.3 + 0.4 * gen.random()) * (b - a))
        limit = derivation_limit(fun, path, section, s)
        converged = converged and limit.converged
        if limit.fitted_order is not None:
            orders.append(float(limit.fitted_order))
    checks["derivation_order"] = {
        "order": min(orders) if orders else None,
        "threshold": 0.9,
        "pass": bool(converged),
    }

    if n == m:
        eta = sampling.random_two_param_map(gen, region)
        (sa, sb), (ta, tb) = eta.domain
        pts = [
            (sa + 0.5 * (sb - sa), ta + 0.5 * (tb - ta)),
            (sa + 0.35 * (sb - sa), ta + 0.65 * (tb - ta)),
        ]
        defect = float(curvature_contraction_defect(conn, eta, pts))
        checks["curvature_contraction"] = {
            "defect": defect,
            "threshold": 1e-5,
            "pass": defect < 1e-5,
        }
        worst_t = 0.0
        for s, t in pts:
            vec = torsion_vector(fun, eta, s, t).components
            tens = torsion_tensor(conn, eta.point(s, t))
            contracted = contract_torsion(tens, eta.partial_s(s, t), eta.partial_t(s, t))
            worst_t = max(worst_t, float(np.max(np.abs(vec - contracted))))
        checks["torsion_contraction"] = {
            "defect": worst_t,
            "threshold": 1e-7,
            "pass": worst_t < 1e-7,
        }

    checks["all_pass"] = all(
        entry["pass"] for entry in checks.values() if isinstance(entry, dict)
    )
    return checks


_TASKS = {
    "transport": _task_transport,
    "derivation": _task_derivation,
    "torsion": _task_torsion,
    "curvature": _task_curvature,
    "certify-flat": _task_certify_flat,
    "build-frame": _task_build_frame,
    "holonomy": _task_holonomy,
    "verify-props": _task_verify_props,
}


def run_scenario(doc, *, seed=None, fixed_step=None):
    """Validate and execute a scenario document; return the report dict.

    ``seed`` and ``fixed_step`` override the corresponding config entries
    (they back the --seed and --fixed-step command-line flags).
    """
    validate_config(doc)
    digest = config_hash(doc)
    geo = build_geometry(doc["geometry"])
    integ = doc.get("integrator", {})
    rtol = float(integ.get("rtol", DEFAULT_RTOL))
    atol = float(integ.get("atol", DEFAULT_ATOL))
    if fixed_step is None:
        fixed_step = integ.get("fixed_step")
    if fixed_step is not None:
        fixed_step = float(fixed_step)
    if seed is None:
        seed = int(doc.get("seed", 0))
    task = doc["task"]
    runner = _TASKS[task["name"]]
    results = runner(geo, task, rtol, atol, fixed_step, seed)
    return {
        "schema_version": SCHEMA_VERSION,
        "backend": kernels.BACKEND,
        "config_sha256": digest,
        "geometry": geo.name,
        "task": task["name"],
        "status": "ok",
        "results": results,
    }


def error_report(doc, exc):
    """Build the report document for a failed run."""
    report = {
        "schema_version": SCHEMA_VERSION,
        "backend": kernels.BACKEND,
        "status": "error",
        "error": {"type": type(exc).__name__, "message": str(exc)},
    }
    if isinstance(doc, dict):
        try:
            report["config_sha256"] = config_hash(doc)
        except (TypeError, ValueError):
            pass
        task = doc.get("task")
        if isinstance(task, dict) and isinstance(task.get("name"), str):
            report["task"] = task["name"]
    return report


_INDEX_LETTERS = {
    "H": ("i", "j"),
    "R": ("i", "j", "a", "b"),
    "R_matrix": ("i", "j"),
    "T": ("i",),
    "T_tensor": ("i", "j", "k"),
    "T_contracted": ("i",),
    "D_analytic": ("i",),
    "D_limit": ("i",),
    "v_out": ("i",),
    "frame": ("p", "i", "j"),
    "basepoint": ("a",),
    "at_point": ("a",),
    "evaluated_at": ("p", "a"),
}
_DEFAULT_LETTERS = ("i", "j", "a", "b", "k", "l")


def _csv_value(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _flatten(key, value, letters, rows):
    if isinstance(value, list):
        letter = letters[0] if letters else _DEFAULT_LETTERS[-1]
        for pos, item in enumerate(value, start=1):
            _flatten(f"{key}[{letter}={pos}]", item, letters[1:], rows)
    elif isinstance(value, dict):
        for sub in sorted(value):
            _flatten(f"{key}.{sub}", value[sub], letters, rows)
    else:
        rows.append((key, _csv_value(value)))


def render_report(report, fmt="json"):
    """Serialize a report dict to its output text (JSON or CSV)."""
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2) + "\n"
    if fmt != "csv":
        raise ConfigError(f"unknown output format {fmt!r}")
    rows = []
    for key in sorted(report):
        if key == "results":
            continue
        _flatten(key, report[key], (), rows)
    for name in sorted(report.get("results", {})):
        letters = _INDEX_LETTERS.get(name, _DEFAULT_LETTERS)
        _flatten(name, report["results"][name], letters, rows)
    import csv as _csv

    buf = io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(("key", "value"))
    writer.writerows(rows)
    return buf.getvalue()
