"""Scenario documents: validation, execution, rendering."""

import copy
import json

import numpy as np
import pytest

from pathtransport import (
    ConfigError,
    TwoParamMap,
    curvature_tensor,
    get_geometry,
    run_scenario,
)
from pathtransport.scenarios import (
    build_geometry,
    config_hash,
    error_report,
    render_report,
    validate_config,
)

POLAR_TABLE = [
    [["0", "0"], ["0", "-x1"]],
    [["0", "1/x1"], ["1/x1", "0"]],
]

TRANSPORT_DOC = {
    "geometry": "euclidean-polar",
    "task": {
        "name": "transport",
        "path": {"domain": [0.0, 1.2], "components": ["1.3", "s"]},
        "from": 0.0,
        "to": 1.2,
    },
}


def _doc(**overrides):
    doc = copy.deepcopy(TRANSPORT_DOC)
    doc.update(overrides)
    return doc


class TestValidation:
    def test_minimal_doc_passes(self):
        validate_config(TRANSPORT_DOC)

    def test_missing_geometry(self):
        with pytest.raises(ConfigError, match="<root>"):
            validate_config({"task": TRANSPORT_DOC["task"]})

    def test_unknown_task_name(self):
        doc = _doc()
        doc["task"] = {"name": "teleport"}
        with pytest.raises(ConfigError):
            validate_config(doc)

    def test_extra_property_rejected(self):
        doc = _doc(extra=1)
        with pytest.raises(ConfigError):
            validate_config(doc)

    def test_error_names_the_failing_path(self):
        doc = _doc()
        doc["task"]["from"] = "one"
        with pytest.raises(ConfigError, match="task/from"):
            validate_config(doc)

    def test_integrator_tolerances_positive(self):
        doc = _doc(integrator={"rtol": 0.0})
        with pytest.raises(ConfigError, match="integrator"):
            validate_config(doc)


class TestConfigHash:
    def test_key_order_insensitive(self):
        doc = TRANSPORT_DOC
        reordered = json.loads(json.dumps(doc))
        reordered["task"] = dict(reversed(list(doc["task"].items())))
        assert config_hash(doc) == config_hash(reordered)

    def test_value_sensitivity(self):
        other = _doc(seed=5)
        assert config_hash(TRANSPORT_DOC) != config_hash(other)


class TestBuildGeometry:
    def test_builtin_by_name(self):
        assert build_geometry("sphere").name == "sphere"

    def test_custom_table(self):
        geo = build_geometry(
            {"base_dim": 2, "fiber_dim": 2, "table": POLAR_TABLE}
        )
        assert geo.name == "custom"
        ref = get_geometry("euclidean-polar").connection
        x = np.array([1.4, 0.2])
        np.testing.assert_array_equal(
            geo.connection.coefficients(x), ref.coefficients(x)
        )

    def test_table_shape_mismatch(self):
        with pytest.raises(ConfigError, match="table"):
            build_geometry(
                {"base_dim": 2, "fiber_dim": 2, "table": [[["0", "0"]]]}
            )

    def test_bad_expression(self):
        with pytest.raises(ConfigError, match="bad expression"):
            build_geometry(
                {"base_dim": 1, "fiber_dim": 1, "table": [[["sin("]]]}
            )

    def test_metric_and_periods_checked(self):
        base = {"base_dim": 2, "fiber_dim": 2, "table": POLAR_TABLE}
        with pytest.raises(ConfigError, match="metric"):
            build_geometry({**base, "metric": [["1", "0"]]})
        with pytest.raises(ConfigError, match="periods"):
            build_geometry({**base, "periods": [None]})

    def test_angle_literals_in_periods(self):
        geo = build_geometry(
            {
                "base_dim": 2,
                "fiber_dim": 2,
                "table": POLAR_TABLE,
                "periods": [None, "2pi"],
            }
        )
        assert geo.periods == (None, 2 * np.pi)


class TestTasks:
    def test_transport_report(self):
        report = run_scenario(TRANSPORT_DOC)
        assert report["status"] == "ok"
        assert report["geometry"] == "euclidean-polar"
        assert report["task"] == "transport"
        assert report["schema_version"] == 1
        H = np.array(report["results"]["H"])
        phi = 1.2
        expected = np.array(
            [[np.cos(phi), 1.3 * np.sin(phi)], [-np.sin(phi) / 1.3, np.cos(phi)]]
        )
        np.testing.assert_allclose(H, expected, rtol=0, atol=1e-7)

    def test_custom_table_matches_builtin(self):
        doc = _doc(
            geometry={"base_dim": 2, "fiber_dim": 2, "table": POLAR_TABLE}
        )
        a = run_scenario(TRANSPORT_DOC)["results"]["H"]
        b = run_scenario(doc)["results"]["H"]
        np.testing.assert_allclose(np.array(a), np.array(b), rtol=0, atol=1e-9)

    def test_transport_apply_to(self):
        doc = _doc()
        doc["task"]["apply_to"] = [1.0, 0.0]
        report = run_scenario(doc)
        got = np.array(report["results"]["v_out"])
        H = np.array(report["results"]["H"])
        np.testing.assert_allclose(got, H @ [1.0, 0.0], rtol=0, atol=1e-14)
        doc["task"]["apply_to"] = [1.0, 0.0, 0.0]
        with pytest.raises(ConfigError, match="apply_to"):
            run_scenario(doc)

    def test_transport_angle_literal_endpoint(self):
        doc = _doc()
        doc["task"]["path"]["domain"] = [0.0, "pi"]
        doc["task"]["to"] = "pi"
        report = run_scenario(doc)
        assert report["results"]["to"] == pytest.approx(np.pi)

    def test_path_dimension_mismatch(self):
        doc = _doc()
        doc["task"]["path"]["components"] = ["1.3", "s", "0"]
        with pytest.raises(ConfigError, match="components"):
            run_scenario(doc)

    def test_derivation_report(self):
        doc = {
            "geometry": "euclidean-polar",
            "task": {
                "name": "derivation",
                "path": {"domain": [0.0, 2.0], "components": ["1.0+0.3*sin(s)", "0.7*s"]},
                "section": {"components": ["cos(2*s)", "s"]},
                "at": 1.0,
            },
        }
        results = run_scenario(doc)["results"]
        assert results["converged"] is True
        assert results["fitted_order"] >= 0.9
        assert results["limit_defect"] < 1e-4
        diff = np.array(results["D_limit"]) - np.array(results["D_analytic"])
        assert np.max(np.abs(diff)) == pytest.approx(results["limit_defect"])

    def test_torsion_report(self):
        doc = {
            "geometry": "torsion-constant",
            "task": {
                "name": "torsion",
                "map": {
                    "domain": [[0.0, 1.0], [0.0, 1.0]],
                    "components": ["t", "s"],
                },
                "at": [0.4, 0.6],
            },
        }
        results = run_scenario(doc)["results"]
        np.testing.assert_allclose(results["T"], [1.0, 0.0], rtol=0, atol=1e-12)
        np.testing.assert_allclose(
            results["T_contracted"], results["T"], rtol=0, atol=1e-12
        )
        assert np.array(results["T_tensor"]).shape == (2, 2, 2)

    def test_curvature_report(self):
        doc = {
            "geometry": "sphere",
            "task": {
                "name": "curvature",
                "map": {
                    "domain": [[0.2, 1.4], [0.1, 1.2]],
                    "components": ["0.6+0.5*s+0.1*t", "t+0.2*s"],
                },
                "at": [0.7, 0.5],
                "family_step": 1e-4,
            },
        }
        results = run_scenario(doc)["results"]
        assert results["contraction_defect"] < 1e-5
        eta = TwoParamMap.from_expressions(
            ((0.2, 1.4), (0.1, 1.2)), ["0.6+0.5*s+0.1*t", "t+0.2*s"]
        )
        point = eta.point(0.7, 0.5)
        np.testing.assert_allclose(results["at_point"], point, rtol=0, atol=1e-14)
        expected = curvature_tensor(
            get_geometry("sphere").connection, point
        ).values
        np.testing.assert_allclose(
            np.array(results["R"]), expected, rtol=0, atol=1e-14
        )

    def test_certify_flat_report(self):
        flat = run_scenario(
            {
                "geometry": "euclidean-polar",
                "task": {"name": "certify-flat", "region": [[0.5, 1.5], [0.2, 1.2]]},
            }
        )["results"]
        assert flat["verdict"] == "flat"
        curved = run_scenario(
            {"geometry": "sphere", "task": {"name": "certify-flat"}}
        )["results"]
        assert curved["verdict"] == "not-flat"
        assert curved["max_curvature_norm"] > curved["threshold"]

    def test_build_frame_report(self):
        doc = {
            "geometry": "euclidean-polar",
            "task": {
                "name": "build-frame",
                "basepoint": [1.0, 0.7],
                "region": [[0.5, 1.5], [0.2, 1.2]],
                "resolution": [5, 5],
                "evaluate_at": [[1.0, 0.7], [0.8, 0.4]],
            },
        }
        results = run_scenario(doc)["results"]
        assert results["residual"] < 1e-6
        frames = np.array(results["frame"])
        assert frames.shape == (2, 2, 2)
        np.testing.assert_allclose(frames[0], np.eye(2), rtol=0, atol=1e-9)
        assert results["evaluated_at"] == [[1.0, 0.7], [0.8, 0.4]]

    def test_holonomy_report_with_metric_angle(self):
        doc = {
            "geometry": "sphere",
            "task": {
                "name": "holonomy",
                "loop": {
                    "domain": [0.0, "2pi"],
                    "components": [repr(np.pi / 3), "s"],
                },
            },
        }
        results = run_scenario(doc)["results"]
        assert results["angle_frame"] == "metric-orthonormal"
        # 2*pi*cos(pi/3) = pi, and the angle is reported mod 2*pi
        assert abs(abs(results["angle"]) - np.pi) < 1e-6

    def test_holonomy_angle_suppressed(self):
        doc = {
            "geometry": "sphere",
            "task": {
                "name": "holonomy",
                "loop": {
                    "domain": [0.0, "2pi"],
                    "components": ["1.0", "s"],
                },
                "use_metric": False,
            },
        }
        results = run_scenario(doc)["results"]
        assert "angle" not in results
        doc["geometry"] = {"base_dim": 2, "fiber_dim": 2, "table": POLAR_TABLE,
                           "periods": [None, "2pi"]}
        doc["task"]["use_metric"] = True
        results = run_scenario(doc)["results"]
        assert "angle" not in results  # no metric to orthonormalize against

    def test_verify_props_report(self):
        doc = {
            "geometry": "euclidean-polar",
            "seed": 11,
            "task": {"name": "verify-props", "trials": 3},
        }
        results = run_scenario(doc)["results"]
        assert results["all_pass"] is True
        for key in ("group_laws", "derivation_order",
                    "curvature_contraction", "torsion_contraction"):
            assert results[key]["pass"] is True

    def test_seed_override_reproducible(self):
        doc = {
            "geometry": "euclidean-polar",
            "task": {"name": "verify-props", "trials": 2},
        }
        a = run_scenario(doc, seed=9)
        b = run_scenario(doc, seed=9)
        assert a == b
        c = run_scenario(doc, seed=10)
        assert c["results"]["group_laws"]["defect"] != a["results"]["group_laws"]["defect"]

    def test_fixed_step_override(self):
        a = run_scenario(TRANSPORT_DOC, fixed_step=1e-3)
        b = run_scenario(TRANSPORT_DOC, fixed_step=1e-3)
        assert render_report(a) == render_report(b)
        assert a["results"]["est_error"] == 0.0


class TestRendering:
    def test_json_is_deterministic_and_newline_terminated(self):
        report = run_scenario(TRANSPORT_DOC, fixed_step=1e-3)
        text = render_report(report, "json")
        assert text == render_report(run_scenario(TRANSPORT_DOC, fixed_step=1e-3), "json")
        assert text.endswith("\n")
        assert json.loads(text) == report

    def test_csv_labels_and_values(self):
        doc = {
            "geometry": "sphere",
            "task": {
                "name": "curvature",
                "map": {
                    "domain": [[0.2, 1.4], [0.1, 1.2]],
                    "components": ["0.6+0.5*s+0.1*t", "t+0.2*s"],
                },
                "at": [0.7, 0.5],
            },
        }
        report = run_scenario(doc)
        text = render_report(report, "csv")
        lines = text.splitlines()
        assert lines[0] == "key,value"
        assert any(line.startswith("R[i=1][j=2][a=1][b=2],") for line in lines)
        assert any(line.startswith("R_matrix[i=1][j=1],") for line in lines)
        assert any(line.startswith("at_point[a=1],") for line in lines)
        assert f"backend,{report['backend']}" in lines
        # floats round-trip exactly through repr
        value = dict(l.split(",", 1) for l in lines[1:])["R[i=1][j=2][a=1][b=2]"]
        assert float(value) == report["results"]["R"][0][1][0][1]

    def test_csv_bool_and_null_spelling(self):
        doc = {
            "geometry": "euclidean-polar",
            "task": {
                "name": "derivation",
                "path": {"domain": [0.0, 1.0], "components": ["1.0", "s"]},
                "section": {"components": ["s", "1.0"]},
                "at": 0.5,
            },
        }
        text = render_report(run_scenario(doc), "csv")
        assert "converged,true" in text.splitlines()

    def test_unknown_format(self):
        with pytest.raises(ConfigError, match="format"):
            render_report({"results": {}}, "yaml")


class TestErrorReport:
    def test_engine_error_keeps_task_and_hash(self):
        doc = {
            "geometry": "euclidean-polar",
            "task": {
                "name": "transport",
                "path": {"domain": [0.0, 1.0], "components": ["0.5 - s", "0.0"]},
                "from": 0.0,
                "to": 1.0,
            },
        }
        try:
            run_scenario(doc)
        except Exception as exc:
            report = error_report(doc, exc)
        assert report["status"] == "error"
        assert report["task"] == "transport"
        assert report["config_sha256"] == config_hash(doc)
        assert report["error"]["type"]
        assert report["error"]["message"]

    def test_unusable_doc_still_reports(self):
        report = error_report(["not", "a", "dict"], ConfigError("nope"))
        assert report["status"] == "error"
        assert "config_sha256" not in report
