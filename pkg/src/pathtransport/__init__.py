"""Numerical engine and CLI for linear transports along paths in vector
bundles: transport matrices by ODE integration, derivations along paths,
torsion and curvature operators, flat-frame construction, and holonomy.
"""

from .catalog import (
    GeometrySpec,
    cartesian_in_polar_frame,
    gauge_rotation_frame,
    get_geometry,
    list_geometries,
)
from .curvature import (
    CurvatureMatrix,
    CurvatureTensor,
    TorsionTensor,
    TorsionVector,
    contract_curvature,
    contract_torsion,
    curvature_contraction_defect,
    curvature_matrix,
    curvature_tensor,
    torsion_tensor,
    torsion_vector,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    EvaluationError,
    ExpressionEvaluationError,
    ExpressionSyntaxError,
    FlatnessError,
    InvertibilityError,
    NotALoopError,
    PathTransportError,
    ShapeError,
    TangentBundleError,
)
from .expressions import Expression, parse_expression
from .flatframe import (
    FlatFrameResult,
    FlatnessCertificate,
    build_flat_frame,
    coefficients_from_zero_frame,
    flatness_certificate,
    holonomic_obstruction,
    residual_coefficients,
)
from .geometry import (
    ChartSpec,
    CoefficientFunctional,
    ConnectionCoefficients,
    ConnectionField,
    FrameField,
    Path,
    SectionAlongPath,
    TwoParamMap,
    connection_functional,
    frame_transform_coefficients,
    path_velocity,
    transformed_functional,
)
from .scenarios import render_report, run_scenario, validate_config
from .transport import (
    DerivationLimitResult,
    DerivationValue,
    TransportMatrix,
    apply_transport,
    derivation_analytic,
    derivation_limit,
    loop_holonomy,
    rotation_angle,
    transport_matrix,
    transported_section,
)

__version__ = "0.1.0"

__all__ = [
    "ChartSpec",
    "CoefficientFunctional",
    "ConnectionCoefficients",
    "ConnectionField",
    "CurvatureMatrix",
    "CurvatureTensor",
    "DerivationLimitResult",
    "DerivationValue",
    "Expression",
    "FlatFrameResult",
    "FlatnessCertificate",
    "FrameField",
    "GeometrySpec",
    "Path",
    "SectionAlongPath",
    "TorsionTensor",
    "TorsionVector",
    "TransportMatrix",
    "TwoParamMap",
    "apply_transport",
    "build_flat_frame",
    "cartesian_in_polar_frame",
    "coefficients_from_zero_frame",
    "connection_functional",
    "contract_curvature",
    "contract_torsion",
    "curvature_contraction_defect",
    "curvature_matrix",
    "curvature_tensor",
    "derivation_analytic",
    "derivation_limit",
    "flatness_certificate",
    "frame_transform_coefficients",
    "gauge_rotation_frame",
    "get_geometry",
    "holonomic_obstruction",
    "list_geometries",
    "loop_holonomy",
    "parse_expression",
    "path_velocity",
    "render_report",
    "residual_coefficients",
    "rotation_angle",
    "run_scenario",
    "torsion_tensor",
    "torsion_vector",
    "transformed_functional",
    "transport_matrix",
    "transported_section",
    "validate_config",
    # errors
    "PathTransportError",
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "EvaluationError",
    "ExpressionEvaluationError",
    "ExpressionSyntaxError",
    "FlatnessError",
    "InvertibilityError",
    "NotALoopError",
    "ShapeError",
    "TangentBundleError",
]
