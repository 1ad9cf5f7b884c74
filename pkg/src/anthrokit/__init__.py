"""Anthropometric measurement, attribute/shape mapping, and fitting toolkit."""

__version__ = "0.1.0"

from .errors import ToolkitError
from .mesh import TriangleMesh, subdivide
from .model import (
    BodyModel,
    LandmarkSet,
    load_model,
    save_model,
    shaped_mesh,
    shaped_mesh_jacobian,
    shaped_vertices,
)
from .measurements import (
    MEAN_BODY_DENSITY,
    MeasurementGradients,
    MeasurementSet,
    PlaneSection,
    circumference,
    height,
    measure,
    measure_gradients,
    plane_section,
    signed_volume,
    weight,
)
from .mappers import (
    FeatureSpec,
    PolyMapper,
    RatingMatrix,
    aggregate_ratings,
    apply_mapper,
    fit_mapper,
    load_mapper,
    poly_features,
    predict_attribute_scores,
    save_mapper,
    variant_spec,
)
from .fitting import FitConfig, FitResult, FitTargets, fit_shape, loss_gradient, target_loss
from .metrics import (
    AttributeAccuracy,
    PointRegressor,
    ShapeErrorReport,
    build_point_regressor,
    measurement_mae,
    p2p_error,
    s2a_accuracy,
    transfer_point_regressor,
    v2v_error,
)
from .curation import (
    EmbeddingSubject,
    MatchReport,
    SubjectRecord,
    balance_sample,
    bmi_weighted_pick,
    match_identities,
    pairwise_similarity,
)
from .fixture import capsule_person, synthetic_population

__all__ = [
    "AttributeAccuracy",
    "BodyModel",
    "EmbeddingSubject",
    "FeatureSpec",
    "FitConfig",
    "FitResult",
    "FitTargets",
    "LandmarkSet",
    "MEAN_BODY_DENSITY",
    "MatchReport",
    "MeasurementGradients",
    "MeasurementSet",
    "PlaneSection",
    "PointRegressor",
    "PolyMapper",
    "RatingMatrix",
    "ShapeErrorReport",
    "SubjectRecord",
    "ToolkitError",
    "TriangleMesh",
    "__version__",
    "aggregate_ratings",
    "apply_mapper",
    "balance_sample",
    "bmi_weighted_pick",
    "build_point_regressor",
    "capsule_person",
    "circumference",
    "fit_mapper",
    "fit_shape",
    "height",
    "load_mapper",
    "load_model",
    "loss_gradient",
    "match_identities",
    "measure",
    "measure_gradients",
    "measurement_mae",
    "p2p_error",
    "pairwise_similarity",
    "plane_section",
    "poly_features",
    "predict_attribute_scores",
    "s2a_accuracy",
    "save_mapper",
    "save_model",
    "shaped_mesh",
    "shaped_mesh_jacobian",
    "shaped_vertices",
    "signed_volume",
    "subdivide",
    "synthetic_population",
    "target_loss",
    "transfer_point_regressor",
    "v2v_error",
    "variant_spec",
    "weight",
]
