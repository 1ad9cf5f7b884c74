"""Exception types shared across the toolkit.

Every domain error carries a short machine-readable ``code`` plus an optional
``context`` dict; the CLI serializes these to JSON on stderr so callers in
other languages can match on the code instead of parsing messages.
"""

from __future__ import annotations

from typing import Any


class ToolkitError(Exception):
    """Base class for all domain errors."""

    code = "error"

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = {k: v for k, v in context.items() if v is not None}

    def to_json_dict(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "context": self.context}


class FormatError(ToolkitError):
    """Malformed archive, manifest, or data file."""

    code = "format_error"


class DimensionMismatchError(ToolkitError):
    """Array shape or length does not match the expected contract."""

    code = "dimension_mismatch"


class InvalidIndexError(ToolkitError):
    """Vertex/triangle index out of range."""

    code = "invalid_index"


class MeshValidationError(ToolkitError):
    """Mesh violates a structural invariant (degenerate triangle, bad index)."""

    code = "mesh_invalid"


class OpenMeshError(ToolkitError):
    """Operation requires a closed mesh but a boundary edge was found."""

    code = "open_mesh"


class WindingError(ToolkitError):
    """Signed volume is near zero or negative for a consistently wound mesh."""

    code = "inconsistent_winding"


class EmptySectionError(ToolkitError):
    """A slicing plane does not intersect the mesh."""

    code = "empty_section"


class RankDeficientError(ToolkitError):
    """Least-squares system is rank deficient and no ridge was requested."""

    code = "rank_deficient"


class DivergenceError(ToolkitError):
    """Optimizer produced a non-finite loss."""

    code = "divergence"


class InvalidValueError(ToolkitError):
    """A value violates a domain invariant (range, positivity, ...)."""

    code = "invalid_value"
