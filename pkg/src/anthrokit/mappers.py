"""Polynomial regressors between attribute scores, measurements, and shape.

A mapper is a least-squares polynomial fit from a raw input vector (any
combination of mean attribute scores, height, weight, circumferences, or
shape coefficients) to either shape coefficients or attribute scores. Height
enters in centimeters and weight as its cube root; data files stay in
physical units (meters, kilograms) and the transform happens inside the
mapper. Monomial ordering is a frozen contract: constant, linear terms in
input order, then pair products x_i * x_j for i <= j in lexicographic order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    DimensionMismatchError,
    FormatError,
    InvalidValueError,
    RankDeficientError,
)

DEFAULT_RIDGE = 1e-6
SCORE_MIN, SCORE_MAX = 1.0, 5.0

# Channel name -> column count ("attributes" and "betas" are vector channels,
# the rest are scalars). Order inside a spec is the raw input layout.
SCALAR_CHANNELS = ("height_cm", "cbrt_weight", "chest_m", "waist_m", "hip_m")
VECTOR_CHANNELS = ("attributes", "betas")

_VARIANT_LETTERS = {
    "A": ("attributes",),
    "H": ("height_cm",),
    "W": ("cbrt_weight",),
    "C": ("chest_m", "waist_m", "hip_m"),
}


@dataclass(frozen=True)
class RatingMatrix:
    """Raw Likert scores, shape (subjects, attributes, raters), values 1..5."""

    scores: np.ndarray
    attribute_names: tuple[str, ...]
    gender: str = "neutral"

    def __post_init__(self):
        s = np.asarray(self.scores)
        if s.ndim != 3:
            raise DimensionMismatchError(f"scores must be (N, A, K), got {s.shape}")
        if s.shape[1] != len(self.attribute_names):
            raise DimensionMismatchError(
                f"{s.shape[1]} attribute columns vs {len(self.attribute_names)} names"
            )
        if s.shape[1] < 1 or s.shape[2] < 1:
            raise InvalidValueError("need at least one attribute and one rater")
        if not np.isin(s, (1, 2, 3, 4, 5)).all():
            raise InvalidValueError("ratings must be integers in {1..5}")
        object.__setattr__(self, "scores", s.astype(np.int64))


def aggregate_ratings(ratings: RatingMatrix) -> np.ndarray:
    """Per-subject, per-attribute mean over raters; shape (N, A) in [1, 5]."""
    return ratings.scores.mean(axis=2)


@dataclass(frozen=True)
class FeatureSpec:
    """Input layout and polynomial degree of a mapper."""

    channels: tuple[str, ...]
    channel_dims: tuple[int, ...]
    degree: int = 2

    def __post_init__(self):
        if not self.channels:
            raise InvalidValueError("feature spec needs at least one channel")
        if len(self.channels) != len(self.channel_dims):
            raise DimensionMismatchError("channels and channel_dims differ in length")
        if self.degree not in (1, 2):
            raise InvalidValueError(f"degree must be 1 or 2, got {self.degree}")
        for ch, dim in zip(self.channels, self.channel_dims):
            if ch in SCALAR_CHANNELS and dim != 1:
                raise InvalidValueError(f"channel '{ch}' is scalar, got dim {dim}")
            if ch not in SCALAR_CHANNELS and ch not in VECTOR_CHANNELS:
                raise InvalidValueError(f"unknown channel '{ch}'")

    @property
    def input_dim(self) -> int:
        return int(sum(self.channel_dims))

    @property
    def num_poly_features(self) -> int:
        m, d = self.input_dim, self.degree
        return 1 + m + (m * (m + 1) // 2 if d == 2 else 0)


def variant_spec(name: str, attribute_count: int = 0, beta_count: int = 0,
                 degree: int = 2) -> FeatureSpec:
    """FeatureSpec for a named variant: A2S, H2S, ..., AHWC2S, or S2A."""
    if name == "S2A":
        if beta_count < 1:
            raise InvalidValueError("S2A needs beta_count >= 1")
        return FeatureSpec(("betas",), (beta_count,), degree)
    if not name.endswith("2S") or not name[:-2]:
        raise InvalidValueError(f"unknown mapper variant '{name}'")
    channels: list[str] = []
    dims: list[int] = []
    for letter in name[:-2]:
        if letter not in _VARIANT_LETTERS:
            raise InvalidValueError(f"unknown variant letter '{letter}' in '{name}'")
        for ch in _VARIANT_LETTERS[letter]:
            channels.append(ch)
            if ch == "attributes":
                if attribute_count < 1:
                    raise InvalidValueError(f"variant '{name}' needs attribute_count")
                dims.append(attribute_count)
            else:
                dims.append(1)
    return FeatureSpec(tuple(channels), tuple(dims), degree)


def variant_output_kind(name: str) -> str:
    return "attribute_scores" if name == "S2A" else "betas"


def poly_features(raw: np.ndarray, degree: int) -> np.ndarray:
    """Monomials of total degree <= degree in the frozen contract order."""
    x = np.asarray(raw, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    n, m = x.shape
    cols = [np.ones((n, 1)), x]
    if degree == 2:
        prods = [x[:, i:i + 1] * x[:, j:j + 1] for i in range(m) for j in range(i, m)]
        if prods:
            cols.append(np.concatenate(prods, axis=1))
    elif degree != 1:
        raise InvalidValueError(f"degree must be 1 or 2, got {degree}")
    out = np.concatenate(cols, axis=1)
    return out[0] if single else out


def transform_raw(spec: FeatureSpec, raw: np.ndarray) -> np.ndarray:
    """Apply per-channel unit transforms (m -> cm height, kg -> cbrt weight)."""
    x = np.atleast_2d(np.asarray(raw, dtype=np.float64)).copy()
    if x.shape[1] != spec.input_dim:
        raise DimensionMismatchError(
            f"raw input has {x.shape[1]} columns, spec expects {spec.input_dim}"
        )
    col = 0
    for ch, dim in zip(spec.channels, spec.channel_dims):
        if ch == "height_cm":
            x[:, col] = x[:, col] * 100.0
        elif ch == "cbrt_weight":
            x[:, col] = np.cbrt(x[:, col])
        col += dim
    return x


@dataclass(frozen=True)
class PolyMapper:
    """Fitted polynomial regressor; immutable and thread-safe."""

    spec: FeatureSpec
    weights: np.ndarray       # (num_poly_features, output_dim)
    output_kind: str          # "betas" | "attribute_scores"
    gender: str = "neutral"
    attribute_names: tuple[str, ...] = field(default=())
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != self.spec.num_poly_features:
            raise DimensionMismatchError(
                f"weights shape {w.shape} does not match "
                f"{self.spec.num_poly_features} polynomial features"
            )
        if self.output_kind not in ("betas", "attribute_scores"):
            raise InvalidValueError(f"bad output_kind '{self.output_kind}'")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def input_dim(self) -> int:
        return self.spec.input_dim

    @property
    def output_dim(self) -> int:
        return int(self.weights.shape[1])


def fit_mapper(inputs: np.ndarray, targets: np.ndarray, spec: FeatureSpec,
               ridge: float = DEFAULT_RIDGE, output_kind: str = "betas",
               gender: str = "neutral",
               attribute_names: tuple[str, ...] = ()) -> PolyMapper:
    """Least-squares fit of targets = poly(transform(inputs)) @ W.

    ridge == 0 solves by QR and raises on rank deficiency; ridge > 0 solves
    the regularized normal equations. Both are deterministic.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    phi = poly_features(transform_raw(spec, inputs), spec.degree)
    n, p = phi.shape
    if targets.shape[0] != n:
        raise DimensionMismatchError(f"{n} input rows vs {targets.shape[0]} target rows")
    if ridge < 0:
        raise InvalidValueError("ridge must be >= 0")

    if ridge == 0.0:
        if n < p:
            raise RankDeficientError(
                f"{n} rows cannot determine {p} polynomial coefficients; "
                "add rows or use ridge > 0",
                rows=n, features=p,
            )
        q, r = np.linalg.qr(phi)
        diag = np.abs(np.diag(r))
        tol = diag.max() * max(n, p) * np.finfo(np.float64).eps
        if diag.min() <= tol:
            raise RankDeficientError(
                "design matrix is rank deficient; use ridge > 0",
                rows=n, features=p,
            )
        w = solve_triangular(r, q.T @ targets)
    else:
        gram = phi.T @ phi + ridge * np.eye(p)
        w = np.linalg.solve(gram, phi.T @ targets)

    return PolyMapper(spec=spec, weights=w, output_kind=output_kind, gender=gender,
                      attribute_names=tuple(attribute_names), ridge=float(ridge))


def apply_mapper(mapper: PolyMapper, raw: np.ndarray) -> np.ndarray:
    """Predictions for raw inputs (single vector or row matrix)."""
    raw = np.asarray(raw, dtype=np.float64)
    single = raw.ndim == 1
    phi = poly_features(transform_raw(mapper.spec, raw), mapper.spec.degree)
    out = phi @ mapper.weights
    return out[0] if single else out


def mapper_jacobian(mapper: PolyMapper, raw: np.ndarray) -> np.ndarray:
    """d(prediction)/d(raw input) at one raw input vector, shape (out, m)."""
    raw = np.asarray(raw, dtype=np.float64).reshape(-1)
    x = transform_raw(mapper.spec, raw)[0]
    m = mapper.input_dim
    p = mapper.spec.num_poly_features
    dphi = np.zeros((p, m))
    dphi[1:m + 1] = np.eye(m)
    if mapper.spec.degree == 2:
        row = m + 1
        for i in range(m):
            for j in range(i, m):
                dphi[row, i] += x[j]
                dphi[row, j] += x[i]
                row += 1
    # chain through the unit transforms
    scale = np.ones(m)
    col = 0
    for ch, dim in zip(mapper.spec.channels, mapper.spec.channel_dims):
        if ch == "height_cm":
            scale[col] = 100.0
        elif ch == "cbrt_weight":
            w = raw[col]
            scale[col] = (1.0 / 3.0) * w ** (-2.0 / 3.0) if w > 0 else 0.0
        col += dim
    return (mapper.weights.T @ dphi) * scale[None, :]


def predict_attribute_scores(mapper: PolyMapper, beta: np.ndarray,
                             clamp: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Attribute scores for a shape vector, clamped to [1, 5].

    Returns (scores, clamped_mask); the mask marks entries the clamp changed.
    """
    if mapper.output_kind != "attribute_scores" or "betas" not in mapper.spec.channels:
        raise InvalidValueError("mapper does not map betas to attribute scores")
    rawpred = apply_mapper(mapper, beta)
    if not clamp:
        return rawpred, np.zeros(rawpred.shape, dtype=bool)
    clipped = np.clip(rawpred, SCORE_MIN, SCORE_MAX)
    return clipped, clipped != rawpred


# ---------------------------------------------------------------------------
# Serialization: JSON manifest + little-endian float64 weight buffer


def save_mapper(mapper: PolyMapper, outdir: str | Path) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "poly-mapper",
        "version": 1,
        "channels": list(mapper.spec.channels),
        "channel_dims": list(mapper.spec.channel_dims),
        "degree": mapper.spec.degree,
        "output_kind": mapper.output_kind,
        "output_dim": mapper.output_dim,
        "gender": mapper.gender,
        "attribute_names": list(mapper.attribute_names),
        "ridge": mapper.ridge,
        "weights": {
            "file": "weights.f64",
            "dtype": "float64",
            "shape": [int(s) for s in mapper.weights.shape],
        },
    }
    (outdir / "mapper.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (outdir / "weights.f64").write_bytes(mapper.weights.astype("<f8").tobytes())


def load_mapper(path: str | Path) -> PolyMapper:
    path = Path(path)
    manifest_path = path / "mapper.json" if path.is_dir() else path
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read mapper manifest: {exc}", path=str(manifest_path))
    if manifest.get("format") != "poly-mapper":
        raise FormatError("not a poly-mapper manifest", path=str(manifest_path))
    spec = FeatureSpec(tuple(manifest["channels"]), tuple(manifest["channel_dims"]),
                       manifest["degree"])
    wdesc = manifest["weights"]
    raw = (manifest_path.parent / wdesc["file"]).read_bytes()
    shape = tuple(wdesc["shape"])
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise FormatError(
            f"weight buffer has {len(raw)} bytes, expected {expected}",
            path=str(manifest_path.parent / wdesc["file"]),
        )
    weights = np.frombuffer(raw, dtype="<f8").reshape(shape)
    return PolyMapper(
        spec=spec,
        weights=weights,
        output_kind=manifest["output_kind"],
        gender=manifest.get("gender", "neutral"),
        attribute_names=tuple(manifest.get("attribute_names", ())),
        ridge=float(manifest.get("ridge", DEFAULT_RIDGE)),
    )


# ---------------------------------------------------------------------------
# Subject-table helpers: build raw input rows for a variant


def variant_input_rows(spec: FeatureSpec, measurements: np.ndarray | None,
                       attributes: np.ndarray | None,
                       betas: np.ndarray | None) -> np.ndarray:
    """Assemble raw input columns for a spec from subject-table arrays.

    ``measurements`` columns are (height, weight, chest, waist, hip) in
    physical units, matching the subject CSV layout.
    """
    meas_col = {"height_cm": 0, "cbrt_weight": 1, "chest_m": 2, "waist_m": 3, "hip_m": 4}
    cols = []
    for ch, dim in zip(spec.channels, spec.channel_dims):
        if ch == "attributes":
            if attributes is None or attributes.shape[1] != dim:
                raise DimensionMismatchError(
                    f"spec expects {dim} attribute columns",
                    available=0 if attributes is None else int(attributes.shape[1]),
                )
            cols.append(attributes)
        elif ch == "betas":
            if betas is None or betas.shape[1] != dim:
                raise DimensionMismatchError(f"spec expects {dim} beta columns")
            cols.append(betas)
        else:
            if measurements is None:
                raise DimensionMismatchError(f"spec channel '{ch}' needs measurements")
            col = measurements[:, meas_col[ch]]
            if np.isnan(col).any():
                raise InvalidValueError(f"channel '{ch}' has missing values")
            cols.append(col[:, None])
    return np.concatenate(cols, axis=1)
