"""Shape-accuracy metrics: sampled point-to-point, vertex-to-vertex,
measurement MAE, and attribute classification accuracy.

The point-to-point metric compares P area-uniform surface points regressed
from mesh vertices through a sparse barycentric matrix, after correcting for
the translation between the two point clouds. Sampling draws from the
counter-based stream in :mod:`anthrokit.sampling`, so a (topology, P, seed)
triple always reproduces the same regressor bit-for-bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatchError, InvalidValueError
from .mesh import TriangleMesh
from .measurements import MeasurementSet
from .sampling import uniform_stream

DEFAULT_POINTS = 20000


@dataclass(frozen=True)
class PointRegressor:
    """Sparse barycentric map from mesh vertices to canonical surface points.

    Row i regresses point i as ``weights[i] @ vertices[vertex_ids[i]]``;
    weights are non-negative and sum to one.
    """

    vertex_ids: np.ndarray     # (P, 3) int64
    weights: np.ndarray        # (P, 3) float64
    num_vertices: int
    topology_hash: str
    seed: int = 0

    def __post_init__(self):
        ids = np.asarray(self.vertex_ids, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if ids.shape != w.shape or ids.ndim != 2 or ids.shape[1] != 3:
            raise DimensionMismatchError(
                f"vertex_ids {ids.shape} and weights {w.shape} must both be (P, 3)"
            )
        if ids.size and (ids.min() < 0 or ids.max() >= self.num_vertices):
            raise InvalidValueError("regressor references an invalid vertex index")
        if (w < -1e-12).any() or np.abs(w.sum(axis=1) - 1.0).max() > 1e-9:
            raise InvalidValueError("rows must be convex combinations (sum to 1, >= 0)")
        ids.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "vertex_ids", ids)
        object.__setattr__(self, "weights", w)

    @property
    def num_points(self) -> int:
        return int(self.vertex_ids.shape[0])

    def regress(self, vertices: np.ndarray) -> np.ndarray:
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.shape != (self.num_vertices, 3):
            raise DimensionMismatchError(
                f"expected vertices ({self.num_vertices}, 3), got {vertices.shape}"
            )
        return np.einsum("pk,pkd->pd", self.weights, vertices[self.vertex_ids])


def topology_hash(mesh: TriangleMesh) -> str:
    h = hashlib.sha256()
    h.update(np.int64(mesh.num_vertices).tobytes())
    h.update(mesh.triangles.astype("<i8").tobytes())
    return h.hexdigest()[:16]


def build_point_regressor(template: TriangleMesh, num_points: int = DEFAULT_POINTS,
                          seed: int = 0) -> PointRegressor:
    """Sample ``num_points`` area-uniform surface points as barycentric rows.

    Point k consumes stream values 3k (triangle pick, by inverse CDF over
    cumulative areas), 3k+1 and 3k+2 (barycentric coordinates, folded onto
    the half square so the simplex is covered uniformly).
    """
    areas = template.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise InvalidValueError("template has zero surface area")
    cdf = np.cumsum(areas)

    u = uniform_stream(seed, 0, 3 * num_points).reshape(num_points, 3)
    tri = np.searchsorted(cdf, u[:, 0] * total, side="right")
    tri = np.minimum(tri, len(areas) - 1)

    u1, u2 = u[:, 1].copy(), u[:, 2].copy()
    fold = u1 + u2 > 1.0
    u1[fold] = 1.0 - u1[fold]
    u2[fold] = 1.0 - u2[fold]
    w = np.stack([1.0 - u1 - u2, u1, u2], axis=1)

    return PointRegressor(
        vertex_ids=template.triangles[tri].copy(),
        weights=w,
        num_vertices=template.num_vertices,
        topology_hash=topology_hash(template),
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# Closest point on a triangle mesh (used to move a regressor across topologies)


def closest_point_on_triangles(points: np.ndarray, corners: np.ndarray):
    """Closest point on each triangle for each query point.

    points (Q, 3) against corners (Q, 3, 3); returns (closest (Q, 3),
    barycentric (Q, 3)). Vectorized region-by-region projection.
    """
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    ab, ac, ap = b - a, c - a, points - a

    d1 = np.einsum("qd,qd->q", ab, ap)
    d2 = np.einsum("qd,qd->q", ac, ap)
    bp = points - b
    d3 = np.einsum("qd,qd->q", ab, bp)
    d4 = np.einsum("qd,qd->q", ac, bp)
    cp = points - c
    d5 = np.einsum("qd,qd->q", ab, cp)
    d6 = np.einsum("qd,qd->q", ac, cp)

    bary = np.zeros((len(points), 3))
    done = np.zeros(len(points), dtype=bool)

    # vertex regions
    region_a = (d1 <= 0) & (d2 <= 0)
    bary[region_a] = [1.0, 0.0, 0.0]
    done |= region_a
    region_b = (d3 >= 0) & (d4 <= d3) & ~done
    bary[region_b] = [0.0, 1.0, 0.0]
    done |= region_b
    region_c = (d6 >= 0) & (d5 <= d6) & ~done
    bary[region_c] = [0.0, 0.0, 1.0]
    done |= region_c

    # edge AB
    vc = d1 * d4 - d3 * d2
    mask = (vc <= 0) & (d1 >= 0) & (d3 <= 0) & ~done
    t = np.zeros(len(points))
    denom = d1 - d3
    safe = np.abs(denom) > 0
    t[safe] = d1[safe] / denom[safe]
    bary[mask] = np.stack([1.0 - t[mask], t[mask], np.zeros(mask.sum())], axis=1)
    done |= mask

    # edge AC
    vb = d5 * d2 - d1 * d6
    mask = (vb <= 0) & (d2 >= 0) & (d6 <= 0) & ~done
    t = np.zeros(len(points))
    denom = d2 - d6
    safe = np.abs(denom) > 0
    t[safe] = d2[safe] / denom[safe]
    bary[mask] = np.stack([1.0 - t[mask], np.zeros(mask.sum()), t[mask]], axis=1)
    done |= mask

    # edge BC
    va = d3 * d6 - d5 * d4
    mask = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0) & ~done
    t = np.zeros(len(points))
    denom = (d4 - d3) + (d5 - d6)
    safe = np.abs(denom) > 0
    t[safe] = (d4 - d3)[safe] / denom[safe]
    bary[mask] = np.stack([np.zeros(mask.sum()), 1.0 - t[mask], t[mask]], axis=1)
    done |= mask

    # interior
    interior = ~done
    denom = va + vb + vc
    safe = interior & (np.abs(denom) > 0)
    v = np.zeros(len(points))
    w = np.zeros(len(points))
    v[safe] = vb[safe] / denom[safe]
    w[safe] = vc[safe] / denom[safe]
    bary[interior] = np.stack([1.0 - v[interior] - w[interior], v[interior], w[interior]],
                              axis=1)
    # degenerate triangles: fall back to nearest corner
    degen = interior & ~safe
    bary[degen] = [1.0, 0.0, 0.0]

    closest = np.einsum("qk,qkd->qd", bary, corners)
    return closest, bary


def nearest_on_mesh(points: np.ndarray, mesh: TriangleMesh, k_candidates: int = 16):
    """Exact nearest surface point per query: KD-tree prune + local refine.

    Returns (closest points, triangle index, barycentric coords, distances).
    Candidate pruning is made exact by a second pass over every triangle
    whose centroid could still beat the current bound.
    """
    corners_all = mesh.triangle_corners()
    centroids = corners_all.mean(axis=1)
    radius = np.linalg.norm(corners_all - centroids[:, None, :], axis=2).max(axis=1)
    max_radius = float(radius.max()) if len(radius) else 0.0
    tree = cKDTree(centroids)

    k = min(k_candidates, mesh.num_triangles)
    _, knn = tree.query(points, k=k, workers=-1)
    knn = np.atleast_2d(knn)
    if k == 1:
        knn = knn.reshape(-1, 1)

    q = len(points)
    best_tri = np.zeros(q, dtype=np.int64)
    best_bary = np.zeros((q, 3))
    best_pt = np.zeros((q, 3))
    best_d = np.full(q, np.inf)
    for col in range(knn.shape[1]):
        tri = knn[:, col]
        cp, bary = closest_point_on_triangles(points, corners_all[tri])
        d = np.linalg.norm(cp - points, axis=1)
        better = d < best_d
        best_d[better] = d[better]
        best_tri[better] = tri[better]
        best_bary[better] = bary[better]
        best_pt[better] = cp[better]

    # Exactness pass: any triangle with centroid within best_d + its radius
    # could still contain a closer point.
    extra = tree.query_ball_point(points, best_d + max_radius, workers=-1)
    for i, cand in enumerate(extra):
        cand = np.setdiff1d(np.asarray(cand, dtype=np.int64), knn[i], assume_unique=False)
        if cand.size == 0:
            continue
        cp, bary = closest_point_on_triangles(points[i][None, :].repeat(len(cand), 0),
                                              corners_all[cand])
        d = np.linalg.norm(cp - points[i], axis=1)
        j = int(np.argmin(d))
        if d[j] < best_d[i]:
            best_d[i] = d[j]
            best_tri[i] = cand[j]
            best_bary[i] = bary[j]
            best_pt[i] = cp[j]
    return best_pt, best_tri, best_bary, best_d


def transfer_point_regressor(source_template: TriangleMesh, target_template: TriangleMesh,
                             source_reg: PointRegressor) -> tuple[PointRegressor, float]:
    """Re-encode canonical points onto another (pre-aligned) template surface.

    For each source point the nearest point on the target surface is stored
    barycentrically. Returns (regressor, mean transfer distance in meters) so
    callers can judge how well the surfaces agree.
    """
    pts = source_reg.regress(source_template.vertices)
    _, tri, bary, dist = nearest_on_mesh(pts, target_template)
    bary = np.clip(bary, 0.0, None)
    bary /= bary.sum(axis=1, keepdims=True)
    reg = PointRegressor(
        vertex_ids=target_template.triangles[tri].copy(),
        weights=bary,
        num_vertices=target_template.num_vertices,
        topology_hash=topology_hash(target_template),
        seed=source_reg.seed,
    )
    return reg, float(dist.mean())


# ---------------------------------------------------------------------------
# Error metrics


def p2p_error(reg1: PointRegressor, verts1: np.ndarray,
              reg2: PointRegressor, verts2: np.ndarray) -> float:
    """Mean point-to-point distance in mm after translation correction."""
    if reg1.num_points != reg2.num_points:
        raise DimensionMismatchError(
            f"regressors sample {reg1.num_points} vs {reg2.num_points} points"
        )
    p1 = reg1.regress(verts1)
    p2 = reg2.regress(verts2)
    t = p2.mean(axis=0) - p1.mean(axis=0)
    return float(np.linalg.norm(p1 + t - p2, axis=1).mean() * 1000.0)


def v2v_error(verts1: np.ndarray, verts2: np.ndarray) -> float:
    """Mean vertex-to-vertex distance in mm after translation correction."""
    v1 = np.asarray(verts1, dtype=np.float64)
    v2 = np.asarray(verts2, dtype=np.float64)
    if v1.shape != v2.shape:
        raise DimensionMismatchError(f"vertex arrays differ: {v1.shape} vs {v2.shape}")
    t = v2.mean(axis=0) - v1.mean(axis=0)
    return float(np.linalg.norm(v1 + t - v2, axis=1).mean() * 1000.0)


@dataclass(frozen=True)
class ShapeErrorReport:
    """Aggregate shape errors: sampled point / vertex distances and MAE."""

    p2p20k_mm: float
    v2v_mm: float | None = None
    measurement_mae: dict[str, float] | None = None

    def __post_init__(self):
        for v in (self.p2p20k_mm, self.v2v_mm):
            if v is not None and v < 0:
                raise InvalidValueError("errors must be non-negative")
        if self.measurement_mae is not None and any(
                v < 0 for v in self.measurement_mae.values()):
            raise InvalidValueError("errors must be non-negative")

    def to_json_dict(self) -> dict:
        return {"p2p20k_mm": self.p2p20k_mm, "v2v_mm": self.v2v_mm,
                "measurement_mae": self.measurement_mae}


def measurement_mae(pred: list[MeasurementSet], gt: list[MeasurementSet]) -> dict[str, float]:
    """Per-field mean absolute error; lengths in mm, weight in kg."""
    if len(pred) != len(gt):
        raise DimensionMismatchError(f"{len(pred)} predictions vs {len(gt)} ground truths")
    p = np.stack([m.as_array() for m in pred])
    g = np.stack([m.as_array() for m in gt])
    err = np.abs(p - g).mean(axis=0)
    return {
        "height_mm": float(err[0] * 1000.0),
        "weight_kg": float(err[1]),
        "chest_mm": float(err[2] * 1000.0),
        "waist_mm": float(err[3] * 1000.0),
        "hip_mm": float(err[4] * 1000.0),
    }


def score_class(scores: np.ndarray) -> np.ndarray:
    """Likert class: round half up, clamped to 1..5."""
    return np.clip(np.floor(np.asarray(scores, dtype=np.float64) + 0.5), 1, 5).astype(np.int64)


@dataclass(frozen=True)
class AttributeAccuracy:
    overall_accuracy: float
    per_attribute_accuracy: np.ndarray  # (A,)
    per_attribute_mae: np.ndarray       # (A,) mean |pred - gt| on raw scores
    per_attribute_sd: np.ndarray        # (A,) std of |pred - gt|
    attribute_names: tuple[str, ...] = ()


def s2a_accuracy(pred_scores: np.ndarray, gt_scores: np.ndarray,
                 attribute_names: tuple[str, ...] = ()) -> AttributeAccuracy:
    """Fraction of matching score classes, overall and per attribute."""
    p = np.atleast_2d(np.asarray(pred_scores, dtype=np.float64))
    g = np.atleast_2d(np.asarray(gt_scores, dtype=np.float64))
    if p.shape != g.shape:
        raise DimensionMismatchError(f"score matrices differ: {p.shape} vs {g.shape}")
    match = score_class(p) == score_class(g)
    abs_err = np.abs(p - g)
    return AttributeAccuracy(
        overall_accuracy=float(match.mean()),
        per_attribute_accuracy=match.mean(axis=0),
        per_attribute_mae=abs_err.mean(axis=0),
        per_attribute_sd=abs_err.std(axis=0),
        attribute_names=tuple(attribute_names),
    )
