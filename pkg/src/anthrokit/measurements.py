"""Virtual anthropometric measurements on a shaped mesh.

Five quantities are measured in the canonical upright pose: standing height
(vertical distance between the head-top and left-heel landmarks), weight
(mesh volume times a mean body density), and chest/waist/hip circumferences.
A circumference is the perimeter of the 2D convex hull of all points where a
horizontal plane through the landmark intersects the mesh; each intersection
point keeps barycentric provenance so the perimeter is a differentiable
function of the vertex positions, and hence of the shape coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    EmptySectionError,
    InvalidIndexError,
    InvalidValueError,
    OpenMeshError,
    WindingError,
)
from .mesh import TriangleMesh
from .model import BodyModel, LandmarkSet, shaped_mesh

# Mean human body density in kg/m^3; override via the `density` arguments.
MEAN_BODY_DENSITY = 985.0

# Vertices exactly on a slicing plane are nudged up by this amount (meters)
# before classification, which removes duplicate intersection points. Kept an
# order of magnitude under the 1e-9 plane-membership tolerance.
PLANE_EPS = 1e-10

# Sanity ceiling for a single circumference, meters.
MAX_CIRCUMFERENCE = 4.0

MEASUREMENT_FIELDS = ("height", "weight", "chest_circ", "waist_circ", "hip_circ")


@dataclass(frozen=True)
class MeasurementSet:
    """Height (m), weight (kg), and chest/waist/hip circumferences (m)."""

    height: float
    weight: float
    chest_circ: float
    waist_circ: float
    hip_circ: float

    def as_array(self) -> np.ndarray:
        return np.array([self.height, self.weight, self.chest_circ,
                         self.waist_circ, self.hip_circ])

    def validate(self, max_circumference: float = MAX_CIRCUMFERENCE) -> "MeasurementSet":
        vals = self.as_array()
        if not np.all(vals > 0.0):
            raise InvalidValueError("measurements must be strictly positive",
                                    values=vals.tolist())
        circs = vals[2:]
        if np.any(circs > max_circumference):
            raise InvalidValueError(
                f"circumference exceeds sanity bound {max_circumference} m",
                values=circs.tolist(),
            )
        return self


@dataclass(frozen=True)
class PlaneSection:
    """Intersection of a horizontal plane with a mesh.

    ``points[i]`` is reconstructed as ``bary[i] @ vertices[triangles[tri_index[i]]]``;
    ``edge_vertices[i]`` is the mesh edge the point lies on and ``edge_t[i]``
    the interpolation parameter along it. ``hull`` lists point indices in cycle
    order; ``segments`` pairs point indices per cut triangle.
    """

    plane_height: float
    points: np.ndarray
    tri_index: np.ndarray
    bary: np.ndarray
    edge_vertices: np.ndarray
    edge_t: np.ndarray
    segments: np.ndarray
    hull: np.ndarray
    hull_edges: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.hull_edges is None:
            h = self.hull
            e = np.stack([h, np.roll(h, -1)], axis=1) if len(h) else np.zeros((0, 2), np.int64)
            object.__setattr__(self, "hull_edges", e)

    def hull_perimeter(self) -> float:
        p = self.points
        e = self.hull_edges
        return float(np.linalg.norm(p[e[:, 0]] - p[e[:, 1]], axis=1).sum())


def _convex_hull_2d(xz: np.ndarray) -> np.ndarray:
    """Monotone chain; returns indices of hull corners in cycle order.

    Collinear boundary points are dropped (zero extra perimeter); the turn
    test uses an epsilon scaled by the segment lengths so points that are
    collinear up to float rounding are dropped too.
    """
    uniq, first = np.unique(xz, axis=0, return_index=True)
    if len(uniq) < 3:
        return first[np.argsort(first)] if len(uniq) else np.zeros(0, np.int64)

    def _half(points, ids):
        out: list[int] = []
        for i in ids:
            while len(out) >= 2:
                o, a = points[out[-2]], points[out[-1]]
                b = points[i]
                oa = (a[0] - o[0], a[1] - o[1])
                ab = (b[0] - o[0], b[1] - o[1])
                cross = oa[0] * ab[1] - oa[1] * ab[0]
                scale = (oa[0] * oa[0] + oa[1] * oa[1]) + (ab[0] * ab[0] + ab[1] * ab[1])
                if cross <= 1e-12 * scale:
                    out.pop()
                else:
                    break
            out.append(i)
        return out

    order = np.arange(len(uniq))
    lower = _half(uniq, order)
    upper = _half(uniq, order[::-1])
    chain = lower[:-1] + upper[:-1]
    return first[np.asarray(chain, dtype=np.int64)]


def plane_section(mesh: TriangleMesh, plane_height: float, eps: float = PLANE_EPS) -> PlaneSection:
    """All plane-mesh intersection points with barycentric provenance and hull."""
    v = mesh.vertices
    topo = mesh.topology
    d = v[:, 1] - plane_height
    d = np.where(d == 0.0, eps, d)
    pos = d > 0.0

    edges = topo.edges
    cross_mask = pos[edges[:, 0]] != pos[edges[:, 1]]
    crossing = np.flatnonzero(cross_mask)
    if crossing.size == 0:
        raise EmptySectionError(
            f"plane y={plane_height} does not intersect the mesh",
            plane_height=plane_height,
        )
    a = edges[crossing, 0]
    b = edges[crossing, 1]
    t = d[a] / (d[a] - d[b])
    edge_point = np.full(len(edges), -1, dtype=np.int64)
    edge_point[crossing] = np.arange(crossing.size)

    tri_cross = cross_mask[topo.tri_edges]
    cut = np.flatnonzero(tri_cross.sum(axis=1) == 2)
    ce = topo.tri_edges[cut]
    cm = tri_cross[cut]
    flat_edges = ce[cm]
    segments = edge_point[flat_edges].reshape(-1, 2)

    # Provenance: the first cut triangle touching each crossing edge.
    flat_tris = np.repeat(cut, 2)
    flat_pts = edge_point[flat_edges]
    tri_index = np.full(crossing.size, -1, dtype=np.int64)
    tri_index[flat_pts[::-1]] = flat_tris[::-1]

    tri_of = mesh.triangles[tri_index]
    w_a = (tri_of == a[:, None]) * (1.0 - t)[:, None]
    w_b = (tri_of == b[:, None]) * t[:, None]
    bary = w_a + w_b
    points = np.einsum("nk,nkd->nd", bary, v[tri_of])

    hull = _convex_hull_2d(points[:, [0, 2]])
    return PlaneSection(
        plane_height=float(plane_height),
        points=points,
        tri_index=tri_index,
        bary=bary,
        edge_vertices=np.stack([a, b], axis=1),
        edge_t=t,
        segments=segments,
        hull=hull,
    )


def section_components(section: PlaneSection) -> np.ndarray:
    """Connected-component label per intersection point (via cut segments)."""
    n = len(section.points)
    seg = section.segments
    g = coo_matrix((np.ones(len(seg)), (seg[:, 0], seg[:, 1])), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    return labels


def _component_near(section: PlaneSection, anchor: np.ndarray) -> np.ndarray:
    labels = section_components(section)
    dist = np.linalg.norm(section.points - anchor, axis=1)
    return labels == labels[int(np.argmin(dist))]


def component_loop_length(section: PlaneSection, anchor: np.ndarray) -> float:
    """Total length of the cut segments in the component nearest ``anchor``."""
    keep = _component_near(section, anchor)
    seg = section.segments
    inside = keep[seg[:, 0]] & keep[seg[:, 1]]
    p = section.points
    return float(np.linalg.norm(p[seg[inside, 0]] - p[seg[inside, 1]], axis=1).sum())


def height(mesh: TriangleMesh, landmarks: LandmarkSet) -> float:
    """Vertical distance between head-top and left-heel landmarks."""
    y = mesh.vertices[:, 1]
    n = mesh.num_vertices
    for name in ("head_top", "left_heel"):
        idx = getattr(landmarks, name)
        if not (0 <= idx < n):
            raise InvalidIndexError(f"landmark '{name}' index {idx} outside [0, {n})")
    return float(abs(y[landmarks.head_top] - y[landmarks.left_heel]))


def signed_volume(mesh: TriangleMesh) -> float:
    """Signed volume via the divergence theorem (origin tetrahedra)."""
    c = mesh.triangle_corners()
    return float(np.einsum("fd,fd->f", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)


def weight(mesh: TriangleMesh, density: float = MEAN_BODY_DENSITY) -> float:
    """Body weight in kg: density times enclosed volume.

    Requires a closed, consistently outward-oriented mesh; anything else is
    an error rather than a silently wrong number.
    """
    topo = mesh.topology
    if not topo.is_closed:
        raise OpenMeshError(
            "mesh has a boundary edge; weight needs a closed surface",
            boundary_edge=list(topo.boundary_edge) if topo.boundary_edge else None,
        )
    if not topo.is_oriented:
        raise WindingError("mesh triangles are not consistently wound")
    vol = signed_volume(mesh)
    if vol <= 1e-12:
        raise WindingError(
            "signed volume is near zero or negative; triangle winding points inward",
            signed_volume=vol,
        )
    return density * abs(vol)


def circumference(mesh: TriangleMesh, landmark_vertex: int, torso_only: bool = False,
                  eps: float = PLANE_EPS) -> float:
    """Convex-hull perimeter of the horizontal slice through a landmark.

    By default the hull covers every intersection point on the plane; with
    ``torso_only`` only the connected intersection loop nearest the landmark
    is considered.
    """
    n = mesh.num_vertices
    if not (0 <= landmark_vertex < n):
        raise InvalidIndexError(f"landmark vertex {landmark_vertex} outside [0, {n})")
    section = plane_section(mesh, float(mesh.vertices[landmark_vertex, 1]), eps=eps)
    if torso_only:
        keep = _component_near(section, mesh.vertices[landmark_vertex])
        ids = np.flatnonzero(keep)
        sub_hull_local = _convex_hull_2d(section.points[ids][:, [0, 2]])
        hull = ids[sub_hull_local]
        p = section.points
        e0 = p[hull]
        e1 = p[np.roll(hull, -1)]
        return float(np.linalg.norm(e0 - e1, axis=1).sum())
    return section.hull_perimeter()


def measure(model: BodyModel, beta: np.ndarray, density: float = MEAN_BODY_DENSITY,
            torso_only: bool = False) -> MeasurementSet:
    """All five measurements for one shape coefficient vector."""
    mesh = shaped_mesh(model, beta)
    lm = model.landmarks
    return MeasurementSet(
        height=height(mesh, lm),
        weight=weight(mesh, density),
        chest_circ=circumference(mesh, lm.chest, torso_only),
        waist_circ=circumference(mesh, lm.waist, torso_only),
        hip_circ=circumference(mesh, lm.hip, torso_only),
    ).validate()


# ---------------------------------------------------------------------------
# Gradients


@dataclass(frozen=True)
class MeasurementGradients:
    """d(measurement)/d(beta) for each field, plus non-smoothness flags.

    A circumference flag is set when the slice's crossing-edge or hull set
    changes under a small beta perturbation, i.e. the analytic value is a
    subgradient at a combinatorial boundary.
    """

    height: np.ndarray
    weight: np.ndarray
    chest_circ: np.ndarray
    waist_circ: np.ndarray
    hip_circ: np.ndarray
    non_smooth: dict[str, bool]

    def as_matrix(self) -> np.ndarray:
        return np.stack([self.height, self.weight, self.chest_circ,
                         self.waist_circ, self.hip_circ])


def _volume_gradient(mesh: TriangleMesh, basis: np.ndarray, chunk: int = 8192) -> np.ndarray:
    tri = mesh.triangles
    v = mesh.vertices
    num_b = basis.shape[2]
    grad = np.zeros(num_b)
    for start in range(0, len(tri), chunk):
        f = tri[start:start + chunk]
        v0, v1, v2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        c0 = np.cross(v1, v2)
        c1 = np.cross(v2, v0)
        c2 = np.cross(v0, v1)
        grad += (
            np.einsum("fd,fdb->b", c0, basis[f[:, 0]])
            + np.einsum("fd,fdb->b", c1, basis[f[:, 1]])
            + np.einsum("fd,fdb->b", c2, basis[f[:, 2]])
        )
    return grad / 6.0


def _section_signature(mesh: TriangleMesh, plane_height: float) -> tuple:
    try:
        s = plane_section(mesh, plane_height)
    except EmptySectionError:
        return ("empty",)
    crossing = frozenset(map(tuple, s.edge_vertices.tolist()))
    hull = frozenset(map(tuple, s.edge_vertices[s.hull].tolist()))
    return (crossing, hull)


def _circumference_gradient(section: PlaneSection, mesh: TriangleMesh,
                            basis: np.ndarray, landmark: int) -> np.ndarray:
    v = mesh.vertices
    h = section.plane_height
    a = section.edge_vertices[:, 0]
    b = section.edge_vertices[:, 1]
    da = v[a, 1] - h
    da = np.where(da == 0.0, PLANE_EPS, da)
    db = v[b, 1] - h
    db = np.where(db == 0.0, PLANE_EPS, db)
    t = section.edge_t

    dh = basis[landmark, 1, :]                     # (B,)
    dda = basis[a, 1, :] - dh                      # (n, B)
    ddb = basis[b, 1, :] - dh
    denom = (da - db) ** 2
    dt = (-dda * db[:, None] + ddb * da[:, None]) / denom[:, None]

    # dp/dbeta = (1-t) J_a + t J_b + (V_b - V_a) outer dt
    dp = (
        basis[a] * (1.0 - t)[:, None, None]
        + basis[b] * t[:, None, None]
        + (v[b] - v[a])[:, :, None] * dt[:, None, :]
    )                                              # (n, 3, B)

    e = section.hull_edges
    p = section.points
    delta = p[e[:, 0]] - p[e[:, 1]]
    norms = np.linalg.norm(delta, axis=1)
    unit = delta / norms[:, None]
    ddelta = dp[e[:, 0]] - dp[e[:, 1]]
    return np.einsum("kd,kdb->b", unit, ddelta)


def selected_measurements(model: BodyModel, beta: np.ndarray,
                          fields: tuple[str, ...],
                          with_gradients: bool = False,
                          boundary_probe: float = 1e-7):
    """Values (and optionally gradients + flags) for a subset of fields.

    ``fields`` draws from ``height, chest_circ, waist_circ, hip_circ``; this
    skips the volume/closedness machinery so optimizers can evaluate trial
    points cheaply and without the sanity validation of :func:`measure`.
    Returns (values, gradients, non_smooth) dicts; the latter two are empty
    when ``with_gradients`` is false.
    """
    beta = model.check_beta(beta)
    mesh = shaped_mesh(model, beta)
    lm = model.landmarks
    basis = model.shape_basis
    y = mesh.vertices[:, 1]
    landmark_of = {"chest_circ": lm.chest, "waist_circ": lm.waist, "hip_circ": lm.hip}

    values: dict[str, float] = {}
    grads: dict[str, np.ndarray] = {}
    flags: dict[str, bool] = {}

    mesh_plus = mesh_minus = None
    if with_gradients and any(f in landmark_of for f in fields):
        probe = np.ones(model.num_betas) * boundary_probe
        mesh_plus = shaped_mesh(model, beta + probe)
        mesh_minus = shaped_mesh(model, beta - probe)

    for name in fields:
        if name == "height":
            values[name] = height(mesh, lm)
            if with_gradients:
                sign = 1.0 if y[lm.head_top] >= y[lm.left_heel] else -1.0
                grads[name] = sign * (basis[lm.head_top, 1, :] - basis[lm.left_heel, 1, :])
                flags[name] = False
        elif name in landmark_of:
            idx = landmark_of[name]
            section = plane_section(mesh, float(y[idx]))
            values[name] = section.hull_perimeter()
            if with_gradients:
                grads[name] = _circumference_gradient(section, mesh, basis, idx)
                sig0 = _section_signature(mesh, float(y[idx]))
                sig_p = _section_signature(mesh_plus, float(mesh_plus.vertices[idx, 1]))
                sig_m = _section_signature(mesh_minus, float(mesh_minus.vertices[idx, 1]))
                flags[name] = not (sig0 == sig_p == sig_m)
        else:
            raise InvalidValueError(f"unknown measurement field '{name}'")
    return values, grads, flags


def measure_gradients(model: BodyModel, beta: np.ndarray,
                      density: float = MEAN_BODY_DENSITY,
                      boundary_probe: float = 1e-7) -> MeasurementGradients:
    """Analytic gradients of all five measurements at ``beta``.

    Hull and crossing combinatorics are held fixed for the chain rule; the
    probe re-slices at beta +/- ``boundary_probe`` (along the all-ones
    direction) and flags circumferences whose combinatorics change.
    """
    beta = model.check_beta(beta)
    basis = model.shape_basis
    mesh = shaped_mesh(model, beta)
    lm = model.landmarks
    y = mesh.vertices[:, 1]

    sign = 1.0 if y[lm.head_top] >= y[lm.left_heel] else -1.0
    g_height = sign * (basis[lm.head_top, 1, :] - basis[lm.left_heel, 1, :])

    vol = signed_volume(mesh)
    if not mesh.is_closed or vol <= 1e-12:
        weight(mesh, density)  # raise with the precise diagnosis
    g_weight = density * _volume_gradient(mesh, basis)

    probe = np.ones(model.num_betas) * boundary_probe
    mesh_plus = shaped_mesh(model, beta + probe)
    mesh_minus = shaped_mesh(model, beta - probe)

    circ_grads: dict[str, np.ndarray] = {}
    flags: dict[str, bool] = {}
    for name, lm_idx in (("chest_circ", lm.chest), ("waist_circ", lm.waist),
                         ("hip_circ", lm.hip)):
        section = plane_section(mesh, float(y[lm_idx]))
        circ_grads[name] = _circumference_gradient(section, mesh, basis, lm_idx)
        sig0 = _section_signature(mesh, float(y[lm_idx]))
        sig_p = _section_signature(mesh_plus, float(mesh_plus.vertices[lm_idx, 1]))
        sig_m = _section_signature(mesh_minus, float(mesh_minus.vertices[lm_idx, 1]))
        flags[name] = not (sig0 == sig_p == sig_m)

    return MeasurementGradients(
        height=g_height,
        weight=g_weight,
        chest_circ=circ_grads["chest_circ"],
        waist_circ=circ_grads["waist_circ"],
        hip_circ=circ_grads["hip_circ"],
        non_smooth=flags,
    )
