"""Triangle mesh container, structural validation, and edge topology."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, InvalidIndexError, MeshValidationError


@dataclass(frozen=True)
class MeshTopology:
    """Edge structure derived once per triangulation and shared across shapes.

    ``edges`` holds each undirected edge once as a sorted (lo, hi) pair;
    ``tri_edges[f, k]`` is the edge index of triangle f's k-th edge
    (v0-v1, v1-v2, v2-v0).
    """

    edges: np.ndarray
    tri_edges: np.ndarray
    is_closed: bool
    is_oriented: bool
    boundary_edge: tuple[int, int] | None


def _build_topology(triangles: np.ndarray, num_vertices: int) -> MeshTopology:
    f = triangles
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    lo = directed.min(axis=1).astype(np.int64)
    hi = directed.max(axis=1).astype(np.int64)
    keys = lo * np.int64(num_vertices) + hi
    uniq_keys, tri_edge_flat, counts = np.unique(keys, return_inverse=True, return_counts=True)
    edges = np.stack([uniq_keys // num_vertices, uniq_keys % num_vertices], axis=1)
    tri_edges = tri_edge_flat.reshape(3, -1).T.copy()

    boundary = counts == 1
    is_closed = bool(not boundary.any() and (counts == 2).all())
    boundary_edge = None
    if boundary.any():
        e = edges[int(np.argmax(boundary))]
        boundary_edge = (int(e[0]), int(e[1]))

    # Consistent orientation: every shared undirected edge must be traversed
    # once in each direction.
    forward = directed[:, 0] < directed[:, 1]
    fwd_counts = np.zeros(len(uniq_keys), dtype=np.int64)
    np.add.at(fwd_counts, tri_edge_flat[forward], 1)
    shared = counts == 2
    is_oriented = bool(np.all(fwd_counts[shared] == 1)) and bool(np.all(counts <= 2))

    return MeshTopology(edges=edges, tri_edges=tri_edges, is_closed=is_closed,
                        is_oriented=is_oriented, boundary_edge=boundary_edge)


@dataclass(frozen=True)
class TriangleMesh:
    """Immutable triangle mesh in meters.

    ``vertex_tags`` optionally names individual vertices (landmark tags);
    topology is computed at construction so meshes are safe to share across
    threads.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_tags: dict[str, int] | None = None
    topology: MeshTopology = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshValidationError(f"vertices must be (N, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshValidationError(f"triangles must be (F, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            bad = int(np.argmax((f < 0).any(axis=1) | (f >= len(v)).any(axis=1)))
            raise InvalidIndexError(
                f"triangle {bad} references vertex outside [0, {len(v)})",
                triangle=bad,
            )
        degen = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
        if degen.any():
            raise MeshValidationError(
                f"degenerate triangle {int(np.argmax(degen))} repeats a vertex index",
                triangle=int(np.argmax(degen)),
            )
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)
        if self.topology is None:
            object.__setattr__(self, "topology", _build_topology(f, len(v)))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def is_closed(self) -> bool:
        return self.topology.is_closed

    @property
    def is_oriented(self) -> bool:
        return self.topology.is_oriented

    def with_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        """Same triangulation with new vertex positions (topology shared)."""
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise DimensionMismatchError(
                f"expected vertices {self.vertices.shape}, got {vertices.shape}"
            )
        return TriangleMesh(vertices, self.triangles, self.vertex_tags, self.topology)

    def triangle_corners(self) -> np.ndarray:
        """Vertex positions per triangle, shape (F, 3, 3)."""
        return self.vertices[self.triangles]

    def triangle_areas(self) -> np.ndarray:
        c = self.triangle_corners()
        cross = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def mean_edge_length(self) -> float:
        e = self.topology.edges
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).mean())


def subdivide(mesh: TriangleMesh) -> TriangleMesh:
    """Midpoint 1-to-4 subdivision; the surface is unchanged."""
    v, f = mesh.vertices, mesh.triangles
    topo = mesh.topology
    mid = 0.5 * (v[topo.edges[:, 0]] + v[topo.edges[:, 1]])
    mid_ids = len(v) + np.arange(len(topo.edges))
    m01 = mid_ids[topo.tri_edges[:, 0]]
    m12 = mid_ids[topo.tri_edges[:, 1]]
    m20 = mid_ids[topo.tri_edges[:, 2]]
    new_f = np.concatenate([
        np.stack([f[:, 0], m01, m20], axis=1),
        np.stack([f[:, 1], m12, m01], axis=1),
        np.stack([f[:, 2], m20, m12], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])
    return TriangleMesh(np.concatenate([v, mid]), new_f)
