"""Independent verification paths for the measurement code.

These functions recompute quantities by different algorithms than the main
implementations and exist only for cross-checking: the slice perimeter here
uses direct edge clipping plus angular support sampling instead of barycentric
provenance plus a monotone-chain hull. Fixture metadata is frozen from these
values at build time.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def slice_points_bruteforce(mesh: TriangleMesh, plane_height: float,
                            eps: float = 1e-9) -> np.ndarray:
    """Intersection points of a horizontal plane, one per crossing edge.

    Clips each triangle edge independently against the plane; no barycentric
    bookkeeping, no shared code with the measurement path.
    """
    v = mesh.vertices
    f = mesh.triangles
    d = v[:, 1] - plane_height
    d = np.where(d == 0.0, eps, d)
    pts = []
    for i, j in ((0, 1), (1, 2), (2, 0)):
        a, b = f[:, i], f[:, j]
        keep = (a < b) & ((d[a] > 0) != (d[b] > 0))
        aa, bb = a[keep], b[keep]
        s = d[aa] / (d[aa] - d[bb])
        pts.append(v[aa] + s[:, None] * (v[bb] - v[aa]))
    out = np.concatenate(pts, axis=0) if pts else np.zeros((0, 3))
    if len(out) == 0:
        raise ValueError(f"plane y={plane_height} misses the mesh")
    return out


def support_sampled_perimeter(mesh: TriangleMesh, plane_height: float,
                              num_angles: int = 4096) -> float:
    """Convex-hull perimeter of a slice via dense angular support sampling.

    For each of ``num_angles`` directions in the slice plane, takes the
    intersection point with the largest support (projection onto the
    direction); consecutive distinct support points trace the hull exactly
    whenever every hull corner subtends more than one angular step.
    """
    pts = slice_points_bruteforce(mesh, plane_height)
    xz = pts[:, [0, 2]]
    theta = np.arange(num_angles) * (2.0 * np.pi / num_angles)
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    support_ids = np.argmax(xz @ dirs.T, axis=0)

    keep = np.ones(num_angles, dtype=bool)
    keep[1:] = support_ids[1:] != support_ids[:-1]
    ring = xz[support_ids[keep]]
    if len(ring) > 1 and support_ids[keep][0] == support_ids[keep][-1]:
        ring = ring[:-1]
    return float(np.linalg.norm(ring - np.roll(ring, -1, axis=0), axis=1).sum())
