"""Procedural test geometry and the capsule-person fixture model.

Real statistical body models ship under restrictive licenses, so the repo
generates its own: a closed genus-0 lathed "capsule person" (~2k vertices)
with four shape directions (taller, heavier, broader chest, wider hips) and
landmark vertices chosen on the lathe rings. The heavier/chest/hip directions
are purely radial, so they leave standing height exactly unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import oracles
from .mesh import TriangleMesh
from .measurements import MEAN_BODY_DENSITY, measure, signed_volume
from .model import BodyModel, LandmarkSet, save_model
from .sampling import CounterRng
from .tables import SubjectTable

FIXTURE_HEIGHT = 1.75
FIXTURE_ATTRIBUTES = (
    "tall", "short", "big", "slim", "broad_chest", "narrow_chest",
    "wide_hips", "narrow_hips", "heavy", "light", "stocky", "lanky",
    "round", "angular", "average",
)


# ---------------------------------------------------------------------------
# Simple closed solids used as oracles and fixtures in tests


def unit_cube(chest_y: float = 0.6, waist_y: float = 0.5, hip_y: float = 0.4):
    """Axis-aligned unit cube with face-center vertices usable as landmarks.

    Side-face centers sit at configurable heights so the chest/waist/hip
    ordering invariant holds; every horizontal slice is the unit square.
    Returns (mesh, landmark_set).
    """
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                       dtype=np.float64)
    centers = np.array([
        [0.5, 1.0, 0.5],       # top            -> head_top
        [0.5, 0.0, 0.5],       # bottom         -> left_heel
        [1.0, chest_y, 0.5],   # +x face center -> chest
        [0.0, waist_y, 0.5],   # -x face center -> waist
        [0.5, hip_y, 1.0],     # +z face center -> hip
        [0.5, 0.5, 0.0],       # -z face center
    ])
    verts = np.concatenate([corners, centers])
    # corner ids follow the bit pattern x*4 + y*2 + z
    quads = {
        8:  [2, 3, 7, 6],   # top (y=1)
        9:  [0, 1, 5, 4],   # bottom
        10: [4, 5, 7, 6],   # +x
        11: [0, 1, 3, 2],   # -x
        12: [1, 5, 7, 3],   # +z
        13: [0, 4, 6, 2],   # -z
    }
    cube_center = np.array([0.5, 0.5, 0.5])
    tris = []
    for center, loop in quads.items():
        a, b = verts[loop[0]] - verts[center], verts[loop[1]] - verts[center]
        if np.dot(np.cross(a, b), verts[center] - cube_center) < 0:
            loop = loop[::-1]
        for k in range(4):
            tris.append([center, loop[k], loop[(k + 1) % 4]])
    mesh = TriangleMesh(verts, np.array(tris, dtype=np.int64))
    lm = LandmarkSet(head_top=8, left_heel=9, chest=10, waist=11, hip=12)
    return mesh, lm


def ngon_prism(n: int, radius: float, height: float):
    """Closed regular-n-gon prism with a mid-height ring.

    Returns (mesh, mid_ring_vertex) where the named vertex sits on the
    mid-height ring so a slice through it is the analytic n-gon.
    """
    theta = 2.0 * np.pi * np.arange(n) / n
    ring = np.stack([radius * np.cos(theta), np.zeros(n), radius * np.sin(theta)], axis=1)
    levels = [0.0, height / 2.0, height]
    verts = [ring + np.array([0.0, y, 0.0]) for y in levels]
    verts.append(np.array([[0.0, 0.0, 0.0], [0.0, height, 0.0]]))
    v = np.concatenate(verts)
    bottom_c, top_c = 3 * n, 3 * n + 1

    tris = []
    for level in range(2):
        lo, hi = level * n, (level + 1) * n
        for j in range(n):
            a, b = lo + j, lo + (j + 1) % n
            c, d = hi + (j + 1) % n, hi + j
            tris += [[a, b, c], [a, c, d]]
    for j in range(n):
        tris.append([bottom_c, (j + 1) % n, j])
        tris.append([top_c, 2 * n + j, 2 * n + (j + 1) % n])
    mesh = TriangleMesh(v, np.array(tris, dtype=np.int64))
    if signed_volume(mesh) < 0:
        mesh = TriangleMesh(v, np.array(tris, dtype=np.int64)[:, [0, 2, 1]])
    return mesh, n  # first vertex of the middle ring


def icosphere(radius: float = 0.5, subdivisions: int = 4,
              center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron with vertices projected onto the sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    raw = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    from .mesh import subdivide

    mesh = TriangleMesh(raw / np.linalg.norm(raw, axis=1, keepdims=True), faces)
    for _ in range(subdivisions):
        mesh = subdivide(mesh)
        v = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
        mesh = TriangleMesh(v, mesh.triangles, topology=mesh.topology)
    v = mesh.vertices * radius + np.asarray(center)
    mesh = TriangleMesh(v, mesh.triangles, topology=mesh.topology)
    if signed_volume(mesh) < 0:
        mesh = TriangleMesh(mesh.vertices, mesh.triangles[:, [0, 2, 1]])
    return mesh


# ---------------------------------------------------------------------------
# Capsule-person fixture model


def _gauss(y: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    return np.exp(-(((y - mu) / sigma) ** 2))


def _profile(y: np.ndarray) -> np.ndarray:
    return (
        0.035
        + 0.070 * _gauss(y, 1.640, 0.060)   # head
        + 0.118 * _gauss(y, 1.420, 0.140)   # chest / shoulders
        + 0.075 * _gauss(y, 1.050, 0.160)   # waist column
        + 0.110 * _gauss(y, 0.920, 0.120)   # hips
        + 0.090 * _gauss(y, 0.450, 0.280)   # legs column
    )


def capsule_person(segments: int = 32, rings: int = 58,
                   body_height: float = FIXTURE_HEIGHT) -> BodyModel:
    """Procedural closed body-of-revolution model with 4 shape directions.

    Directions: 0 = taller (pure vertical stretch), 1 = heavier (radial bulk,
    zero at the poles), 2 = broader chest, 3 = wider hips (radial bumps at the
    landmark heights). Buffers are quantized to float32 so the in-memory model
    matches its archived form bit-for-bit.
    """
    t = np.linspace(0.0, 1.0, rings)
    y_levels = body_height * t
    u = 2.0 * t - 1.0
    cap = np.sqrt(np.clip(1.0 - u**8, 0.0, None))
    radii = _profile(y_levels) * cap

    theta = 2.0 * np.pi * np.arange(segments) / segments
    cos_t, sin_t = np.cos(theta), np.sin(theta)

    inner = rings - 2
    verts = np.zeros((2 + inner * segments, 3))
    verts[0] = (0.0, 0.0, 0.0)
    verts[-1] = (0.0, body_height, 0.0)
    ring_start = np.zeros(rings, dtype=np.int64)  # first vertex id per interior ring
    for i in range(1, rings - 1):
        s = 1 + (i - 1) * segments
        ring_start[i] = s
        verts[s:s + segments, 0] = radii[i] * cos_t
        verts[s:s + segments, 1] = y_levels[i]
        verts[s:s + segments, 2] = radii[i] * sin_t

    tris = []
    first, last = ring_start[1], ring_start[rings - 2]
    for j in range(segments):
        tris.append([0, first + (j + 1) % segments, first + j])
        tris.append([len(verts) - 1, last + j, last + (j + 1) % segments])
    for i in range(1, rings - 2):
        lo, hi = ring_start[i], ring_start[i + 1]
        for j in range(segments):
            a, b = lo + j, lo + (j + 1) % segments
            c, d = hi + (j + 1) % segments, hi + j
            tris += [[a, b, c], [a, c, d]]
    tris = np.array(tris, dtype=np.int64)
    if signed_volume(TriangleMesh(verts, tris)) < 0:
        tris = tris[:, [0, 2, 1]]

    def ring_near(target_y: float) -> int:
        i = 1 + int(np.argmin(np.abs(y_levels[1:-1] - target_y)))
        return int(ring_start[i])

    chest_v, waist_v, hip_v = ring_near(1.42), ring_near(1.05), ring_near(0.92)
    y_chest = verts[chest_v, 1]
    y_hip = verts[hip_v, 1]

    yv = verts[:, 1]
    rho = np.hypot(verts[:, 0], verts[:, 2])
    radial = np.zeros_like(verts)
    nz = rho > 1e-12
    radial[nz, 0] = verts[nz, 0] / rho[nz]
    radial[nz, 2] = verts[nz, 2] / rho[nz]

    uu = 2.0 * (yv / body_height) - 1.0
    basis = np.zeros((len(verts), 3, 4))
    basis[:, 1, 0] = 0.1 * yv                                     # taller
    basis[:, :, 1] = radial * (0.040 * np.clip(1.0 - uu**2, 0.0, None))[:, None]
    basis[:, :, 2] = radial * (0.050 * _gauss(yv, y_chest, 0.10))[:, None]
    basis[:, :, 3] = radial * (0.050 * _gauss(yv, y_hip, 0.10))[:, None]

    verts32 = verts.astype(np.float32).astype(np.float64)
    basis32 = basis.astype(np.float32).astype(np.float64)
    template = TriangleMesh(verts32, tris)
    assert template.is_closed and template.is_oriented

    return BodyModel(
        template=template,
        shape_basis=basis32,
        gender="neutral",
        landmarks=LandmarkSet(head_top=len(verts) - 1, left_heel=0,
                              chest=chest_v, waist=waist_v, hip=hip_v),
        name="capsule-person",
    )


def fixture_metadata(model: BodyModel, num_angles: int = 4096,
                     density: float = MEAN_BODY_DENSITY) -> dict:
    """Frozen reference values for the fixture at beta = 0.

    Circumferences come from the angular support-sampling oracle; height from
    the landmark coordinates; weight from density times enclosed volume.
    """
    mesh = model.template
    y = mesh.vertices[:, 1]
    lm = model.landmarks
    vol = signed_volume(mesh)
    circ = {
        name: oracles.support_sampled_perimeter(mesh, float(y[idx]), num_angles)
        for name, idx in (("chest", lm.chest), ("waist", lm.waist), ("hip", lm.hip))
    }
    return {
        "format": "fixture-metadata",
        "version": 1,
        "density_kg_m3": density,
        "volume_m3": vol,
        "oracle": {"perimeter_angular_samples": num_angles},
        "measurements_at_zero": {
            "height_m": float(abs(y[lm.head_top] - y[lm.left_heel])),
            "weight_kg": density * vol,
            "chest_m": circ["chest"],
            "waist_m": circ["waist"],
            "hip_m": circ["hip"],
        },
    }


# ---------------------------------------------------------------------------
# Synthetic population


_BETA_RANGES_4 = np.array([[-0.6, 0.6], [-0.3, 0.8], [-0.6, 0.6], [-0.6, 0.6]])

_ATTRIBUTE_PATTERNS = np.array([
    [1.2, 0.0, 0.0, 0.0],      # tall
    [-1.2, 0.0, 0.0, 0.0],     # short
    [0.0, 1.1, 0.3, 0.3],      # big
    [0.0, -1.1, -0.2, -0.2],   # slim
    [0.0, 0.2, 1.2, 0.0],      # broad_chest
    [0.0, -0.1, -1.2, 0.0],    # narrow_chest
    [0.0, 0.2, 0.0, 1.2],      # wide_hips
    [0.0, -0.1, 0.0, -1.2],    # narrow_hips
    [0.0, 1.3, 0.2, 0.2],      # heavy
    [0.0, -1.3, -0.2, -0.2],   # light
    [-0.6, 0.8, 0.2, 0.2],     # stocky
    [0.9, -0.7, -0.1, -0.1],   # lanky
    [0.0, 0.9, 0.4, 0.4],      # round
    [0.0, -0.8, 0.3, -0.3],    # angular
    [0.0, 0.0, 0.0, 0.0],      # average
])


@dataclass
class SyntheticPopulation:
    table: SubjectTable
    ratings: np.ndarray  # (N, A, K) integers in 1..5
    attribute_map: np.ndarray  # (A, B) linear map used to generate scores


def sample_betas(num: int, num_betas: int, rng: CounterRng) -> np.ndarray:
    u = rng.uniform(num * num_betas).reshape(num, num_betas)
    if num_betas == 4:
        lo, hi = _BETA_RANGES_4[:, 0], _BETA_RANGES_4[:, 1]
    else:
        lo, hi = -0.5, 0.5
    return lo + u * (hi - lo)


def synthetic_population(model: BodyModel, count: int, seed: int,
                         raters: int = 15, rating_noise: float = 0.35,
                         torso_only: bool = False) -> SyntheticPopulation:
    """Subjects with betas, measurements, mean attribute scores, and ratings.

    Attribute scores are 3 + W beta for a fixed pattern matrix (plus a small
    seeded perturbation), clipped to [1, 5]; ratings quantize a noisy copy of
    the score per rater.
    """
    rng = CounterRng(seed)
    num_b = model.num_betas
    betas = sample_betas(count, num_b, rng)

    attr_names = list(FIXTURE_ATTRIBUTES)
    num_a = len(attr_names)
    if num_b == 4:
        wmap = _ATTRIBUTE_PATTERNS.copy()
    else:
        wmap = (rng.uniform(num_a * num_b).reshape(num_a, num_b) * 2.0 - 1.0) * 0.8
    wmap = wmap + (rng.uniform(num_a * num_b).reshape(num_a, num_b) * 2.0 - 1.0) * 0.08

    scores = np.clip(3.0 + betas @ wmap.T, 1.0, 5.0)
    noise = rng.normal(count * num_a * raters).reshape(count, num_a, raters)
    ratings = np.clip(np.rint(scores[:, :, None] + rating_noise * noise), 1, 5).astype(np.int64)

    meas = np.zeros((count, 5))
    for i in range(count):
        m = measure(model, betas[i], torso_only=torso_only)
        meas[i] = m.as_array()

    table = SubjectTable(
        ids=[f"s{i:04d}" for i in range(count)],
        genders=[model.gender] * count,
        measurements=meas,
        attribute_names=attr_names,
        attributes=scores,
        betas=betas,
    )
    return SyntheticPopulation(table=table, ratings=ratings, attribute_map=wmap)


def write_fixture(outdir: str | Path, subjects: int = 120, seed: int = 7,
                  segments: int = 32, rings: int = 58) -> dict:
    """Generate the fixture archive + metadata + population files.

    Returns a small summary dict (paths and sizes) for CLI reporting.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    model = capsule_person(segments=segments, rings=rings)
    model_dir = outdir / "model"
    save_model(model, model_dir)
    meta = fixture_metadata(model)
    (model_dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    pop = synthetic_population(model, subjects, seed)
    from .tables import write_betas_csv, write_subject_table

    write_subject_table(pop.table, outdir / "population.csv")
    write_betas_csv(outdir / "betas.csv", pop.table.ids, pop.table.betas)

    ratings_path = outdir / "ratings.csv"
    header = ["subject_id", "attribute"] + [f"rater_{k}" for k in range(pop.ratings.shape[2])]
    rows = []
    for i, sid in enumerate(pop.table.ids):
        for j, name in enumerate(pop.table.attribute_names):
            rows.append([sid, name, *map(int, pop.ratings[i, j])])
    from .tables import write_csv

    write_csv(ratings_path, header, rows)
    return {
        "model": str(model_dir),
        "metadata": str(model_dir / "metadata.json"),
        "population": str(outdir / "population.csv"),
        "betas": str(outdir / "betas.csv"),
        "ratings": str(ratings_path),
        "subjects": subjects,
        "num_betas": model.num_betas,
        "vertices": model.num_vertices,
    }
