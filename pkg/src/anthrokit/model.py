"""Linear blend-shape body model: archive IO and shape evaluation.

A model maps a coefficient vector beta to a mesh in the canonical upright
pose: ``vertices = template + shape_basis @ beta``. Archives are a directory
or zip with a ``manifest.json`` plus raw little-endian binary buffers; the
byte layout is documented in docs/format.md.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, FormatError, InvalidIndexError, InvalidValueError
from .mesh import TriangleMesh

GENDERS = ("female", "male", "neutral")

LANDMARK_NAMES = ("head_top", "left_heel", "chest", "waist", "hip")


@dataclass(frozen=True)
class LandmarkSet:
    """Vertex indices of the five measurement landmarks."""

    head_top: int
    left_heel: int
    chest: int
    waist: int
    hip: int

    def as_dict(self) -> dict[str, int]:
        return {name: int(getattr(self, name)) for name in LANDMARK_NAMES}

    def validate(self, mesh: TriangleMesh) -> None:
        n = mesh.num_vertices
        for name in LANDMARK_NAMES:
            idx = getattr(self, name)
            if not (0 <= idx < n):
                raise InvalidIndexError(
                    f"landmark '{name}' index {idx} outside [0, {n})",
                    field=f"landmarks.{name}",
                )
        y = mesh.vertices[:, 1]
        if not (y[self.chest] > y[self.waist] > y[self.hip]):
            raise InvalidValueError(
                "landmarks must satisfy chest.y > waist.y > hip.y on the template",
                chest_y=float(y[self.chest]),
                waist_y=float(y[self.waist]),
                hip_y=float(y[self.hip]),
            )


@dataclass(frozen=True)
class BodyModel:
    """Template mesh plus shape-blend basis, immutable after load."""

    template: TriangleMesh
    shape_basis: np.ndarray  # (N, 3, B), meters per unit beta
    gender: str
    landmarks: LandmarkSet
    name: str = "body-model"

    def __post_init__(self):
        basis = np.ascontiguousarray(np.asarray(self.shape_basis, dtype=np.float64))
        if basis.ndim != 3 or basis.shape[1] != 3:
            raise DimensionMismatchError(f"shape_basis must be (N, 3, B), got {basis.shape}")
        if basis.shape[0] != self.template.num_vertices:
            raise DimensionMismatchError(
                "shape_basis vertex count does not match template",
                basis_vertices=int(basis.shape[0]),
                template_vertices=self.template.num_vertices,
            )
        if basis.shape[2] < 1:
            raise InvalidValueError("model must have at least one shape direction")
        if self.gender not in GENDERS:
            raise InvalidValueError(f"gender must be one of {GENDERS}", field="gender")
        basis.flags.writeable = False
        object.__setattr__(self, "shape_basis", basis)
        self.landmarks.validate(self.template)

    @property
    def num_betas(self) -> int:
        return int(self.shape_basis.shape[2])

    @property
    def num_vertices(self) -> int:
        return self.template.num_vertices

    def triangles_uint32(self) -> np.ndarray:
        return self.template.triangles.astype("<u4")

    def check_beta(self, beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=np.float64).reshape(-1)
        if beta.shape[0] != self.num_betas:
            raise DimensionMismatchError(
                f"beta has length {beta.shape[0]}, model expects {self.num_betas}"
            )
        return beta


def shaped_vertices(model: BodyModel, beta: np.ndarray) -> np.ndarray:
    """Vertices of the shaped mesh: template + basis contraction with beta."""
    beta = model.check_beta(beta)
    return model.template.vertices + model.shape_basis @ beta


def shaped_mesh(model: BodyModel, beta: np.ndarray) -> TriangleMesh:
    """Shaped mesh sharing the template triangulation and topology."""
    return model.template.with_vertices(shaped_vertices(model, beta))


def shaped_mesh_jacobian(model: BodyModel, vertex_subset=None) -> np.ndarray:
    """Constant Jacobian d(vertices)/d(beta), restricted to ``vertex_subset``.

    The model is linear in beta, so this is exactly the shape basis.
    """
    if vertex_subset is None:
        return model.shape_basis
    subset = np.asarray(vertex_subset, dtype=np.int64).reshape(-1)
    if subset.size and (subset.min() < 0 or subset.max() >= model.num_vertices):
        raise InvalidIndexError("vertex subset index out of range")
    return model.shape_basis[subset]


# ---------------------------------------------------------------------------
# Archive IO


def _require(manifest: dict, key: str, path: str):
    if key not in manifest:
        raise FormatError(f"manifest missing required field '{path}'", field=path)
    return manifest[key]


class _ArchiveReader:
    def __init__(self, path: Path):
        self.path = path
        self.zip = None
        if path.is_file() and path.suffix == ".zip":
            self.zip = zipfile.ZipFile(path)
        elif not path.is_dir():
            raise FormatError(f"model archive not found: {path}", path=str(path))

    def read(self, name: str) -> bytes:
        if self.zip is not None:
            try:
                return self.zip.read(name)
            except KeyError:
                raise FormatError(f"archive buffer '{name}' missing", file=name) from None
        p = self.path / name
        if not p.is_file():
            raise FormatError(f"archive buffer '{name}' missing", file=name)
        return p.read_bytes()


_BUFFER_DTYPES = {"float32": "<f4", "uint32": "<u4"}


def _load_buffer(reader: _ArchiveReader, desc: dict, field: str, expect_dtype: str) -> np.ndarray:
    fname = _require(desc, "file", f"{field}.file")
    dtype = desc.get("dtype", expect_dtype)
    shape = tuple(_require(desc, "shape", f"{field}.shape"))
    if dtype != expect_dtype:
        raise FormatError(
            f"buffer '{field}' must be {expect_dtype}, manifest says {dtype}", field=field
        )
    raw = reader.read(fname)
    count = int(np.prod(shape))
    itemsize = np.dtype(_BUFFER_DTYPES[dtype]).itemsize
    if len(raw) != count * itemsize:
        raise FormatError(
            f"buffer '{field}' has {len(raw)} bytes, expected {count * itemsize}",
            field=field, expected_bytes=count * itemsize, actual_bytes=len(raw),
        )
    return np.frombuffer(raw, dtype=_BUFFER_DTYPES[dtype]).reshape(shape)


def load_model(archive_path: str | Path) -> BodyModel:
    """Load and fully validate a model archive (directory or zip)."""
    path = Path(archive_path)
    reader = _ArchiveReader(path)
    try:
        manifest = json.loads(reader.read("manifest.json"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest.json is not valid JSON: {exc}", path=str(path)) from None

    up = _require(manifest, "up_axis", "up_axis")
    if up != "y":
        raise FormatError(
            f"archive declares up-axis '{up}'; only 'y' is supported (no silent rotation)",
            field="up_axis",
        )
    num_vertices = int(_require(manifest, "num_vertices", "num_vertices"))
    num_triangles = int(_require(manifest, "num_triangles", "num_triangles"))
    num_betas = int(_require(manifest, "num_betas", "num_betas"))
    if num_betas < 1:
        raise FormatError("num_betas must be >= 1", field="num_betas")
    gender = _require(manifest, "gender", "gender")
    buffers = _require(manifest, "buffers", "buffers")

    template_raw = _load_buffer(
        reader, _require(buffers, "template", "buffers.template"), "buffers.template", "float32"
    )
    tri_raw = _load_buffer(
        reader, _require(buffers, "triangles", "buffers.triangles"), "buffers.triangles", "uint32"
    )
    basis_raw = _load_buffer(
        reader, _require(buffers, "shape_basis", "buffers.shape_basis"),
        "buffers.shape_basis", "float32",
    )
    if template_raw.shape != (num_vertices, 3):
        raise FormatError(
            f"template shape {template_raw.shape} != ({num_vertices}, 3)",
            field="buffers.template.shape",
        )
    if tri_raw.shape != (num_triangles, 3):
        raise FormatError(
            f"triangles shape {tri_raw.shape} != ({num_triangles}, 3)",
            field="buffers.triangles.shape",
        )
    if basis_raw.shape != (num_vertices, 3, num_betas):
        raise FormatError(
            f"shape_basis shape {basis_raw.shape} != ({num_vertices}, 3, {num_betas})",
            field="buffers.shape_basis.shape",
        )

    lm_dict = _require(manifest, "landmarks", "landmarks")
    for name in LANDMARK_NAMES:
        if name not in lm_dict:
            raise FormatError(f"manifest missing landmark '{name}'", field=f"landmarks.{name}")
    landmarks = LandmarkSet(**{name: int(lm_dict[name]) for name in LANDMARK_NAMES})

    mesh = TriangleMesh(template_raw.astype(np.float64), tri_raw.astype(np.int64))
    return BodyModel(
        template=mesh,
        shape_basis=basis_raw.astype(np.float64),
        gender=gender,
        landmarks=landmarks,
        name=manifest.get("name", path.stem),
    )


def save_model(model: BodyModel, archive_path: str | Path) -> None:
    """Write a model archive. Buffers round-trip bit-exactly through load."""
    path = Path(archive_path)
    template32 = model.template.vertices.astype("<f4")
    tri32 = model.triangles_uint32()
    basis32 = model.shape_basis.astype("<f4")
    manifest = {
        "format": "body-model-archive",
        "version": 1,
        "name": model.name,
        "up_axis": "y",
        "gender": model.gender,
        "num_vertices": model.num_vertices,
        "num_triangles": model.template.num_triangles,
        "num_betas": model.num_betas,
        "landmarks": model.landmarks.as_dict(),
        "buffers": {
            "template": {"file": "template.f32", "dtype": "float32",
                         "shape": [model.num_vertices, 3]},
            "triangles": {"file": "triangles.u32", "dtype": "uint32",
                          "shape": [model.template.num_triangles, 3]},
            "shape_basis": {"file": "shape_basis.f32", "dtype": "float32",
                            "shape": [model.num_vertices, 3, model.num_betas]},
        },
    }
    payload = {
        "manifest.json": json.dumps(manifest, indent=2, sort_keys=True).encode() + b"\n",
        "template.f32": template32.tobytes(),
        "triangles.u32": tri32.tobytes(),
        "shape_basis.f32": basis32.tobytes(),
    }
    if path.suffix == ".zip":
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
            for name, data in payload.items():
                zf.writestr(name, data)
        path.write_bytes(buf.getvalue())
    else:
        path.mkdir(parents=True, exist_ok=True)
        for name, data in payload.items():
            (path / name).write_bytes(data)
