"""OBJ and PLY reading/writing for triangle meshes.

Supports the subset needed here: triangle faces, float vertex positions,
ASCII OBJ, and ASCII or binary_little_endian PLY.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .mesh import TriangleMesh


def load_mesh(path: str | Path) -> TriangleMesh:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _load_obj(path)
    if suffix == ".ply":
        return _load_ply(path)
    raise FormatError(f"unsupported mesh format '{suffix}'", path=str(path))


def save_mesh(mesh: TriangleMesh, path: str | Path) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        _save_obj(mesh, path)
    elif suffix == ".ply":
        _save_ply(mesh, path)
    else:
        raise FormatError(f"unsupported mesh format '{suffix}'", path=str(path))


def _load_obj(path: Path) -> TriangleMesh:
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        tokens = line.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        if tokens[0] == "v":
            if len(tokens) < 4:
                raise FormatError(f"short vertex line {lineno}", path=str(path))
            verts.append([float(x) for x in tokens[1:4]])
        elif tokens[0] == "f":
            ids = [int(tok.split("/")[0]) for tok in tokens[1:]]
            ids = [(i - 1) if i > 0 else (len(verts) + i) for i in ids]
            if len(ids) < 3:
                raise FormatError(f"face with <3 vertices at line {lineno}", path=str(path))
            # fan-triangulate polygons
            for k in range(1, len(ids) - 1):
                faces.append([ids[0], ids[k], ids[k + 1]])
    if not verts or not faces:
        raise FormatError("OBJ contains no triangles", path=str(path))
    return TriangleMesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64))


def _save_obj(mesh: TriangleMesh, path: Path) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.triangles:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def _load_ply(path: Path) -> TriangleMesh:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"ply"):
        raise FormatError("missing 'ply' magic", path=str(path))
    header_end = data.find(b"end_header\n")
    if header_end < 0:
        raise FormatError("unterminated PLY header", path=str(path))
    header = data[:header_end].decode("ascii", errors="replace").splitlines()
    body = data[header_end + len(b"end_header\n"):]

    fmt = None
    elements: list[tuple[str, int]] = []
    props: dict[str, list[tuple[str, str]]] = {}
    current = None
    for line in header[1:]:
        tokens = line.split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            current = tokens[1]
            elements.append((current, int(tokens[2])))
            props[current] = []
        elif tokens[0] == "property" and current is not None:
            if tokens[1] == "list":
                props[current].append(("list", f"{tokens[2]}:{tokens[3]}:{tokens[4]}"))
            else:
                props[current].append((tokens[1], tokens[2]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"unsupported PLY format '{fmt}'", path=str(path))

    if fmt == "ascii":
        return _parse_ply_ascii(body.decode("ascii"), elements, props, path)
    return _parse_ply_binary(body, elements, props, path)


_PLY_DTYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply_ascii(text, elements, props, path) -> TriangleMesh:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    cursor = 0
    verts = None
    faces: list[list[int]] = []
    for name, count in elements:
        rows = lines[cursor:cursor + count]
        cursor += count
        if name == "vertex":
            names = [p[1] for p in props[name]]
            xi, yi, zi = names.index("x"), names.index("y"), names.index("z")
            verts = np.array([[float(r[xi]), float(r[yi]), float(r[zi])] for r in rows])
        elif name == "face":
            for r in rows:
                n = int(r[0])
                ids = [int(x) for x in r[1:1 + n]]
                for k in range(1, n - 1):
                    faces.append([ids[0], ids[k], ids[k + 1]])
    if verts is None or not faces:
        raise FormatError("PLY missing vertex or face element", path=str(path))
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def _parse_ply_binary(body, elements, props, path) -> TriangleMesh:
    offset = 0
    verts = None
    faces: list[list[int]] = []
    for name, count in elements:
        plist = props[name]
        if name == "vertex" and all(p[0] != "list" for p in plist):
            dtype = np.dtype([(p[1], "<" + _PLY_DTYPES[p[0]]) for p in plist])
            arr = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
            offset += dtype.itemsize * count
            verts = np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(np.float64)
        elif name == "face":
            (kind, spec) = plist[0]
            if kind != "list":
                raise FormatError("face element must be a list property", path=str(path))
            count_t, index_t, _ = spec.split(":")
            csize = np.dtype(_PLY_DTYPES[count_t]).itemsize
            isize = np.dtype(_PLY_DTYPES[index_t]).itemsize
            for _ in range(count):
                n = int(np.frombuffer(body, "<" + _PLY_DTYPES[count_t], 1, offset)[0])
                offset += csize
                ids = np.frombuffer(body, "<" + _PLY_DTYPES[index_t], n, offset).tolist()
                offset += isize * n
                for k in range(1, n - 1):
                    faces.append([ids[0], ids[k], ids[k + 1]])
        else:
            raise FormatError(f"unsupported PLY element '{name}'", path=str(path))
    if verts is None or not faces:
        raise FormatError("PLY missing vertex or face element", path=str(path))
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def _save_ply(mesh: TriangleMesh, path: Path) -> None:
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {mesh.num_vertices}\n"
        "property float x\nproperty float y\nproperty float z\n"
        f"element face {mesh.num_triangles}\n"
        "property list uchar uint vertex_indices\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(mesh.vertices.astype("<f4").tobytes())
        tri = mesh.triangles.astype("<u4")
        for row in tri:
            fh.write(struct.pack("<B", 3))
            fh.write(row.tobytes())
